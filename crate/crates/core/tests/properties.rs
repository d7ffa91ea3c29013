use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tracker_core::features::{
    build_dataset, DifferenceReference, FeatureMode, FeatureSpec,
};
use tracker_core::inverse::{exact_inverse_ss, offset_term, StateSpaceInverse, TfInverse};
use tracker_core::nnet::{Activation, Dataset, FnnModel, Standardizer, TargetScaling};
use tracker_core::plant::random::{random_minimum_phase, random_state_space};
use tracker_core::plant::{simulate, ss_to_tf, tf_to_ss, LtiStateSpace, RunLog, Trajectory, TransferFunctionModel};
use tracker_core::sysid::{
    dc_gain, relative_degree_from_step, relative_degree_lti, step_response, DEFAULT_MARKOV_TOL,
    DEFAULT_STEP_TOL_REL,
};

fn order_and_degree() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..=6).prop_flat_map(|(seed, n)| (Just(seed), Just(n), 1..=n))
}

fn smooth_reference(steps: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, f, p) = (rng.gen_range(0.5..2.0), rng.gen_range(0.01..0.2), rng.gen_range(0.0..PI));
    Trajectory::from_fn(1.0, steps, |t| a * (2.0 * PI * f * t as f64 + p).sin() + 0.3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tf_round_trip((seed, n, r) in order_and_degree()) {
        let tf = random_minimum_phase(seed, n, r);
        let back = ss_to_tf(&tf_to_ss(&tf)).unwrap();
        prop_assert_eq!(back.order(), n);
        prop_assert_eq!(back.relative_degree(), r);
        for (a, b) in tf.alpha().iter().zip(back.alpha()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in tf.beta().iter().zip(back.beta()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn simulation_is_linear((seed, n, r) in order_and_degree(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let sys = random_state_space(seed, n, r);
        let u1 = smooth_reference(80, seed);
        let u2 = smooth_reference(80, seed.wrapping_add(1));
        let combo = Trajectory::new(1.0, u1.values.iter().zip(&u2.values).map(|(p, q)| a * p + b * q).collect());
        let x0 = DVector::zeros(n);
        let y1 = simulate(&sys, &u1, &x0).unwrap().y.values;
        let y2 = simulate(&sys, &u2, &x0).unwrap().y.values;
        let y = simulate(&sys, &combo, &x0).unwrap().y.values;
        for t in 0..y.len() {
            prop_assert!((y[t] - a * y1[t] - b * y2[t]).abs() < 1e-10);
        }
    }

    #[test]
    fn dc_gain_agrees_between_forms((seed, n, r) in order_and_degree()) {
        let ss = random_state_space(seed, n, r);
        let tf = ss_to_tf(&ss).unwrap();
        prop_assert!((dc_gain(&ss).unwrap() - dc_gain(&tf).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn exact_inverse_tracks((seed, n, r) in order_and_degree()) {
        let sys = random_state_space(seed, n, r);
        let inverse = StateSpaceInverse::new(&sys, r).unwrap();
        let y_d = smooth_reference(200 + r, seed);
        let mut x = DVector::zeros(n);
        let mut ys = Vec::new();
        for t in 0..200 {
            let u = inverse.reference(&x, y_d.values[t + r]).unwrap();
            let (next, y) = sys.step(&x, u).unwrap();
            ys.push(y);
            x = next;
        }
        for _ in 0..r {
            ys.push(sys.c().dot(&x.transpose()));
            x = sys.a() * &x;
        }
        for t in r..200 + r - (r - 1) {
            prop_assert!((ys[t] - y_d.values[t]).abs() < 1e-9, "t={} err={}", t, ys[t] - y_d.values[t]);
        }
    }

    #[test]
    fn state_space_and_transfer_function_inverses_agree((seed, n, r) in order_and_degree()) {
        let sys = random_state_space(seed, n, r);
        let tf = ss_to_tf(&sys).unwrap();
        // outputs before step r are fixed at zero by the zero initial state
        let mut y_d = smooth_reference(150, seed);
        y_d.values[..r].iter_mut().for_each(|v| *v = 0.0);
        let mut running = TfInverse::new(tf);
        let mut x = DVector::<f64>::zeros(n);
        for t in 0..150 - r {
            let u_ss = exact_inverse_ss(&sys, r, &x, y_d.values[t + r]).unwrap();
            let u_tf = running.next(&y_d, t);
            prop_assert!((u_ss - u_tf).abs() < 1e-9 * (1.0 + u_ss.abs()), "t={} {} vs {}", t, u_ss, u_tf);
            x = sys.step(&x, u_ss).unwrap().0;
        }
    }

    #[test]
    fn difference_rows_are_translation_invariant(
        seed in any::<u64>(),
        shift in -10.0..10.0f64,
        mode in prop_oneof![Just(FeatureMode::StateSpace), Just(FeatureMode::TransferFunction)],
    ) {
        // unity-gain plant, so shifting u and x1 by the same amount is a trajectory
        let tf = random_minimum_phase(seed, 3, 1);
        let k = dc_gain(&tf).unwrap();
        let tf = TransferFunctionModel::new(tf.alpha().to_vec(), tf.beta().iter().map(|b| b / k).collect()).unwrap();
        let sys = tf_to_ss(&tf);
        let log = simulate(&sys, &smooth_reference(120, seed), &DVector::zeros(3)).unwrap();
        let mut moved = log.clone();
        for v in moved.u.values.iter_mut().chain(moved.y.values.iter_mut()).chain(moved.y_d.values.iter_mut()) {
            *v += shift;
        }
        for x in &mut moved.x {
            x[0] += shift;
        }
        let spec = FeatureSpec::new(mode, 1, 3).unwrap().with_difference(DifferenceReference::ActualNow);
        let a = build_dataset(&log, &spec).unwrap();
        let b = build_dataset(&moved, &spec).unwrap();
        for (p, q) in a.inputs.iter().zip(b.inputs.iter()).chain(a.targets.iter().zip(b.targets.iter())) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn lipschitz_bound_holds(seed in any::<u64>(), eps in prop::collection::vec(-1e-3..1e-3f64, 3)) {
        let mut net = FnnModel::new(&[3, 8, 8, 1], Activation::Tanh, seed).unwrap();
        net.set_normalization(
            Standardizer { mean: vec![0.1, 0.0, -0.3], scale: vec![1.5, 0.5, 2.0] },
            TargetScaling { mean: vec![0.2], std: vec![3.0] },
        ).unwrap();
        let x = [0.3, -0.7, 1.1];
        let moved: Vec<f64> = x.iter().zip(&eps).map(|(a, e)| a + e).collect();
        let d = (net.forward(&moved).unwrap()[0] - net.forward(&x).unwrap()[0]).abs();
        let norm = eps.iter().map(|e| e * e).sum::<f64>().sqrt();
        prop_assert!(d <= net.lipschitz_bound() * norm * (1.0 + 1e-9) + 1e-15);
    }
}

#[test]
fn relative_degree_methods_agree_on_seeded_systems() {
    for seed in 0..100u64 {
        let n = 1 + (seed as usize % 6);
        let r = 1 + (seed as usize / 6) % n;
        let sys = random_state_space(seed, n, r);
        let from_matrices = relative_degree_lti(&sys, DEFAULT_MARKOV_TOL).unwrap();
        let step = step_response(&sys, 1.0, 40).unwrap();
        let from_step = relative_degree_from_step(&step, DEFAULT_STEP_TOL_REL).unwrap();
        assert_eq!(from_matrices, r, "seed {seed}");
        assert_eq!(from_step, r, "seed {seed}");
    }
}

/// Random systems, half rescaled to unity DC gain.
pub fn lemma_systems() -> Vec<TransferFunctionModel> {
    (0..100u64)
        .map(|seed| {
            let n = 1 + (seed as usize % 6);
            let r = 1 + (seed as usize / 6) % n;
            let tf = random_minimum_phase(1000 + seed, n, r);
            let k = dc_gain(&tf).unwrap();
            let target = if seed % 2 == 0 { 1.0 } else { k.signum() * (0.3 + (seed % 7) as f64 * 0.25) };
            let beta = tf.beta().iter().map(|b| b * target / k).collect();
            TransferFunctionModel::new(tf.alpha().to_vec(), beta).unwrap()
        })
        .collect()
}

#[test]
fn offset_vanishes_iff_unity_gain() {
    let mut unity = 0;
    for tf in lemma_systems() {
        let identity = tf.beta().iter().sum::<f64>() - 1.0 - tf.alpha().iter().sum::<f64>();
        let coefficient_zero = identity.abs() <= 1e-10;
        let gain_one = (dc_gain(&tf).unwrap() - 1.0).abs() <= 1e-10;
        assert_eq!(coefficient_zero, gain_one);
        assert_eq!(offset_term(&tf, 2.5).abs() <= 1e-9, gain_one);
        unity += gain_one as usize;
    }
    assert_eq!(unity, 50);
}

fn random_dataset(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Dataset {
    let inputs = DMatrix::from_fn(rows, dim, |_, _| rng.gen_range(-2.0..2.0));
    let targets = DMatrix::from_fn(rows, 1, |_, _| rng.gen_range(-1.0..1.0));
    Dataset::new(inputs, targets, (0..dim).map(|i| format!("f{i}")).collect()).unwrap()
}

#[test]
fn backprop_matches_finite_differences() {
    let h = 1e-6;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.gen_range(1..5);
        let hidden: Vec<usize> = (0..rng.gen_range(1..3)).map(|_| rng.gen_range(2..7)).collect();
        let activation = [Activation::Tanh, Activation::Linear][seed as usize % 2];
        let mut sizes = vec![dim];
        sizes.extend(&hidden);
        sizes.push(1);
        let mut net = FnnModel::new(&sizes, activation, seed).unwrap();
        let data = random_dataset(&mut rng, 15, dim);
        net.set_normalization(Standardizer::fit(&data.inputs), TargetScaling::fit(&data.targets)).unwrap();
        let p = net.params();
        let grad = net.gradient(&data).unwrap();
        let mut probe = net.clone();
        for k in 0..p.len() {
            let mut q = p.clone();
            q[k] = p[k] + h;
            probe.set_params(&q).unwrap();
            let up = probe.mse(&data).unwrap();
            q[k] = p[k] - h;
            probe.set_params(&q).unwrap();
            let down = probe.mse(&data).unwrap();
            let fd = (up - down) / (2.0 * h);
            let rel = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1e-3);
            assert!(rel < 1e-5, "seed {seed} param {k}: backprop {} fd {fd}", grad[k]);
        }
    }
}

#[test]
fn relu_gradient_away_from_kinks() {
    let mut net = FnnModel::new(&[2, 5, 1], Activation::Relu, 3).unwrap();
    let mut p = net.params();
    // push hidden pre-activations well away from zero
    for b in &mut p[10..15] {
        *b = 0.5;
    }
    net.set_params(&p).unwrap();
    let rows = vec![vec![0.1, 0.05], vec![-0.02, 0.08], vec![0.04, -0.06]];
    let data = Dataset::from_rows(&rows, &[0.3, -0.2, 0.1], vec!["a".into(), "b".into()]).unwrap();
    let grad = net.gradient(&data).unwrap();
    let h = 1e-6;
    for k in 0..p.len() {
        let mut q = p.clone();
        q[k] += h;
        net.set_params(&q).unwrap();
        let up = net.mse(&data).unwrap();
        q[k] -= 2.0 * h;
        net.set_params(&q).unwrap();
        let down = net.mse(&data).unwrap();
        let fd = (up - down) / (2.0 * h);
        assert!((grad[k] - fd).abs() <= 1e-5 * grad[k].abs().max(fd.abs()).max(1e-3));
    }
}

#[test]
fn lti_identity_helpers_agree_on_benchmark() {
    let sys = LtiStateSpace::from_slices(&[vec![0.0, 1.0], vec![-0.15, 0.8]], &[0.0, 1.0], &[-0.2, 1.0]).unwrap();
    let log: RunLog = step_response(&sys, 1.0, 60).unwrap();
    assert_eq!(relative_degree_from_step(&log, DEFAULT_STEP_TOL_REL).unwrap(), 1);
    assert!((dc_gain(&sys).unwrap() - 16.0 / 7.0).abs() < 1e-12);
}
