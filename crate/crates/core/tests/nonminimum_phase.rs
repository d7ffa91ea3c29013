use std::f64::consts::PI;

use nalgebra::DVector;
use tracker_core::inverse::StateSpaceInverse;
use tracker_core::plant::{sim_unstable, ss_to_tf, Trajectory};
use tracker_core::sysid::{identify_lti, zeros};

fn test_trajectory(steps: usize) -> Trajectory {
    Trajectory::from_fn(1.0, steps, |t| {
        let t = t as f64;
        (2.0 * PI * t / 15.0).sin() + (2.0 * PI * t / 12.0).cos() - 1.0
    })
}

/// Drives the plant with its own exact inverse; returns applied u and y.
fn inverse_driven(steps: usize) -> (Vec<f64>, Vec<f64>) {
    let sys = sim_unstable();
    let inverse = StateSpaceInverse::new(&sys, 1).unwrap();
    let y_d = test_trajectory(steps + 1);
    let mut x = DVector::zeros(2);
    let (mut us, mut ys) = (Vec::new(), Vec::new());
    for t in 0..steps {
        let u = inverse.reference(&x, y_d.values[t + 1]).unwrap();
        let (next, y) = sys.step(&x, u).unwrap();
        us.push(u);
        ys.push(y);
        x = next;
    }
    (us, ys)
}

fn peak(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[test]
fn zero_just_outside_unit_circle() {
    let tf = ss_to_tf(&sim_unstable()).unwrap();
    let z = zeros(&tf);
    assert_eq!(z.len(), 1);
    assert!((z[0].re - 450.9 / 450.0).abs() < 1e-12);
    assert!(!identify_lti(&sim_unstable(), 1.0, 200).unwrap().minimum_phase);
}

#[test]
fn inverse_reference_grows_geometrically() {
    let (u, y) = inverse_driven(6000);
    // output keeps tracking for a long time; the unstable zero shows up in u
    assert!(peak(&y[..500]) < 3.0);
    let early = peak(&u[1000..1500]);
    let late = peak(&u[3000..3500]);
    let per_step = (late / early).powf(1.0 / 2000.0);
    assert!((per_step - 450.9 / 450.0).abs() < 2e-4, "growth {per_step}");
    let crossing = u.iter().position(|v| v.abs() > 1e3).expect("reference blows up");
    assert!(crossing > 500 && crossing < 6000, "crossed at {crossing}");
}
