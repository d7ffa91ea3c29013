//! Seeded random test plants.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{tf_to_ss, LtiStateSpace, TransferFunctionModel};
use crate::poly;

/// Monic polynomial of degree `deg` whose roots lie strictly inside a disc of
/// radius `radius`, mixing real roots and conjugate pairs.
fn random_monic<R: Rng>(rng: &mut R, deg: usize, radius: f64) -> Vec<f64> {
    let mut real = Vec::new();
    let mut pairs = Vec::new();
    let mut left = deg;
    while left > 0 {
        if left >= 2 && rng.gen_bool(0.4) {
            pairs.push(Complex64::from_polar(
                rng.gen_range(0.05..radius),
                rng.gen_range(0.1..std::f64::consts::PI - 0.1),
            ));
            left -= 2;
        } else {
            real.push(rng.gen_range(-radius..radius));
            left -= 1;
        }
    }
    poly::from_roots(&real, &pairs)
}

/// Stable, minimum-phase transfer function of order `n` and relative degree
/// `r`, with poles and zeros inside radius 0.9.
pub fn random_minimum_phase(seed: u64, n: usize, r: usize) -> TransferFunctionModel {
    assert!(n >= 1 && (1..=n).contains(&r), "need 1 <= r <= n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let den = random_monic(&mut rng, n, 0.9);
    let gain = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let num: Vec<f64> = random_monic(&mut rng, n - r, 0.9)
        .into_iter()
        .map(|c| c * gain)
        .collect();
    TransferFunctionModel::new(den[..n].to_vec(), num).expect("random model is well formed")
}

/// [`random_minimum_phase`] realised in a random (non-canonical) state basis.
pub fn random_state_space(seed: u64, n: usize, r: usize) -> LtiStateSpace {
    let tf = random_minimum_phase(seed, n, r);
    let canonical = tf_to_ss(&tf);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    // diagonally dominant, hence well conditioned and invertible
    let t = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            2.0 + rng.gen_range(0.0..1.0)
        } else {
            rng.gen_range(-0.5..0.5) / n as f64
        }
    });
    let t_inv = t.clone().try_inverse().expect("diagonally dominant");
    LtiStateSpace::new(
        &t * canonical.a() * &t_inv,
        &t * canonical.b(),
        canonical.c() * &t_inv,
    )
    .expect("shapes preserved")
}
