//! Seeded random generators for matrices and rotations, shared by the test
//! oracles and the rigidity sweep.

use nalgebra::{Matrix2, Matrix3};
use rand::Rng;

use crate::metric::WellFrame;
use crate::scalar::{real, Real};

/// Uniform random rotation from uniformly distributed unit quaternions.
pub fn random_rotation3<T: Real, R: Rng>(rng: &mut R) -> Matrix3<T> {
    let u1: f64 = rng.random_range(0.0..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    let u3: f64 = rng.random_range(0.0..1.0);
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = nalgebra::Quaternion::new(
        real::<T>(b * (tau * u3).cos()),
        real::<T>(a * (tau * u2).sin()),
        real::<T>(a * (tau * u2).cos()),
        real::<T>(b * (tau * u3).sin()),
    );
    nalgebra::UnitQuaternion::from_quaternion(q)
        .to_rotation_matrix()
        .into_inner()
}

/// Random SPD 2x2 with eigenvalues in `[1/√max_cond, √max_cond]`, so the
/// condition number is at most `max_cond`.
pub fn random_spd2<T: Real, R: Rng>(rng: &mut R, max_cond: f64) -> Matrix2<T> {
    let half_log = max_cond.sqrt().ln();
    let l1 = real::<T>(rng.random_range(-half_log..half_log).exp());
    let l2 = real::<T>(rng.random_range(-half_log..half_log).exp());
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let (c, s) = (real::<T>(theta.cos()), real::<T>(theta.sin()));
    let q = Matrix2::new(c, -s, s, c);
    q * Matrix2::new(l1, T::zero(), T::zero(), l2) * q.transpose()
}

/// Random block well frame `A = blockdiag(A_tan, 1)` with a moderately
/// conditioned tangential root.
pub fn random_block_frame<T: Real, R: Rng>(rng: &mut R) -> WellFrame<T> {
    let a_tan = random_spd2(rng, 16.0);
    WellFrame::from_a_tan(&a_tan).expect("generated root is SPD")
}
