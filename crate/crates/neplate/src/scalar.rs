//! Scalar abstraction: the whole library is generic over the floating-point
//! type through [`Real`], with `f64` aliases exported at the crate root.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable throughout the library: `f32` or `f64`.
///
/// `nalgebra::RealField` supplies the elementary functions and linear-algebra
/// support; the `num_traits` bounds supply conversions for constants and I/O.
pub trait Real:
    nalgebra::RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + std::iter::Sum<Self>
    + std::fmt::LowerExp
{
}

impl<T> Real for T where
    T: nalgebra::RealField
        + Copy
        + FromPrimitive
        + ToPrimitive
        + std::iter::Sum<Self>
        + std::fmt::LowerExp
{
}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 constant must convert")
}

/// Sums a slice by recursive pairwise reduction.
///
/// The reduction tree depends only on the slice length, so results are
/// bit-identical regardless of how the values were produced (e.g. by a
/// parallel map over cells).
pub fn pairwise_sum<T: Real>(v: &[T]) -> T {
    if v.len() <= 16 {
        let mut acc = T::zero();
        for &x in v {
            acc += x;
        }
        return acc;
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_sequential_on_uniform_data() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }

    #[test]
    fn pairwise_sum_is_deterministic() {
        let v: Vec<f64> = (0..777).map(|i| (i as f64).sin()).collect();
        let a = pairwise_sum(&v);
        let b = pairwise_sum(&v);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
