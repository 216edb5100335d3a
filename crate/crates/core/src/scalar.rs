//! The scalar type samples, cells, and estimates are made of.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the library is generic over.
///
/// `f64` (aliased as [`crate::Real`]) is what the CLI and the presets use;
/// `f32` also satisfies the bound but halves the usable quantizer depth.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// View as `f64` for aggregation and reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    /// Nearest scalar to the given `f64`.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from(v).expect("f64 representable as scalar")
    }

    fn half() -> Self {
        Self::from_f64_lossy(0.5)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_float_widths_satisfy_the_bound() {
        fn mean<S: Scalar>(xs: &[S]) -> S {
            let sum = xs.iter().fold(S::zero(), |a, &b| a + b);
            sum / S::from_usize(xs.len()).unwrap()
        }
        assert_eq!(mean(&[1.0f64, 2.0, 3.0]), 2.0);
        assert_eq!(mean(&[1.0f32, 2.0, 3.0]), 2.0);
    }
}
