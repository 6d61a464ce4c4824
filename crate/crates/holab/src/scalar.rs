//! Scalar abstraction: the numeric kernels (network math, signal
//! processing, advantage estimation) are generic over the floating point
//! type; the concrete pipeline instantiates them at `f64` via the aliases
//! at the crate root.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Cast from `f64`, for literals in generic code.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// dB (or dBm) to linear power ratio (or mW).
pub fn db_to_lin<T: Scalar>(db: T) -> T {
    T::c(10.0).powf(db / T::c(10.0))
}

/// Linear power ratio (or mW) to dB (or dBm).
pub fn lin_to_db<T: Scalar>(lin: T) -> T {
    T::c(10.0) * lin.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_round_trip() {
        for &x in &[-120.0, -3.01, 0.0, 10.0, 30.0] {
            let lin = db_to_lin::<f64>(x);
            assert!((lin_to_db(lin) - x).abs() < 1e-12);
        }
        assert!((db_to_lin::<f64>(0.0) - 1.0).abs() < 1e-15);
        assert!((db_to_lin::<f64>(10.0) - 10.0).abs() < 1e-12);
    }
}
