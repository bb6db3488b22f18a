//! Scalar abstraction: every numeric routine in this crate is generic over
//! [`Real`], so the same code runs at `f32` or `f64` precision.
//!
//! Stated tolerances (orthogonality checks, degeneracy thresholds, ...) are
//! calibrated for `f64`; generic code widens them to a multiple of the
//! scalar's machine epsilon so the `f32` instantiation stays usable.

use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable for all geometry, estimation and bound
/// computations in this crate.
pub trait Real: nalgebra::RealField + Copy + FromPrimitive + ToPrimitive {
    /// Machine epsilon of the concrete type.
    fn eps() -> Self;
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}

/// Convert an `f64` literal into the working scalar type.
///
/// Panics only if the literal is not representable at all, which cannot
/// happen for the finite constants used in this crate.
#[inline]
pub fn c<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 literal converts to scalar")
}

/// A tolerance that is `tol_f64` at double precision but never tighter than
/// `64 * eps` of the working type.
#[inline]
pub(crate) fn scaled_tol<T: Real>(tol_f64: f64) -> T {
    let stated: T = c(tol_f64);
    let floor = T::eps() * c(64.0);
    if stated > floor {
        stated
    } else {
        floor
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_conversion_roundtrips() {
        let x: f64 = c::<f64>(0.5);
        assert_eq!(x, 0.5);
        let y: f32 = c::<f32>(0.5);
        assert_eq!(y, 0.5f32);
    }

    #[test]
    fn scaled_tol_widens_for_f32() {
        let t64: f64 = scaled_tol(1e-9);
        assert_eq!(t64, 1e-9);
        let t32: f32 = scaled_tol(1e-9);
        assert!(t32 > 1e-9);
        assert!(t32 < 1e-4);
    }
}
