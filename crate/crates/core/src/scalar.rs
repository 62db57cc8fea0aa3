use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar type every numeric kernel in this crate is generic over.
///
/// `f32` and `f64` implement it; the crate root exposes `f64` aliases for the
/// common types so downstream code rarely spells the parameter out.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant into the scalar type.
    ///
    /// Panics only if the target type cannot represent any `f64` at all,
    /// which is not the case for the provided impls.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must be representable")
    }

    /// Lossy view of the value as `f64` (exact for the provided impls'
    /// round-trip use: `f64 -> F -> f64` is the identity for `F = f64`).
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
