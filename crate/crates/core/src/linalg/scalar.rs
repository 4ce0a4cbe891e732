//! Scalar abstraction so the sparse kernels work for real and complex data.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;

/// Field element usable by the sparse storage and the LU factorization.
///
/// Only the operations the elimination kernels need are required; pivoting
/// compares elements through [`Scalar::modulus`].
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;

    /// Embeds a real number.
    fn from_real(x: f64) -> Self;

    /// Absolute value (modulus for complex scalars).
    fn modulus(self) -> f64;

    /// True for NaN or infinite components.
    fn is_bad(self) -> bool {
        !self.modulus().is_finite()
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_real(x: f64) -> Self {
        x
    }

    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    const ZERO: Self = Complex64::new(0.0, 0.0);
    const ONE: Self = Complex64::new(1.0, 0.0);

    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }

    fn modulus(self) -> f64 {
        self.norm()
    }
}
