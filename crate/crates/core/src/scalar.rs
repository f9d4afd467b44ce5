//! Scalar abstraction shared by plain floating point evaluation and the
//! reverse-mode tape.
//!
//! Every piece of constitutive math in this crate is written once against
//! [`Real`]. Instantiating it with `f64` gives a fast forward evaluation;
//! instantiating it with [`crate::autodiff::Var`] records the same
//! computation for the training gradient.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{Float, One, Zero};

use crate::error::TensorError;
use crate::tensor3::{eigen, MatFn};

/// Real scalar used by the constitutive kernels.
pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    /// Lifts a constant. On the tape the result carries no dependency.
    fn from_f64(v: f64) -> Self;

    /// Plain value, used for branching and reporting.
    fn value(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    /// `|x|` with derivative `sign(x)` and `sign(0) = 0`.
    fn abs(self) -> Self;
    fn tanh(self) -> Self;
    fn cosh(self) -> Self;
    fn sinh(self) -> Self;
    /// `x^e` for `x > 0` and a variable exponent.
    fn powf(self, e: Self) -> Self;
    /// `x^e` for a constant exponent.
    fn powc(self, e: f64) -> Self;
    /// `max(x, 0)` with derivative 0 at the kink.
    fn relu(self) -> Self;

    /// Applies `f` to the eigenvalues of a symmetric tensor given by its
    /// Voigt components `(11, 22, 33, 12, 13, 23)`.
    fn sym_matrix_fn(v: [Self; 6], f: MatFn) -> Result<[Self; 6], TensorError>;

    /// Sign of the value with `sign(0) = 0`, as a constant.
    fn sign(self) -> f64 {
        let v = self.value();
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    /// `Σ a_i b_i`.
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .fold(Self::zero(), |acc, (&x, &y)| acc + x * y)
    }

    fn is_finite(self) -> bool {
        self.value().is_finite()
    }

    /// False for values that carry a derivative dependency.
    fn is_constant(&self) -> bool {
        true
    }
}

macro_rules! impl_real_float {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn value(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                Float::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                Float::ln(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                Float::sqrt(self)
            }
            #[inline]
            fn abs(self) -> Self {
                Float::abs(self)
            }
            #[inline]
            fn tanh(self) -> Self {
                Float::tanh(self)
            }
            #[inline]
            fn cosh(self) -> Self {
                Float::cosh(self)
            }
            #[inline]
            fn sinh(self) -> Self {
                Float::sinh(self)
            }
            #[inline]
            fn powf(self, e: Self) -> Self {
                Float::powf(self, e)
            }
            #[inline]
            fn powc(self, e: f64) -> Self {
                Float::powf(self, e as $t)
            }
            #[inline]
            fn relu(self) -> Self {
                if self > 0.0 {
                    self
                } else {
                    0.0
                }
            }
            fn sym_matrix_fn(v: [Self; 6], f: MatFn) -> Result<[Self; 6], TensorError> {
                let w = v.map(|x| x as f64);
                let out = eigen::apply_sym_fn(&w, f)?;
                Ok(out.map(|x| x as $t))
            }
        }
    };
}

impl_real_float!(f64);
impl_real_float!(f32);

#[cfg(test)]
mod tests {
    use super::*;

    fn generic_poly<T: Real>(x: T) -> T {
        x * x * T::from_f64(3.0) - x.exp() + T::one()
    }

    #[test]
    fn f32_and_f64_agree() {
        let a = generic_poly(0.7f64);
        let b = generic_poly(0.7f32);
        assert!((a - b as f64).abs() < 1e-6);
    }

    #[test]
    fn relu_and_sign_conventions() {
        assert_eq!(Real::relu(-1.0f64), 0.0);
        assert_eq!(Real::relu(0.0f64), 0.0);
        assert_eq!(Real::relu(2.5f64), 2.5);
        assert_eq!(Real::sign(0.0f64), 0.0);
        assert_eq!(Real::sign(-3.0f64), -1.0);
    }
}
