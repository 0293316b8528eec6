//! Scalar abstraction for the numerical kernels.
//!
//! The linear algebra, cell forward passes, and margin machinery are generic
//! over any IEEE-like float. Concrete aliases for `f64` live at the crate
//! root; the bound evaluators and the harness work in `f64`.

use num_traits::{Float, FromPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

pub trait Scalar:
    Float + FromPrimitive + AddAssign + SubAssign + MulAssign + Sum + Debug + Display + 'static
{
    /// Lossless-enough constant embedding for formula literals.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + AddAssign + SubAssign + MulAssign + Sum + Debug + Display + 'static
{
}
