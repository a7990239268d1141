//! Floating-point scalar abstraction shared by every solver in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Tolerances used by the simplex kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpTolerances<T> {
    /// Primal bound violation still considered feasible.
    pub feasibility: T,
    /// Smallest pivot magnitude accepted in ratio tests and factorizations.
    pub pivot: T,
    /// Reduced-cost threshold for declaring a column attractive.
    pub optimality: T,
    /// Relative primal/dual objective agreement expected at optimality.
    pub duality_gap: T,
}

/// Real scalar type the solvers are generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    fn lp_tolerances() -> LpTolerances<Self>;

    /// Converts an `f64` literal, saturating to infinity when out of range.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(|| {
            if v > 0.0 {
                Self::infinity()
            } else {
                Self::neg_infinity()
            }
        })
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn lp_tolerances() -> LpTolerances<Self> {
        LpTolerances {
            feasibility: 1e-7,
            pivot: 1e-9,
            optimality: 1e-9,
            duality_gap: 1e-7,
        }
    }
}

impl Scalar for f32 {
    fn lp_tolerances() -> LpTolerances<Self> {
        LpTolerances {
            feasibility: 1e-4,
            pivot: 1e-6,
            optimality: 1e-5,
            duality_gap: 1e-4,
        }
    }
}

impl<T: Scalar> Default for LpTolerances<T> {
    fn default() -> Self {
        T::lp_tolerances()
    }
}

/// Dot product of a sparse vector with a dense one.
#[inline]
pub(crate) fn sparse_dot<T: Scalar>(sparse: &[(usize, T)], dense: &[T]) -> T {
    sparse
        .iter()
        .fold(T::zero(), |acc, &(i, v)| acc + v * dense[i])
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub(crate) fn inf_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}
