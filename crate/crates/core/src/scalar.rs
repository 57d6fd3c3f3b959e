//! Arithmetic shared by the shortest-path and transport solvers so that they
//! run exactly on rational inputs and approximately on float inputs.

use std::fmt::Debug;

use num_traits::Zero;

use crate::number::{self, Rational};

pub trait Scalar: Clone + Debug + PartialOrd + Send + Sync {
    fn origin() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn scale(&self, factor: &Rational) -> Self;
    fn to_f64(&self) -> f64;
    /// `self < other` by a margin that is meaningful for this number type.
    fn definitely_less(&self, other: &Self) -> bool;
}

impl Scalar for Rational {
    fn origin() -> Self {
        <Rational as Zero>::zero()
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale(&self, factor: &Rational) -> Self {
        self * factor
    }
    fn to_f64(&self) -> f64 {
        number::to_f64(self)
    }
    fn definitely_less(&self, other: &Self) -> bool {
        self < other
    }
}

impl Scalar for f64 {
    fn origin() -> Self {
        0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale(&self, factor: &Rational) -> Self {
        self * number::to_f64(factor)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn definitely_less(&self, other: &Self) -> bool {
        *self < *other - 1e-12 * other.abs().max(self.abs()).max(1e-300)
    }
}
