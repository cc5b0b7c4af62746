//! Forward-mode automatic differentiation with nested dual numbers.
//!
//! A [`Dual<T>`] carries a value and one derivative channel. Nesting duals
//! (`Dual<Dual<f64>>`, ...) differentiates through earlier derivatives, which
//! is exactly what iterated Lie brackets need: each bracket level consumes
//! one dual level. The tower is compiled to the fixed aliases [`D1`]..[`D7`];
//! the bracket evaluator keeps runtime nesting within that bound.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar arithmetic shared by `f64` and every dual level.
///
/// Only the operations the chain dynamics actually use are required:
/// ring/field ops plus sine and cosine.
pub trait Scalar:
    Copy
    + PartialEq
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn zero() -> Self;
    fn one() -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// Real part, stripped of every derivative channel.
    fn value(self) -> f64;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn value(self) -> f64 {
        self
    }
}

/// Value plus one derivative channel over the scalar `T`.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Dual<T> {
    pub re: T,
    pub du: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, du: T) -> Self {
        Dual { re, du }
    }

    /// Constant: derivative channel zero.
    pub fn constant(re: T) -> Self {
        Dual { re, du: T::zero() }
    }

    /// Seed with unit derivative (an independent variable).
    pub fn variable(re: T) -> Self {
        Dual { re, du: T::one() }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Dual::new(self.re + rhs.re, self.du + rhs.du)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Dual::new(self.re - rhs.re, self.du - rhs.du)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Dual::new(self.re * rhs.re, self.re * rhs.du + self.du * rhs.re)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.re / rhs.re;
        Dual::new(q, (self.du - q * rhs.du) / rhs.re)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.du)
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Dual::constant(T::from_f64(v))
    }
    fn zero() -> Self {
        Dual::constant(T::zero())
    }
    fn one() -> Self {
        Dual::constant(T::one())
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.du * self.re.cos())
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -(self.du * self.re.sin()))
    }
    fn value(self) -> f64 {
        self.re.value()
    }
}

pub type D1 = Dual<f64>;
pub type D2 = Dual<D1>;
pub type D3 = Dual<D2>;
pub type D4 = Dual<D3>;
pub type D5 = Dual<D4>;
pub type D6 = Dual<D5>;
pub type D7 = Dual<D6>;

/// One step up the dual tower.
///
/// `f64` lifts to [`D1`], [`D1`] to [`D2`], and so on. [`D7`] is the
/// compile-time terminator; promoting past it panics, and the bracket
/// evaluator's depth guard keeps execution away from that impl.
pub trait Lift: Scalar {
    type Up: Lift;
    /// Embed as a constant of the next level.
    fn promote(self) -> Self::Up;
    /// Embed with the given derivative seed.
    fn seeded(self, seed: Self) -> Self::Up;
    /// Extract the derivative channel of the next level.
    fn eps(up: Self::Up) -> Self;
}

macro_rules! lift_impl {
    ($lo:ty => $hi:ty) => {
        impl Lift for $lo {
            type Up = $hi;
            fn promote(self) -> $hi {
                Dual::constant(self)
            }
            fn seeded(self, seed: Self) -> $hi {
                Dual::new(self, seed)
            }
            fn eps(up: $hi) -> Self {
                up.du
            }
        }
    };
}

lift_impl!(f64 => D1);
lift_impl!(D1 => D2);
lift_impl!(D2 => D3);
lift_impl!(D3 => D4);
lift_impl!(D4 => D5);
lift_impl!(D5 => D6);
lift_impl!(D6 => D7);

impl Lift for D7 {
    type Up = D7;
    fn promote(self) -> D7 {
        unreachable!("dual tower exhausted: bracket depth guard failed")
    }
    fn seeded(self, _seed: Self) -> D7 {
        unreachable!("dual tower exhausted: bracket depth guard failed")
    }
    fn eps(_up: D7) -> Self {
        unreachable!("dual tower exhausted: bracket depth guard failed")
    }
}

/// Lift a slice of scalars one level as constants.
pub fn promote_all<S: Lift>(x: &[S]) -> Vec<S::Up> {
    x.iter().map(|v| v.promote()).collect()
}

/// Lift a point seeding the derivative channel with a direction vector:
/// evaluating a map at the result yields the directional derivative along
/// `dir` in the epsilon channel.
pub fn seed_direction<S: Lift>(x: &[S], dir: &[S]) -> Vec<S::Up> {
    x.iter().zip(dir).map(|(v, d)| v.seeded(*d)).collect()
}
