//! Spectral toolkit for Hankel operators whose kernels have the form
//! `h(t) = P(ln t) / t`.
//!
//! The pipeline runs from the kernel polynomial `P` to the symbol `Q`
//! ([`coeffmap`]), through the weight `v` and change of variables
//! ([`profile`]) to the regular differential operator `B` ([`liouville`]),
//! then to scattering data ([`scattering`], [`longrange`]), eigenfunction
//! asymptotics ([`hankelphase`], [`statphase`]) and time evolution
//! ([`evolution`]).
//!
//! The algebraic layers are generic over the scalar type; the solvers work in
//! `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumCast};

pub mod cli;
pub mod coeffmap;
pub mod error;
pub mod evolution;
pub mod hankelphase;
pub mod liouville;
pub mod longrange;
pub mod profile;
pub mod quad;
pub mod scattering;
pub mod specfun;
pub mod statphase;
pub mod taylor;

pub use error::{Error, Result};

/// Real scalar used throughout the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

pub type Complex64 = num_complex::Complex<f64>;

pub type RealPolynomial64 = coeffmap::RealPolynomial<f64>;
pub type RealPolynomial32 = coeffmap::RealPolynomial<f32>;
pub type WeightProfile64 = profile::WeightProfile<f64>;
pub type WeightProfile32 = profile::WeightProfile<f32>;
pub type ChangeOfVariables64 = profile::ChangeOfVariables<f64>;
pub type ChangeOfVariables32 = profile::ChangeOfVariables<f32>;
pub type RecipGammaSeries64 = specfun::RecipGammaSeries<f64>;
pub type Jet64 = taylor::Jet<f64>;
