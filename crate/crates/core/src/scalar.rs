//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! Everything is written against [`Real`], which bundles nalgebra's
//! `RealField` (for decompositions) with the num-traits conversions and the
//! handful of random draws the samplers need. `f64` is the working type;
//! `f32` is supported for memory-bound uses.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01, StandardNormal};

pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Machine epsilon of the type.
    const EPS: f64;

    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform draw on the open interval (0, 1).
    fn uniform_open01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Gamma draw in shape/rate form (mean `shape / rate`).
    fn sample_gamma<R: Rng + ?Sized>(shape: Self, rate: Self, rng: &mut R) -> Self;

    fn lgamma(self) -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }

    /// `spec_tol` widened to what the type can actually resolve.
    #[inline]
    fn tol(spec_tol: f64) -> Self {
        Self::lit(spec_tol.max(1.0e3 * Self::EPS))
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            const EPS: f64 = <$t>::EPSILON as f64;

            #[inline]
            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn uniform_open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Open01.sample(rng)
            }

            fn sample_gamma<R: Rng + ?Sized>(shape: Self, rate: Self, rng: &mut R) -> Self {
                Gamma::new(shape, 1.0 / rate)
                    .expect("gamma shape and rate must be positive")
                    .sample(rng)
            }

            fn lgamma(self) -> Self {
                statrs::function::gamma::ln_gamma(self as f64) as $t
            }
        }
    };
}

impl_real!(f64);
impl_real!(f32);
