//! Scalar abstraction: the numerical core is generic over the floating
//! point type through [`Scalar`], with `f64` aliases exported at the crate
//! root. [`SampleScalar`] adds the random draws the samplers need so that
//! `rand_distr` trait bounds stay out of the algorithm signatures.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use rand::distr::uniform::SampleUniform;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

pub trait Scalar:
    Float + FromPrimitive + Sum + SampleUniform + Debug + Display + Default + Send + Sync + 'static
{
    /// Lift an `f64` constant into the scalar type.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + Sum
        + SampleUniform
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Scalars that can be drawn from the standard distributions used here.
pub trait SampleScalar: Scalar {
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
    fn chi_squared<R: Rng + ?Sized>(df: f64, rng: &mut R) -> Self;
    /// Uniform draw from `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_sample_scalar {
    ($t:ty) => {
        impl SampleScalar for $t {
            fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            fn chi_squared<R: Rng + ?Sized>(df: f64, rng: &mut R) -> Self {
                ChiSquared::new(df as $t)
                    .expect("positive degrees of freedom")
                    .sample(rng)
            }

            fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random::<$t>()
            }
        }
    };
}

impl_sample_scalar!(f32);
impl_sample_scalar!(f64);
