//! Isotropic gas momentum distributions and the seeded random streams used
//! to sample them.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, UnitSphere};
use serde_json::Value;

use crate::error::{invalid, Result};
use crate::momentum::Momentum;
use crate::registry::Registry;

/// A normalized isotropic momentum density with a sampler.
pub trait MomentumDistribution: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Density at squared modulus `p2`, normalized to one over R³.
    fn density(&self, p2: f64) -> f64;

    /// Square root of the density, evaluated without cancellation.
    fn sqrt_density(&self, p2: f64) -> f64 {
        self.density(p2).sqrt()
    }

    /// Characteristic momentum; quadrature cutoffs are multiples of it.
    fn scale(&self) -> f64;

    /// Mean modulus ⟨|p|⟩.
    fn mean_speed(&self) -> f64;

    fn sample(&self, rng: &mut dyn RngCore) -> Momentum;

    /// Draws from the density weighted by |p| / ⟨|p|⟩.
    fn sample_speed_weighted(&self, rng: &mut dyn RngCore) -> Momentum;
}

/// The Maxwell density exp(-p²/p_T²) / (π^{3/2} p_T³).
#[derive(Clone, Debug)]
pub struct Maxwell {
    p_t: f64,
    norm: f64,
    sqrt_norm: f64,
    speed_sq: Gamma<f64>,
}

impl Maxwell {
    pub fn new(p_t: f64) -> Result<Self> {
        if !(p_t > 0.0 && p_t.is_finite()) {
            return Err(invalid(format!("Maxwell scale must be positive, got {p_t}")));
        }
        let norm = 1.0 / (PI.powf(1.5) * p_t.powi(3));
        let speed_sq = Gamma::new(2.0, p_t * p_t).map_err(|e| invalid(e.to_string()))?;
        Ok(Maxwell { p_t, norm, sqrt_norm: norm.sqrt(), speed_sq })
    }

    /// Maxwell density of a particle of `mass` at `temperature`.
    pub fn thermal(mass: f64, temperature: f64) -> Result<Self> {
        Maxwell::new((2.0 * mass * temperature).sqrt())
    }

    pub fn p_t(&self) -> f64 {
        self.p_t
    }
}

impl MomentumDistribution for Maxwell {
    fn name(&self) -> &'static str {
        "maxwell"
    }

    fn density(&self, p2: f64) -> f64 {
        self.norm * (-p2 / (self.p_t * self.p_t)).exp()
    }

    fn sqrt_density(&self, p2: f64) -> f64 {
        self.sqrt_norm * (-0.5 * p2 / (self.p_t * self.p_t)).exp()
    }

    fn scale(&self) -> f64 {
        self.p_t
    }

    fn mean_speed(&self) -> f64 {
        2.0 * self.p_t / PI.sqrt()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Momentum {
        let s = self.p_t / 2f64.sqrt();
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        Momentum::new(s * x, s * y, s * z)
    }

    fn sample_speed_weighted(&self, rng: &mut dyn RngCore) -> Momentum {
        // |p|² is Gamma(2, p_T²) distributed under the weight |p| μ(p).
        let p = self.speed_sq.sample(rng).sqrt();
        let d: [f64; 3] = UnitSphere.sample(rng);
        Momentum(d) * p
    }
}

/// Builds a distribution for a gas of given mass and temperature.
pub trait DistributionFactory: Send + Sync {
    fn describe(&self) -> &'static str;
    fn build(&self, mass: f64, temperature: f64, params: &Value) -> Result<Arc<dyn MomentumDistribution>>;
}

struct MaxwellFactory;

impl DistributionFactory for MaxwellFactory {
    fn describe(&self) -> &'static str {
        "Maxwell–Boltzmann density at the gas temperature"
    }

    fn build(&self, mass: f64, temperature: f64, _params: &Value) -> Result<Arc<dyn MomentumDistribution>> {
        Ok(Arc::new(Maxwell::thermal(mass, temperature)?))
    }
}

pub type DistributionRegistry = Registry<dyn DistributionFactory>;

/// Registry holding every shipped distribution.
pub fn builtin_distributions() -> DistributionRegistry {
    let mut r = DistributionRegistry::empty("distribution");
    r.register("maxwell", Box::new(MaxwellFactory));
    r
}

/// Independent random stream number `stream` derived from `seed`.
///
/// Streams share the ChaCha8 key expanded from the seed and differ in the
/// 64-bit stream selector, so they never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
