//! Elastic two-body scattering amplitudes and cross sections.
//!
//! Models are selected by name through [`ModelRegistry`]; every model
//! evaluates its amplitude on an energy-shell point described by the
//! relative momentum modulus, the scattering angle and the momentum
//! transfer, so call sites never have to solve the shell condition.

mod bessel;
mod born;
mod constant;
mod hard_sphere;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use bessel::{legendre, spherical_bessel, spherical_j, spherical_y};
pub use born::{BornFormFactor, FormFactor};
pub use constant::ConstantLength;
pub use hard_sphere::HardSphere;

use crate::error::{invalid, Error, Result};
use crate::momentum::Momentum;
use crate::quadrature::{Estimate, GaussLegendre};
use crate::registry::Registry;

/// Relative tolerance on | |p_out| - |p_in| | for amplitude requests.
pub const SHELL_TOLERANCE: f64 = 1e-9;

/// An on-shell configuration: |p_in| = |p_out| = k, angle θ between them,
/// and transfer |p_out - p_in| = 2k sin(θ/2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShellPoint {
    pub k: f64,
    pub cos_theta: f64,
    pub transfer: f64,
}

impl ShellPoint {
    /// Shell point at modulus `k` and angle cos θ.
    pub fn from_angle(k: f64, cos_theta: f64) -> Self {
        ShellPoint { k, cos_theta, transfer: k * (2.0 * (1.0 - cos_theta)).max(0.0).sqrt() }
    }

    /// Shell point of an explicit pair; fails if the pair is off shell.
    pub fn from_pair(p_out: Momentum, p_in: Momentum) -> Result<Self> {
        p_out.check_finite("outgoing momentum")?;
        p_in.check_finite("incoming momentum")?;
        let ko = p_out.norm();
        let ki = p_in.norm();
        if (ko - ki).abs() > SHELL_TOLERANCE * ki {
            return Err(Error::OffShell { p_out: ko, p_in: ki });
        }
        let cos_theta = if ki == 0.0 { 1.0 } else { (p_out.dot(&p_in) / (ko * ki)).clamp(-1.0, 1.0) };
        Ok(ShellPoint { k: ki, cos_theta, transfer: (p_out - p_in).norm() })
    }
}

/// An elastic interaction model.
pub trait ScatteringModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Model parameters for metadata records.
    fn parameters(&self) -> Value;

    /// Amplitude f on a shell point.
    fn amplitude_at(&self, shell: &ShellPoint) -> Complex64;

    /// Total cross section at relative momentum `k`, with its truncation
    /// or quadrature error estimate.
    fn sigma(&self, k: f64) -> Result<Estimate>;

    /// Upper bound of |f| over all angles at modulus `k`.
    fn amplitude_bound(&self, k: f64) -> f64;

    /// Upper bound of σ over all k.
    fn sigma_bound(&self) -> f64;

    /// True when f depends on the momentum transfer alone.
    fn transfer_only(&self) -> bool {
        false
    }

    /// True when f is independent of the scattering angle.
    fn is_isotropic(&self) -> bool {
        false
    }

    /// Draws cos θ from |f|² at modulus `k`.
    ///
    /// Isotropic models sample uniformly; others reject against the
    /// amplitude bound.
    fn sample_cos_theta(&self, k: f64, rng: &mut dyn RngCore) -> Result<f64> {
        if self.is_isotropic() {
            return Ok(2.0 * rng.random::<f64>() - 1.0);
        }
        let bound = self.amplitude_bound(k).powi(2);
        if !(bound > 0.0) {
            return Err(Error::MajorantViolation(format!("vanishing angular bound at k = {k}")));
        }
        loop {
            let c = 2.0 * rng.random::<f64>() - 1.0;
            let d = self.amplitude_at(&ShellPoint::from_angle(k, c)).norm_sqr();
            if d > bound * (1.0 + 1e-12) {
                return Err(Error::MajorantViolation(format!(
                    "|f|^2 = {d:e} above angular bound {bound:e} at k = {k}, cos = {c}"
                )));
            }
            if rng.random::<f64>() * bound < d {
                return Ok(c);
            }
        }
    }
}

/// f(p_out, p_in) for an on-shell pair.
pub fn amplitude(model: &dyn ScatteringModel, p_out: Momentum, p_in: Momentum) -> Result<Complex64> {
    Ok(model.amplitude_at(&ShellPoint::from_pair(p_out, p_in)?))
}

/// dσ/dΩ = |f(p_out, p_in)|².
pub fn differential_cross_section(model: &dyn ScatteringModel, p_out: Momentum, p_in: Momentum) -> Result<f64> {
    Ok(amplitude(model, p_out, p_in)?.norm_sqr())
}

/// σ(|p_in|).
pub fn total_cross_section(model: &dyn ScatteringModel, p_in: Momentum) -> Result<Estimate> {
    p_in.check_finite("incoming momentum")?;
    model.sigma(p_in.norm())
}

/// σ(k) by direct spherical quadrature of |f|² with an `order`-point rule
/// in cos θ (the azimuth is trivial).
pub fn sigma_by_quadrature(model: &dyn ScatteringModel, k: f64, order: usize) -> f64 {
    let gl = GaussLegendre::new(order);
    let s: f64 = gl
        .nodes
        .iter()
        .zip(&gl.weights)
        .map(|(&c, &w)| w * model.amplitude_at(&ShellPoint::from_angle(k, c)).norm_sqr())
        .sum();
    2.0 * PI * s
}

/// Name plus free-form parameters, as read from a configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: String,
    #[serde(flatten)]
    pub params: Map<String, Value>,
}

impl ModelSpec {
    pub fn new(kind: &str, params: Value) -> Self {
        let params = match params {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        ModelSpec { kind: kind.to_string(), params }
    }
}

/// Builds a model from configuration parameters.
pub trait ModelFactory: Send + Sync {
    fn describe(&self) -> &'static str;
    fn build(&self, params: &Map<String, Value>) -> Result<Arc<dyn ScatteringModel>>;
}

pub type ModelRegistry = Registry<dyn ModelFactory>;

/// Registry holding every shipped model.
pub fn builtin_models() -> ModelRegistry {
    let mut r = ModelRegistry::empty("scattering model");
    r.register("constant_length", Box::new(constant::Factory));
    r.register("hard_sphere", Box::new(hard_sphere::Factory));
    r.register("born_gaussian", Box::new(born::GaussianFactory));
    r.register("born_tabulated", Box::new(born::TabulatedFactory));
    r
}

/// Builds the model described by `spec` from the builtin registry.
pub fn build_model(spec: &ModelSpec) -> Result<Arc<dyn ScatteringModel>> {
    builtin_models().get(&spec.kind)?.build(&spec.params)
}

pub(crate) fn parse_params<T: for<'de> Deserialize<'de>>(kind: &str, params: &Map<String, Value>) -> Result<T> {
    serde_json::from_value(Value::Object(params.clone()))
        .map_err(|e| invalid(format!("parameters of model '{kind}': {e}")))
}
