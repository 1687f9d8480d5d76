//! Gas and tracer parameters, relative-momentum kinematics and the mean
//! collision rate.
//!
//! Internal units: ħ = 1, k_B = 1.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::distribution::{Maxwell, MomentumDistribution};
use crate::error::{invalid, Error, Result};
use crate::momentum::Momentum;
use crate::quadrature::{Estimate, GaussLegendre};
use crate::scattering::ScatteringModel;

/// Default thermal-average cutoff in units of the distribution scale.
pub const DEFAULT_CUTOFF: f64 = 6.0;

/// The background gas.
#[derive(Clone)]
pub struct GasSpec {
    mass: f64,
    number_density: f64,
    temperature: f64,
    p_t: f64,
    distribution: Arc<dyn MomentumDistribution>,
}

impl GasSpec {
    /// A Maxwell gas.
    pub fn maxwell(mass: f64, number_density: f64, temperature: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid(format!("gas mass must be positive and finite, got {mass}")));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(invalid(format!("gas temperature must be positive, got {temperature}")));
        }
        let dist = Arc::new(Maxwell::thermal(mass, temperature)?);
        GasSpec::with_distribution(mass, number_density, temperature, dist)
    }

    /// A gas with an arbitrary isotropic distribution.
    pub fn with_distribution(
        mass: f64,
        number_density: f64,
        temperature: f64,
        distribution: Arc<dyn MomentumDistribution>,
    ) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid(format!("gas mass must be positive and finite, got {mass}")));
        }
        // A zero density is admitted: it switches collisions off.
        if !(number_density >= 0.0 && number_density.is_finite()) {
            return Err(invalid(format!("number density must be non-negative, got {number_density}")));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(invalid(format!("gas temperature must be positive, got {temperature}")));
        }
        Ok(GasSpec {
            mass,
            number_density,
            temperature,
            p_t: (2.0 * mass * temperature).sqrt(),
            distribution,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn number_density(&self) -> f64 {
        self.number_density
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Most probable momentum, p_T² = 2 m T.
    pub fn p_t(&self) -> f64 {
        self.p_t
    }

    pub fn distribution(&self) -> &dyn MomentumDistribution {
        self.distribution.as_ref()
    }

    /// Same gas at a different number density.
    pub fn with_density(&self, number_density: f64) -> Result<Self> {
        GasSpec::with_distribution(self.mass, number_density, self.temperature, self.distribution.clone())
    }

    pub fn summary(&self) -> GasSummary {
        GasSummary {
            mass: self.mass,
            number_density: self.number_density,
            temperature: self.temperature,
            p_t: self.p_t,
            distribution: self.distribution.name().to_string(),
        }
    }
}

impl fmt::Debug for GasSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.summary(), f)
    }
}

/// Serializable description of a gas.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GasSummary {
    pub mass: f64,
    pub number_density: f64,
    pub temperature: f64,
    pub p_t: f64,
    pub distribution: String,
}

/// The tracer particle. `mass` may be infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracerSpec {
    pub mass: f64,
    /// m / M, zero for an infinitely heavy tracer.
    pub mass_ratio: f64,
    /// m M / (M + m).
    pub reduced_mass: f64,
}

impl TracerSpec {
    pub fn new(mass: f64, gas: &GasSpec) -> Result<Self> {
        if !(mass > 0.0) || mass.is_nan() {
            return Err(invalid(format!("tracer mass must be positive, got {mass}")));
        }
        let r = gas.mass / mass;
        Ok(TracerSpec { mass, mass_ratio: r, reduced_mass: gas.mass / (1.0 + r) })
    }

    /// A tracer whose mass is `ratio⁻¹` gas masses; `ratio = 0` is the
    /// infinitely heavy limit.
    pub fn from_ratio(ratio: f64, gas: &GasSpec) -> Result<Self> {
        if !(ratio >= 0.0 && ratio.is_finite()) {
            return Err(invalid(format!("mass ratio must be non-negative, got {ratio}")));
        }
        let mass = if ratio == 0.0 { f64::INFINITY } else { gas.mass / ratio };
        Ok(TracerSpec { mass, mass_ratio: ratio, reduced_mass: gas.mass / (1.0 + ratio) })
    }

    pub fn is_infinite(&self) -> bool {
        self.mass_ratio == 0.0
    }

    /// Free kinetic energy P²/2M (zero for an infinite mass).
    pub fn kinetic_energy(&self, p: &Momentum) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            p.norm2() / (2.0 * self.mass)
        }
    }
}

/// Mass factors of the relative-momentum map, precomputed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kinematics {
    pub gas_mass: f64,
    pub mass_ratio: f64,
    pub reduced_mass: f64,
    /// m*/m.
    pub gas_factor: f64,
    /// m*/M.
    pub tracer_factor: f64,
}

impl Kinematics {
    pub fn new(gas: &GasSpec, tracer: &TracerSpec) -> Self {
        let r = tracer.mass_ratio;
        Kinematics {
            gas_mass: gas.mass,
            mass_ratio: r,
            reduced_mass: tracer.reduced_mass,
            gas_factor: 1.0 / (1.0 + r),
            tracer_factor: r / (1.0 + r),
        }
    }

    /// Relative momentum (m*/m) p − (m*/M) P.
    pub fn rel(&self, p: Momentum, big_p: Momentum) -> Momentum {
        p * self.gas_factor - big_p * self.tracer_factor
    }
}

/// Relative momentum of a gas particle `p` and the tracer `big_p`.
pub fn rel(p: Momentum, big_p: Momentum, gas: &GasSpec, tracer: &TracerSpec) -> Momentum {
    Kinematics::new(gas, tracer).rel(p, big_p)
}

/// Gas momentum density μ(p).
pub fn mu(p: Momentum, gas: &GasSpec) -> f64 {
    gas.distribution().density(p.norm2())
}

/// n ⟨σ(|rel|) |rel| / m*⟩ over the gas distribution.
///
/// Spherical product rule about the direction of `big_p`; the error
/// estimate is the change under halving of both orders together with the
/// mass missing beyond the cutoff.
pub fn mean_collision_rate(
    big_p: Momentum,
    gas: &GasSpec,
    tracer: &TracerSpec,
    model: &dyn ScatteringModel,
) -> Result<Estimate> {
    mean_collision_rate_with(big_p, gas, tracer, model, DEFAULT_CUTOFF)
}

/// As [`mean_collision_rate`] with an explicit cutoff in units of the
/// distribution scale.
pub fn mean_collision_rate_with(
    big_p: Momentum,
    gas: &GasSpec,
    tracer: &TracerSpec,
    model: &dyn ScatteringModel,
    cutoff: f64,
) -> Result<Estimate> {
    big_p.check_finite("tracer momentum")?;
    let kin = Kinematics::new(gas, tracer);
    let fine = rate_rule(big_p, gas, &kin, model, cutoff, 96, 48)?;
    let coarse = rate_rule(big_p, gas, &kin, model, cutoff, 48, 24)?;
    let n = gas.number_density();
    let value = n * fine.0;
    let tail = (1.0 - fine.1).abs();
    let error = n * (fine.0 - coarse.0).abs() + value.abs() * tail;
    if tail > 1e-6 || error > 1e-6 * value.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotConverged { estimate: value, error_bound: error });
    }
    Ok(Estimate { value, error })
}

/// Returns (∫ μ σ |rel| / m*, ∫ μ) over the ball of radius cutoff·scale.
fn rate_rule(
    big_p: Momentum,
    gas: &GasSpec,
    kin: &Kinematics,
    model: &dyn ScatteringModel,
    cutoff: f64,
    radial: usize,
    polar: usize,
) -> Result<(f64, f64)> {
    let dist = gas.distribution();
    let p_max = cutoff * dist.scale();
    let rad = GaussLegendre::new(radial).on_interval(0.0, p_max);
    let pol = GaussLegendre::new(polar);
    let pn = big_p.norm();
    let axis = if pn > 0.0 { big_p / pn } else { Momentum::new(0.0, 0.0, 1.0) };
    let mut rate = 0.0;
    let mut mass = 0.0;
    for &(p, wp) in &rad {
        let shell = 2.0 * PI * wp * p * p * dist.density(p * p);
        mass += 2.0 * shell;
        for (&c, &wc) in pol.nodes.iter().zip(&pol.weights) {
            // Only |rel| enters, which depends on the angle to P alone.
            let s = (1.0 - c * c).sqrt();
            let ortho = any_orthogonal(axis);
            let gp = axis * (p * c) + ortho * (p * s);
            let r = kin.rel(gp, big_p).norm();
            if r == 0.0 {
                continue;
            }
            let sigma = model.sigma(r)?.value;
            rate += shell * wc * sigma * r / kin.reduced_mass;
        }
    }
    Ok((rate, mass))
}

fn any_orthogonal(a: Momentum) -> Momentum {
    let e = if a.x().abs() < 0.9 { Momentum::new(1.0, 0.0, 0.0) } else { Momentum::new(0.0, 1.0, 0.0) };
    let v = e - a * a.dot(&e);
    v / v.norm()
}
