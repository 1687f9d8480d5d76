//! Run configuration: JSON schema, SI conversion, defaults and validation.
//!
//! Values are in internal units (ħ = k_B = 1). An optional `si` block
//! replaces the masses, temperature and density at load time, choosing the
//! gas mass as the unit of mass and 2 k_B T as the unit of energy, so that
//! the gas thermal momentum is one.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classical::MIN_STATISTICAL_PARTICLES;
use crate::distribution::builtin_distributions;
use crate::error::{invalid, Error, Result};
use crate::evolution::{gaussian_state, pure_state_sectors, thermal_state, EvolveSpec, MonitorTolerances, SectorState};
use crate::grid::{Cell, MomentumGrid};
use crate::kernels::{KernelEngine, Physics, QuadratureSpec};
use crate::momentum::Momentum;
use crate::physics::{mean_collision_rate, GasSpec, TracerSpec};
use crate::scattering::{build_model, ModelSpec, ScatteringModel};

pub const CONFIG_VERSION: u32 = 1;

/// Smallest grid half-extent in units of the tracer thermal momentum √(2MT).
pub const EXTENT_FACTOR: f64 = 5.0;

const BOLTZMANN: f64 = 1.380_649e-23;
const HBAR: f64 = 1.054_571_817e-34;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub physics: PhysicsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub si: Option<SiUnits>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default)]
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub dsmc: DsmcConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub tolerance_profile: ToleranceProfile,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub gas: GasConfig,
    pub tracer: TracerConfig,
    pub model: ModelSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasConfig {
    /// Required unless an `si` block supplies it.
    #[serde(default)]
    pub mass: Option<f64>,
    #[serde(default = "one")]
    pub number_density: f64,
    #[serde(default = "half")]
    pub temperature: f64,
    #[serde(default = "maxwell")]
    pub distribution: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub distribution_params: Value,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn maxwell() -> String {
    "maxwell".into()
}

/// Exactly one of `mass` and `mass_ratio` (m/M, zero for M = ∞).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracerConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_ratio: Option<f64>,
}

/// Laboratory inputs converted once at load time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiUnits {
    pub gas_mass_kg: f64,
    pub tracer_mass_kg: f64,
    pub temperature_k: f64,
    pub pressure_pa: f64,
    /// Internal units in SI, filled in on conversion.
    #[serde(default, skip_deserializing, skip_serializing_if = "Option::is_none")]
    pub scales: Option<SiScales>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SiScales {
    pub mass_kg: f64,
    pub energy_j: f64,
    pub momentum_kg_m_per_s: f64,
    pub length_m: f64,
    pub time_s: f64,
}

impl SiUnits {
    pub fn scales(&self) -> Result<SiScales> {
        for (name, v) in [
            ("gas_mass_kg", self.gas_mass_kg),
            ("tracer_mass_kg", self.tracer_mass_kg),
            ("temperature_k", self.temperature_k),
            ("pressure_pa", self.pressure_pa),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("si.{name} must be positive, got {v}")));
            }
        }
        let energy = 2.0 * BOLTZMANN * self.temperature_k;
        let momentum = (self.gas_mass_kg * energy).sqrt();
        Ok(SiScales {
            mass_kg: self.gas_mass_kg,
            energy_j: energy,
            momentum_kg_m_per_s: momentum,
            length_m: HBAR / momentum,
            time_s: HBAR / energy,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Points per axis (odd).
    pub n: usize,
    pub half_extent: f64,
    /// Radius of the transfer lattice; defaults to the half-extent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_max: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 21, half_extent: 5.0, q_max: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Offsets Δ tabulated by the kernel command.
    pub deltas: Vec<Cell>,
    pub max_table_bytes: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { deltas: vec![[0, 0, 0]], max_table_bytes: crate::kernels::DEFAULT_MAX_TABLE_BYTES }
    }
}

/// Initial state of evolution and particle runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Discrete Maxwell distribution at the gas temperature.
    Thermal,
    /// Gaussian at `temperature_fraction` of the gas temperature.
    Cold {
        #[serde(default = "tenth")]
        temperature_fraction: f64,
    },
    /// Sectors of the pure state ψ ∝ g(P - P0) + g(P + P0) with Gaussian
    /// packets g of momentum width `width`.
    Pure {
        #[serde(default = "default_center")]
        center: [f64; 3],
        #[serde(default = "half")]
        width: f64,
        #[serde(default = "default_deltas")]
        deltas: Vec<Cell>,
    },
}

fn tenth() -> f64 {
    0.1
}

fn default_center() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

fn default_deltas() -> Vec<Cell> {
    vec![[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0]]
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::Cold { temperature_fraction: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationConfig {
    /// Final time; defaults to `collision_times` mean collision times.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    pub collision_times: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub stability: f64,
    pub warn_only: bool,
    pub symmetry_reduction: bool,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            t_final: None,
            collision_times: 30.0,
            dt: None,
            stability: crate::evolution::DEFAULT_STABILITY,
            warn_only: false,
            symmetry_reduction: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsmcConfig {
    pub particles: usize,
    pub outputs: usize,
    pub histogram_bins: usize,
    /// Also integrate the grid equation and compare moments.
    pub paired_grid: bool,
}

impl Default for DsmcConfig {
    fn default() -> Self {
        DsmcConfig { particles: 100_000, outputs: 60, histogram_bins: 24, paired_grid: true }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceProfile {
    #[default]
    Default,
    /// Trace tolerance 1e-15, beyond double-precision accumulation.
    Strict,
}

impl ToleranceProfile {
    pub fn tolerances(self) -> MonitorTolerances {
        match self {
            ToleranceProfile::Default => MonitorTolerances::default(),
            ToleranceProfile::Strict => MonitorTolerances { trace: 1e-15, ..MonitorTolerances::default() },
        }
    }
}

impl std::str::FromStr for ToleranceProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(ToleranceProfile::Default),
            "strict" => Ok(ToleranceProfile::Strict),
            _ => Err(invalid(format!("unknown tolerance profile '{s}' (default, strict)"))),
        }
    }
}

/// Individual tolerance overrides applied on top of the profile.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1_growth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_increase: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negativity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positivity: Option<f64>,
}

impl RunConfig {
    /// The standard desk configuration: m = M = 1, n = 1, T = 0.5,
    /// constant scattering length 0.25, N = 21 on [-5, 5]³, cold start.
    pub fn desk() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            physics: PhysicsConfig {
                gas: GasConfig {
                    mass: Some(1.0),
                    number_density: 1.0,
                    temperature: 0.5,
                    distribution: maxwell(),
                    distribution_params: Value::Null,
                },
                tracer: TracerConfig { mass: Some(1.0), mass_ratio: None },
                model: ModelSpec::new("constant_length", serde_json::json!({ "length": 0.25 })),
            },
            si: None,
            grid: GridConfig::default(),
            quadrature: QuadratureSpec::default(),
            kernel: KernelConfig::default(),
            scenario: Scenario::default(),
            integration: IntegrationConfig::default(),
            dsmc: DsmcConfig::default(),
            seed: 0,
            output: default_output(),
            tolerance_profile: ToleranceProfile::Default,
            tolerances: ToleranceOverrides::default(),
        }
    }

    /// Parses, converts SI inputs and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut c: RunConfig = serde_json::from_str(text).map_err(|e| Error::Format(format!("configuration: {e}")))?;
        c.apply_si()?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_json(&std::fs::read_to_string(path)?)
    }

    /// Pretty JSON with keys in declaration order.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Replaces masses, temperature and density from the `si` block.
    pub fn apply_si(&mut self) -> Result<()> {
        let Some(si) = self.si.as_mut() else {
            return Ok(());
        };
        let s = si.scales()?;
        si.scales = Some(s);
        let gas = &mut self.physics.gas;
        gas.mass = Some(1.0);
        gas.temperature = 0.5;
        gas.number_density = si.pressure_pa / (BOLTZMANN * si.temperature_k) * s.length_m.powi(3);
        self.physics.tracer = TracerConfig { mass: Some(si.tracer_mass_kg / si.gas_mass_kg), mass_ratio: None };
        Ok(())
    }

    /// Checks every field before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(format!("configuration version {} is not supported (expected {CONFIG_VERSION})", self.version)));
        }
        let gas = self.gas()?;
        let tracer = self.tracer(&gas)?;
        self.model()?;
        self.quadrature.validate()?;
        let grid = self.grid()?;
        if !tracer.is_infinite() {
            grid.check_extent((2.0 * tracer.mass * gas.temperature()).sqrt(), EXTENT_FACTOR)?;
        }
        if let Some(q) = self.grid.q_max {
            if !(q > 0.0 && q.is_finite()) {
                return Err(invalid(format!("q_max must be positive, got {q}")));
            }
        }
        for d in self.kernel.deltas.iter().chain(self.scenario_deltas().iter()) {
            let h = grid.half();
            if d.iter().any(|x| x.abs() > 2 * h) {
                return Err(invalid(format!("offset {d:?} exceeds the grid")));
            }
        }
        match &self.scenario {
            Scenario::Thermal if tracer.is_infinite() => {
                return Err(invalid("thermal scenario needs a finite tracer mass"));
            }
            Scenario::Cold { temperature_fraction } if !(*temperature_fraction > 0.0) || tracer.is_infinite() => {
                return Err(invalid("cold scenario needs a positive temperature fraction and a finite tracer mass"));
            }
            Scenario::Pure { center, width, deltas } => {
                if !(*width > 0.0) || center.iter().any(|x| !x.is_finite()) {
                    return Err(invalid("pure scenario needs a positive width and a finite center"));
                }
                if !deltas.contains(&[0, 0, 0]) {
                    return Err(invalid("pure scenario must include the Δ = 0 sector"));
                }
            }
            _ => {}
        }
        let i = &self.integration;
        if let Some(t) = i.t_final {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(invalid(format!("t_final must be non-negative, got {t}")));
            }
        }
        if !(i.collision_times > 0.0 && i.collision_times.is_finite()) {
            return Err(invalid("collision_times must be positive"));
        }
        if let Some(dt) = i.dt {
            if !(dt > 0.0) {
                return Err(invalid(format!("dt must be positive, got {dt}")));
            }
        }
        if !(i.stability > 0.0) {
            return Err(invalid("stability factor must be positive"));
        }
        if self.dsmc.particles < MIN_STATISTICAL_PARTICLES {
            return Err(invalid(format!(
                "dsmc.particles = {} is below the statistical minimum {MIN_STATISTICAL_PARTICLES}",
                self.dsmc.particles
            )));
        }
        if self.dsmc.outputs == 0 || self.dsmc.histogram_bins == 0 {
            return Err(invalid("dsmc outputs and histogram bins must be positive"));
        }
        let t = self.tolerances();
        for v in [t.trace, t.l1_growth, t.entropy_increase, t.negativity, t.positivity] {
            if !(v >= 0.0) {
                return Err(invalid(format!("tolerances must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn gas(&self) -> Result<GasSpec> {
        let g = &self.physics.gas;
        let mass = g.mass.ok_or_else(|| invalid("physics.gas.mass is required"))?;
        let dist = builtin_distributions().get(&g.distribution)?.build(mass, g.temperature, &g.distribution_params)?;
        GasSpec::with_distribution(mass, g.number_density, g.temperature, dist)
    }

    pub fn tracer(&self, gas: &GasSpec) -> Result<TracerSpec> {
        match (self.physics.tracer.mass, self.physics.tracer.mass_ratio) {
            (Some(m), None) => TracerSpec::new(m, gas),
            (None, Some(r)) => TracerSpec::from_ratio(r, gas),
            _ => Err(invalid("physics.tracer needs exactly one of mass and mass_ratio")),
        }
    }

    pub fn model(&self) -> Result<Arc<dyn ScatteringModel>> {
        build_model(&self.physics.model)
    }

    pub fn physics(&self) -> Result<Physics> {
        let gas = self.gas()?;
        let tracer = self.tracer(&gas)?;
        Ok(Physics::new(gas, tracer, self.model()?))
    }

    pub fn engine(&self) -> Result<Arc<KernelEngine>> {
        Ok(Arc::new(KernelEngine::new(self.physics()?, self.quadrature.clone())?))
    }

    pub fn grid(&self) -> Result<MomentumGrid> {
        MomentumGrid::with_extent(self.grid.n, self.grid.half_extent)
    }

    pub fn tolerances(&self) -> MonitorTolerances {
        let mut t = self.tolerance_profile.tolerances();
        let o = &self.tolerances;
        t.trace = o.trace.unwrap_or(t.trace);
        t.l1_growth = o.l1_growth.unwrap_or(t.l1_growth);
        t.entropy_increase = o.entropy_increase.unwrap_or(t.entropy_increase);
        t.negativity = o.negativity.unwrap_or(t.negativity);
        t.positivity = o.positivity.unwrap_or(t.positivity);
        t
    }

    /// Mean collision rate of a tracer at rest.
    pub fn collision_rate(&self) -> Result<f64> {
        let p = self.physics()?;
        Ok(mean_collision_rate(Momentum::ZERO, &p.gas, &p.tracer, p.model.as_ref())?.value)
    }

    /// Explicit final time, or the configured number of mean collision
    /// times of a tracer at rest.
    pub fn t_final(&self) -> Result<f64> {
        if let Some(t) = self.integration.t_final {
            return Ok(t);
        }
        let rate = self.collision_rate()?;
        if rate > 0.0 {
            Ok(self.integration.collision_times / rate)
        } else {
            Err(invalid("no collisions occur; set integration.t_final explicitly"))
        }
    }

    pub fn evolve_spec(&self) -> Result<EvolveSpec> {
        let mut s = EvolveSpec::new(self.t_final()?);
        s.dt = self.integration.dt;
        s.stability = self.integration.stability;
        s.tolerances = self.tolerances();
        s.warn_only = self.integration.warn_only;
        s.symmetry_reduction = self.integration.symmetry_reduction;
        let gas = self.gas()?;
        if !self.tracer(&gas)?.is_infinite() {
            s.temperature = Some(gas.temperature());
        }
        Ok(s)
    }

    /// Offsets of the initial sectors.
    pub fn scenario_deltas(&self) -> Vec<Cell> {
        match &self.scenario {
            Scenario::Pure { deltas, .. } => deltas.clone(),
            _ => vec![[0, 0, 0]],
        }
    }

    pub fn initial_states(&self) -> Result<Vec<SectorState>> {
        let gas = self.gas()?;
        let tracer = self.tracer(&gas)?;
        let grid = self.grid()?;
        match &self.scenario {
            Scenario::Thermal => Ok(vec![thermal_state(grid, &tracer, gas.temperature())?]),
            Scenario::Cold { temperature_fraction } => {
                Ok(vec![gaussian_state(grid, (tracer.mass * gas.temperature() * temperature_fraction).sqrt())?])
            }
            Scenario::Pure { center, width, deltas } => {
                let c = Momentum(*center);
                let g = |p: Momentum| (-p.norm2() / (4.0 * width * width)).exp();
                let psi: Vec<Complex64> =
                    (0..grid.len()).map(|i| Complex64::new(g(grid.node(i) - c) + g(grid.node(i) + c), 0.0)).collect();
                pure_state_sectors(grid, &psi, deltas)
            }
        }
    }
}
