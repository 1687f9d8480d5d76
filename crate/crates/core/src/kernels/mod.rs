//! The jump-operator function F(K, P; Q), the two-sided rate density
//! M_in(P, P'; Q), the classical rate density M_in^cl(P; Q), the discrete
//! out-rate M_out^cl(P), and their tabulation on momentum grids.
//!
//! All plane integrals over Q^⊥ use one tensor Gauss–Legendre rule on
//! [-K_max, K_max]² laid out in a frame fixed by Q alone, so values that
//! share Q also share quadrature nodes.
//!
//! The lattice sum over Q skips Q = 0, where M_in diverges like 1/|Q|.
//! The missing cell is restored by the leading singularity correction of
//! the trapezoidal rule on a cubic lattice,
//!
//! ```text
//!   W0(P, P') = C0 ΔP² ⟨ lim_{Q→0} |Q| M_in(P, P'; Q) ⟩_directions,
//! ```
//!
//! where C0 = 2.8372974794806… is minus the analytically continued
//! lattice sum Σ'_{n∈Z³} |n|^{-1}. Without it the out-rate at N = 21
//! falls short of the continuum value by about 11 %.

mod container;
mod table;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use container::{read_container, write_container, Container, ContainerKind, FORMAT_NAME, FORMAT_VERSION};
pub use table::{tabulate, KernelBuilder, KernelTable, TableMeta, TableValues, DEFAULT_MAX_TABLE_BYTES};

use crate::error::{invalid, Error, Result};
use crate::grid::MomentumGrid;
use crate::momentum::Momentum;
use crate::physics::{GasSpec, Kinematics, TracerSpec};
use crate::quadrature::{SphereRule, SquareRule};
use crate::scattering::{differential_cross_section, ScatteringModel, ShellPoint};

/// Default half-width of the Q^⊥ plane in units of the gas distribution
/// scale. The integrand is Gaussian about K⊥ = 0 whatever P and Q are;
/// the tail beyond 5.5 p_T is below 1e-13 and 24 points per axis resolve
/// the rest to about 1e-7.
pub const DEFAULT_PLANE_CUTOFF: f64 = 5.5;

/// Minus the analytically continued lattice sum Σ'_{n∈Z³} |n|^{-1}.
pub const ZERO_CELL_CONSTANT: f64 = 2.837_297_479_480_619_5;

/// Quadrature settings for every plane integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Gauss–Legendre points per axis of the Q^⊥ plane.
    pub order: usize,
    /// Plane half-width in units of the gas distribution scale.
    pub cutoff: f64,
    /// Points per axis for the Q → 0 limits of the zero cell.
    pub zero_cell_order: usize,
    /// Polar (Gauss–Legendre) directions for the zero-cell average.
    pub zero_cell_polar: usize,
    /// Azimuthal directions for the zero-cell average (even).
    pub zero_cell_azimuthal: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            order: 24,
            cutoff: DEFAULT_PLANE_CUTOFF,
            zero_cell_order: 16,
            zero_cell_polar: 6,
            zero_cell_azimuthal: 12,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order < 2 || self.zero_cell_order < 2 {
            return Err(invalid("quadrature orders must be at least 2"));
        }
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(invalid(format!("quadrature cutoff must be positive, got {}", self.cutoff)));
        }
        if self.zero_cell_polar < 1 || self.zero_cell_azimuthal < 2 || self.zero_cell_azimuthal % 2 == 1 {
            return Err(invalid("zero-cell directions need polar >= 1 and an even azimuthal count"));
        }
        Ok(())
    }
}

/// Gas, tracer and interaction of one simulation.
#[derive(Clone, Debug)]
pub struct Physics {
    pub gas: GasSpec,
    pub tracer: TracerSpec,
    pub model: Arc<dyn ScatteringModel>,
}

impl Physics {
    pub fn new(gas: GasSpec, tracer: TracerSpec, model: Arc<dyn ScatteringModel>) -> Self {
        Physics { gas, tracer, model }
    }

    pub fn kinematics(&self) -> Kinematics {
        Kinematics::new(&self.gas, &self.tracer)
    }

    pub fn summary(&self) -> Value {
        json!({
            "gas": self.gas.summary(),
            "tracer": {
                "mass": if self.tracer.is_infinite() { Value::Null } else { json!(self.tracer.mass) },
                "mass_ratio": self.tracer.mass_ratio,
                "reduced_mass": self.tracer.reduced_mass,
            },
            "model": { "name": self.model.name(), "parameters": self.model.parameters() },
        })
    }
}

/// Orthonormal frame (Q̂, e1, e2) of the plane Q^⊥.
///
/// e1 is the coordinate axis least aligned with Q (first one on ties),
/// orthogonalized against Q̂; e2 = Q̂ × e1. Reversing Q keeps e1 and
/// flips e2.
pub fn plane_basis(q: Momentum) -> Result<(Momentum, Momentum, Momentum)> {
    let qh = q.unit()?;
    let mut axis = 0;
    for k in 1..3 {
        if qh[k].abs() < qh[axis].abs() {
            axis = k;
        }
    }
    let mut a = [0.0; 3];
    a[axis] = 1.0;
    let a = Momentum(a);
    let e1 = (a - qh * qh.dot(&a)).unit()?;
    let e2 = qh.cross(&e1);
    Ok((qh, e1, e2))
}

/// The factors of F(K, P; Q).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FParts {
    /// √(n m) / m*.
    pub prefactor: f64,
    /// The shell point handed to the amplitude.
    pub shell: ShellPoint,
    /// f(rel⊥ - Q/2, rel⊥ + Q/2).
    pub amplitude: Complex64,
    /// μ(K⊥ + (1 + m/M) Q/2 + (m/M) P∥)^{1/2}.
    pub sqrt_mu: f64,
}

impl FParts {
    pub fn value(&self) -> Complex64 {
        self.amplitude * (self.prefactor * self.sqrt_mu)
    }
}

/// Evaluates kernel quantities for fixed physics and quadrature.
#[derive(Clone, Debug)]
pub struct KernelEngine {
    physics: Physics,
    kin: Kinematics,
    quad: QuadratureSpec,
    plane: SquareRule,
    zero_plane: SquareRule,
    directions: SphereRule,
    prefactor: f64,
}

/// Plane-sum inputs for one side of M_in: the source momentum split
/// along Q̂.
#[derive(Clone, Copy)]
struct Side {
    perp: Momentum,
    shift: f64,
}

impl KernelEngine {
    pub fn new(physics: Physics, quad: QuadratureSpec) -> Result<Self> {
        quad.validate()?;
        let kin = physics.kinematics();
        let width = quad.cutoff * physics.gas.distribution().scale();
        let prefactor = (physics.gas.number_density() * physics.gas.mass()).sqrt() / kin.reduced_mass;
        Ok(KernelEngine {
            plane: SquareRule::new(quad.order, width),
            zero_plane: SquareRule::new(quad.zero_cell_order, width),
            directions: SphereRule::new(quad.zero_cell_polar, quad.zero_cell_azimuthal),
            physics,
            kin,
            quad,
            prefactor,
        })
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.quad
    }

    pub fn kinematics(&self) -> &Kinematics {
        &self.kin
    }

    /// √(n m) / m*.
    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    /// The factors of F(K, P; Q); K enters only through K⊥.
    pub fn eval_f_parts(&self, k: Momentum, p: Momentum, q: Momentum) -> Result<FParts> {
        k.check_finite("K")?;
        p.check_finite("P")?;
        q.check_finite("Q")?;
        let qh = q.unit()?;
        let qn = q.norm();
        let k_perp = k - qh * k.dot(&qh);
        let p_par = p.dot(&qh);
        let p_perp = p - qh * p_par;
        let side = Side { perp: p_perp, shift: self.shift(qn, p_par) };
        let shell = self.shell(k_perp, side.perp, qn);
        Ok(FParts {
            prefactor: self.prefactor,
            shell,
            amplitude: self.physics.model.amplitude_at(&shell),
            sqrt_mu: self.sqrt_mu(k_perp.norm2(), side.shift),
        })
    }

    /// F(K, P; Q).
    pub fn eval_f(&self, k: Momentum, p: Momentum, q: Momentum) -> Result<Complex64> {
        Ok(self.eval_f_parts(k, p, q)?.value())
    }

    /// M_in(P, P'; Q) = |Q|⁻¹ ∫_{Q⊥} dK F(K, P - Q; Q) F*(K, P' - Q; Q).
    pub fn m_in(&self, p: Momentum, pp: Momentum, q: Momentum) -> Result<Complex64> {
        self.m_in_on(&self.plane, p, pp, q)
    }

    /// M_in at the default order together with the change observed when
    /// the per-axis order is doubled.
    pub fn m_in_converged(&self, p: Momentum, pp: Momentum, q: Momentum) -> Result<(Complex64, f64)> {
        let coarse = self.m_in(p, pp, q)?;
        let fine_rule = SquareRule::new(2 * self.quad.order, self.plane.half_width);
        let fine = self.m_in_on(&fine_rule, p, pp, q)?;
        Ok((fine, (fine - coarse).norm()))
    }

    /// As [`KernelEngine::m_in_converged`], failing when the relative change
    /// exceeds `tolerance`.
    pub fn m_in_checked(&self, p: Momentum, pp: Momentum, q: Momentum, tolerance: f64) -> Result<Complex64> {
        let (v, err) = self.m_in_converged(p, pp, q)?;
        if err > tolerance * v.norm() {
            return Err(Error::NotConverged { estimate: v.norm(), error_bound: err });
        }
        Ok(v)
    }

    fn m_in_on(&self, rule: &SquareRule, p: Momentum, pp: Momentum, q: Momentum) -> Result<Complex64> {
        p.check_finite("P")?;
        pp.check_finite("P'")?;
        q.check_finite("Q")?;
        let (qh, e1, e2) = plane_basis(q)?;
        let qn = q.norm();
        let a = self.side(p - q, qh, qn);
        let b = self.side(pp - q, qh, qn);
        let s = self.plane_sum(rule, e1, e2, qn, a, b);
        Ok(s * (self.prefactor * self.prefactor / qn))
    }

    /// M_in^cl(P; Q) = (n / m*) ∫ dK μ(K) δ((p_cf² - p_ci²)/2) |f(p_cf, p_ci)|²
    /// with p_ci = rel(K, P - Q) and p_cf = p_ci - Q.
    ///
    /// The delta fixes K·Q̂ so that p_ci·Q̂ = |Q|/2; its Jacobian is
    /// (m*/m)|Q|. The remaining plane is integrated on the same nodes as
    /// M_in, but through full three-vectors, μ itself and the vector
    /// amplitude interface.
    pub fn m_in_cl(&self, p: Momentum, q: Momentum) -> Result<f64> {
        p.check_finite("P")?;
        q.check_finite("Q")?;
        let (qh, e1, e2) = plane_basis(q)?;
        let qn = q.norm();
        let kin = &self.kin;
        let source = p - q;
        let along = (0.5 * qn + kin.tracer_factor * source.dot(&qh)) / kin.gas_factor;
        let dist = self.physics.gas.distribution();
        let model = self.physics.model.as_ref();
        let mut sum = 0.0;
        for &(x, y, w) in &self.plane.points {
            let k = e1 * x + e2 * y + qh * along;
            let p_ci = kin.rel(k, source);
            let p_cf = p_ci - q;
            sum += w * dist.density(k.norm2()) * differential_cross_section(model, p_cf, p_ci)?;
        }
        let n = self.physics.gas.number_density();
        Ok(n / kin.reduced_mass * sum / (kin.gas_factor * qn))
    }

    /// Zero-cell weight W0(P, P') for lattice spacing `spacing`.
    pub fn zero_cell_weight(&self, p: Momentum, pp: Momentum, spacing: f64) -> Result<Complex64> {
        p.check_finite("P")?;
        pp.check_finite("P'")?;
        let mut acc = Complex64::new(0.0, 0.0);
        for &(d, w) in &self.directions.directions {
            let (qh, e1, e2) = plane_basis(Momentum(d))?;
            let a = self.side(p, qh, 0.0);
            let b = self.side(pp, qh, 0.0);
            acc += self.plane_sum(&self.zero_plane, e1, e2, 0.0, a, b) * w;
        }
        let scale = ZERO_CELL_CONSTANT * spacing * spacing * self.prefactor * self.prefactor / (4.0 * PI);
        Ok(acc * scale)
    }

    /// Discrete out-rate: Σ_{Q ∈ lattice, P+Q on grid} M_in(P+Q, P+Q; Q) ΔV
    /// plus the zero-cell weight W0(P, P).
    pub fn m_out_cl(&self, p: Momentum, grid: &MomentumGrid, q_max: Option<f64>) -> Result<f64> {
        let lattice = grid.q_lattice(q_max)?;
        let h = grid.spacing();
        let base = [
            (p.x() / h).round() as i32,
            (p.y() / h).round() as i32,
            (p.z() / h).round() as i32,
        ];
        if (grid.momentum(base) - p).norm() > 1e-9 * h || !grid.contains(base) {
            return Err(invalid("m_out_cl needs P on a grid node"));
        }
        let mut sum = 0.0;
        for j in lattice.vectors() {
            let target = [base[0] + j[0], base[1] + j[1], base[2] + j[2]];
            if grid.contains(target) {
                let t = grid.momentum(target);
                sum += self.m_in(t, t, grid.momentum(*j))?.re;
            }
        }
        Ok(sum * grid.cell_volume() + self.zero_cell_weight(p, p, h)?.re)
    }

    fn shift(&self, qn: f64, p_par: f64) -> f64 {
        let r = self.kin.mass_ratio;
        0.5 * (1.0 + r) * qn + r * p_par
    }

    fn side(&self, source: Momentum, qh: Momentum, qn: f64) -> Side {
        let par = source.dot(&qh);
        Side { perp: source - qh * par, shift: self.shift(qn, par) }
    }

    /// Shell point of the pair rel⊥ ∓ Q/2 with rel⊥ = rel(K⊥, P⊥) ⟂ Q.
    fn shell(&self, k_perp: Momentum, p_perp: Momentum, qn: f64) -> ShellPoint {
        let a2 = self.kin.rel(k_perp, p_perp).norm2();
        let h2 = 0.25 * qn * qn;
        let k2 = a2 + h2;
        let cos_theta = if k2 > 0.0 { (a2 - h2) / k2 } else { 1.0 };
        ShellPoint { k: k2.sqrt(), cos_theta, transfer: qn }
    }

    fn sqrt_mu(&self, k_perp2: f64, shift: f64) -> f64 {
        self.physics.gas.distribution().sqrt_density(k_perp2 + shift * shift)
    }

    /// Σ_nodes w F(K, a) F*(K, b) / prefactor².
    fn plane_sum(&self, rule: &SquareRule, e1: Momentum, e2: Momentum, qn: f64, a: Side, b: Side) -> Complex64 {
        let model = self.physics.model.as_ref();
        let mut acc = Complex64::new(0.0, 0.0);
        for &(x, y, w) in &rule.points {
            let k_perp = e1 * x + e2 * y;
            let k2 = x * x + y * y;
            let wa = self.sqrt_mu(k2, a.shift);
            let wb = self.sqrt_mu(k2, b.shift);
            let fa = model.amplitude_at(&self.shell(k_perp, a.perp, qn));
            let fb = model.amplitude_at(&self.shell(k_perp, b.perp, qn));
            acc += fa * fb.conj() * (w * wa * wb);
        }
        acc
    }

    /// Σ_nodes w √μ(κ² + s_a²) √μ(κ² + s_b²) on `rule`: the whole plane
    /// sum when the amplitude depends on the transfer alone.
    pub(crate) fn gaussian_overlap(&self, rule: &SquareRule, s_a: f64, s_b: f64) -> f64 {
        let mut acc = 0.0;
        for &(x, y, w) in &rule.points {
            let k2 = x * x + y * y;
            acc += w * self.sqrt_mu(k2, s_a) * self.sqrt_mu(k2, s_b);
        }
        acc
    }

    pub(crate) fn plane_rule(&self) -> &SquareRule {
        &self.plane
    }

    pub(crate) fn zero_rule(&self) -> &SquareRule {
        &self.zero_plane
    }

    pub(crate) fn directions(&self) -> &SphereRule {
        &self.directions
    }

    pub(crate) fn shift_of(&self, qn: f64, p_par: f64) -> f64 {
        self.shift(qn, p_par)
    }
}
