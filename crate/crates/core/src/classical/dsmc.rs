//! Null-collision particle simulation of the tracer jump process.
//!
//! Each particle carries its own random stream. Between events its
//! momentum is constant, candidate events arrive at the rate
//! Λ(P) = n σ_max (⟨|p|⟩/m + |P|/M), and a candidate gas momentum is drawn
//! from μ(p) (|p|/m + |P|/M) / normalization. The candidate becomes a
//! collision with probability σ(k) |v_rel| / (σ_max (|p|/m + |P|/M)), so
//! accepted events occur at the exact rate n ∫ dp μ(p) σ |v_rel|.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erf;

use crate::distribution::stream_rng;
use crate::error::{invalid, Error, Result};
use crate::evolution::SectorState;
use crate::kernels::plane_basis;
use crate::momentum::Momentum;
use crate::physics::{GasSpec, Kinematics, TracerSpec};
use crate::scattering::ScatteringModel;

/// Smallest ensemble accepted for statistical comparisons.
pub const MIN_STATISTICAL_PARTICLES: usize = 10_000;

/// Particles per accumulation chunk; fixes the summation order.
const CHUNK: usize = 1024;

/// Draws allowed before a forced collision gives up.
const MAX_ATTEMPTS: usize = 1_000_000;

/// Equally weighted tracer momenta.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub momenta: Vec<Momentum>,
    pub time: f64,
    pub seed: u64,
    /// Number of completed runs; selects fresh random streams.
    pub epoch: u64,
}

impl Ensemble {
    pub fn new(momenta: Vec<Momentum>, seed: u64) -> Result<Self> {
        if momenta.is_empty() {
            return Err(invalid("ensemble needs at least one particle"));
        }
        if let Some(p) = momenta.iter().find(|p| !p.is_finite()) {
            return Err(invalid(format!("non-finite particle momentum {p:?}")));
        }
        Ok(Ensemble { momenta, time: 0.0, seed, epoch: 0 })
    }

    /// Samples grid nodes with probabilities w(P).
    pub fn from_grid(w: &SectorState, count: usize, seed: u64) -> Result<Self> {
        if !w.is_diagonal() {
            return Err(Error::Mismatch("ensembles are sampled from the Δ = 0 sector".into()));
        }
        if let Some(v) = w.values().iter().find(|v| v.re < 0.0 || !v.re.is_finite()) {
            return Err(invalid(format!("grid weights must be non-negative, found {v}")));
        }
        let weights = WeightedIndex::new(w.values().iter().map(|v| v.re)).map_err(|e| invalid(e.to_string()))?;
        let mut rng = stream_rng(seed, 0);
        let grid = w.grid();
        let momenta = (0..count).map(|_| grid.node(weights.sample(&mut rng))).collect();
        let mut e = Ensemble::new(momenta, seed)?;
        e.time = w.time();
        Ok(e)
    }

    /// Samples the Maxwell distribution of the tracer at temperature `temperature`.
    pub fn maxwell(tracer: &TracerSpec, temperature: f64, count: usize, seed: u64) -> Result<Self> {
        if tracer.is_infinite() {
            return Err(invalid("an infinitely heavy tracer has no thermal distribution"));
        }
        let dist = crate::distribution::Maxwell::thermal(tracer.mass, temperature)?;
        let mut rng = stream_rng(seed, 0);
        let momenta = (0..count).map(|_| crate::distribution::MomentumDistribution::sample(&dist, &mut rng)).collect();
        Ensemble::new(momenta, seed)
    }

    pub fn len(&self) -> usize {
        self.momenta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.momenta.is_empty()
    }

    fn particle_rng(&self, i: usize) -> ChaCha8Rng {
        stream_rng(self.seed ^ self.epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15), i as u64 + 1)
    }
}

/// One elastic tracer–gas collision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Collision {
    pub tracer_in: Momentum,
    pub tracer_out: Momentum,
    pub gas_in: Momentum,
    pub gas_out: Momentum,
}

/// Sampling environment shared by all particles.
#[derive(Clone, Debug)]
pub struct DsmcEngine {
    gas: GasSpec,
    tracer: TracerSpec,
    model: Arc<dyn ScatteringModel>,
    kin: Kinematics,
    sigma_max: f64,
    gas_speed: f64,
    inv_tracer_mass: f64,
}

impl DsmcEngine {
    pub fn new(gas: GasSpec, tracer: TracerSpec, model: Arc<dyn ScatteringModel>) -> Result<Self> {
        let sigma_max = model.sigma_bound();
        if !(sigma_max >= 0.0 && sigma_max.is_finite()) {
            return Err(Error::MajorantViolation(format!("cross-section bound {sigma_max} is not finite")));
        }
        let kin = Kinematics::new(&gas, &tracer);
        let gas_speed = gas.distribution().mean_speed() / gas.mass();
        let inv_tracer_mass = if tracer.is_infinite() { 0.0 } else { 1.0 / tracer.mass };
        Ok(DsmcEngine { gas, tracer, model, kin, sigma_max, gas_speed, inv_tracer_mass })
    }

    pub fn tracer(&self) -> &TracerSpec {
        &self.tracer
    }

    /// Candidate rate Λ(P).
    pub fn majorant(&self, p: Momentum) -> f64 {
        self.gas.number_density() * self.sigma_max * (self.gas_speed + p.norm() * self.inv_tracer_mass)
    }

    /// Draws a candidate gas momentum and thins it; returns the gas
    /// momentum and the relative momentum of an accepted collision.
    pub fn candidate(&self, p: Momentum, rng: &mut dyn RngCore) -> Result<Option<(Momentum, Momentum)>> {
        let a = p.norm() * self.inv_tracer_mass;
        let dist = self.gas.distribution();
        let gas_p = if rng.random::<f64>() * (a + self.gas_speed) < a { dist.sample(rng) } else { dist.sample_speed_weighted(rng) };
        let k = self.kin.rel(gas_p, p);
        if k.norm() == 0.0 {
            return Ok(None);
        }
        let speed = k.norm() / self.kin.reduced_mass;
        let sigma = self.model.sigma(k.norm())?.value;
        if sigma > self.sigma_max * (1.0 + 1e-12) {
            return Err(Error::MajorantViolation(format!(
                "σ({}) = {sigma:e} exceeds the bound {:e}",
                k.norm(),
                self.sigma_max
            )));
        }
        let bound = self.sigma_max * (gas_p.norm() / self.gas.mass() + a);
        Ok((rng.random::<f64>() * bound < sigma * speed).then_some((gas_p, k)))
    }

    /// Elastic collision with given gas momentum and scattering angles of
    /// the relative momentum.
    pub fn collide_with(&self, p: Momentum, gas_p: Momentum, cos_theta: f64, phi: f64) -> Result<Collision> {
        let k = self.kin.rel(gas_p, p);
        let (kh, e1, e2) = plane_basis(k)?;
        let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
        let k_out = (kh * cos_theta + (e1 * phi.cos() + e2 * phi.sin()) * sin_theta) * k.norm();
        let dk = k_out - k;
        Ok(Collision { tracer_in: p, tracer_out: p - dk, gas_in: gas_p, gas_out: gas_p + dk })
    }

    /// Draws the scattering angles for an accepted candidate.
    fn scatter(&self, p: Momentum, gas_p: Momentum, k: Momentum, rng: &mut dyn RngCore) -> Result<Collision> {
        let c = self.model.sample_cos_theta(k.norm(), rng)?;
        let phi = std::f64::consts::TAU * rng.random::<f64>();
        self.collide_with(p, gas_p, c, phi)
    }

    /// A collision conditioned on occurring.
    pub fn collide(&self, p: Momentum, rng: &mut dyn RngCore) -> Result<Collision> {
        if self.majorant(p) == 0.0 {
            return Err(invalid("collision rate bound is zero"));
        }
        for _ in 0..MAX_ATTEMPTS {
            if let Some((gas_p, k)) = self.candidate(p, rng)? {
                return self.scatter(p, gas_p, k, rng);
            }
        }
        Err(invalid(format!("no collision accepted in {MAX_ATTEMPTS} candidates at P = {p:?}")))
    }

    /// Accepted collisions at fixed P over `duration`.
    pub fn count_collisions_at(&self, p: Momentum, duration: f64, rng: &mut dyn RngCore) -> Result<u64> {
        let lam = self.majorant(p);
        if lam == 0.0 {
            return Ok(0);
        }
        let mut t = 0.0;
        let mut count = 0;
        loop {
            let e: f64 = Exp1.sample(rng);
            t += e / lam;
            if t > duration {
                return Ok(count);
            }
            if self.candidate(p, rng)?.is_some() {
                count += 1;
            }
        }
    }

    fn run_particle(&self, mut p: Momentum, t0: f64, spec: &DsmcSpec, times: &[f64], rng: &mut ChaCha8Rng, acc: &mut Accumulator) -> Result<Momentum> {
        let mut t = t0;
        let mut next = 0;
        loop {
            let lam = self.majorant(p);
            let t_event = if lam > 0.0 {
                let e: f64 = Exp1.sample(rng);
                t + e / lam
            } else {
                f64::INFINITY
            };
            while next < times.len() && times[next] < t_event {
                acc.record(next, p, &self.tracer, spec);
                next += 1;
            }
            if next == times.len() {
                return Ok(p);
            }
            t = t_event;
            acc.candidates += 1;
            if let Some((gas_p, k)) = self.candidate(p, rng)? {
                let c = self.scatter(p, gas_p, k, rng)?;
                acc.collisions += 1;
                let (a, b) = (c.tracer_in.norm(), c.tracer_out.norm());
                for (s, r) in spec.shells.iter().enumerate() {
                    if a < *r && b >= *r {
                        acc.outward[s] += 1;
                    } else if a >= *r && b < *r {
                        acc.inward[s] += 1;
                    }
                }
                p = c.tracer_out;
            }
        }
    }
}

/// A forced collision of a tracer with momentum `p`.
pub fn dsmc_collide(
    p: Momentum,
    gas: &GasSpec,
    tracer: &TracerSpec,
    model: &Arc<dyn ScatteringModel>,
    rng: &mut dyn RngCore,
) -> Result<(Momentum, Momentum, Momentum)> {
    let c = DsmcEngine::new(gas.clone(), *tracer, model.clone())?.collide(p, rng)?;
    Ok((c.tracer_out, c.gas_in, c.gas_out))
}

/// Output schedule and statistics of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DsmcSpec {
    pub t_final: f64,
    /// Number of equal output intervals.
    pub outputs: usize,
    pub histogram_bins: usize,
    /// Upper edge of the last finite |P| bin; larger moduli overflow.
    pub histogram_max: f64,
    /// Radii of the shells whose crossings are counted.
    pub shells: Vec<f64>,
}

impl DsmcSpec {
    /// Defaults scaled to the tracer momentum scale `p_scale`.
    pub fn new(t_final: f64, p_scale: f64) -> Self {
        DsmcSpec {
            t_final,
            outputs: 60,
            histogram_bins: 24,
            histogram_max: 4.0 * p_scale,
            shells: vec![0.5 * p_scale, p_scale, 1.5 * p_scale, 2.0 * p_scale],
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(invalid(format!("t_final must be finite and non-negative, got {}", self.t_final)));
        }
        if self.outputs == 0 || self.histogram_bins == 0 || !(self.histogram_max > 0.0) {
            return Err(invalid("outputs, histogram bins and histogram range must be positive"));
        }
        if self.shells.iter().any(|r| !(*r > 0.0)) {
            return Err(invalid("shell radii must be positive"));
        }
        Ok(())
    }
}

/// Mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentStat {
    pub mean: f64,
    pub std_error: f64,
}

/// Collision crossings of a shell |P| = radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShellFlux {
    pub radius: f64,
    pub outward: u64,
    pub inward: u64,
}

impl ShellFlux {
    /// Net outward count in units of its Poisson standard deviation.
    pub fn z_score(&self) -> f64 {
        let n = (self.outward + self.inward) as f64;
        if n == 0.0 {
            0.0
        } else {
            (self.outward as f64 - self.inward as f64) / n.sqrt()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DsmcResult {
    pub particles: usize,
    pub times: Vec<f64>,
    pub energy: Vec<MomentStat>,
    pub modulus: Vec<MomentStat>,
    /// |P| bin edges; the last histogram entry counts moduli beyond them.
    pub bin_edges: Vec<f64>,
    pub histograms: Vec<Vec<u64>>,
    pub candidates: u64,
    pub collisions: u64,
    pub flux: Vec<ShellFlux>,
}

#[derive(Clone, Debug)]
struct Accumulator {
    sums: Vec<[f64; 4]>,
    hist: Vec<Vec<u64>>,
    candidates: u64,
    collisions: u64,
    outward: Vec<u64>,
    inward: Vec<u64>,
}

impl Accumulator {
    fn new(spec: &DsmcSpec) -> Self {
        let n = spec.outputs + 1;
        Accumulator {
            sums: vec![[0.0; 4]; n],
            hist: vec![vec![0; spec.histogram_bins + 1]; n],
            candidates: 0,
            collisions: 0,
            outward: vec![0; spec.shells.len()],
            inward: vec![0; spec.shells.len()],
        }
    }

    fn record(&mut self, k: usize, p: Momentum, tracer: &TracerSpec, spec: &DsmcSpec) {
        let e = tracer.kinetic_energy(&p);
        let m = p.norm();
        let s = &mut self.sums[k];
        s[0] += e;
        s[1] += e * e;
        s[2] += m;
        s[3] += m * m;
        let bin = ((m / spec.histogram_max) * spec.histogram_bins as f64).floor();
        let bin = if bin < spec.histogram_bins as f64 { bin as usize } else { spec.histogram_bins };
        self.hist[k][bin] += 1;
    }

    fn merge(&mut self, o: &Accumulator) {
        for (a, b) in self.sums.iter_mut().zip(&o.sums) {
            for i in 0..4 {
                a[i] += b[i];
            }
        }
        for (a, b) in self.hist.iter_mut().zip(&o.hist) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.candidates += o.candidates;
        self.collisions += o.collisions;
        for i in 0..self.outward.len() {
            self.outward[i] += o.outward[i];
            self.inward[i] += o.inward[i];
        }
    }
}

fn moment(sum: f64, sum2: f64, n: f64) -> MomentStat {
    let mean = sum / n;
    let var = if n > 1.0 { ((sum2 / n - mean * mean) * n / (n - 1.0)).max(0.0) } else { 0.0 };
    MomentStat { mean, std_error: (var / n).sqrt() }
}

/// Advances every particle to `ensemble.time + spec.t_final`, recording
/// moments and histograms at `spec.outputs + 1` equally spaced times.
///
/// The result depends only on the ensemble, its seed and epoch, and the
/// spec; the worker count does not matter.
pub fn dsmc_run(engine: &DsmcEngine, ensemble: &mut Ensemble, spec: &DsmcSpec) -> Result<DsmcResult> {
    spec.validate()?;
    let t0 = ensemble.time;
    let times: Vec<f64> = (0..=spec.outputs).map(|k| t0 + spec.t_final * k as f64 / spec.outputs as f64).collect();
    let ens = &*ensemble;
    let chunks: Vec<(Vec<Momentum>, Accumulator)> = ens
        .momenta
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut acc = Accumulator::new(spec);
            let mut out = Vec::with_capacity(chunk.len());
            for (i, p) in chunk.iter().enumerate() {
                let mut rng = ens.particle_rng(c * CHUNK + i);
                out.push(engine.run_particle(*p, t0, spec, &times, &mut rng, &mut acc)?);
            }
            Ok((out, acc))
        })
        .collect::<Result<_>>()?;
    let mut total = Accumulator::new(spec);
    let mut momenta = Vec::with_capacity(ens.len());
    for (out, acc) in &chunks {
        momenta.extend_from_slice(out);
        total.merge(acc);
    }
    let n = ens.len() as f64;
    ensemble.momenta = momenta;
    ensemble.time = *times.last().expect("at least two output times");
    ensemble.epoch += 1;
    Ok(DsmcResult {
        particles: ensemble.len(),
        energy: total.sums.iter().map(|s| moment(s[0], s[1], n)).collect(),
        modulus: total.sums.iter().map(|s| moment(s[2], s[3], n)).collect(),
        times,
        bin_edges: (0..=spec.histogram_bins).map(|k| spec.histogram_max * k as f64 / spec.histogram_bins as f64).collect(),
        histograms: total.hist,
        candidates: total.candidates,
        collisions: total.collisions,
        flux: spec
            .shells
            .iter()
            .enumerate()
            .map(|(s, r)| ShellFlux { radius: *r, outward: total.outward[s], inward: total.inward[s] })
            .collect(),
    })
}

/// Probability that a Maxwell momentum with scale `p_t` has modulus below `x`.
fn maxwell_modulus_cdf(x: f64, p_t: f64) -> f64 {
    let u = x / p_t;
    erf(u) - 2.0 / std::f64::consts::PI.sqrt() * u * (-u * u).exp()
}

/// Per-bin binomial z-scores of a modulus histogram (last entry is the
/// overflow bin) against the Maxwell distribution with scale `p_t`.
pub fn maxwell_z_scores(histogram: &[u64], edges: &[f64], p_t: f64) -> Result<Vec<f64>> {
    if histogram.len() != edges.len() {
        return Err(invalid("histogram needs one entry per bin edge (finite bins plus overflow)"));
    }
    let n: u64 = histogram.iter().sum();
    let n = n as f64;
    let mut cdf: Vec<f64> = edges.iter().map(|x| maxwell_modulus_cdf(*x, p_t)).collect();
    cdf.push(1.0);
    Ok(histogram
        .iter()
        .enumerate()
        .map(|(b, count)| {
            let p = cdf[b + 1] - cdf[b];
            let sd = (n * p * (1.0 - p)).sqrt();
            if sd > 0.0 {
                (*count as f64 - n * p) / sd
            } else {
                0.0
            }
        })
        .collect())
}
