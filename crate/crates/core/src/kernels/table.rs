//! Precomputed kernel tables on a momentum grid.

use std::path::Path;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::container::{read_container, write_container, Container, ContainerKind};
use super::{KernelEngine, QuadratureSpec, ZERO_CELL_CONSTANT};
use crate::error::{Error, Result};
use crate::grid::{Cell, MomentumGrid, QLattice};
use crate::scattering::ShellPoint;

/// Descriptive header stored with every table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub physics: Value,
    pub grid: MomentumGrid,
    pub q_max: f64,
    pub lattice_len: usize,
    pub quadrature: QuadratureSpec,
    pub zero_cell_constant: f64,
    pub delta: Cell,
}

/// Table entries, real when every entry is real by construction.
#[derive(Clone, Debug, PartialEq)]
pub enum TableValues {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl TableValues {
    pub fn len(&self) -> usize {
        match self {
            TableValues::Real(v) => v.len(),
            TableValues::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Complex64 {
        match self {
            TableValues::Real(v) => Complex64::new(v[i], 0.0),
            TableValues::Complex(v) => v[i],
        }
    }
}

/// M_in(P, P - Δ; Q) over (P-index, Q-index) for one coherence offset Δ,
/// with the out-rates, zero-cell weights and boundary loss rates needed
/// to evolve the sector.
///
/// Entries whose sources P - Q or P - Δ - Q leave the grid are zero, as
/// are all rows with P - Δ off the grid.
#[derive(Clone, Debug)]
pub struct KernelTable {
    meta: TableMeta,
    grid: MomentumGrid,
    lattice: Arc<QLattice>,
    values: TableValues,
    m_out: Vec<f64>,
    self_rate: Vec<Complex64>,
    leak_rate: Vec<f64>,
    checksum: String,
}

impl KernelTable {
    pub fn meta(&self) -> &TableMeta {
        &self.meta
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn lattice(&self) -> &QLattice {
        &self.lattice
    }

    pub fn delta(&self) -> Cell {
        self.meta.delta
    }

    pub fn values(&self) -> &TableValues {
        &self.values
    }

    /// Entry for grid node `p` and lattice vector number `q`.
    pub fn value(&self, p: usize, q: usize) -> Complex64 {
        self.values.get(p * self.lattice.len() + q)
    }

    /// M_out^cl over every grid node.
    pub fn m_out(&self) -> &[f64] {
        &self.m_out
    }

    pub fn max_m_out(&self) -> f64 {
        self.m_out.iter().copied().fold(0.0, f64::max)
    }

    /// Zero-cell weight W0(P, P - Δ) per node.
    pub fn self_rate(&self) -> &[Complex64] {
        &self.self_rate
    }

    /// Rate of transitions from each node to targets beyond the grid; these
    /// are suppressed in the dynamics and reported as leakage.
    pub fn leak_rate(&self) -> &[f64] {
        &self.leak_rate
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    /// Largest |Im| over Δ = 0 entries, and the smallest real part.
    pub fn diagonal_extremes(&self) -> (f64, f64) {
        match &self.values {
            TableValues::Real(v) => (0.0, v.iter().copied().fold(f64::INFINITY, f64::min)),
            TableValues::Complex(v) => (
                v.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
                v.iter().map(|z| z.re).fold(f64::INFINITY, f64::min),
            ),
        }
    }

    /// Writes the table in the binary container format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let c = Container {
            kind: ContainerKind::Kernel,
            meta: serde_json::to_value(&self.meta)?,
            blocks: vec![
                ("m_in".into(), self.values_as_pairs()),
                ("m_out".into(), self.m_out.iter().map(|&x| Complex64::new(x, 0.0)).collect()),
                ("self_rate".into(), self.self_rate.clone()),
                ("leak_rate".into(), self.leak_rate.iter().map(|&x| Complex64::new(x, 0.0)).collect()),
            ],
        };
        write_container(path, &c)
    }

    /// Reads a table, verifying its checksum and structural consistency.
    pub fn load(path: &Path) -> Result<KernelTable> {
        let c = read_container(path)?;
        if c.kind != ContainerKind::Kernel {
            return Err(Error::Format("container does not hold a kernel table".into()));
        }
        let meta: TableMeta = serde_json::from_value(c.meta.clone())?;
        let grid = MomentumGrid::new(meta.grid.n(), meta.grid.spacing())?;
        let lattice = Arc::new(grid.q_lattice(Some(meta.q_max))?);
        if lattice.len() != meta.lattice_len {
            return Err(Error::Mismatch(format!(
                "header lists {} lattice vectors, grid and q_max give {}",
                meta.lattice_len,
                lattice.len()
            )));
        }
        let mut blocks = c.blocks.into_iter();
        let mut next = |name: &str, len: usize| -> Result<Vec<Complex64>> {
            match blocks.next() {
                Some((n, v)) if n == name && v.len() == len => Ok(v),
                Some((n, v)) => {
                    Err(Error::Mismatch(format!("block '{n}' of length {} where '{name}' of length {len} was expected", v.len())))
                }
                None => Err(Error::Format(format!("missing block '{name}'"))),
            }
        };
        let np = grid.len();
        let pairs = next("m_in", np * lattice.len())?;
        let m_out = next("m_out", np)?.into_iter().map(|z| z.re).collect();
        let self_rate = next("self_rate", np)?;
        let leak_rate = next("leak_rate", np)?.into_iter().map(|z| z.re).collect();
        let values = if pairs.iter().all(|z| z.im == 0.0) {
            TableValues::Real(pairs.into_iter().map(|z| z.re).collect())
        } else {
            TableValues::Complex(pairs)
        };
        let mut t = KernelTable { meta, grid, lattice, values, m_out, self_rate, leak_rate, checksum: String::new() };
        t.checksum = t.compute_checksum();
        Ok(t)
    }

    /// Loads a table and checks that it was built for `expected`.
    pub fn load_matching(path: &Path, expected: &TableMeta) -> Result<KernelTable> {
        let t = KernelTable::load(path)?;
        if &t.meta != expected {
            return Err(Error::Mismatch(format!("table {} was built for different parameters", path.display())));
        }
        Ok(t)
    }

    fn values_as_pairs(&self) -> Vec<Complex64> {
        match &self.values {
            TableValues::Real(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            TableValues::Complex(v) => v.clone(),
        }
    }

    fn compute_checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.meta).unwrap_or_default());
        let mut push = |x: f64| h.update(x.to_le_bytes());
        match &self.values {
            TableValues::Real(v) => v.iter().for_each(|&x| {
                push(x);
                push(0.0);
            }),
            TableValues::Complex(v) => v.iter().for_each(|z| {
                push(z.re);
                push(z.im);
            }),
        }
        self.m_out.iter().for_each(|&x| push(x));
        self.self_rate.iter().for_each(|z| {
            push(z.re);
            push(z.im);
        });
        self.leak_rate.iter().for_each(|&x| push(x));
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Builds tables for several offsets on one grid, sharing the diagonal
/// table whose out-rates every sector needs.
pub struct KernelBuilder {
    engine: Arc<KernelEngine>,
    grid: MomentumGrid,
    lattice: Arc<QLattice>,
    diagonal: Mutex<Option<Arc<KernelTable>>>,
    max_bytes: usize,
}

/// Default ceiling on the memory of a single table.
pub const DEFAULT_MAX_TABLE_BYTES: usize = 3 << 30;

impl KernelBuilder {
    pub fn new(engine: Arc<KernelEngine>, grid: MomentumGrid, q_max: Option<f64>) -> Result<Self> {
        let lattice = Arc::new(grid.q_lattice(q_max)?);
        Ok(KernelBuilder { engine, grid, lattice, diagonal: Mutex::new(None), max_bytes: DEFAULT_MAX_TABLE_BYTES })
    }

    pub fn with_max_bytes(mut self, max_bytes: usize) -> Self {
        self.max_bytes = max_bytes;
        self
    }

    pub fn engine(&self) -> &KernelEngine {
        &self.engine
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn lattice(&self) -> &Arc<QLattice> {
        &self.lattice
    }

    /// Header a table for `delta` built here would carry.
    pub fn meta(&self, delta: Cell) -> TableMeta {
        TableMeta {
            physics: self.engine.physics().summary(),
            grid: self.grid,
            q_max: self.lattice.q_max(),
            lattice_len: self.lattice.len(),
            quadrature: *self.engine.quadrature(),
            zero_cell_constant: ZERO_CELL_CONSTANT,
            delta,
        }
    }

    /// Makes an externally loaded diagonal table available for reuse.
    pub fn set_diagonal(&self, table: Arc<KernelTable>) -> Result<()> {
        if table.meta != self.meta([0, 0, 0]) {
            return Err(Error::Mismatch("diagonal table does not match this builder".into()));
        }
        *self.diagonal.lock().expect("diagonal cache poisoned") = Some(table);
        Ok(())
    }

    /// The Δ = 0 table, built once.
    pub fn diagonal(&self) -> Result<Arc<KernelTable>> {
        let mut slot = self.diagonal.lock().expect("diagonal cache poisoned");
        if let Some(t) = slot.as_ref() {
            return Ok(t.clone());
        }
        let t = Arc::new(self.build(None)?);
        *slot = Some(t.clone());
        Ok(t)
    }

    /// The table for offset `delta`.
    pub fn table(&self, delta: Cell) -> Result<Arc<KernelTable>> {
        if delta == [0, 0, 0] {
            return self.diagonal();
        }
        let diag = self.diagonal()?;
        Ok(Arc::new(self.build(Some((delta, diag)))?))
    }

    fn build(&self, sector: Option<(Cell, Arc<KernelTable>)>) -> Result<KernelTable> {
        let delta = sector.as_ref().map(|s| s.0).unwrap_or([0, 0, 0]);
        let np = self.grid.len();
        let nq = self.lattice.len();
        let entries = np.checked_mul(nq).ok_or_else(|| Error::InvalidParameter("table size overflows".into()))?;
        let transfer_only = self.engine.physics().model.transfer_only();
        let real = transfer_only || delta == [0, 0, 0];
        let bytes = entries * if real { 8 } else { 16 };
        if bytes > self.max_bytes {
            return Err(Error::InvalidParameter(format!(
                "table for offset {delta:?} needs {bytes} bytes ({np} nodes x {nq} transfers), above the limit of {} bytes; \
                 no rows were computed",
                self.max_bytes
            )));
        }
        let support = self.grid.sector_support(delta);
        let fill = Fill { engine: &self.engine, grid: &self.grid, lattice: &self.lattice, delta, support: &support };

        let (values, self_rate) = if transfer_only { fill.transfer_only()? } else { fill.generic(real)? };
        let (m_out, leak_rate) = match sector {
            Some((_, diag)) => (diag.m_out.clone(), diag.leak_rate.clone()),
            None => {
                let leak = if transfer_only { fill.transfer_only_leak()? } else { fill.generic_leak()? };
                (column_sums(&self.grid, &self.lattice, &values, &self_rate), leak)
            }
        };
        let mut t = KernelTable {
            meta: self.meta(delta),
            grid: self.grid,
            lattice: self.lattice.clone(),
            values,
            m_out,
            self_rate,
            leak_rate,
            checksum: String::new(),
        };
        t.checksum = t.compute_checksum();
        Ok(t)
    }
}

/// Builds the table for one offset.
pub fn tabulate(engine: Arc<KernelEngine>, grid: MomentumGrid, q_max: Option<f64>, delta: Cell) -> Result<KernelTable> {
    let b = KernelBuilder::new(engine, grid, q_max)?;
    let t = b.table(delta)?;
    Ok(Arc::try_unwrap(t).unwrap_or_else(|a| (*a).clone()))
}

/// M_out(X) = Σ_{Q: X+Q on grid} T[X+Q][Q] ΔV + W0(X, X), summed in
/// lattice order.
fn column_sums(grid: &MomentumGrid, lattice: &QLattice, values: &TableValues, w0: &[Complex64]) -> Vec<f64> {
    let nq = lattice.len();
    let dv = grid.cell_volume();
    (0..grid.len())
        .into_par_iter()
        .map(|x| {
            let c = grid.cell(x);
            let mut s = 0.0;
            for (qi, j) in lattice.vectors().iter().enumerate() {
                if let Some(t) = grid.index([c[0] + j[0], c[1] + j[1], c[2] + j[2]]) {
                    s += values.get(t * nq + qi).re;
                }
            }
            s * dv + w0[x].re
        })
        .collect()
}

struct Fill<'a> {
    engine: &'a KernelEngine,
    grid: &'a MomentumGrid,
    lattice: &'a QLattice,
    delta: Cell,
    support: &'a [bool],
}

fn sub(a: Cell, b: Cell) -> Cell {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Cell, b: Cell) -> i64 {
    a[0] as i64 * b[0] as i64 + a[1] as i64 * b[1] as i64 + a[2] as i64 * b[2] as i64
}

fn try_alloc<T: Clone>(len: usize, fill: T) -> Result<Vec<T>> {
    let mut v = Vec::new();
    v.try_reserve_exact(len).map_err(|e| {
        Error::InvalidParameter(format!("could not allocate {len} table entries ({e}); no rows were computed"))
    })?;
    v.resize(len, fill);
    Ok(v)
}

impl Fill<'_> {
    fn generic(&self, real: bool) -> Result<(TableValues, Vec<Complex64>)> {
        let nq = self.lattice.len();
        let h = self.grid.spacing();
        let delta_p = self.grid.momentum(self.delta);
        let mut values = try_alloc(self.grid.len() * nq, Complex64::new(0.0, 0.0))?;
        values.par_chunks_mut(nq).enumerate().try_for_each(|(pi, row)| -> Result<()> {
            if !self.support[pi] {
                return Ok(());
            }
            let c = self.grid.cell(pi);
            let p = self.grid.momentum(c);
            for (qi, j) in self.lattice.vectors().iter().enumerate() {
                let a = sub(c, *j);
                if self.grid.contains(a) && self.grid.contains(sub(a, self.delta)) {
                    row[qi] = self.engine.m_in(p, p - delta_p, self.grid.momentum(*j))?;
                }
            }
            Ok(())
        })?;
        let self_rate = (0..self.grid.len())
            .into_par_iter()
            .map(|pi| {
                if !self.support[pi] {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                let p = self.grid.node(pi);
                self.engine.zero_cell_weight(p, p - delta_p, h)
            })
            .collect::<Result<Vec<_>>>()?;
        let values = if real {
            TableValues::Real(values.into_iter().map(|z| z.re).collect())
        } else {
            TableValues::Complex(values)
        };
        Ok((values, self_rate))
    }

    fn generic_leak(&self) -> Result<Vec<f64>> {
        let dv = self.grid.cell_volume();
        (0..self.grid.len())
            .into_par_iter()
            .map(|xi| {
                let c = self.grid.cell(xi);
                let mut s = 0.0;
                for j in self.lattice.vectors() {
                    let t = [c[0] + j[0], c[1] + j[1], c[2] + j[2]];
                    if !self.grid.contains(t) {
                        let tp = self.grid.momentum(t);
                        s += self.engine.m_in(tp, tp, self.grid.momentum(*j))?.re;
                    }
                }
                Ok(s * dv)
            })
            .collect()
    }

    /// Per lattice vector: (j², n m |f(Q)|² / (m*² |Q|), |Q|).
    fn transfer_factors(&self) -> Vec<(i64, f64, f64)> {
        let pref2 = self.engine.prefactor().powi(2);
        let model = self.engine.physics().model.as_ref();
        self.lattice
            .vectors()
            .iter()
            .map(|&j| {
                let j2 = dot(j, j);
                let qn = self.grid.momentum(j).norm();
                let f = model.amplitude_at(&ShellPoint { k: 0.5 * qn, cos_theta: -1.0, transfer: qn });
                (j2, pref2 * f.norm_sqr() / qn, qn)
            })
            .collect()
    }

    /// Largest |i·j| over grid nodes i and lattice vectors j.
    fn dot_bound(&self) -> i64 {
        let half = self.grid.half() as i64;
        self.lattice.vectors().iter().map(|j| half * (j[0].abs() + j[1].abs() + j[2].abs()) as i64).max().unwrap_or(0)
    }

    fn shift(&self, qn: f64, t: i64, j2: i64) -> f64 {
        let h = self.grid.spacing();
        self.engine.shift_of(qn, h * t as f64 / (j2 as f64).sqrt())
    }

    /// G(s, s) for every (j², t) with t = source·j, as a dense table.
    fn diagonal_overlaps(&self, factors: &[(i64, f64, f64)]) -> (Vec<f64>, i64, i64) {
        let tb = self.dot_bound();
        let j2max = factors.iter().map(|f| f.0).max().unwrap_or(0);
        let width = (2 * tb + 1) as usize;
        let mut qn_of = vec![f64::NAN; j2max as usize + 1];
        for &(j2, _, qn) in factors {
            qn_of[j2 as usize] = qn;
        }
        let rule = self.engine.plane_rule();
        let table: Vec<f64> = (0..(j2max as usize + 1) * width)
            .into_par_iter()
            .map(|k| {
                let j2 = (k / width) as i64;
                let qn = qn_of[j2 as usize];
                if qn.is_nan() {
                    return 0.0;
                }
                let s = self.shift(qn, (k % width) as i64 - tb, j2);
                self.engine.gaussian_overlap(rule, s, s)
            })
            .collect();
        (table, tb, width as i64)
    }

    fn transfer_only(&self) -> Result<(TableValues, Vec<Complex64>)> {
        let factors = self.transfer_factors();
        let nq = self.lattice.len();
        let d = self.delta;
        let mut values = try_alloc(self.grid.len() * nq, 0.0f64)?;
        if d == [0, 0, 0] {
            let (g, tb, width) = self.diagonal_overlaps(&factors);
            values.par_chunks_mut(nq).enumerate().for_each(|(pi, row)| {
                let c = self.grid.cell(pi);
                for (qi, j) in self.lattice.vectors().iter().enumerate() {
                    let a = sub(c, *j);
                    if self.grid.contains(a) {
                        let (j2, cf, _) = factors[qi];
                        row[qi] = cf * g[(j2 * width + dot(a, *j) + tb) as usize];
                    }
                }
            });
        } else {
            // Keys (j², a·j, Δ·j) with a = P - Q the first source.
            let tb = self.dot_bound();
            let eb = self.lattice.vectors().iter().map(|&j| dot(d, j).abs()).max().unwrap_or(0);
            let j2max = factors.iter().map(|f| f.0).max().unwrap_or(0);
            let (wt, we) = (2 * tb + 1, 2 * eb + 1);
            let key = |j2: i64, t: i64, e: i64| ((j2 * wt + t + tb) * we + e + eb) as usize;
            let mut slot = vec![u32::MAX; ((j2max + 1) * wt * we) as usize];
            let mut keys: Vec<(i64, i64, i64, f64)> = Vec::new();
            for pi in 0..self.grid.len() {
                if !self.support[pi] {
                    continue;
                }
                let c = self.grid.cell(pi);
                for (qi, j) in self.lattice.vectors().iter().enumerate() {
                    let a = sub(c, *j);
                    if self.grid.contains(a) && self.grid.contains(sub(a, d)) {
                        let (j2, _, qn) = factors[qi];
                        let (t, e) = (dot(a, *j), dot(d, *j));
                        let k = key(j2, t, e);
                        if slot[k] == u32::MAX {
                            slot[k] = keys.len() as u32;
                            keys.push((j2, t, e, qn));
                        }
                    }
                }
            }
            let rule = self.engine.plane_rule();
            let g: Vec<f64> = keys
                .par_iter()
                .map(|&(j2, t, e, qn)| self.engine.gaussian_overlap(rule, self.shift(qn, t, j2), self.shift(qn, t - e, j2)))
                .collect();
            values.par_chunks_mut(nq).enumerate().for_each(|(pi, row)| {
                if !self.support[pi] {
                    return;
                }
                let c = self.grid.cell(pi);
                for (qi, j) in self.lattice.vectors().iter().enumerate() {
                    let a = sub(c, *j);
                    if self.grid.contains(a) && self.grid.contains(sub(a, d)) {
                        let (j2, cf, _) = factors[qi];
                        row[qi] = cf * g[slot[key(j2, dot(a, *j), dot(d, *j))] as usize];
                    }
                }
            });
        }
        Ok((TableValues::Real(values), self.transfer_only_zero_cell()))
    }

    fn transfer_only_zero_cell(&self) -> Vec<Complex64> {
        let e = self.engine;
        let f0 = e.physics().model.amplitude_at(&ShellPoint { k: 0.0, cos_theta: 1.0, transfer: 0.0 });
        let h = self.grid.spacing();
        let scale = ZERO_CELL_CONSTANT * h * h * e.prefactor().powi(2) * f0.norm_sqr() / (4.0 * std::f64::consts::PI);
        let delta_p = self.grid.momentum(self.delta);
        let rule = e.zero_rule();
        let dirs = &e.directions().directions;
        (0..self.grid.len())
            .into_par_iter()
            .map(|pi| {
                if !self.support[pi] {
                    return Complex64::new(0.0, 0.0);
                }
                let p = self.grid.node(pi);
                let pp = p - delta_p;
                let mut acc = 0.0;
                for &(d, w) in dirs {
                    let d = crate::momentum::Momentum(d);
                    let g = e.gaussian_overlap(rule, e.shift_of(0.0, p.dot(&d)), e.shift_of(0.0, pp.dot(&d)));
                    acc += w * g;
                }
                Complex64::new(acc * scale, 0.0)
            })
            .collect()
    }

    fn transfer_only_leak(&self) -> Result<Vec<f64>> {
        let factors = self.transfer_factors();
        let (g, tb, width) = self.diagonal_overlaps(&factors);
        let dv = self.grid.cell_volume();
        Ok((0..self.grid.len())
            .into_par_iter()
            .map(|xi| {
                let c = self.grid.cell(xi);
                let mut s = 0.0;
                for (qi, j) in self.lattice.vectors().iter().enumerate() {
                    if !self.grid.contains([c[0] + j[0], c[1] + j[1], c[2] + j[2]]) {
                        let (j2, cf, _) = factors[qi];
                        s += cf * g[(j2 * width + dot(c, *j) + tb) as usize];
                    }
                }
                s * dv
            })
            .collect())
    }
}
