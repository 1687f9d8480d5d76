//! Jump-operator kernel, two-sided rates and tabulated tables.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use qlbe::evolution::{apply_generator, SectorState};
use qlbe::grid::MomentumGrid;
use qlbe::kernels::{
    plane_basis, tabulate, KernelBuilder, KernelEngine, KernelTable, Physics, QuadratureSpec, TableValues,
    ZERO_CELL_CONSTANT,
};
use qlbe::quadrature::Estimate;
use qlbe::scattering::{ConstantLength, HardSphere, ScatteringModel, ShellPoint};
use qlbe::{Error, GasSpec, Momentum, Result, TracerSpec};
use serde_json::Value;
use statrs::function::erf::erfc;

fn engine_with(tracer_mass: f64, model: Arc<dyn ScatteringModel>) -> KernelEngine {
    let gas = GasSpec::maxwell(1.0, 1.0, 0.5).unwrap();
    let tracer = TracerSpec::new(tracer_mass, &gas).unwrap();
    KernelEngine::new(Physics::new(gas, tracer, model), QuadratureSpec::default()).unwrap()
}

fn desk_engine() -> KernelEngine {
    engine_with(1.0, Arc::new(ConstantLength::new(0.25).unwrap()))
}

fn hs_engine() -> KernelEngine {
    engine_with(1.0, Arc::new(HardSphere::new(0.5, None).unwrap()))
}

fn mom(a: [f64; 3]) -> Momentum {
    Momentum(a)
}

#[test]
fn eval_f_matches_hand_formula() {
    // m = M = 1: prefactor √(n m)/m* = 2 and √μ at K⊥ + Q + P∥.
    let e = desk_engine();
    let f = e.eval_f(mom([0.3, -0.2, 5.0]), mom([1.0, 2.0, 0.5]), mom([0.0, 0.0, 1.0])).unwrap();
    let expected = -0.25 * 2.0 * PI.powf(-0.75) * (-0.5f64 * (0.09 + 0.04 + 2.25)).exp();
    assert!((f - Complex64::new(expected, 0.0)).norm() < 1e-15, "{f} vs {expected}");

    // M = 4: m* = 0.8, prefactor 1.25, argument K⊥ + 1.25 Q/2 + 0.25 P∥.
    let e = engine_with(4.0, Arc::new(ConstantLength::new(0.25).unwrap()));
    let f = e.eval_f(mom([0.0, 1.0, -3.0]), mom([2.0, 0.0, 4.0]), mom([0.0, 0.0, 2.0])).unwrap();
    let arg2 = 1.0 + (1.25f64 + 1.0).powi(2);
    let expected = -0.25 * 1.25 * PI.powf(-0.75) * (-0.5 * arg2).exp();
    assert!((f.re - expected).abs() < 1e-15 && f.im == 0.0, "{f} vs {expected}");
}

#[test]
fn eval_f_shell_point() {
    // The amplitude is evaluated at rel⊥ ∓ Q/2, which share a modulus.
    let e = hs_engine();
    let q = mom([0.4, 0.0, 0.3]);
    let parts = e.eval_f_parts(mom([0.2, 1.0, -0.7]), mom([-1.0, 0.5, 2.0]), q).unwrap();
    assert!((parts.shell.transfer - q.norm()).abs() < 1e-14);
    let kin = e.kinematics();
    let k_perp = mom([0.2, 1.0, -0.7]) - q * (mom([0.2, 1.0, -0.7]).dot(&q) / q.norm2());
    let p_perp = mom([-1.0, 0.5, 2.0]) - q * (mom([-1.0, 0.5, 2.0]).dot(&q) / q.norm2());
    let r = kin.rel(k_perp, p_perp);
    let k = (r.norm2() + 0.25 * q.norm2()).sqrt();
    assert!((parts.shell.k - k).abs() < 1e-14);
    assert!(matches!(e.eval_f(mom([0.0; 3]), mom([0.0; 3]), Momentum::ZERO), Err(Error::DegenerateDirection(_))));
}

#[test]
fn plane_basis_is_orthonormal() {
    for q in [[1.0, 0.0, 0.0], [0.3, -2.0, 0.1], [1.0, 1.0, 1.0], [0.0, 0.0, -4.0]] {
        let (qh, e1, e2) = plane_basis(mom(q)).unwrap();
        for (a, b) in [(qh, e1), (qh, e2), (e1, e2)] {
            assert!(a.dot(&b).abs() < 1e-15);
        }
        for v in [qh, e1, e2] {
            assert!((v.norm() - 1.0).abs() < 1e-15);
        }
        assert!((qh.cross(&e1) - e2).norm() < 1e-15);
        let (_, f1, f2) = plane_basis(mom(q) * -1.0).unwrap();
        assert!((f1 - e1).norm() < 1e-15 && (f2 + e2).norm() < 1e-15);
    }
}

/// Σ'_{n ∈ Z³} |n|^{-1} by its Ewald split at η = π: the continued sum is
/// -3 + Σ' [erfc(√π |n|)/|n| + exp(-π n²)/(π n²)].
fn lattice_sum_ewald() -> f64 {
    let mut s = -3.0;
    let r = 6;
    for i in -r..=r {
        for j in -r..=r {
            for k in -r..=r {
                let n2 = (i * i + j * j + k * k) as f64;
                if n2 == 0.0 {
                    continue;
                }
                let n = n2.sqrt();
                s += erfc(PI.sqrt() * n) / n + (-PI * n2).exp() / (PI * n2);
            }
        }
    }
    s
}

#[test]
fn zero_cell_constant_matches_ewald_sum() {
    // The oracle is limited by the accuracy of the erfc implementation.
    let z = lattice_sum_ewald();
    assert!((ZERO_CELL_CONSTANT + z).abs() < 1e-11, "{} vs {}", ZERO_CELL_CONSTANT, -z);
}

#[test]
fn zero_cell_weight_scaling() {
    let e = desk_engine();
    let p = mom([0.5, -1.0, 0.0]);
    let a = e.zero_cell_weight(p, p, 0.5).unwrap();
    let b = e.zero_cell_weight(p, p, 0.25).unwrap();
    assert!(a.re > 0.0 && a.im.abs() < 1e-16);
    assert!((a.re - 4.0 * b.re).abs() < 1e-14 * a.re);
    // Real and symmetric for transfer-only amplitudes off the diagonal.
    let pp = mom([0.0, -1.0, 0.5]);
    let c = e.zero_cell_weight(p, pp, 0.5).unwrap();
    let d = e.zero_cell_weight(pp, p, 0.5).unwrap();
    assert!((c - d.conj()).norm() < 1e-15 * a.re);
}

#[test]
fn m_in_converges_under_order_doubling() {
    for e in [desk_engine(), hs_engine()] {
        for (p, pp, q) in [
            ([0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.5, 0.0, 0.0]),
            ([1.0, -0.5, 2.0], [1.0, -0.5, 2.0], [0.5, 1.0, -0.5]),
            ([2.5, 0.0, 1.0], [2.0, 0.0, 1.0], [-1.0, 0.5, 0.0]),
        ] {
            let (v, err) = e.m_in_converged(mom(p), mom(pp), mom(q)).unwrap();
            assert!(err <= 1e-6 * v.norm(), "{}: change {err:e} of {:e}", e.physics().model.name(), v.norm());
        }
    }
}

#[test]
fn m_in_diagonal_closed_form_at_rest() {
    // Infinite tracer, constant length, P = Q: μ is centered and the plane
    // integral is (√μ)² over Q^⊥, i.e. the one-dimensional marginal at |Q|/2.
    let gas = GasSpec::maxwell(1.0, 1.0, 0.5).unwrap();
    let tracer = TracerSpec::from_ratio(0.0, &gas).unwrap();
    let e = KernelEngine::new(Physics::new(gas, tracer, Arc::new(ConstantLength::new(0.25).unwrap())), QuadratureSpec::default())
        .unwrap();
    for qn in [0.3, 1.0, 2.0] {
        let q = mom([0.0, qn, 0.0]);
        // n a² / m*² · |Q|⁻¹ · exp(-Q²/4) / √π with p_T = 1.
        let exact = 0.0625 / qn * (-qn * qn / 4.0).exp() / PI.sqrt();
        let v = e.m_in(q, q, q).unwrap();
        assert!((v.re - exact).abs() < 1e-6 * exact && v.im == 0.0, "|Q| = {qn}: {} vs {exact}", v.re);
        let (fine, _) = e.m_in_converged(q, q, q).unwrap();
        assert!((fine.re - exact).abs() < 1e-10 * exact, "|Q| = {qn}: {} vs {exact}", fine.re);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn m_in_hermitian_and_cauchy_schwarz(
        p in prop::array::uniform3(-3.0f64..3.0),
        d in prop::array::uniform3(-1.0f64..1.0),
        q in prop::array::uniform3(-2.0f64..2.0),
    ) {
        let e = hs_engine();
        let (p, pp, q) = (mom(p), mom(p) - mom(d), mom(q));
        prop_assume!(q.norm() > 0.1);
        let a = e.m_in(p, pp, q).unwrap();
        let b = e.m_in(pp, p, q).unwrap();
        let da = e.m_in(p, p, q).unwrap();
        let db = e.m_in(pp, pp, q).unwrap();
        let scale = (da.re * db.re).sqrt().max(1e-300);
        prop_assert!((a - b.conj()).norm() <= 1e-13 * scale);
        prop_assert!(da.im.abs() <= 1e-15 * da.re && da.re >= 0.0);
        prop_assert!(a.norm() <= scale * (1.0 + 1e-12));
    }

    #[test]
    fn m_in_diagonal_equals_classical(
        p in prop::array::uniform3(-3.0f64..3.0),
        q in prop::array::uniform3(-2.0f64..2.0),
        tracer_mass in 0.2f64..20.0,
    ) {
        let (p, q) = (mom(p), mom(q));
        prop_assume!(q.norm() > 0.1);
        for model in [Arc::new(ConstantLength::new(0.25).unwrap()) as Arc<dyn ScatteringModel>, Arc::new(HardSphere::new(0.5, None).unwrap())] {
            let e = engine_with(tracer_mass, model);
            let a = e.m_in(p, p, q).unwrap().re;
            let b = e.m_in_cl(p, q).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{a} vs {b}");
        }
    }
}

/// ConstantLength hidden behind the generic, angle-dependent interface.
#[derive(Debug)]
struct Opaque(ConstantLength);

impl ScatteringModel for Opaque {
    fn name(&self) -> &'static str {
        "opaque_constant"
    }
    fn parameters(&self) -> Value {
        self.0.parameters()
    }
    fn amplitude_at(&self, shell: &ShellPoint) -> Complex64 {
        self.0.amplitude_at(shell)
    }
    fn sigma(&self, k: f64) -> Result<Estimate> {
        self.0.sigma(k)
    }
    fn amplitude_bound(&self, k: f64) -> f64 {
        self.0.amplitude_bound(k)
    }
    fn sigma_bound(&self) -> f64 {
        self.0.sigma_bound()
    }
}

fn small_grid() -> MomentumGrid {
    MomentumGrid::with_extent(9, 5.0).unwrap()
}

fn max_abs(t: &KernelTable) -> f64 {
    (0..t.values().len()).map(|i| t.values().get(i).norm()).fold(0.0, f64::max)
}

#[test]
fn transfer_only_tables_match_generic_tabulation() {
    let fast = Arc::new(desk_engine());
    let slow = Arc::new(engine_with(1.0, Arc::new(Opaque(ConstantLength::new(0.25).unwrap()))));
    let grid = MomentumGrid::with_extent(7, 5.0).unwrap();
    let bf = KernelBuilder::new(fast, grid, None).unwrap();
    let bs = KernelBuilder::new(slow, grid, None).unwrap();
    for delta in [[0, 0, 0], [1, 0, 0], [0, -1, 1]] {
        let a = bf.table(delta).unwrap();
        let b = bs.table(delta).unwrap();
        let scale = max_abs(&a);
        for i in 0..a.values().len() {
            assert!((a.values().get(i) - b.values().get(i)).norm() <= 1e-12 * scale, "offset {delta:?}, entry {i}");
        }
        for (x, y) in a.self_rate().iter().zip(b.self_rate()) {
            assert!((x - y).norm() <= 1e-12 * scale);
        }
        for (x, y) in a.m_out().iter().zip(b.m_out()) {
            assert!((x - y).abs() <= 1e-12 * x);
        }
    }
}

#[test]
fn diagonal_table_invariants() {
    let engine = Arc::new(desk_engine());
    let grid = small_grid();
    let t = Arc::new(tabulate(engine.clone(), grid, None, [0, 0, 0]).unwrap());
    assert!(matches!(t.values(), TableValues::Real(_)));
    let (max_im, min_re) = t.diagonal_extremes();
    assert_eq!(max_im, 0.0);
    assert!(min_re >= 0.0);
    assert!(t.m_out().iter().all(|&x| x > 0.0));
    // Out-rates are the column sums of the gain entries.
    let x = grid.index([1, -2, 0]).unwrap();
    let direct = engine.m_out_cl(grid.node(x), &grid, None).unwrap();
    assert!((direct - t.m_out()[x]).abs() < 1e-12 * direct, "{direct} vs {}", t.m_out()[x]);
    // The generator conserves the trace of any diagonal state.
    let tracer = engine.physics().tracer;
    let s = SectorState::from_fn(grid, [0, 0, 0], |p, _| Complex64::new(1.0 + (p.x() * 3.1 + p.y() * p.z()).sin().abs(), 0.0));
    let d = apply_generator(&s, &t, &tracer).unwrap();
    let total: f64 = d.iter().map(|z| z.re).sum();
    let scale: f64 = d.iter().map(|z| z.norm()).sum();
    assert!(total.abs() < 1e-13 * scale, "{total:e} of {scale:e}");
}

#[test]
fn table_save_load_roundtrip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let builder = KernelBuilder::new(Arc::new(hs_engine()), MomentumGrid::with_extent(5, 5.0).unwrap(), None).unwrap();
    for delta in [[0, 0, 0], [1, 0, 0]] {
        let t = builder.table(delta).unwrap();
        let path = dir.path().join(format!("t{}.qlbt", delta[0]));
        t.save(&path).unwrap();
        let u = KernelTable::load(&path).unwrap();
        assert_eq!(u.checksum(), t.checksum());
        assert_eq!(u.values(), t.values());
        assert_eq!(u.m_out(), t.m_out());
        assert_eq!(u.self_rate(), t.self_rate());
        KernelTable::load_matching(&path, &builder.meta(delta)).unwrap();
        assert!(matches!(KernelTable::load_matching(&path, &builder.meta([0, 0, 1])), Err(Error::Mismatch(_))));

        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 3] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(KernelTable::load(&path), Err(Error::ChecksumMismatch { .. })));
        bytes.truncate(n / 2);
        std::fs::write(&path, &bytes).unwrap();
        assert!(KernelTable::load(&path).is_err());
        std::fs::write(&path, b"not a table").unwrap();
        assert!(matches!(KernelTable::load(&path), Err(Error::Format(_))));
    }
}

#[test]
fn table_size_limit_is_enforced_before_work() {
    let b = KernelBuilder::new(Arc::new(desk_engine()), small_grid(), None).unwrap().with_max_bytes(1024);
    assert!(matches!(b.table([0, 0, 0]), Err(Error::InvalidParameter(_))));
}

#[test]
fn mass_ratio_zero_is_independent_of_midpoint() {
    // For M = ∞ the two-sided rate depends on P and P' only through their
    // difference and Q.
    let gas = GasSpec::maxwell(1.0, 1.0, 0.5).unwrap();
    let tracer = TracerSpec::from_ratio(0.0, &gas).unwrap();
    let e = KernelEngine::new(Physics::new(gas, tracer, Arc::new(HardSphere::new(0.5, None).unwrap())), QuadratureSpec::default())
        .unwrap();
    let d = mom([0.5, 0.2, -0.3]);
    let q = mom([0.7, -0.4, 0.3]);
    let base = e.m_in(d * 0.5, d * -0.5, q).unwrap();
    for mid in [[1.0, 2.0, -3.0], [-4.0, 0.5, 0.0], [3.3, -3.3, 4.4]] {
        let v = e.m_in(mom(mid) + d * 0.5, mom(mid) - d * 0.5, q).unwrap();
        assert!((v - base).norm() <= 1e-13 * base.norm());
    }
}
