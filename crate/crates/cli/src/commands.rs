//! Subcommand drivers. Each returns the number of failed checks.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use qlbe::classical::{dsmc_run, maxwell_z_scores, DsmcEngine, DsmcSpec, Ensemble, LbeStepper};
use qlbe::config::RunConfig;
use qlbe::evolution::{evolve as run_evolution, DecayFit, SectorState, DEFAULT_STEP_FRACTION};
use qlbe::grid::Cell;
use qlbe::kernels::{KernelBuilder, KernelTable};
use qlbe::verify::{classical_residual, scan_pair, PairScan, Suite};
use qlbe::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::output::{delta_tag, fmt, num, state_path, table_path, write_csv, write_json};

/// Hermiticity and Cauchy–Schwarz slack of the kernel scan.
const SCAN_SLACK: f64 = 1e-12;
/// Largest accepted diagonal-versus-classical relative residual.
const CLASSICAL_LIMIT: f64 = 1e-8;
const CLASSICAL_SAMPLES: usize = 200;

#[derive(Serialize)]
struct TableStatus {
    delta: Cell,
    file: String,
    status: &'static str,
    checksum: String,
    lattice_len: usize,
    max_m_out: f64,
}

/// Loads each table from the output directory when it matches the
/// configuration, otherwise builds and saves it. A corrupted file is an
/// error rather than a reason to rebuild.
fn obtain_tables(config: &RunConfig, deltas: &[Cell]) -> Result<(Vec<Arc<KernelTable>>, Vec<TableStatus>)> {
    let grid = config.grid()?;
    let builder = KernelBuilder::new(config.engine()?, grid, config.grid.q_max)?.with_max_bytes(config.kernel.max_table_bytes);
    let mut order: Vec<Cell> = vec![[0, 0, 0]];
    for d in deltas {
        if !order.contains(d) {
            order.push(*d);
        }
    }
    let mut tables = BTreeMap::new();
    let mut statuses = Vec::new();
    for d in order {
        let path = table_path(&config.output, d);
        let (table, status) = match path.exists() {
            true => match KernelTable::load_matching(&path, &builder.meta(d)) {
                Ok(t) => (Arc::new(t), "skipped"),
                Err(Error::Mismatch(_)) => (build(&builder, d, &path)?, "rebuilt"),
                Err(e) => return Err(e),
            },
            false => (build(&builder, d, &path)?, "built"),
        };
        if d == [0, 0, 0] && status == "skipped" {
            builder.set_diagonal(table.clone())?;
        }
        println!("table {:?}: {status} ({})", d, path.display());
        statuses.push(TableStatus {
            delta: d,
            file: file_name(&path),
            status,
            checksum: table.checksum().to_string(),
            lattice_len: table.lattice().len(),
            max_m_out: table.max_m_out(),
        });
        tables.insert(d, table);
    }
    let selected = deltas.iter().map(|d| tables[d].clone()).collect();
    Ok((selected, statuses))
}

fn build(builder: &KernelBuilder, d: Cell, path: &Path) -> Result<Arc<KernelTable>> {
    let t = builder.table(d)?;
    t.save(path)?;
    Ok(t)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn kernel(config: &RunConfig) -> Result<usize> {
    let mut deltas = vec![[0, 0, 0]];
    for d in &config.kernel.deltas {
        if !deltas.contains(d) {
            deltas.push(*d);
        }
    }
    let (tables, statuses) = obtain_tables(config, &deltas)?;
    let by_delta: BTreeMap<Cell, &Arc<KernelTable>> = tables.iter().map(|t| (t.delta(), t)).collect();
    let diag = by_delta[&[0, 0, 0]];
    let mut scan = PairScan::default();
    let mut hermiticity_checked = false;
    for t in tables.iter().filter(|t| t.delta() != [0, 0, 0]) {
        let d = t.delta();
        let minus = by_delta.get(&[-d[0], -d[1], -d[2]]).map(|m| m.as_ref());
        hermiticity_checked |= minus.is_some();
        scan.merge(&scan_pair(diag, t, minus)?);
    }
    let residual = classical_residual(config.engine()?.as_ref(), diag, CLASSICAL_SAMPLES, config.seed)?;
    let checks = [
        ("hermiticity", scan.hermiticity, SCAN_SLACK),
        ("cauchy_schwarz", scan.cauchy_schwarz, SCAN_SLACK),
        ("classical_residual", residual, CLASSICAL_LIMIT),
    ];
    let failures = checks.iter().filter(|(_, v, lim)| !(v <= lim)).count();
    for (name, v, lim) in checks {
        println!("{name}: {v:e} (limit {lim:e}) {}", if v <= lim { "ok" } else { "FAILED" });
    }
    let physics = config.physics()?;
    let summary = json!({
        "physics": physics.summary(),
        "grid": { "n": config.grid.n, "spacing": config.grid()?.spacing(), "q_max": diag.lattice().q_max() },
        "tables": statuses,
        "scan": {
            "off_diagonal_entries": scan.entries,
            "hermiticity": scan.hermiticity,
            "hermiticity_checked": hermiticity_checked,
            "cauchy_schwarz_excess": scan.cauchy_schwarz,
            "classical_residual": residual,
            "classical_samples": CLASSICAL_SAMPLES,
            "slack": SCAN_SLACK,
            "classical_limit": CLASSICAL_LIMIT,
        },
        "passed": failures == 0,
    });
    write_json(&config.output.join("kernel_summary.json"), &summary)?;
    Ok(failures)
}

#[derive(Serialize)]
struct EvolveSummary {
    scenario: String,
    steps: usize,
    dt: f64,
    t_final: f64,
    reduced: bool,
    final_trace: Option<f64>,
    trace_drift: Option<f64>,
    leakage: f64,
    energy_initial: Option<f64>,
    energy_endpoint: Option<f64>,
    energy_target: Option<f64>,
    energy_relative_deviation: Option<f64>,
    decay_fits: Vec<DecayFit>,
    warnings: Vec<String>,
    violation: Option<String>,
}

pub fn evolve(config: &RunConfig) -> Result<usize> {
    let states = config.initial_states()?;
    let deltas: Vec<Cell> = states.iter().map(|s| s.delta()).collect();
    let (tables, _) = obtain_tables(config, &deltas)?;
    let physics = config.physics()?;
    let spec = config.evolve_spec()?;
    let traj = run_evolution(states, &tables, &physics.tracer, &spec)?;

    let mut header: Vec<String> =
        ["step", "time", "trace", "energy", "mean_modulus", "entropy", "leakage", "min_diagonal", "min_minor"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    for d in &deltas {
        header.push(format!("l1_{}", delta_tag(*d)));
        header.push(format!("l2_{}", delta_tag(*d)));
    }
    let rows: Vec<Vec<String>> = traj
        .records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.step.to_string(),
                fmt(r.time),
                num(r.trace),
                num(r.energy),
                num(r.mean_modulus),
                num(r.entropy),
                fmt(r.leakage),
                num(r.min_diagonal),
                num(r.min_minor),
            ];
            for n in &r.norms {
                row.push(fmt(n.l1));
                row.push(fmt(n.l2));
            }
            row
        })
        .collect();
    write_csv(&config.output.join("monitors.csv"), &header, &rows)?;
    for s in &traj.final_states {
        s.save(&state_path(&config.output, s.delta()))?;
    }

    let first = &traj.records[0];
    let last = traj.last();
    let target = spec.temperature.map(|t| 1.5 * t);
    let summary = EvolveSummary {
        scenario: serde_json::to_value(&config.scenario)?["kind"].as_str().unwrap_or_default().to_string(),
        steps: traj.steps,
        dt: traj.dt,
        t_final: spec.t_final,
        reduced: traj.reduced,
        final_trace: last.trace,
        trace_drift: last.trace.zip(first.trace).map(|(a, b)| a - b),
        leakage: last.leakage,
        energy_initial: first.energy,
        energy_endpoint: last.energy,
        energy_target: target,
        energy_relative_deviation: last.energy.zip(target).map(|(e, t)| (e - t).abs() / t),
        decay_fits: traj.decay_fits(),
        warnings: traj.warnings.clone(),
        violation: traj.violation.clone(),
    };
    write_json(&config.output.join("evolve_summary.json"), &summary)?;
    println!(
        "evolved {} steps of {:.4e}{}; trace drift {}; leakage {:e}; energy {}",
        traj.steps,
        traj.dt,
        if traj.reduced { " (cubic orbit reduction)" } else { "" },
        num(summary.trace_drift),
        last.leakage,
        num(last.energy)
    );
    for w in &traj.warnings {
        eprintln!("monitor warning: {w}");
    }
    if let Some(v) = &traj.violation {
        eprintln!("monitor violation: {v}");
    }
    Ok(traj.warnings.len() + usize::from(traj.violation.is_some()))
}

fn diagonal_initial(config: &RunConfig) -> Result<SectorState> {
    config
        .initial_states()?
        .into_iter()
        .find(|s| s.is_diagonal())
        .ok_or_else(|| qlbe::Error::InvalidParameter("scenario has no diagonal sector".into()))
}

pub fn classical(config: &RunConfig) -> Result<usize> {
    let mut w = diagonal_initial(config)?;
    let (tables, _) = obtain_tables(config, &[[0, 0, 0]])?;
    let stepper = LbeStepper::new(tables[0].clone())?;
    let physics = config.physics()?;
    let t_final = config.t_final()?;
    let max_out = tables[0].max_m_out();
    let requested = config.integration.dt.unwrap_or(if max_out > 0.0 { DEFAULT_STEP_FRACTION / max_out } else { t_final / 100.0 });
    let steps = if t_final == 0.0 { 0 } else { (t_final / requested * (1.0 - 1e-12)).ceil() as usize };
    let dt = if steps == 0 { requested } else { t_final / steps as f64 };
    let trace0 = w.trace();
    let record = |k: usize, w: &SectorState| {
        vec![
            k.to_string(),
            fmt(w.time()),
            fmt(w.trace()),
            fmt(w.energy(&physics.tracer)),
            fmt(w.mean_modulus()),
        ]
    };
    let mut rows = vec![record(0, &w)];
    let mut drift: f64 = 0.0;
    for k in 1..=steps {
        w = stepper.step(&w, dt)?;
        drift = drift.max((w.trace() - trace0).abs());
        rows.push(record(k, &w));
    }
    let header: Vec<String> = ["step", "time", "trace", "energy", "mean_modulus"].iter().map(|s| s.to_string()).collect();
    write_csv(&config.output.join("classical.csv"), &header, &rows)?;
    let limit = config.tolerances().trace;
    let summary = json!({
        "steps": steps,
        "dt": dt,
        "t_final": t_final,
        "final_trace": w.trace(),
        "max_trace_drift": drift,
        "trace_limit": limit,
        "energy_endpoint": w.energy(&physics.tracer),
        "mean_modulus_endpoint": w.mean_modulus(),
        "passed": drift <= limit,
    });
    write_json(&config.output.join("classical_summary.json"), &summary)?;
    println!("classical run: {steps} steps of {dt:.4e}; max trace drift {drift:e}; energy {}", w.energy(&physics.tracer));
    Ok(usize::from(drift > limit))
}

pub fn dsmc(config: &RunConfig) -> Result<usize> {
    let w0 = diagonal_initial(config)?;
    let physics = config.physics()?;
    let t_final = config.t_final()?;
    let tracer = physics.tracer;
    let scale = if tracer.is_infinite() {
        config.grid.half_extent / 4.0
    } else {
        (2.0 * tracer.mass * physics.gas.temperature()).sqrt()
    };
    let mut spec = DsmcSpec::new(t_final, scale);
    spec.outputs = config.dsmc.outputs;
    spec.histogram_bins = config.dsmc.histogram_bins;
    let engine = DsmcEngine::new(physics.gas.clone(), tracer, physics.model.clone())?;
    let mut ensemble = Ensemble::from_grid(&w0, config.dsmc.particles, config.seed)?;
    let r = dsmc_run(&engine, &mut ensemble, &spec)?;

    // Paired grid trajectory sampled at the particle output times.
    let grid_moments = if config.dsmc.paired_grid {
        let (tables, _) = obtain_tables(config, &[[0, 0, 0]])?;
        let per = if tables[0].max_m_out() > 0.0 {
            (t_final / spec.outputs as f64 / (DEFAULT_STEP_FRACTION / tables[0].max_m_out())).ceil().max(1.0) as usize
        } else {
            1
        };
        let mut es = config.evolve_spec()?;
        es.dt = Some(t_final / (spec.outputs * per) as f64);
        es.warn_only = true;
        let traj = run_evolution(vec![w0.clone()], &tables, &tracer, &es)?;
        Some((0..=spec.outputs).map(|k| &traj.records[k * per]).map(|r| (r.energy, r.mean_modulus)).collect::<Vec<_>>())
    } else {
        None
    };

    let mut header: Vec<String> =
        ["time", "energy_mean", "energy_std_error", "modulus_mean", "modulus_std_error"].iter().map(|s| s.to_string()).collect();
    if grid_moments.is_some() {
        header.extend(["grid_energy", "grid_modulus", "normalized_deviation"].iter().map(|s| s.to_string()));
    }
    let mut worst: f64 = 0.0;
    let rows: Vec<Vec<String>> = (0..r.times.len())
        .map(|k| {
            let mut row = vec![
                fmt(r.times[k]),
                fmt(r.energy[k].mean),
                fmt(r.energy[k].std_error),
                fmt(r.modulus[k].mean),
                fmt(r.modulus[k].std_error),
            ];
            if let Some(g) = &grid_moments {
                let (ge, gm) = g[k];
                let dev = |x: Option<f64>, s: qlbe::classical::MomentStat| {
                    x.map(|g| (s.mean - g).abs() / (0.02 * g.abs() + 3.0 * s.std_error)).unwrap_or(f64::NAN)
                };
                let d = dev(ge, r.energy[k]).max(dev(gm, r.modulus[k]));
                worst = worst.max(d);
                row.extend([num(ge), num(gm), fmt(d)]);
            }
            row
        })
        .collect();
    write_csv(&config.output.join("dsmc_moments.csv"), &header, &rows)?;

    let last = r.histograms.last().expect("final histogram");
    let z = if tracer.is_infinite() { None } else { Some(maxwell_z_scores(last, &r.bin_edges, scale)?) };
    let header: Vec<String> = ["bin_low", "bin_high", "count", "z_maxwell"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = (0..last.len())
        .map(|b| {
            vec![
                fmt(r.bin_edges[b]),
                r.bin_edges.get(b + 1).map(|x| fmt(*x)).unwrap_or_else(|| "inf".into()),
                last[b].to_string(),
                num(z.as_ref().map(|z| z[b])),
            ]
        })
        .collect();
    write_csv(&config.output.join("dsmc_histogram.csv"), &header, &rows)?;
    let header: Vec<String> = ["radius", "outward", "inward", "z"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> =
        r.flux.iter().map(|f| vec![fmt(f.radius), f.outward.to_string(), f.inward.to_string(), fmt(f.z_score())]).collect();
    write_csv(&config.output.join("dsmc_flux.csv"), &header, &rows)?;

    let within = z.as_ref().map(|z| z.iter().filter(|x| x.abs() < 3.0).count() as f64 / z.len() as f64);
    let hist_ok = within.map(|f| f >= 0.95).unwrap_or(true);
    let paired_ok = grid_moments.is_none() || worst <= 1.0;
    let summary = json!({
        "particles": r.particles,
        "t_final": t_final,
        "candidates": r.candidates,
        "collisions": r.collisions,
        "energy_endpoint": r.energy.last().map(|s| s.mean),
        "energy_endpoint_std_error": r.energy.last().map(|s| s.std_error),
        "maxwell_bins_within_3_sigma": within,
        "maxwell_max_abs_z": z.as_ref().map(|z| z.iter().fold(0.0f64, |a, b| a.max(b.abs()))),
        "histogram_passed": hist_ok,
        "paired_grid": grid_moments.is_some(),
        "paired_max_normalized_deviation": grid_moments.as_ref().map(|_| worst),
        "paired_passed": paired_ok,
    });
    write_json(&config.output.join("dsmc_summary.json"), &summary)?;
    println!(
        "dsmc: {} particles, {} collisions; Maxwell bins within 3 sigma: {}; paired deviation: {}",
        r.particles,
        r.collisions,
        num(within),
        if grid_moments.is_some() { fmt(worst) } else { "not run".into() }
    );
    Ok(usize::from(!hist_ok) + usize::from(!paired_ok))
}

pub fn verify(config: &RunConfig, criteria: &[String]) -> Result<usize> {
    let suite = Suite::new(config.clone());
    let report = suite.run(criteria)?;
    for c in &report.criteria {
        println!(
            "{:<6} {} {:<44} measured {:.4e} tolerance {:.4e} ({:.1}s) {}",
            c.id,
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance,
            c.seconds,
            c.detail
        );
    }
    write_json(&config.output.join("verify_report.json"), &report)?;
    println!("{} of {} criteria failed", report.failures, report.criteria.len());
    Ok(report.failures)
}
