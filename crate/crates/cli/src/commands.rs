//! The five subcommands: each builds its tables and writes them to the
//! output directory. The returned flag says whether every point converged.

use std::path::{Path, PathBuf};

use optofock::calibration::{calibrate, CalibrationError};
use optofock::metrics::phonon_distribution;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::output::{num, Table};
use crate::pipeline::{audit, phase_space, sweep, trajectory, RunError, Setup, AUDIT_TOL};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Every point converged (audit: the audit passed).
    pub success: bool,
    pub summary: String,
}

fn save(table: &Table, path: PathBuf) -> Result<PathBuf, CommandError> {
    table.save(&path).map_err(|source| CommandError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn provenance(table: &mut Table, command: &str, config: Option<&ExperimentConfig>) {
    table.meta("tool", "optofock").meta("version", optofock::VERSION).meta("command", command);
    if let Some(c) = config {
        table.meta("config_hash", c.hash()).meta("config", c.to_toml());
    }
}

fn describe(table: &mut Table, setup: &Setup) {
    for (k, v) in setup.describe() {
        table.meta(k, v);
    }
}

/// Calibration table for `M = 1..=max_m`.
pub fn cmd_calibrate(max_m: usize, out: &Path) -> Result<Outcome, CommandError> {
    if !(1..=40).contains(&max_m) {
        return Err(CommandError::Usage(format!("--max-m must be in 1..=40, got {max_m}")));
    }
    let mut t = Table::new(&["M", "x_star", "eta", "delta_eta", "detuning_over_omega_m"]);
    provenance(&mut t, "calibrate", None);
    t.meta("max_m", max_m).meta("sideband", 1);
    for m in 1..=max_m {
        let c = calibrate(m, 1)?;
        t.row(vec![m.to_string(), num(c.x_star), num(c.eta), num(c.delta_eta), num(c.detuning)]);
    }
    let file = save(&t, out.join("calibrate.csv"))?;
    Ok(Outcome { files: vec![file], success: true, summary: format!("calibrated M = 1..={max_m}") })
}

pub const SWEEP_COLUMNS: [&str; 10] =
    ["ratio", "fidelity", "purity", "I", "n_mean", "residual", "wall_ms", "cross_fidelity", "status", "config_hash"];

pub fn cmd_sweep(config: &ExperimentConfig, out: &Path) -> Result<Outcome, CommandError> {
    let setup = Setup::new(config)?;
    let results = sweep(&setup)?;
    let hash = config.short_hash();
    let mut t = Table::new(&SWEEP_COLUMNS);
    provenance(&mut t, "sweep", Some(config));
    describe(&mut t, &setup);
    for r in &results {
        t.row(vec![
            num(r.ratio),
            num(r.fidelity),
            num(r.purity),
            num(r.nonclassicality),
            num(r.n_mean),
            num(r.residual),
            format!("{:.1}", r.wall_ms),
            r.cross_fidelity.map(num).unwrap_or_default(),
            r.status.label(),
            hash.clone(),
        ]);
    }
    let failed = results.iter().filter(|r| !r.status.converged()).count();
    let file = save(&t, out.join("sweep.csv"))?;
    Ok(Outcome {
        files: vec![file],
        success: failed == 0,
        summary: format!("{} points, {failed} failed", results.len()),
    })
}

pub fn cmd_evolve(config: &ExperimentConfig, out: &Path) -> Result<Outcome, CommandError> {
    let setup = Setup::new(config)?;
    let rows = trajectory(&setup)?;
    let hash = config.short_hash();
    let mut t = Table::new(&["t", "fidelity", "purity", "n_mean", "trace_drift", "config_hash"]);
    provenance(&mut t, "evolve", Some(config));
    describe(&mut t, &setup);
    t.meta("ratio", config.single_point()).meta("gamma", setup.gamma(config.single_point()));
    for r in &rows {
        t.row(vec![num(r.t), num(r.fidelity), num(r.purity), num(r.n_mean), num(r.trace_drift), hash.clone()]);
    }
    let file = save(&t, out.join("evolve.csv"))?;
    let last = rows.last().expect("at least one sample");
    Ok(Outcome {
        files: vec![file],
        success: true,
        summary: format!("{} samples, final fidelity {:.6}", rows.len(), last.fidelity),
    })
}

pub fn cmd_wigner(config: &ExperimentConfig, out: &Path) -> Result<Outcome, CommandError> {
    let setup = Setup::new(config)?;
    let (point, grid) = phase_space(&setup)?;
    let state = point.state.as_ref().expect("phase_space returns a state");
    let hash = config.short_hash();
    let centre = optofock::metrics::wigner_at(state, 0.0, 0.0).map_err(RunError::from)?;

    let mut w = Table::new(&["q", "p", "W", "config_hash"]);
    provenance(&mut w, "wigner", Some(config));
    describe(&mut w, &setup);
    w.meta("ratio", point.ratio)
        .meta("fidelity", point.fidelity)
        .meta("purity", point.purity)
        .meta("I", point.nonclassicality)
        .meta("W00", centre)
        .meta("integral", grid.integral())
        .meta("boundary_mass", grid.boundary_mass())
        .meta("status", point.status.label());
    for (q, p, v) in grid.triples() {
        w.row(vec![num(q), num(p), num(v), hash.clone()]);
    }

    let mut occ = Table::new(&["n", "p_n", "config_hash"]);
    provenance(&mut occ, "wigner", Some(config));
    describe(&mut occ, &setup);
    let dist = phonon_distribution(state).map_err(RunError::from)?;
    for (n, p) in dist.iter().enumerate() {
        occ.row(vec![n.to_string(), num(*p), hash.clone()]);
    }
    let argmax = dist.iter().enumerate().fold((0, f64::MIN), |acc, (n, &p)| if p > acc.1 { (n, p) } else { acc }).0;
    occ.meta("argmax", argmax);

    let files = vec![save(&w, out.join("wigner.csv"))?, save(&occ, out.join("occupancy.csv"))?];
    Ok(Outcome {
        files,
        success: point.status.converged(),
        summary: format!(
            "F = {:.6}, P = {:.6}, W(0,0) = {centre:.6}, integral = {:.6}, occupancy argmax = {argmax}",
            point.fidelity,
            point.purity,
            grid.integral()
        ),
    })
}

pub fn cmd_audit(config: &ExperimentConfig, out: &Path) -> Result<Outcome, CommandError> {
    let setup = Setup::new(config)?;
    let report = audit(&setup)?;
    let hash = config.short_hash();
    let mut t = Table::new(&[
        "variant",
        "n_optical",
        "n_mech",
        "rtol",
        "fidelity",
        "purity",
        "n_mean",
        "boundary_population",
        "drift",
        "status",
        "config_hash",
    ]);
    provenance(&mut t, "audit", Some(config));
    describe(&mut t, &setup);
    let verdict = if report.passed() { "PASS" } else { "FAIL" };
    t.meta("ratio", report.ratio)
        .meta("tolerance", AUDIT_TOL)
        .meta("max_drift", num(report.max_drift))
        .meta("verdict", verdict);
    for n in &report.notes {
        t.meta("note", n);
    }
    for v in &report.variants {
        t.row(vec![
            v.name.clone(),
            v.n_optical.to_string(),
            v.n_mech.to_string(),
            num(v.rtol),
            num(v.fidelity),
            num(v.purity),
            num(v.n_mean),
            num(v.boundary_population),
            num(v.drift),
            v.status.label(),
            hash.clone(),
        ]);
    }
    let file = save(&t, out.join("audit.csv"))?;
    let mut summary = format!("{verdict}: max drift {} (tolerance {AUDIT_TOL})", num(report.max_drift));
    for n in &report.notes {
        summary.push_str(&format!("\n  note: {n}"));
    }
    Ok(Outcome { files: vec![file], success: report.passed(), summary })
}
