//! The `offline`, `online`, `fom`, `sweep` and `bench` commands.
//!
//! Every command writes into a directory or file named by the caller.
//! Numeric outputs are reproducible byte for byte; wall-clock timings are
//! kept in separate files or columns.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fracrom_core::fem::DofMap;
use fracrom_core::rom::{
    fom_solve, fom_solve_multi, offline_train, offline_train_svd, online_solve, rel_l2_error,
    OfflineReport, RomArtifact, TrainingPlan,
};
use fracrom_core::shifted::SolverOptions;
use fracrom_core::{AffineProblem, OnlineQuery, SincRule, SparseCholesky, Vec64};
use serde::Serialize;

use crate::config::{check_alpha, RunConfig};
use crate::error::CliError;
use crate::romfile;

pub const ROM_FILE: &str = "rom.bin";
pub const OFFLINE_REPORT: &str = "offline_report.json";
pub const SAMPLES_CSV: &str = "samples.csv";
pub const SINGULAR_VALUES_CSV: &str = "singular_values.csv";
pub const OFFLINE_TIMINGS_CSV: &str = "offline_timings.csv";
pub const ERRORS_CSV: &str = "errors.csv";
pub const SWEEP_SUMMARY: &str = "sweep_summary.json";
pub const TIMINGS_CSV: &str = "timings.csv";

// Largest system for which the bench times direct per-node factorizations.
const NAIVE_BENCH_LIMIT: usize = 20_000;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn ms(seconds: f64) -> f64 {
    seconds * 1e3
}

/// Creation time recorded in artifacts: `SOURCE_DATE_EPOCH` when set, else 0,
/// so that reruns produce identical files.
pub fn creation_timestamp() -> Result<u64, CliError> {
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("SOURCE_DATE_EPOCH: not an integer: {s:?}"))),
        Err(_) => Ok(0),
    }
}

pub fn training_plan(cfg: &RunConfig, problem: &AffineProblem) -> Result<TrainingPlan, CliError> {
    let samples = cfg.training_samples(problem)?;
    let mut plan = TrainingPlan::new(samples, problem.mesh.h(), cfg.rank, cfg.sketch_seed)?;
    plan.taus = cfg.taus.clone();
    plan.solver = SolverOptions {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
    };
    plan.spec = Some(cfg.problem);
    plan.created = creation_timestamp()?;
    plan.basis_scaling = cfg.basis_scaling;
    Ok(plan)
}

fn fom_options(cfg: &RunConfig) -> SolverOptions {
    SolverOptions {
        tol: cfg.fom_tol,
        max_iter: cfg.fom_max_iter,
    }
}

fn check_mu(mu: &[f64], param_box: &[(f64, f64)]) -> Result<(), CliError> {
    if mu.len() != param_box.len() {
        return Err(CliError::Config(format!(
            "mu: expected {} parameter components, got {}",
            param_box.len(),
            mu.len()
        )));
    }
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Config("mu: non-finite component".into()));
    }
    Ok(())
}

/// Numeric part of the offline report; timings live in the timings CSV.
#[derive(Serialize)]
struct OfflineSummary<'a> {
    problem: &'a str,
    grid: [usize; 2],
    n_dof: usize,
    rank: usize,
    n_samples: usize,
    training_digest: &'a str,
    converged: bool,
    sketch_rank_deficient: bool,
    total_basis_columns: usize,
    samples: &'a [fracrom_core::rom::SampleReport],
    singular_values: &'a [f64],
}

pub struct OfflineOutcome {
    pub rom: RomArtifact,
    pub report: OfflineReport,
    pub rom_path: PathBuf,
}

/// Trains a model and writes the artifact plus its reports to `cfg.output_dir`.
pub fn cmd_offline(cfg: &RunConfig) -> Result<OfflineOutcome, CliError> {
    let problem = cfg.build_problem()?;
    let plan = training_plan(cfg, &problem)?;
    log::info!(
        "offline: {} on {}x{} ({} dofs), {} samples, K = {}",
        problem.id,
        cfg.grid.nx,
        cfg.grid.ny,
        problem.ndof(),
        plan.samples.len(),
        cfg.rank
    );
    let (rom, report) = offline_train(&plan, &problem)?;
    let unconverged = report.samples.iter().filter(|s| !s.converged).count();
    if unconverged > 0 {
        log::warn!("{unconverged} training samples did not reach the solver tolerance");
    }

    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let rom_path = dir.join(ROM_FILE);
    romfile::write(&rom_path, &rom)?;

    write_json(
        &dir.join(OFFLINE_REPORT),
        &OfflineSummary {
            problem: &problem.id,
            grid: [cfg.grid.nx, cfg.grid.ny],
            n_dof: problem.ndof(),
            rank: rom.rank(),
            n_samples: plan.samples.len(),
            training_digest: &rom.meta.training_digest,
            converged: unconverged == 0,
            sketch_rank_deficient: report.sketch_rank_deficient,
            total_basis_columns: report.samples.iter().map(|s| s.basis_size).sum(),
            samples: &report.samples,
            singular_values: &report.singular_values,
        },
    )?;

    let mut w = csv_writer(&dir.join(SAMPLES_CSV))?;
    w.write_record(["sample", "mu", "iterations", "basis_size", "converged", "max_residual"])?;
    for (i, s) in report.samples.iter().enumerate() {
        let mu = s.mu.iter().map(|&v| v.to_string()).collect::<Vec<_>>().join(";");
        w.write_record([
            i.to_string(),
            mu,
            s.iterations.to_string(),
            s.basis_size.to_string(),
            s.converged.to_string(),
            num(s.max_residual),
        ])?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join(SINGULAR_VALUES_CSV))?;
    w.write_record(["index", "value"])?;
    for (i, s) in report.singular_values.iter().enumerate() {
        w.write_record([i.to_string(), num(*s)])?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join(OFFLINE_TIMINGS_CSV))?;
    w.write_record(["stage", "milliseconds"])?;
    for (stage, t) in [
        ("search_spaces", report.snapshot_seconds),
        ("compression", report.compression_seconds),
        ("projection", report.projection_seconds),
    ] {
        w.write_record([stage.to_string(), format!("{:.3}", ms(t))])?;
    }
    w.flush()?;

    Ok(OfflineOutcome {
        rom,
        report,
        rom_path,
    })
}

#[derive(Serialize)]
struct SolutionSidecar<'a> {
    source: &'a str,
    problem: &'a str,
    grid: [usize; 2],
    x_range: (f64, f64),
    y_range: (f64, f64),
    layout: &'a str,
    values: usize,
    mu: &'a [f64],
    alpha: f64,
    elapsed_ms: f64,
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes nodal values as flat little-endian `f64`, x index fastest, plus
/// a JSON sidecar named `<out>.json`.
#[allow(clippy::too_many_arguments)]
fn write_solution(
    out: &Path,
    source: &str,
    problem: &str,
    mesh: &fracrom_core::StructuredMesh,
    bc: fracrom_core::BoundaryCondition,
    y: &[f64],
    mu: &[f64],
    alpha: f64,
    elapsed: f64,
) -> Result<(), CliError> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let nodal = DofMap::new(mesh, bc).to_nodes(y);
    let mut bytes = Vec::with_capacity(8 * nodal.len());
    for v in &nodal {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(out, bytes).map_err(io_err(out))?;
    write_json(
        &sidecar_path(out),
        &SolutionSidecar {
            source,
            problem,
            grid: [mesh.nx(), mesh.ny()],
            x_range: mesh.x_range(),
            y_range: mesh.y_range(),
            layout: "nodal f64 little-endian, x index fastest",
            values: nodal.len(),
            mu,
            alpha,
            elapsed_ms: ms(elapsed),
        },
    )
}

/// Evaluates a stored model at one query.
pub fn cmd_online(rom_path: &Path, mu: &[f64], alpha: f64, out: &Path) -> Result<Vec64, CliError> {
    let rom = romfile::read(rom_path)?;
    check_alpha(alpha, "alpha")?;
    check_mu(mu, &rom.meta.param_box)?;
    let t = Instant::now();
    let y = online_solve(&rom, &OnlineQuery { mu, alpha })?;
    let elapsed = t.elapsed().as_secs_f64();
    write_solution(
        out,
        "rom",
        &rom.meta.problem,
        &rom.meta.mesh,
        rom.meta.bc,
        &y,
        mu,
        alpha,
        elapsed,
    )?;
    Ok(y)
}

/// Full-order solve at one query on the configured grid.
pub fn cmd_fom(cfg: &RunConfig, mu: &[f64], alpha: f64, out: &Path) -> Result<Vec64, CliError> {
    let problem = cfg.build_problem()?;
    check_alpha(alpha, "alpha")?;
    check_mu(mu, &problem.param_box)?;
    let t = Instant::now();
    let y = fom_solve(&problem, mu, alpha, problem.mesh.h(), &fom_options(cfg))?;
    let elapsed = t.elapsed().as_secs_f64();
    write_solution(
        out,
        "fom",
        &problem.id,
        &problem.mesh,
        problem.bc,
        &y,
        mu,
        alpha,
        elapsed,
    )?;
    Ok(y)
}

/// One `(μ, α)` entry of the error table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub mu: Vec<f64>,
    pub alpha: f64,
    pub rel_l2_error: f64,
    pub online_time_s: f64,
    pub fom_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    pub max_error: f64,
    pub mean_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub problem: String,
    pub queries: usize,
    pub max_error: f64,
    pub mean_error: f64,
    pub per_alpha: Vec<AlphaSummary>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn summarize(problem: &str, alphas: &[f64], rows: &[ErrorRow]) -> SweepSummary {
    let per_alpha = alphas
        .iter()
        .map(|&a| {
            let errs = || rows.iter().filter(|r| r.alpha == a).map(|r| r.rel_l2_error);
            AlphaSummary {
                alpha: a,
                max_error: errs().fold(0.0, f64::max),
                mean_error: mean(errs()),
            }
        })
        .collect();
    SweepSummary {
        problem: problem.to_string(),
        queries: rows.len(),
        max_error: rows.iter().map(|r| r.rel_l2_error).fold(0.0, f64::max),
        mean_error: mean(rows.iter().map(|r| r.rel_l2_error)),
        per_alpha,
    }
}

/// Model loaded from `rom_path`, checked against the configured problem.
fn matching_rom(rom_path: &Path, cfg: &RunConfig, problem: &AffineProblem) -> Result<RomArtifact, CliError> {
    let rom = romfile::read(rom_path)?;
    let m = &rom.meta;
    if m.spec.is_some_and(|s| s != cfg.problem) || m.problem != problem.id {
        return Err(CliError::Config(format!(
            "problem: artifact was trained for {}, config names {}",
            m.problem, problem.id
        )));
    }
    if m.mesh != problem.mesh || m.n_dof != problem.ndof() {
        return Err(CliError::Config(format!(
            "grid: artifact was trained on {}x{}, config names {}x{}",
            m.mesh.nx(),
            m.mesh.ny(),
            cfg.grid.nx,
            cfg.grid.ny
        )));
    }
    Ok(rom)
}

/// Error table of the model against the full-order solver over the test set.
pub fn cmd_sweep(rom_path: &Path, cfg: &RunConfig) -> Result<SweepSummary, CliError> {
    let problem = cfg.build_problem()?;
    let rom = matching_rom(rom_path, cfg, &problem)?;
    let test = cfg
        .test
        .as_ref()
        .ok_or_else(|| CliError::Config("test: a test set is required for sweep".into()))?;
    let alphas = test.alphas()?;
    let mus = if alphas.is_empty() {
        Vec::new()
    } else {
        test.samples.generate(&problem.param_box, "test.samples")?
    };
    let rows = sweep_rows(&rom, &problem, &mus, &alphas, &fom_options(cfg))?;
    let summary = summarize(&problem.id, &alphas, &rows);

    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let n_params = problem.num_params();
    let mut w = csv_writer(&dir.join(ERRORS_CSV))?;
    let mut header = vec!["problem".to_string(), "alpha".to_string()];
    header.extend((1..=n_params).map(|i| format!("mu_{i}")));
    header.extend(["rel_l2_error", "online_time_s", "fom_time_s"].map(String::from));
    w.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![problem.id.clone(), r.alpha.to_string()];
        rec.extend(r.mu.iter().map(|v| v.to_string()));
        rec.extend([num(r.rel_l2_error), num(r.online_time_s), num(r.fom_time_s)]);
        w.write_record(&rec)?;
    }
    if !rows.is_empty() {
        let mut rec = vec!["summary".to_string(), String::new()];
        rec.extend(std::iter::repeat_n(String::new(), n_params));
        rec.extend([
            num(summary.max_error),
            num(mean(rows.iter().map(|r| r.online_time_s))),
            num(mean(rows.iter().map(|r| r.fom_time_s))),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    write_json(&dir.join(SWEEP_SUMMARY), &summary)?;
    Ok(summary)
}

/// One row per `(μ, α)`, samples outermost. The full-order solutions for
/// all exponents of one `μ` share a solve; its time is split evenly.
pub fn sweep_rows(
    rom: &RomArtifact,
    problem: &AffineProblem,
    mus: &[Vec<f64>],
    alphas: &[f64],
    fom_opts: &SolverOptions,
) -> Result<Vec<ErrorRow>, CliError> {
    let mut rows = Vec::with_capacity(mus.len() * alphas.len());
    if alphas.is_empty() {
        return Ok(rows);
    }
    for mu in mus {
        check_mu(mu, &problem.param_box)?;
        let t = Instant::now();
        let fom = fom_solve_multi(problem, mu, alphas, rom.meta.h, fom_opts)?;
        let fom_time = t.elapsed().as_secs_f64() / alphas.len() as f64;
        for (&alpha, y_ref) in alphas.iter().zip(&fom) {
            let t = Instant::now();
            let y = online_solve(rom, &OnlineQuery { mu, alpha })?;
            let online_time = t.elapsed().as_secs_f64();
            let err = rel_l2_error(&problem.mass, &y, y_ref)?;
            if !err.is_finite() {
                return Err(CliError::Numeric(fracrom_core::Error::InvalidArgument(format!(
                    "non-finite error at mu {mu:?}, alpha {alpha}"
                ))));
            }
            rows.push(ErrorRow {
                mu: mu.clone(),
                alpha,
                rel_l2_error: err,
                online_time_s: online_time,
                fom_time_s: fom_time,
            });
        }
    }
    Ok(rows)
}

/// One line of `timings.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub stage: String,
    pub method: String,
    pub query: String,
    pub value: f64,
    pub unit: String,
}

impl TimingRow {
    fn new(stage: &str, method: &str, query: impl ToString, value: f64, unit: &str) -> Self {
        Self {
            stage: stage.into(),
            method: method.into(),
            query: query.to_string(),
            value,
            unit: unit.into(),
        }
    }
}

/// Default bench queries: the test set if configured, else up to five
/// training samples at `α = 0.5`.
fn bench_queries(cfg: &RunConfig, problem: &AffineProblem, plan: &TrainingPlan) -> Result<Vec<(Vec<f64>, f64)>, CliError> {
    if let Some(test) = &cfg.test {
        let alphas = test.alphas()?;
        if !alphas.is_empty() {
            let mus = test.samples.generate(&problem.param_box, "test.samples")?;
            return Ok(mus
                .iter()
                .flat_map(|mu| alphas.iter().map(move |&a| (mu.clone(), a)))
                .collect());
        }
    }
    Ok(plan.samples.iter().take(5).map(|mu| (mu.clone(), 0.5)).collect())
}

/// Timings for the offline variants and per-query online vs full-order cost.
pub fn cmd_bench(cfg: &RunConfig) -> Result<Vec<TimingRow>, CliError> {
    let problem = cfg.build_problem()?;
    let plan = training_plan(cfg, &problem)?;
    let mut rows = Vec::new();
    let n_samples = plan.samples.len() as f64;

    let (rom, sk) = offline_train(&plan, &problem)?;
    let (_, svd) = offline_train_svd(&plan, &problem)?;
    for (method, r) in [("sketch", &sk), ("svd_baseline", &svd)] {
        rows.push(TimingRow::new("search_spaces", method, "", r.snapshot_seconds, "s"));
        rows.push(TimingRow::new("compression", method, "", r.compression_seconds, "s"));
        rows.push(TimingRow::new("projection", method, "", r.projection_seconds, "s"));
    }
    rows.push(TimingRow::new(
        "search_space_per_sample",
        "mpgmres_sh",
        "",
        sk.snapshot_seconds / n_samples,
        "s",
    ));
    let compression_speedup = svd.compression_seconds / sk.compression_seconds;
    rows.push(TimingRow::new("speedup", "compression_svd_over_sketch", "", compression_speedup, "ratio"));
    log::info!("compression speedup of the sketch over the SVD: {compression_speedup:.1}x");

    if problem.ndof() <= NAIVE_BENCH_LIMIT {
        let t = Instant::now();
        let (k, f) = problem.materialize(&plan.samples[0])?;
        for &z in SincRule::training(plan.h)?.nodes() {
            let a = k.add_scaled(&problem.mass, 1.0, z.exp())?;
            SparseCholesky::factorize(&a)?.solve(&f)?;
        }
        rows.push(TimingRow::new(
            "search_space_per_sample",
            "direct_per_shift",
            "",
            t.elapsed().as_secs_f64(),
            "s",
        ));
    }

    let fom_opts = fom_options(cfg);
    let mut ratios = Vec::new();
    for (i, (mu, alpha)) in bench_queries(cfg, &problem, &plan)?.iter().enumerate() {
        check_mu(mu, &problem.param_box)?;
        let t = Instant::now();
        online_solve(&rom, &OnlineQuery { mu, alpha: *alpha })?;
        let online = t.elapsed().as_secs_f64();
        let t = Instant::now();
        fom_solve(&problem, mu, *alpha, plan.h, &fom_opts)?;
        let fom = t.elapsed().as_secs_f64();
        if online > fom {
            log::warn!("query {i}: online {online:.3e} s slower than full order {fom:.3e} s");
        }
        rows.push(TimingRow::new("query", "online", i, online, "s"));
        rows.push(TimingRow::new("query", "fom", i, fom, "s"));
        ratios.push(fom / online);
    }
    if !ratios.is_empty() {
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        rows.push(TimingRow::new("speedup", "fom_over_online_min", "", min, "ratio"));
        rows.push(TimingRow::new("speedup", "fom_over_online_mean", "", mean(ratios.into_iter()), "ratio"));
    }

    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let mut w = csv_writer(&dir.join(TIMINGS_CSV))?;
    w.write_record(["stage", "method", "query", "value", "unit"])?;
    for r in &rows {
        w.write_record([r.stage.clone(), r.method.clone(), r.query.clone(), num(r.value), r.unit.clone()])?;
    }
    w.flush()?;
    Ok(rows)
}
