//! Command dispatch. Every command reads one config file, writes its
//! artifacts under the output directory and returns a status code with a
//! human-readable report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cmc_core::consistency::{certify_weak_only, check_all, ConsistencyReport, Verdict, WeakOnlyVerdict};
use cmc_core::copulae::{validate_precopula, CopulaKind, InitialProvenance, PrecopulaReport};
use cmc_core::kolmogorov::{solve_forward, state_distribution};
use cmc_core::montecarlo::{compensator_residuals, empirical_distribution, Estimate};
use cmc_core::premium::{price_closed_form, price_from_bundle, PremiumQuote};
use cmc_core::{validate_generator, Error};
use serde::Serialize;

use crate::config::{load, BuildConfig, ModelConfig, PoolConfig, BUILD_SCHEMA, MODEL_SCHEMA, POOL_SCHEMA};
use crate::error::{CliError, CliResult};
use crate::export::{state_label, write_distribution, write_json, write_paths, write_transition_field};
use crate::fixtures::{reproduce, FixtureOutcome, ReproduceOptions, FIXTURES};
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Solve,
    Check,
    Build,
    Simulate,
    Price,
    Reproduce,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub tol: f64,
    /// Restricts `check` to one component.
    pub component: Option<usize>,
    /// Fixture names for `reproduce`; empty means all.
    pub fixtures: Vec<String>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            config: None,
            out: None,
            seed: None,
            paths: None,
            tol: cmc_core::STRUCTURAL_TOL,
            component: None,
            fixtures: Vec::new(),
        }
    }

    fn config_path(&self) -> CliResult<&Path> {
        self.config.as_deref().ok_or_else(|| CliError::Usage("--config is required".into()))
    }

    fn seed_and_paths(&self) -> CliResult<(u64, usize)> {
        let seed = self.seed.ok_or_else(|| CliError::Usage("--seed is required for stochastic commands".into()))?;
        let paths = self.paths.ok_or_else(|| CliError::Usage("--paths is required for stochastic commands".into()))?;
        if paths == 0 {
            return Err(CliError::Usage("--paths must be positive".into()));
        }
        Ok((seed, paths))
    }

    /// Output directory, created on first use; `None` when no `--out` was given.
    fn out_dir(&self) -> CliResult<Option<&Path>> {
        match self.out.as_deref() {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                Ok(Some(dir))
            }
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    /// 0 success, 1 verdict failure.
    pub status: i32,
    pub stdout: String,
}

pub fn run(cfg: &RunConfig) -> CliResult<RunOutput> {
    if !(cfg.tol.is_finite() && cfg.tol >= 0.0) {
        return Err(CliError::Usage(format!("--tol must be a non-negative number, got {}", cfg.tol)));
    }
    match cfg.command {
        Command::Validate => validate(cfg),
        Command::Solve => solve(cfg),
        Command::Check => check(cfg),
        Command::Build => build(cfg),
        Command::Simulate => simulate(cfg),
        Command::Price => price(cfg),
        Command::Reproduce => run_fixtures(cfg),
    }
}

fn validate(cfg: &RunConfig) -> CliResult<RunOutput> {
    let mc: ModelConfig = load(cfg.config_path()?, MODEL_SCHEMA)?;
    let mut out = String::new();
    let mut problems = Vec::new();
    match mc.raw_cells() {
        Ok(cells) => {
            for (j, cell) in cells.into_iter().enumerate() {
                if let Err(e) = validate_generator(cell, cfg.tol) {
                    problems.push(format!("cell {j}: {e}"));
                }
            }
        }
        Err(e) => problems.push(e.to_string()),
    }
    if problems.is_empty() {
        if let Err(e) = mc.model(cfg.tol) {
            problems.push(e.to_string());
        }
    }
    if problems.is_empty() {
        writeln!(out, "valid").ok();
        return Ok(RunOutput { status: 0, stdout: out });
    }
    writeln!(out, "invalid model").ok();
    for p in &problems {
        writeln!(out, "  {p}").ok();
    }
    Ok(RunOutput { status: 1, stdout: out })
}

#[derive(Serialize)]
struct SolveSummary {
    dim: usize,
    n_cells: usize,
    max_row_sum_error: f64,
    chapman_kolmogorov_error: f64,
    terminal_distribution: Vec<(String, f64)>,
}

fn solve(cfg: &RunConfig) -> CliResult<RunOutput> {
    let model = load::<ModelConfig>(cfg.config_path()?, MODEL_SCHEMA)?.model(cfg.tol)?;
    let field = solve_forward(&model)?;
    let dist = state_distribution(&model)?;
    let space = model.space();
    let summary = SolveSummary {
        dim: model.dim(),
        n_cells: model.generator().n_cells(),
        max_row_sum_error: field.max_row_sum_error(),
        chapman_kolmogorov_error: field.chapman_kolmogorov_error(),
        terminal_distribution: dist
            .at_index(dist.grid.len() - 1)
            .iter()
            .enumerate()
            .map(|(x, p)| (state_label(space, x), *p))
            .collect(),
    };
    if let Some(dir) = cfg.out_dir()? {
        write_transition_field(&dir.join("transition_field.csv"), &field, space)?;
        write_distribution(&dir.join("distribution.csv"), &dist, space)?;
        write_json(&dir.join("summary.json"), &summary)?;
    }
    let mut out = String::new();
    writeln!(out, "solved {} states over {} cells", summary.dim, summary.n_cells).ok();
    writeln!(out, "max row-sum error {:e}", summary.max_row_sum_error).ok();
    writeln!(out, "Chapman-Kolmogorov error {:e}", summary.chapman_kolmogorov_error).ok();
    for (label, p) in &summary.terminal_distribution {
        writeln!(out, "  P(X_T = {label}) = {p:.10}").ok();
    }
    Ok(RunOutput { status: 0, stdout: out })
}

#[derive(Serialize)]
struct ComponentCheck {
    report: ConsistencyReport,
    weak_only: WeakOnlyVerdict,
}

/// At most eleven evenly spaced grid points, always including both ends.
fn probe_times(grid: &[f64]) -> Vec<f64> {
    let last = grid.len() - 1;
    let n = last.min(10);
    let mut times: Vec<f64> = (0..=n).map(|i| grid[i * last / n.max(1)]).collect();
    times.dedup();
    times
}

fn verdict(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "FAIL",
        Verdict::NotApplicable => "n/a",
    }
}

const SHOWN_WITNESSES: usize = 6;

fn check(cfg: &RunConfig) -> CliResult<RunOutput> {
    let model = load::<ModelConfig>(cfg.config_path()?, MODEL_SCHEMA)?.model(cfg.tol)?;
    let n = model.space().n_components();
    let components: Vec<usize> = match cfg.component {
        Some(k) if k >= n => return Err(CliError::Usage(format!("component {k} out of range (model has {n})"))),
        Some(k) => vec![k],
        None => (0..n).collect(),
    };
    let times = probe_times(model.grid());
    let mut checks = Vec::new();
    let mut out = String::new();
    for k in components {
        let report = check_all(&model, k, cfg.tol)?;
        let weak_only = certify_weak_only(&model, k, &times, &times, cmc_core::TRANSITION_TOL)?;
        writeln!(
            out,
            "component {k}: ASM {}, SM {}, weak necessary condition {}, weak-only certified: {}",
            verdict(report.asm),
            verdict(report.sm),
            verdict(report.wm_necessary),
            weak_only.certified
        )
        .ok();
        for w in report.witnesses.iter().take(SHOWN_WITNESSES) {
            writeln!(
                out,
                "  witness cell {} (t={}): rate to {} from {:?} is {}, from {:?} is {}",
                w.cell, w.time, w.y_k, w.x, w.lhs, w.x_bar, w.rhs
            )
            .ok();
        }
        if report.witnesses.len() > SHOWN_WITNESSES {
            writeln!(out, "  ... {} more witnesses", report.witnesses.len() - SHOWN_WITNESSES).ok();
        }
        checks.push(ComponentCheck { report, weak_only });
    }
    if let Some(dir) = cfg.out_dir()? {
        write_json(&dir.join("consistency.json"), &checks)?;
    }
    let status = if checks.iter().any(|c| c.report.sm == Verdict::Fail) { 1 } else { 0 };
    Ok(RunOutput { status, stdout: out })
}

#[derive(Serialize)]
struct BuildReport<'a> {
    kind: &'a CopulaKind,
    initial_provenance: InitialProvenance,
    precopula: PrecopulaReport,
}

fn build(cfg: &RunConfig) -> CliResult<RunOutput> {
    let bc: BuildConfig = load(cfg.config_path()?, BUILD_SCHEMA)?;
    let cand = bc.candidate(cfg.tol)?;
    let report = validate_precopula(&cand, &cand.targets, cfg.tol)?;
    let mut out = String::new();
    let names = |vs: &[Verdict; 4]| vs.iter().map(|&v| verdict(v)).collect::<Vec<_>>().join(" ");
    writeln!(out, "{} candidate over {} states", cand.kind.name(), cand.model.dim()).ok();
    writeln!(out, "  strong (CMC-1..4): {}", names(&report.cmc)).ok();
    writeln!(out, "  weak (WCMC-1..4): {}", names(&report.wcmc)).ok();
    writeln!(out, "  aggregate deviation {:e}", report.aggregate_deviation).ok();
    writeln!(out, "  weak intensity deviation {:e}", report.weak_intensity_deviation).ok();
    let status = if report.weak_pass() { 0 } else { 1 };
    if let Some(dir) = cfg.out_dir()? {
        write_json(&dir.join("model.json"), &ModelConfig::from_model(&cand.model))?;
        let br = BuildReport { kind: &cand.kind, initial_provenance: cand.initial_provenance, precopula: report };
        write_json(&dir.join("candidate.json"), &br)?;
    }
    Ok(RunOutput { status, stdout: out })
}

#[derive(Serialize)]
struct SimulationSummary {
    seed: u64,
    n_paths: usize,
    horizon: f64,
    terminal_distribution: Vec<Estimate>,
    max_residual_z: f64,
    residuals: Vec<Estimate>,
}

fn simulate(cfg: &RunConfig) -> CliResult<RunOutput> {
    let (seed, n_paths) = cfg.seed_and_paths()?;
    let model = load::<ModelConfig>(cfg.config_path()?, MODEL_SCHEMA)?.model(cfg.tol)?;
    let bundle = parallel::simulate(&model, n_paths, seed)?;
    let horizon = model.horizon();
    let exact = state_distribution(&model)?;
    let (probs, se) = empirical_distribution(&bundle, horizon)?;
    let terminal_distribution = probs
        .iter()
        .zip(&se)
        .zip(exact.at_index(exact.grid.len() - 1))
        .enumerate()
        .map(|(x, ((&p, &s), &e))| Estimate::new(format!("P(X_T = {})", state_label(model.space(), x)), p, s, e))
        .collect();
    let residuals = compensator_residuals(&bundle, &model)?;
    let summary = SimulationSummary {
        seed,
        n_paths,
        horizon,
        terminal_distribution,
        max_residual_z: residuals.max_abs_z(),
        residuals: residuals.estimates,
    };
    if let Some(dir) = cfg.out_dir()? {
        write_paths(&dir.join("paths.csv"), &bundle)?;
        write_json(&dir.join("simulation.json"), &summary)?;
    }
    let mut out = String::new();
    writeln!(out, "{n_paths} paths, seed {seed}").ok();
    for e in &summary.terminal_distribution {
        writeln!(out, "  {} = {:.6} ± {:.6} (exact {:.6}, z {:+.2})", e.label, e.value, e.std_error, e.reference, e.z).ok();
    }
    writeln!(out, "max |z| of compensator residuals {:.2}", summary.max_residual_z).ok();
    Ok(RunOutput { status: 0, stdout: out })
}

#[derive(Serialize)]
struct PriceReport {
    monte_carlo: PremiumQuote,
    closed_form: Option<PremiumQuote>,
}

fn quote_table(out: &mut String, q: &PremiumQuote) {
    writeln!(out, "{:<12} {:<14} {:>8} {:>10} {:>12} {:>12}", "individual", "given", "paths", "weight", "premium", "std error")
        .ok();
    for iq in &q.individuals {
        for (scope, strata) in [("own", &iq.individual), ("pool", &iq.pool)] {
            for s in strata {
                let given = format!("{scope} {:?}", s.state);
                writeln!(
                    out,
                    "{:<12} {:<14} {:>8} {:>10.6} {:>12.6} {:>12.6}",
                    iq.component, given, s.n_paths, s.weight, s.premium, s.std_error
                )
                .ok();
            }
        }
    }
}

fn price(cfg: &RunConfig) -> CliResult<RunOutput> {
    let (seed, n_paths) = cfg.seed_and_paths()?;
    let pool = load::<PoolConfig>(cfg.config_path()?, POOL_SCHEMA)?.pool(cfg.tol)?;
    let bundle = parallel::simulate(&pool.candidate.model, n_paths, seed)?;
    let monte_carlo = price_from_bundle(&pool, &bundle)?;
    let closed_form = match price_closed_form(&pool) {
        Ok(q) => Some(q),
        Err(Error::UnsupportedKind(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let mut out = String::new();
    writeln!(out, "Monte Carlo, {n_paths} paths, seed {seed}").ok();
    quote_table(&mut out, &monte_carlo);
    if let Some(q) = &closed_form {
        writeln!(out, "closed form").ok();
        quote_table(&mut out, q);
    }
    if let Some(dir) = cfg.out_dir()? {
        write_json(&dir.join("quote.json"), &PriceReport { monte_carlo, closed_form })?;
    }
    Ok(RunOutput { status: 0, stdout: out })
}

fn run_fixtures(cfg: &RunConfig) -> CliResult<RunOutput> {
    let names: Vec<String> =
        if cfg.fixtures.is_empty() { FIXTURES.iter().map(|s| s.to_string()).collect() } else { cfg.fixtures.clone() };
    let mut opts = ReproduceOptions { tol: cfg.tol, ..ReproduceOptions::default() };
    if let Some(seed) = cfg.seed {
        opts.seed = seed;
    }
    if let Some(paths) = cfg.paths {
        opts.paths = paths;
    }
    let outcomes = names.iter().map(|n| reproduce(n, &opts)).collect::<CliResult<Vec<FixtureOutcome>>>()?;
    let mut out = String::new();
    for o in &outcomes {
        writeln!(out, "{} {}", if o.passed { "PASS" } else { "FAIL" }, o.name).ok();
        for c in &o.claims {
            writeln!(out, "  [{}] {} ({})", if c.passed { "ok" } else { "FAILED" }, c.statement, c.detail).ok();
        }
        for s in &o.summary {
            writeln!(out, "  {s}").ok();
        }
    }
    if let Some(dir) = cfg.out_dir()? {
        write_json(&dir.join("reproduce.json"), &outcomes)?;
    }
    let status = if outcomes.iter().all(|o| o.passed) { 0 } else { 1 };
    Ok(RunOutput { status, stdout: out })
}
