//! Command-line front end: `run`, `verify` and `list-examples`.

pub mod config;
pub mod output;
pub mod scenarios;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::chain::{marginal_distribution, Generator};
use crate::error::{Error, Result};
use crate::measures::{check_absolute_continuity, measure_series_against, time_grid, AbsoluteContinuityReport, MeasureSeries, Mode};
use crate::montecarlo::{empirical_marginal_law, estimate_event, Estimate};
use crate::semigroup::propagate;
use crate::structures::MarkovStructureSpec;

pub use config::{MonteCarloConfig, QueryConfig, ScenarioConfig};
use output::{consistency_section, format_float, series_csv, slug, write_atomic, Style};

/// Largest accepted gap between extracted and prescribed marginal rates.
pub const LAW_MATCHING_TOL: f64 = 1e-8;
/// Monte Carlo agreement band, in standard errors.
pub const MC_BAND: f64 = 3.0;
pub const DEFAULT_MC: MonteCarloConfig = MonteCarloConfig {
    n_paths: 100_000,
    seed: 1,
};

#[derive(Debug, Parser)]
#[command(name = "markov-structures", version, about = "Markov structures and systemic risk measures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Override the grid step of the measure series.
    #[arg(long, global = true)]
    pub grid_step: Option<f64>,
    /// Run the Monte Carlo cross-check.
    #[arg(long, global = true)]
    pub mc: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the structures of a scenario and write their measure series.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        config: String,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check generators, classification, marginal laws and absolute continuity.
    Verify {
        /// Scenario file, or the name of a bundled scenario.
        config: String,
    },
    /// List the bundled scenarios.
    ListExamples,
}

/// Reads a scenario from a file, falling back to the bundled scenario of that name.
pub fn load(arg: &str) -> Result<ScenarioConfig> {
    let path = Path::new(arg);
    if path.exists() {
        return ScenarioConfig::parse(&std::fs::read_to_string(path)?);
    }
    match scenarios::find(arg) {
        Some(b) => ScenarioConfig::parse(b.source),
        None => Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("'{arg}' is neither a file nor a bundled scenario"),
        ))),
    }
}

pub fn list_examples() -> String {
    let mut out = String::new();
    for b in scenarios::BUNDLED {
        let description = ScenarioConfig::parse(b.source).map(|c| c.description).unwrap_or_default();
        let _ = writeln!(out, "{:<34} {description}", b.name);
    }
    out
}

/// Monte Carlo comparison at the end of the measure window.
#[derive(Clone, Debug)]
pub struct MonteCarloCheck {
    pub horizon: f64,
    pub event: Estimate,
    pub event_exact: f64,
    /// Per component: estimated probability of the target value, and its exact value.
    pub marginals: Vec<(Estimate, f64)>,
}

impl MonteCarloCheck {
    pub fn passes(&self) -> bool {
        self.event.within(self.event_exact, MC_BAND) && self.marginals.iter().all(|(e, v)| e.within(*v, MC_BAND))
    }
}

/// Everything computed for one structure of a scenario.
#[derive(Debug)]
pub struct StructureResult {
    pub spec: MarkovStructureSpec,
    pub series: MeasureSeries,
    pub law_matching_error: f64,
    pub continuity: AbsoluteContinuityReport,
    pub monte_carlo: Option<MonteCarloCheck>,
}

fn law_matching_times(cfg: &ScenarioConfig, spec: &MarkovStructureSpec) -> Result<Vec<f64>> {
    let end = cfg.end_time();
    let mut times = time_grid(end, cfg.classify_step)?;
    times.extend(spec.generator.sample_times(end));
    for m in &spec.prescribed_marginals {
        times.extend(m.sample_times(end));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    Ok(times)
}

fn monte_carlo(cfg: &ScenarioConfig, spec: &MarkovStructureSpec, mc: MonteCarloConfig) -> Result<Option<MonteCarloCheck>> {
    let Generator::Piecewise(g) = &spec.generator else {
        return Ok(None);
    };
    let horizon = cfg.end_time();
    let q = &cfg.query;
    let event = estimate_event(g, &spec.initial, horizon, &q.z, q.h, mc.n_paths, mc.seed)?;
    let law = propagate(&spec.initial, &spec.generator, horizon)?;
    let space = spec.space();
    let event_exact = (0..space.len())
        .filter(|&y| (0..q.z.len()).filter(|&i| space.coordinate(y, i) == q.z[i]).count() >= q.h)
        .map(|y| law.probs()[y])
        .sum();
    let mut marginals = Vec::with_capacity(space.components());
    for (i, prescribed) in spec.prescribed_marginals.iter().enumerate() {
        let empirical = empirical_marginal_law(g, &spec.initial, i, &[horizon], mc.n_paths, mc.seed)?;
        let p = empirical[0][q.z[i]];
        let start = marginal_distribution(&spec.initial, i)?;
        let exact = propagate(&start, prescribed, horizon)?.probs()[q.z[i]];
        let estimate = Estimate {
            mean: p,
            std_error: (p * (1.0 - p) / mc.n_paths as f64).sqrt(),
            n_paths: mc.n_paths,
        };
        marginals.push((estimate, exact));
    }
    Ok(Some(MonteCarloCheck {
        horizon,
        event,
        event_exact,
        marginals,
    }))
}

fn evaluate_one(cfg: &ScenarioConfig, spec: MarkovStructureSpec, mc: Option<MonteCarloConfig>) -> Result<StructureResult> {
    spec.generator.ensure_valid()?;
    let end = cfg.end_time();
    let spec = spec.classify(&time_grid(end, cfg.classify_step)?)?;
    let baseline = spec.independence_baseline()?;
    let q = &cfg.query;
    let series = measure_series_against(&spec, &baseline, cfg.mode, cfg.grid_step, &q.z, q.h, &q.x)?;
    let law_matching_error = spec.law_matching_error(&law_matching_times(cfg, &spec)?)?;
    let continuity = check_absolute_continuity(&spec, &baseline, &series.grid())?;
    let monte_carlo = match mc {
        Some(mc) => monte_carlo(cfg, &spec, mc)?,
        None => None,
    };
    Ok(StructureResult {
        spec,
        series,
        law_matching_error,
        continuity,
        monte_carlo,
    })
}

/// Builds and evaluates every structure of a scenario, concurrently.
pub fn evaluate(cfg: &ScenarioConfig, mc: bool) -> Result<Vec<StructureResult>> {
    let mc = mc.then(|| cfg.monte_carlo.unwrap_or(DEFAULT_MC));
    cfg.build()?
        .into_par_iter()
        .map(|spec| evaluate_one(cfg, spec, mc))
        .collect()
}

fn mode_line(mode: Mode) -> String {
    match mode {
        Mode::FixedT { horizon } => format!("fixed horizon T={}", format_float(horizon)),
        Mode::Rolling { window, until } => {
            format!("rolling window {} for t in [0, {}]", format_float(window), format_float(until))
        }
    }
}

fn tuple(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("({})", parts.join(","))
}

fn generator_kind(g: &Generator) -> String {
    match g {
        Generator::Piecewise(p) => format!("piecewise constant, {} segments", p.segments().len()),
        Generator::Smooth(_) => "time-varying rates".into(),
        Generator::Independence(_) => "independence of time-varying marginals".into(),
        Generator::Permuted(_) => "relabelled".into(),
    }
}

pub fn csv_name(cfg: &ScenarioConfig, label: &str) -> String {
    format!("{}.{}.csv", slug(&cfg.name), slug(label))
}

pub fn render_report(cfg: &ScenarioConfig, results: &[StructureResult], style: Style) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario: {}", cfg.name);
    if !cfg.description.is_empty() {
        let _ = writeln!(out, "description: {}", cfg.description);
    }
    let q = &cfg.query;
    let _ = writeln!(out, "mode: {}", mode_line(cfg.mode));
    let _ = writeln!(out, "query: z={} h={} x={}", tuple(&q.z), q.h, tuple(&q.x));
    let _ = writeln!(out, "grid step: {}", format_float(cfg.grid_step));
    for r in results {
        let spec = &r.spec;
        let _ = writeln!(out, "\n== {} ==", spec.label);
        let _ = writeln!(out, "generator: {}", generator_kind(&spec.generator));
        if let Some(report) = &spec.classification {
            consistency_section(&mut out, spec.space(), report);
        }
        let _ = writeln!(
            out,
            "law matching: {} (max gap {})",
            style.verdict(r.law_matching_error < LAW_MATCHING_TOL),
            format_float(r.law_matching_error)
        );
        let _ = writeln!(
            out,
            "absolute continuity: {} ({} times checked)",
            style.verdict(r.continuity.holds()),
            r.continuity.checked_times
        );
        for v in &r.continuity.violations {
            let _ = writeln!(out, "  violation at t={} in state {}: p={} q={}", format_float(v.t), v.state, v.p, v.q);
        }
        let kappa = r.series.kappa();
        let lo = kappa.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = kappa.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(out, "kappa range: [{}, {}]", format_float(lo), format_float(hi));
        match &r.monte_carlo {
            Some(mc) => {
                let _ = writeln!(
                    out,
                    "monte carlo at T={}: {} event {} ± {} vs {}",
                    format_float(mc.horizon),
                    style.verdict(mc.passes()),
                    format_float(mc.event.mean),
                    format_float(mc.event.std_error),
                    format_float(mc.event_exact)
                );
                for (i, (e, v)) in mc.marginals.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "  component {i} at target: {} ± {} vs {}",
                        format_float(e.mean),
                        format_float(e.std_error),
                        format_float(*v)
                    );
                }
            }
            None if results.iter().any(|r| r.monte_carlo.is_some()) => {
                let _ = writeln!(out, "monte carlo: skipped (rates are not piecewise constant)");
            }
            None => {}
        }
        let _ = writeln!(out, "csv: {}", csv_name(cfg, &spec.label));
    }
    out
}

/// Runs a scenario and writes one CSV per structure plus a report into `out`.
/// Returns the written paths and the report text.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path, mc: bool) -> Result<(Vec<PathBuf>, String)> {
    let results = evaluate(cfg, mc)?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::with_capacity(results.len() + 1);
    for r in &results {
        let path = out.join(csv_name(cfg, &r.spec.label));
        write_atomic(&path, &series_csv(&r.series))?;
        written.push(path);
    }
    let report_path = out.join(format!("{}.report.txt", slug(&cfg.name)));
    write_atomic(&report_path, &render_report(cfg, &results, Style::plain()))?;
    written.push(report_path);
    Ok((written, render_report(cfg, &results, Style::for_stdout())))
}

/// Runs the checks of `verify` and returns the printed text and whether
/// every check passed.
pub fn verify(cfg: &ScenarioConfig, style: Style) -> Result<(String, bool)> {
    let mut out = String::new();
    let mut all_ok = true;
    let _ = writeln!(out, "scenario: {}", cfg.name);
    let built = cfg.build()?;
    let end = cfg.end_time();
    let grid = time_grid(end, cfg.classify_step)?;
    let checked: Vec<Result<(String, bool)>> = built
        .into_par_iter()
        .map(|spec| {
            let mut text = String::new();
            let mut ok = true;
            let _ = writeln!(text, "\n== {} ==", spec.label);
            let report = spec.generator.validate();
            let _ = writeln!(text, "{} generator rules", style.verdict(report.is_ok()));
            if !report.is_ok() {
                for v in &report.violations {
                    let _ = writeln!(text, "  {v}");
                }
                return Ok((text, false));
            }
            let spec = spec.classify(&grid)?;
            let class = spec.classification.as_ref().expect("just classified").overall();
            let markov = class == crate::consistency::Consistency::Strong || class.is_weak();
            ok &= markov;
            let _ = writeln!(text, "{} classification: {class}", style.verdict(markov));
            let err = spec.law_matching_error(&law_matching_times(cfg, &spec)?)?;
            ok &= err < LAW_MATCHING_TOL;
            let _ = writeln!(
                text,
                "{} law matching (max gap {})",
                style.verdict(err < LAW_MATCHING_TOL),
                format_float(err)
            );
            let baseline = spec.independence_baseline()?;
            let cont = check_absolute_continuity(&spec, &baseline, &grid)?;
            ok &= cont.holds();
            let _ = writeln!(text, "{} absolute continuity", style.verdict(cont.holds()));
            for v in &cont.violations {
                let _ = writeln!(text, "  violation at t={} in state {}", format_float(v.t), v.state);
            }
            Ok((text, ok))
        })
        .collect();
    for c in checked {
        let (text, ok) = c?;
        out.push_str(&text);
        all_ok &= ok;
    }
    Ok((out, all_ok))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Infeasible { .. } => 3,
        _ => 1,
    }
}

fn apply_overrides(mut cfg: ScenarioConfig, cli: &Cli) -> Result<ScenarioConfig> {
    if let Some(step) = cli.grid_step {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Domain(format!("--grid-step {step} must be positive")));
        }
        cfg.grid_step = step;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::ListExamples => {
            print!("{}", list_examples());
            Ok(true)
        }
        Command::Run { config, out } => {
            let cfg = apply_overrides(load(config)?, cli)?;
            let (written, report) = run_scenario(&cfg, out, cli.mc)?;
            print!("{report}");
            for p in written {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
        Command::Verify { config } => {
            let cfg = apply_overrides(load(config)?, cli)?;
            let (text, ok) = verify(&cfg, Style::for_stdout())?;
            print!("{text}");
            Ok(ok)
        }
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
