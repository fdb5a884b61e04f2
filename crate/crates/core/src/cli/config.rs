//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "ex1_common_jumps_s1"
//! description = "Contagious common jumps, fixed horizon, scenario 1"
//! grid_step = 0.2
//!
//! [mode]
//! kind = "fixed_T"      # or "rolling" with `window` and `until`
//! horizon = 30.0
//!
//! [query]               # defaults: z = all ones, h = 2, x = all zeros
//! z = [1, 1]
//! h = 2
//! x = [0, 0]
//!
//! [[structures]]
//! label = "dependent"
//! family = "common_jumps"
//! params.a = 0.01
//! params.b = 0.02
//! params.c = { breakpoints = [0, 3, 10, 30], values = [0.08, 0.15, 0.2, 0.2] }
//!
//! [[structures]]
//! label = "strong_eta_0.5"
//! strong_of = "dependent"
//! eta = 0.5
//! ```
//!
//! A structure is one of
//! * a parametric family (`family`, `params`),
//! * a strong common-jump structure on another structure's marginals
//!   (`strong_of`, `eta`),
//! * an extreme-contagion structure matched to another structure's first
//!   marginal (`matched_extreme_of`),
//! * the step-by-step weak construction on another structure's marginals
//!   (`discrete_of`, `dt`, optional `use_mask`),
//! * an explicit generator (`generator`, `marginals`, optional `initial`).
//!
//! Schedules with six values and no breakpoints use the default periods
//! `[0,6), [6,10), [10,20), [20,26), [26,30), [30,∞)`. A bare number is a
//! constant schedule.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::Deserialize;
use toml::Spanned;

use crate::chain::{Distribution, Generator, PiecewiseConstantFn, PiecewiseConstantGenerator, StateSpace};
use crate::error::{Error, Result};
use crate::measures::Mode;
use crate::structures::{
    chain_steps, example_family, marginal_schedule, matched_extreme_contagion, strong_common_jump, Family,
    FamilyParams, MarkovStructureSpec, SparsityMask,
};

/// Period starts used when a schedule lists six values without breakpoints.
pub const DEFAULT_BREAKPOINTS: [f64; 6] = [0.0, 6.0, 10.0, 20.0, 26.0, 30.0];
pub const DEFAULT_WINDOW: f64 = 3.0;
pub const DEFAULT_UNTIL: f64 = 30.0;
pub const DEFAULT_THRESHOLD: usize = 2;
pub const DEFAULT_GRID_STEP: f64 = 0.2;
pub const DEFAULT_CLASSIFY_STEP: f64 = 1.0;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    description: Option<String>,
    grid_step: Option<f64>,
    classify_step: Option<f64>,
    mode: Option<Spanned<RawMode>>,
    query: Option<Spanned<RawQuery>>,
    monte_carlo: Option<RawMonteCarlo>,
    structures: Vec<Spanned<RawStructure>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
enum RawMode {
    #[serde(rename = "fixed_T")]
    FixedT { horizon: f64 },
    #[serde(rename = "rolling")]
    Rolling { window: Option<f64>, until: Option<f64> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuery {
    z: Option<Vec<usize>>,
    h: Option<usize>,
    x: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_paths: usize,
    pub seed: u64,
}

type RawMonteCarlo = MonteCarloConfig;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStructure {
    label: String,
    family: Option<String>,
    params: Option<BTreeMap<String, Spanned<RawSchedule>>>,
    strong_of: Option<String>,
    eta: Option<f64>,
    matched_extreme_of: Option<String>,
    discrete_of: Option<String>,
    dt: Option<f64>,
    use_mask: Option<bool>,
    generator: Option<RawMatrices>,
    marginals: Option<Vec<RawMatrices>>,
    initial: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawSchedule {
    Constant(f64),
    Table {
        breakpoints: Option<Vec<f64>>,
        values: Vec<f64>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrices {
    breakpoints: Option<Vec<f64>>,
    matrices: Vec<Vec<Vec<f64>>>,
}

/// Query of the measure series.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryConfig {
    pub z: Vec<usize>,
    pub h: usize,
    pub x: Vec<usize>,
}

#[derive(Clone, Debug)]
pub enum StructureKind {
    Family { family: Family, params: FamilyParams },
    Strong { source: String, eta: f64 },
    MatchedExtreme { source: String },
    Discrete { source: String, dt: f64, use_mask: bool },
    Explicit { generator: PiecewiseConstantGenerator, marginals: Vec<PiecewiseConstantGenerator>, initial: Vec<usize> },
}

#[derive(Clone, Debug)]
pub struct StructureConfig {
    pub label: String,
    pub kind: StructureKind,
    /// Line of the `[[structures]]` entry.
    pub line: usize,
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub name: String,
    pub description: String,
    pub grid_step: f64,
    pub classify_step: f64,
    pub mode: Mode,
    pub query: QueryConfig,
    pub monte_carlo: Option<MonteCarloConfig>,
    pub structures: Vec<StructureConfig>,
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

fn config_error(source: &str, span: Range<usize>, message: impl Into<String>) -> Error {
    Error::Config {
        line: line_of(source, span.start),
        message: message.into(),
    }
}

fn schedule(source: &str, name: &str, raw: &Spanned<RawSchedule>) -> Result<PiecewiseConstantFn> {
    let fail = |m: String| config_error(source, raw.span(), format!("parameter '{name}': {m}"));
    match raw.get_ref() {
        RawSchedule::Constant(v) => PiecewiseConstantFn::new(vec![0.0], vec![*v]).map_err(|e| fail(e.to_string())),
        RawSchedule::Table { breakpoints, values } => {
            let breakpoints = match breakpoints {
                Some(b) => b.clone(),
                None if values.len() == 1 => vec![0.0],
                None if values.len() == DEFAULT_BREAKPOINTS.len() => DEFAULT_BREAKPOINTS.to_vec(),
                None => {
                    return Err(fail(format!(
                        "{} values need explicit breakpoints (defaults cover {} periods)",
                        values.len(),
                        DEFAULT_BREAKPOINTS.len()
                    )))
                }
            };
            PiecewiseConstantFn::new(breakpoints, values.clone()).map_err(|e| fail(e.to_string()))
        }
    }
}

fn matrices(source: &str, span: Range<usize>, raw: &RawMatrices, space: &StateSpace, what: &str) -> Result<PiecewiseConstantGenerator> {
    let n = space.len();
    let breakpoints = match &raw.breakpoints {
        Some(b) => b.clone(),
        None if raw.matrices.len() == 1 => vec![0.0],
        None => return Err(config_error(source, span, format!("{what}: several matrices need breakpoints"))),
    };
    let mut mats = Vec::with_capacity(raw.matrices.len());
    for (k, m) in raw.matrices.iter().enumerate() {
        if m.len() != n || m.iter().any(|row| row.len() != n) {
            return Err(config_error(source, span.clone(), format!("{what}: matrix {k} is not {n}x{n}")));
        }
        mats.push(DMatrix::from_fn(n, n, |r, c| m[r][c]));
    }
    PiecewiseConstantGenerator::new(space.clone(), breakpoints, mats)
        .map_err(|e| config_error(source, span, format!("{what}: {e}")))
}

fn structure(source: &str, raw: &Spanned<RawStructure>) -> Result<StructureConfig> {
    let span = raw.span();
    let r = raw.get_ref();
    let fail = |m: String| config_error(source, span.clone(), format!("structure '{}': {m}", r.label));
    let kinds = [
        r.family.is_some(),
        r.strong_of.is_some(),
        r.matched_extreme_of.is_some(),
        r.discrete_of.is_some(),
        r.generator.is_some(),
    ];
    if kinds.iter().filter(|&&k| k).count() != 1 {
        return Err(fail(
            "give exactly one of family, strong_of, matched_extreme_of, discrete_of, generator".into(),
        ));
    }
    let unused = |present: bool, key: &str| if present { Err(fail(format!("'{key}' does not apply here"))) } else { Ok(()) };
    let kind = if let Some(name) = &r.family {
        unused(r.eta.is_some(), "eta")?;
        unused(r.dt.is_some(), "dt")?;
        let family: Family = name.parse().map_err(|e: Error| fail(e.to_string()))?;
        let mut params = FamilyParams::new();
        for (k, v) in r.params.iter().flatten() {
            params.insert(k.clone(), schedule(source, k, v)?);
        }
        StructureKind::Family { family, params }
    } else if let Some(source_label) = &r.strong_of {
        let eta = r.eta.ok_or_else(|| fail("strong_of needs eta".into()))?;
        StructureKind::Strong {
            source: source_label.clone(),
            eta,
        }
    } else if let Some(source_label) = &r.matched_extreme_of {
        StructureKind::MatchedExtreme {
            source: source_label.clone(),
        }
    } else if let Some(source_label) = &r.discrete_of {
        let dt = r.dt.ok_or_else(|| fail("discrete_of needs dt".into()))?;
        if !(dt > 0.0) {
            return Err(fail(format!("dt = {dt} must be positive")));
        }
        StructureKind::Discrete {
            source: source_label.clone(),
            dt,
            use_mask: r.use_mask.unwrap_or(true),
        }
    } else {
        let raw_g = r.generator.as_ref().expect("checked above");
        let n = raw_g.matrices.first().map_or(0, Vec::len);
        let marginals = r.marginals.as_ref().ok_or_else(|| fail("an explicit generator needs marginals".into()))?;
        let sizes: Vec<usize> = marginals.iter().map(|m| m.matrices.first().map_or(0, Vec::len)).collect();
        let space = StateSpace::new(sizes.clone()).map_err(|e| fail(e.to_string()))?;
        if space.len() != n {
            return Err(fail(format!("generator is {n}x{n} but the marginals span {} states", space.len())));
        }
        // Shape errors are reported here; rate violations are kept for `verify`.
        let generator = matrices(source, span.clone(), raw_g, &space, "generator")?;
        let marginals = marginals
            .iter()
            .enumerate()
            .map(|(i, m)| matrices(source, span.clone(), m, &StateSpace::single(sizes[i])?, &format!("marginal {i}")))
            .collect::<Result<Vec<_>>>()?;
        let initial = r.initial.clone().unwrap_or_else(|| vec![0; sizes.len()]);
        space.index_of(&initial).map_err(|e| fail(e.to_string()))?;
        StructureKind::Explicit {
            generator,
            marginals,
            initial,
        }
    };
    Ok(StructureConfig {
        label: r.label.clone(),
        kind,
        line: line_of(source, span.start),
    })
}

impl ScenarioConfig {
    /// Parses and checks a scenario document. Errors carry the line of the
    /// offending entry.
    pub fn parse(source: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(source).map_err(|e| Error::Config {
            line: e.span().map_or(1, |s| line_of(source, s.start)),
            message: e.message().to_string(),
        })?;
        let grid_step = raw.grid_step.unwrap_or(DEFAULT_GRID_STEP);
        let classify_step = raw.classify_step.unwrap_or(DEFAULT_CLASSIFY_STEP);
        for (name, v) in [("grid_step", grid_step), ("classify_step", classify_step)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config {
                    line: 1,
                    message: format!("{name} = {v} must be positive"),
                });
            }
        }
        let mode = match &raw.mode {
            None => Mode::Rolling {
                window: DEFAULT_WINDOW,
                until: DEFAULT_UNTIL,
            },
            Some(m) => {
                let mode = match m.get_ref() {
                    RawMode::FixedT { horizon } => Mode::FixedT { horizon: *horizon },
                    RawMode::Rolling { window, until } => Mode::Rolling {
                        window: window.unwrap_or(DEFAULT_WINDOW),
                        until: until.unwrap_or(DEFAULT_UNTIL),
                    },
                };
                let (a, b) = match mode {
                    Mode::FixedT { horizon } => (horizon, 0.0),
                    Mode::Rolling { window, until } => (window, until),
                };
                if !(a >= 0.0 && b >= 0.0) || !a.is_finite() || !b.is_finite() {
                    return Err(config_error(source, m.span(), "mode times must be finite and non-negative"));
                }
                mode
            }
        };
        if raw.structures.is_empty() {
            return Err(Error::Config {
                line: 1,
                message: "a scenario needs at least one [[structures]] entry".into(),
            });
        }
        let structures = raw
            .structures
            .iter()
            .map(|s| structure(source, s))
            .collect::<Result<Vec<_>>>()?;
        for (k, s) in structures.iter().enumerate() {
            if structures[..k].iter().any(|o| o.label == s.label) {
                return Err(Error::Config {
                    line: s.line,
                    message: format!("duplicate structure label '{}'", s.label),
                });
            }
            let source_label = match &s.kind {
                StructureKind::Strong { source, .. }
                | StructureKind::MatchedExtreme { source }
                | StructureKind::Discrete { source, .. } => Some(source),
                _ => None,
            };
            if let Some(src) = source_label {
                if !structures[..k].iter().any(|o| &o.label == src) {
                    return Err(Error::Config {
                        line: s.line,
                        message: format!("structure '{}' refers to '{src}', which is not defined above it", s.label),
                    });
                }
            }
        }
        let m = 2;
        let query = match &raw.query {
            None => QueryConfig {
                z: vec![1; m],
                h: DEFAULT_THRESHOLD,
                x: vec![0; m],
            },
            Some(q) => {
                let r = q.get_ref();
                let z = r.z.clone().unwrap_or_else(|| vec![1; m]);
                let x = r.x.clone().unwrap_or_else(|| vec![0; z.len()]);
                let h = r.h.unwrap_or(DEFAULT_THRESHOLD.min(z.len()));
                if z.len() != x.len() || h == 0 || h > z.len() {
                    return Err(config_error(source, q.span(), "query needs z and x of equal length and 1 <= h <= len(z)"));
                }
                QueryConfig { z, h, x }
            }
        };
        Ok(Self {
            name: raw.name,
            description: raw.description.unwrap_or_default(),
            grid_step,
            classify_step,
            mode,
            query,
            monte_carlo: raw.monte_carlo,
            structures,
        })
    }

    /// Last time any measure looks at.
    pub fn end_time(&self) -> f64 {
        match self.mode {
            Mode::FixedT { horizon } => horizon,
            Mode::Rolling { window, until } => until + window,
        }
    }

    /// Builds every structure in order. Explicit generators are built without
    /// validation so that `verify` can report their violations.
    pub fn build(&self) -> Result<Vec<MarkovStructureSpec>> {
        let mut built: Vec<MarkovStructureSpec> = Vec::with_capacity(self.structures.len());
        for s in &self.structures {
            let find = |label: &str| {
                built
                    .iter()
                    .zip(&self.structures)
                    .find(|(_, c)| c.label == label)
                    .map(|(b, _)| b)
                    .expect("references are checked when parsing")
            };
            let at_line = |e: Error| match e {
                Error::Infeasible { .. } | Error::Config { .. } => e,
                other => Error::Config {
                    line: s.line,
                    message: format!("structure '{}': {other}", s.label),
                },
            };
            let mut spec = match &s.kind {
                StructureKind::Family { family, params } => example_family(*family, params).map_err(at_line)?,
                StructureKind::Strong { source, eta } => {
                    strong_common_jump(&find(source).prescribed_marginals, *eta).map_err(at_line)?
                }
                StructureKind::MatchedExtreme { source } => {
                    matched_extreme_contagion(&find(source).prescribed_marginals[0]).map_err(at_line)?
                }
                StructureKind::Discrete { source, dt, use_mask } => {
                    let src = find(source);
                    let n_steps = (self.end_time() / dt).ceil().max(1.0) as usize;
                    let schedule = marginal_schedule(&src.prescribed_marginals, *dt, n_steps).map_err(at_line)?;
                    let mask = match (use_mask, src.generator.as_piecewise()) {
                        (true, Some(g)) => Some(SparsityMask::from_generator(g)),
                        (true, None) => {
                            return Err(at_line(Error::Domain("use_mask needs a piecewise-constant source".into())))
                        }
                        (false, _) => None,
                    };
                    let outcome = chain_steps(&src.initial, &schedule, *dt, n_steps, mask);
                    outcome
                        .into_spec(s.label.clone(), src.initial.clone(), src.prescribed_marginals.clone())
                        .map_err(at_line)?
                }
                StructureKind::Explicit {
                    generator,
                    marginals,
                    initial,
                } => {
                    let space = generator.space().clone();
                    let d0 = Distribution::point_mass(space, initial).map_err(at_line)?;
                    let marginals = marginals.iter().cloned().map(Generator::from).collect();
                    MarkovStructureSpec::new(s.label.clone(), generator.clone().into(), d0, marginals).map_err(at_line)?
                }
            };
            spec.label = s.label.clone();
            built.push(spec);
        }
        Ok(built)
    }
}
