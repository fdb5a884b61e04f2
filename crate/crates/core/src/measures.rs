//! Systemic risk ν, systemic dependence ρ, the Kullback–Leibler term and
//! systemic instability κ = ρ · KL, with their sign labels and time series.
//!
//! ν conditions on the state `x` at time `t` through the transition matrix
//! `P_{t,T}` directly. The propagated laws enter only through KL. Logarithms
//! are natural.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{Distribution, Generator, StateSpace};
use crate::error::{domain, Error, Result};
use crate::semigroup::{propagate, propagate_many, transition_matrix};
use crate::structures::MarkovStructureSpec;

/// Below this magnitude ρ and κ are labelled neutral.
pub const DEAD_BAND: f64 = 1e-12;
/// Probabilities at or below this are treated as zero in KL.
pub const SUPPORT_TOL: f64 = 1e-15;
const BASELINE_TOL: f64 = 1e-13;

/// The event "at least `h` components `i` are in state `z[i]` at time `T`",
/// conditioned on the chain being in `x` at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureQuery {
    pub z: Vec<usize>,
    pub h: usize,
    pub horizon: f64,
    pub t: f64,
    pub x: Vec<usize>,
}

impl MeasureQuery {
    pub fn new(z: Vec<usize>, h: usize, horizon: f64, t: f64, x: Vec<usize>) -> Result<Self> {
        if z.len() != x.len() {
            return domain("target and conditioning states have different lengths");
        }
        if h < 1 || h > z.len() {
            return domain(format!("threshold h={h} must lie in 1..={}", z.len()));
        }
        if !(t >= 0.0) || !(horizon >= t) || !horizon.is_finite() {
            return domain(format!("need 0 <= t <= T, got t={t}, T={horizon}"));
        }
        Ok(Self { z, h, horizon, t, x })
    }

    /// The same event and conditioning state at another pair of times.
    pub fn at(&self, t: f64, horizon: f64) -> Result<Self> {
        Self::new(self.z.clone(), self.h, horizon, t, self.x.clone())
    }

    fn check(&self, space: &StateSpace) -> Result<usize> {
        if self.z.len() != space.components() {
            return domain(format!("query has {} components, space has {}", self.z.len(), space.components()));
        }
        space.index_of(&self.z)?;
        space.index_of(&self.x)
    }

    fn counts(&self, space: &StateSpace, y: usize) -> bool {
        let hits = (0..space.components()).filter(|&i| space.coordinate(y, i) == self.z[i]).count();
        hits >= self.h
    }
}

/// ν: probability of the query event under `spec`.
pub fn systemic_risk(spec: &MarkovStructureSpec, q: &MeasureQuery) -> Result<f64> {
    risk(&spec.generator, q)
}

fn risk(g: &Generator, q: &MeasureQuery) -> Result<f64> {
    let space = g.space();
    let x = q.check(space)?;
    let p = transition_matrix(g, q.t, q.horizon)?;
    Ok((0..space.len()).filter(|&y| q.counts(space, y)).map(|y| p.get(x, y)).sum())
}

/// Fails unless `ind` is the independence structure of `dep`'s prescribed
/// marginals started from the same law.
fn check_baseline(dep: &MarkovStructureSpec, ind: &MarkovStructureSpec) -> Result<()> {
    if dep.space() != ind.space() {
        return Err(Error::BaselineMismatch("state spaces differ".into()));
    }
    let expected = Generator::independence(dep.prescribed_marginals.clone())?;
    let mut times = expected.breakpoints();
    times.extend(ind.generator.breakpoints());
    let last = times.iter().copied().fold(0.0, f64::max);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let probes: Vec<f64> = times
        .windows(2)
        .flat_map(|w| [w[0], 0.5 * (w[0] + w[1])])
        .chain([last, last + 1.0])
        .collect();
    for t in probes {
        let gap = (expected.rates_unchecked(t) - ind.generator.rates_unchecked(t)).amax();
        if gap > BASELINE_TOL {
            return Err(Error::BaselineMismatch(format!("rates differ by {gap:e} at t={t}")));
        }
    }
    Ok(())
}

fn check_shared_initial(dep: &MarkovStructureSpec, ind: &MarkovStructureSpec) -> Result<()> {
    if dep.initial.probs() != ind.initial.probs() {
        return domain("dependent and independence structures start from different laws");
    }
    Ok(())
}

/// ρ = ν under `dep` minus ν under `ind`.
pub fn systemic_dependence(dep: &MarkovStructureSpec, ind: &MarkovStructureSpec, q: &MeasureQuery) -> Result<f64> {
    check_baseline(dep, ind)?;
    Ok(risk(&dep.generator, q)? - risk(&ind.generator, q)?)
}

/// `Σ_y p(y) ln(p(y) / q(y))` with `0 · ln(0/0) = 0`.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.space() != q.space() {
        return domain("distributions live on different spaces");
    }
    let mut total = 0.0;
    for (y, (&a, &b)) in p.probs().iter().zip(q.probs()).enumerate() {
        if a <= SUPPORT_TOL {
            continue;
        }
        if b <= SUPPORT_TOL {
            return Err(Error::AbsoluteContinuity {
                state: p.space().label(y),
                p: a,
                q: b,
            });
        }
        total += a * (a / b).ln();
    }
    Ok(total.max(0.0))
}

/// κ = ρ · KL(law of the dependent chain at `t` ‖ law of the independent chain at `t`).
pub fn systemic_instability(dep: &MarkovStructureSpec, ind: &MarkovStructureSpec, q: &MeasureQuery) -> Result<f64> {
    check_shared_initial(dep, ind)?;
    let rho = systemic_dependence(dep, ind, q)?;
    let kl = kl_divergence(&propagate(&dep.initial, &dep.generator, q.t)?, &propagate(&ind.initial, &ind.generator, q.t)?)?;
    Ok(rho * kl)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DependenceLabel {
    Unfavorable,
    Neutral,
    Favorable,
}

impl DependenceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            DependenceLabel::Unfavorable => "unfavorable",
            DependenceLabel::Neutral => "neutral",
            DependenceLabel::Favorable => "favorable",
        }
    }
}

impl fmt::Display for DependenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InstabilityLabel {
    SystemicRisk,
    SystemicIndifference,
    SystemicBenefit,
}

impl InstabilityLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            InstabilityLabel::SystemicRisk => "systemic_risk",
            InstabilityLabel::SystemicIndifference => "systemic_indifference",
            InstabilityLabel::SystemicBenefit => "systemic_benefit",
        }
    }
}

impl fmt::Display for InstabilityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify_dependence(rho: f64) -> DependenceLabel {
    if rho >= DEAD_BAND {
        DependenceLabel::Unfavorable
    } else if rho <= -DEAD_BAND {
        DependenceLabel::Favorable
    } else {
        DependenceLabel::Neutral
    }
}

pub fn classify_instability(kappa: f64) -> InstabilityLabel {
    if kappa >= DEAD_BAND {
        InstabilityLabel::SystemicRisk
    } else if kappa <= -DEAD_BAND {
        InstabilityLabel::SystemicBenefit
    } else {
        InstabilityLabel::SystemicIndifference
    }
}

/// How the horizon moves with the evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Mode {
    /// `T` fixed; `t` runs over `[0, T]`.
    FixedT { horizon: f64 },
    /// `T = t + window`; `t` runs over `[0, until]`.
    Rolling { window: f64, until: f64 },
}

impl Mode {
    fn end(self) -> f64 {
        match self {
            Mode::FixedT { horizon } => horizon,
            Mode::Rolling { until, .. } => until,
        }
    }

    fn horizon_at(self, t: f64) -> f64 {
        match self {
            Mode::FixedT { horizon } => horizon,
            Mode::Rolling { window, .. } => t + window,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasurePoint {
    pub t: f64,
    pub nu_dep: f64,
    pub nu_ind: f64,
    pub rho: f64,
    pub kl: f64,
    pub kappa: f64,
    pub classification: InstabilityLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureSeries {
    pub mode: Mode,
    pub points: Vec<MeasurePoint>,
}

impl MeasureSeries {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn kappa(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.kappa).collect()
    }
}

/// `0, step, 2 step, …` up to `end`, with `end` itself as the last point.
pub fn time_grid(end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return domain(format!("grid step {step} must be positive"));
    }
    if !(end >= 0.0) || !end.is_finite() {
        return domain(format!("grid end {end} must be non-negative"));
    }
    let n = (end / step).round() as usize;
    let mut grid: Vec<f64> = (0..n).map(|k| k as f64 * step).take_while(|&t| t < end).collect();
    grid.push(end);
    Ok(grid)
}

/// Evaluates ν, ρ, KL and κ against the independence structure rebuilt from
/// `dep`'s prescribed marginals.
pub fn measure_series(
    dep: &MarkovStructureSpec,
    mode: Mode,
    grid_step: f64,
    z: &[usize],
    h: usize,
    x: &[usize],
) -> Result<MeasureSeries> {
    let ind = dep.independence_baseline()?;
    measure_series_against(dep, &ind, mode, grid_step, z, h, x)
}

/// [`measure_series`] with an explicit baseline, which must be the
/// independence structure of `dep`'s prescribed marginals.
pub fn measure_series_against(
    dep: &MarkovStructureSpec,
    ind: &MarkovStructureSpec,
    mode: Mode,
    grid_step: f64,
    z: &[usize],
    h: usize,
    x: &[usize],
) -> Result<MeasureSeries> {
    check_baseline(dep, ind)?;
    check_shared_initial(dep, ind)?;
    if let Mode::Rolling { window, .. } = mode {
        if !(window >= 0.0) {
            return domain(format!("monitor window {window} must be non-negative"));
        }
    }
    let grid = time_grid(mode.end(), grid_step)?;
    let query = MeasureQuery::new(z.to_vec(), h, mode.horizon_at(0.0), 0.0, x.to_vec())?;
    query.check(dep.space())?;
    let laws_dep = propagate_many(&dep.initial, &dep.generator, &grid)?;
    let laws_ind = propagate_many(&ind.initial, &ind.generator, &grid)?;
    let points = grid
        .par_iter()
        .zip(laws_dep.par_iter().zip(&laws_ind))
        .map(|(&t, (ld, li))| {
            let q = query.at(t, mode.horizon_at(t))?;
            let nu_dep = risk(&dep.generator, &q)?;
            let nu_ind = risk(&ind.generator, &q)?;
            let rho = nu_dep - nu_ind;
            let kl = kl_divergence(ld, li)?;
            let kappa = rho * kl;
            Ok(MeasurePoint {
                t,
                nu_dep,
                nu_ind,
                rho,
                kl,
                kappa,
                classification: classify_instability(kappa),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasureSeries { mode, points })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityViolation {
    pub t: f64,
    pub state: String,
    pub p: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct AbsoluteContinuityReport {
    pub checked_times: usize,
    pub violations: Vec<ContinuityViolation>,
}

impl AbsoluteContinuityReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that the support of the dependent law lies inside the support of
/// the independent law at every grid time.
pub fn check_absolute_continuity(
    dep: &MarkovStructureSpec,
    ind: &MarkovStructureSpec,
    grid: &[f64],
) -> Result<AbsoluteContinuityReport> {
    check_shared_initial(dep, ind)?;
    let mut times = grid.to_vec();
    times.sort_by(f64::total_cmp);
    let laws_dep = propagate_many(&dep.initial, &dep.generator, &times)?;
    let laws_ind = propagate_many(&ind.initial, &ind.generator, &times)?;
    let mut report = AbsoluteContinuityReport {
        checked_times: times.len(),
        violations: Vec::new(),
    };
    for ((&t, ld), li) in times.iter().zip(&laws_dep).zip(&laws_ind) {
        for (y, (&p, &q)) in ld.probs().iter().zip(li.probs()).enumerate() {
            if p > SUPPORT_TOL && q <= SUPPORT_TOL {
                report.violations.push(ContinuityViolation {
                    t,
                    state: dep.space().label(y),
                    p,
                    q,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    use super::*;
    use crate::chain::{PiecewiseConstantFn, PiecewiseConstantGenerator};
    use crate::structures::{example_family, permute_structure, strong_common_jump, Family, FamilyParams};

    fn pcf(bps: &[f64], vals: &[f64]) -> PiecewiseConstantFn {
        PiecewiseConstantFn::new(bps.to_vec(), vals.to_vec()).unwrap()
    }

    fn params(entries: &[(&str, PiecewiseConstantFn)]) -> FamilyParams {
        entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn ex1() -> MarkovStructureSpec {
        let c = pcf(&[0.0, 3.0, 10.0, 30.0], &[0.08, 0.15, 0.2, 0.2]);
        let p = params(&[("a", PiecewiseConstantFn::constant(0.01)), ("b", PiecewiseConstantFn::constant(0.02)), ("c", c)]);
        example_family(Family::CommonJumps, &p).unwrap()
    }

    fn anti() -> MarkovStructureSpec {
        let p = params(&[
            ("a", pcf(&[0.0, 6.0, 10.0], &[0.01, 0.1, 0.08])),
            ("b", pcf(&[0.0, 6.0, 10.0], &[0.05, 0.02, 0.03])),
        ]);
        example_family(Family::ExtremeAntiContagion, &p).unwrap()
    }

    fn joint_default(t: f64, horizon: f64) -> MeasureQuery {
        MeasureQuery::new(vec![1, 1], 2, horizon, t, vec![0, 0]).unwrap()
    }

    #[test]
    fn query_validation() {
        assert!(MeasureQuery::new(vec![1, 1], 0, 1.0, 0.0, vec![0, 0]).is_err());
        assert!(MeasureQuery::new(vec![1, 1], 3, 1.0, 0.0, vec![0, 0]).is_err());
        assert!(MeasureQuery::new(vec![1, 1], 2, 1.0, 2.0, vec![0, 0]).is_err());
        assert!(MeasureQuery::new(vec![1], 1, 1.0, 0.0, vec![0, 0]).is_err());
        let spec = ex1();
        let out_of_range = MeasureQuery::new(vec![2, 1], 1, 1.0, 0.0, vec![0, 0]).unwrap();
        assert!(systemic_risk(&spec, &out_of_range).is_err());
    }

    #[test]
    fn zero_length_window_gives_indicator() {
        let spec = ex1();
        let hit = MeasureQuery::new(vec![1, 1], 1, 4.0, 4.0, vec![1, 0]).unwrap();
        assert_eq!(systemic_risk(&spec, &hit).unwrap(), 1.0);
        let miss = MeasureQuery::new(vec![1, 1], 1, 4.0, 4.0, vec![0, 0]).unwrap();
        assert_eq!(systemic_risk(&spec, &miss).unwrap(), 0.0);
    }

    #[test]
    fn kl_examples() {
        let space = StateSpace::uniform(2, 2).unwrap();
        let p = Distribution::new(space.clone(), vec![0.6, 0.1, 0.1, 0.2]).unwrap();
        let q = Distribution::uniform(space.clone());
        let direct = 0.6 * 2.4_f64.ln() + 2.0 * 0.1 * 0.4_f64.ln() + 0.2 * 0.8_f64.ln();
        assert_abs_diff_eq!(kl_divergence(&p, &q).unwrap(), direct, epsilon = 1e-15);
        assert_abs_diff_eq!(kl_divergence(&p, &q).unwrap(), 0.29739, epsilon = 1e-5);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let delta = Distribution::point_mass(space.clone(), &[0, 0]).unwrap();
        assert_eq!(kl_divergence(&delta, &delta).unwrap(), 0.0);
        assert!(matches!(kl_divergence(&q, &delta), Err(Error::AbsoluteContinuity { .. })));
    }

    #[test]
    fn labels() {
        assert_eq!(classify_dependence(0.02), DependenceLabel::Unfavorable);
        assert_eq!(classify_dependence(0.0), DependenceLabel::Neutral);
        assert_eq!(classify_dependence(1e-13), DependenceLabel::Neutral);
        assert_eq!(classify_dependence(-0.005), DependenceLabel::Favorable);
        assert_eq!(classify_instability(0.1), InstabilityLabel::SystemicRisk);
        assert_eq!(classify_instability(0.0), InstabilityLabel::SystemicIndifference);
        assert_eq!(classify_instability(-0.1), InstabilityLabel::SystemicBenefit);
    }

    #[test]
    fn self_difference_vanishes() {
        let ind = ex1().independence_baseline().unwrap();
        let q = joint_default(5.0, 30.0);
        assert_eq!(systemic_dependence(&ind, &ind, &q).unwrap(), 0.0);
        assert_eq!(systemic_instability(&ind, &ind, &q).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_baseline_is_rejected() {
        let dep = ex1();
        let wrong = anti().independence_baseline().unwrap();
        let q = joint_default(0.0, 3.0);
        assert!(matches!(systemic_dependence(&dep, &wrong, &q), Err(Error::BaselineMismatch(_))));
        assert!(matches!(systemic_dependence(&dep, &dep, &q), Err(Error::BaselineMismatch(_))));
    }

    #[test]
    fn differing_initial_laws_are_rejected() {
        let dep = ex1();
        let mut ind = dep.independence_baseline().unwrap();
        ind.initial = Distribution::uniform(dep.space().clone());
        assert!(systemic_instability(&dep, &ind, &joint_default(1.0, 3.0)).is_err());
    }

    #[test]
    fn boundary_values_of_fixed_horizon_series() {
        let series = measure_series(&ex1(), Mode::FixedT { horizon: 30.0 }, 0.2, &[1, 1], 2, &[0, 0]).unwrap();
        assert_eq!(series.points.len(), 151);
        assert_eq!(series.points[0].kappa, 0.0);
        assert!(series.points.last().unwrap().kappa.abs() < 1e-12);
        for p in &series.points {
            assert_abs_diff_eq!(p.rho, p.nu_dep - p.nu_ind, epsilon = 1e-12);
            assert!(p.kl >= 0.0 && p.rho.abs() <= 1.0);
        }
    }

    #[test]
    fn zero_window_series_vanishes() {
        let series = measure_series(&ex1(), Mode::Rolling { window: 0.0, until: 10.0 }, 0.5, &[1, 1], 2, &[0, 0]).unwrap();
        assert!(series.points.iter().all(|p| p.kappa == 0.0));
    }

    #[test]
    fn anti_contagion_never_defaults_jointly() {
        let series = measure_series(&anti(), Mode::FixedT { horizon: 30.0 }, 1.0, &[1, 1], 2, &[0, 0]).unwrap();
        for p in &series.points {
            assert_eq!(p.nu_dep, 0.0);
            assert!(p.rho <= 0.0 && p.kappa <= 0.0);
            assert_ne!(p.classification, InstabilityLabel::SystemicRisk);
        }
    }

    #[test]
    fn extreme_contagion_matches_strong_minimum() {
        let c1 = pcf(&[0.0, 6.0, 10.0, 20.0, 26.0, 30.0], &[0.01, 0.1, 0.08, 0.05, 0.03, 0.03]);
        let extreme = example_family(Family::ExtremeContagion, &params(&[("c", c1)])).unwrap();
        let strong = strong_common_jump(&extreme.prescribed_marginals, 1.0).unwrap();
        let mode = Mode::FixedT { horizon: 30.0 };
        let a = measure_series(&extreme, mode, 1.0, &[1, 1], 2, &[0, 0]).unwrap();
        let b = measure_series(&strong, mode, 1.0, &[1, 1], 2, &[0, 0]).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            assert_abs_diff_eq!(p.kappa, q.kappa, epsilon = 1e-8);
        }
    }

    #[test]
    fn absolute_continuity_for_family_pairs() {
        let grid: Vec<f64> = (0..=30).map(f64::from).collect();
        for dep in [ex1(), anti()] {
            let ind = dep.independence_baseline().unwrap();
            assert!(check_absolute_continuity(&dep, &ind, &grid).unwrap().holds());
            assert!(check_absolute_continuity(&ind, &ind, &grid).unwrap().holds());
        }
    }

    #[test]
    fn corrupted_baseline_reports_violation() {
        let space = StateSpace::uniform(2, 2).unwrap();
        let dep = ex1();
        let frozen = PiecewiseConstantGenerator::constant(space, DMatrix::zeros(4, 4)).unwrap();
        let mut corrupt = dep.independence_baseline().unwrap();
        corrupt.generator = frozen.into();
        let report = check_absolute_continuity(&dep, &corrupt, &[0.0, 1.0]).unwrap();
        assert!(!report.holds());
        assert_eq!(report.violations[0].t, 1.0);
    }

    #[test]
    fn time_grid_shape() {
        let g = time_grid(30.0, 0.2).unwrap();
        assert_eq!(g.len(), 151);
        assert_eq!(g[150], 30.0);
        assert_eq!(time_grid(0.0, 0.2).unwrap(), vec![0.0]);
        assert_eq!(time_grid(1.0, 0.3).unwrap().last(), Some(&1.0));
        assert!(time_grid(1.0, 0.0).is_err());
    }

    fn rate() -> impl Strategy<Value = f64> {
        0.005..0.2_f64
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn kappa_is_invariant_under_component_swap(a in rate(), b in rate(), c1 in rate(), c2 in rate()) {
            let p = params(&[
                ("a", PiecewiseConstantFn::constant(a)),
                ("b", PiecewiseConstantFn::constant(b)),
                ("c", pcf(&[0.0, 5.0], &[c1, c2])),
            ]);
            let spec = example_family(Family::CommonJumps, &p).unwrap();
            let swapped = permute_structure(&spec, &[1, 0], &[vec![0, 1], vec![0, 1]]).unwrap();
            for (z, x) in [([1, 1], [0, 0]), ([1, 0], [0, 1])] {
                let zs = [z[1], z[0]];
                let xs = [x[1], x[0]];
                let mode = Mode::Rolling { window: 3.0, until: 10.0 };
                let s1 = measure_series(&spec, mode, 1.0, &z, 1, &x).unwrap();
                let s2 = measure_series(&swapped, mode, 1.0, &zs, 1, &xs).unwrap();
                for (p, q) in s1.points.iter().zip(&s2.points) {
                    prop_assert!((p.rho - q.rho).abs() < 1e-10);
                    prop_assert!((p.kappa - q.kappa).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn equal_laws_give_identical_series(a in rate(), b in rate(), c in rate()) {
            let p = params(&[
                ("a", PiecewiseConstantFn::constant(a)),
                ("b", PiecewiseConstantFn::constant(b)),
                ("c", PiecewiseConstantFn::constant(c)),
            ]);
            let spec = example_family(Family::CommonJumps, &p).unwrap();
            let mut copy = spec.clone();
            copy.label = "copy".into();
            let mode = Mode::FixedT { horizon: 10.0 };
            let s1 = measure_series(&spec, mode, 1.0, &[1, 1], 2, &[0, 0]).unwrap();
            let s2 = measure_series(&copy, mode, 1.0, &[1, 1], 2, &[0, 0]).unwrap();
            prop_assert_eq!(s1, s2);
        }
    }
}
