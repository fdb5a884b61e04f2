//! Construction of Markov structures: independence and strong common-jump
//! structures, the parametric two-name families, a discrete-time solver for
//! weak structures, and relabelling by permutations.

mod hazard;
mod weak;

pub use hazard::TwoPhaseHazard;
pub use weak::{
    chain_steps, marginal_schedule, solve_weak_structure_step, ChainFailure, ChainOutcome, SparsityMask, StepOptions,
    StepSolution,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::chain::{
    Distribution, Generator, IndependenceGenerator, PermutedGenerator, PiecewiseConstantFn,
    PiecewiseConstantGenerator, RateFunction, SmoothGenerator, StateSpace,
};
use crate::consistency::{classify, ConsistencyReport, ThetaOperator};
use crate::error::{domain, Error, Result};
use crate::semigroup::transition_unchecked;

/// Common breakpoints of several schedules and each schedule's values on them.
pub(crate) fn merged(fns: &[&PiecewiseConstantFn]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let breakpoints = crate::chain::merge_breakpoints(fns.iter().map(|f| f.breakpoints()));
    let values = fns
        .iter()
        .map(|f| breakpoints.iter().map(|&v| f.at(v)).collect())
        .collect();
    (breakpoints, values)
}

/// A joint generator with its initial law and the marginal laws it is meant
/// to reproduce.
#[derive(Clone, Debug)]
pub struct MarkovStructureSpec {
    pub label: String,
    pub generator: Generator,
    pub initial: Distribution,
    pub prescribed_marginals: Vec<Generator>,
    pub classification: Option<ConsistencyReport>,
}

impl MarkovStructureSpec {
    pub fn new(
        label: impl Into<String>,
        generator: Generator,
        initial: Distribution,
        prescribed_marginals: Vec<Generator>,
    ) -> Result<Self> {
        let space = generator.space();
        if initial.space() != space {
            return domain(format!("initial law on {} but generator on {space}", initial.space()));
        }
        if prescribed_marginals.len() != space.components() {
            return domain(format!(
                "{} prescribed marginals for {} components",
                prescribed_marginals.len(),
                space.components()
            ));
        }
        for (i, m) in prescribed_marginals.iter().enumerate() {
            if m.space().components() != 1 || m.space().len() != space.component_size(i) {
                return domain(format!("prescribed marginal {i} does not match component {i}"));
            }
        }
        Ok(Self {
            label: label.into(),
            generator,
            initial,
            prescribed_marginals,
            classification: None,
        })
    }

    pub fn space(&self) -> &StateSpace {
        self.generator.space()
    }

    /// Independence structure of the prescribed marginals from the same initial law.
    pub fn independence_baseline(&self) -> Result<Self> {
        let generator = Generator::independence(self.prescribed_marginals.clone())?;
        Self::new(
            format!("{} (independence)", self.label),
            generator,
            self.initial.clone(),
            self.prescribed_marginals.clone(),
        )
    }

    /// Runs [`classify`] on `grid` and stores the report.
    pub fn classify(mut self, grid: &[f64]) -> Result<Self> {
        self.classification = Some(classify(&self.generator, &self.initial, grid)?);
        Ok(self)
    }

    /// Largest gap between `Θ_t Λ_t Φ` and the prescribed marginal rates over
    /// `times`, ignoring rows where `Θ_t` is undefined.
    pub fn law_matching_error(&self, times: &[f64]) -> Result<f64> {
        let mut worst = 0.0_f64;
        let sorted = {
            let mut v = times.to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        let laws = crate::semigroup::propagate_many(&self.initial, &self.generator, &sorted)?;
        for (&t, law) in sorted.iter().zip(&laws) {
            for (i, prescribed) in self.prescribed_marginals.iter().enumerate() {
                let th: ThetaOperator = crate::consistency::theta_from_law(law, i, t)?;
                let extracted = crate::consistency::marginal_generator_with(&self.generator, &th)?;
                let target = prescribed.rates_at(t)?;
                for v in (0..target.nrows()).filter(|&v| th.is_defined(v)) {
                    worst = worst.max((extracted.row(v) - target.row(v)).amax());
                }
            }
        }
        Ok(worst)
    }
}

/// Point mass at the all-zero state, the starting law of every family.
pub fn origin(space: &StateSpace) -> Distribution {
    let zeros = vec![0; space.components()];
    Distribution::point_mass(space.clone(), &zeros).expect("zero tuple is always valid")
}

/// Kronecker-sum generator of piecewise constant marginals on the union of
/// their breakpoints.
pub fn independence_generator(marginals: &[PiecewiseConstantGenerator]) -> Result<PiecewiseConstantGenerator> {
    let g = Generator::independence(marginals.iter().cloned().map(Generator::from).collect())?;
    match g {
        Generator::Piecewise(pc) => Ok(pc),
        _ => unreachable!("piecewise marginals give a piecewise generator"),
    }
}

fn two_state_absorbing(g: &Generator, name: &str) -> Result<()> {
    if g.space().components() != 1 || g.space().len() != 2 {
        return domain(format!("{name} must be a two-state marginal"));
    }
    let horizon = g.breakpoints().last().copied().unwrap_or(0.0) + 1.0;
    for t in g.sample_times(horizon) {
        let r = g.rates_unchecked(t);
        if r[(1, 0)] != 0.0 || r[(1, 1)] != 0.0 {
            return domain(format!("{name} must be absorbing in state 1"));
        }
    }
    Ok(())
}

fn intensity(g: &Generator, t: f64) -> f64 {
    g.rates_unchecked(t)[(0, 1)]
}

fn strong_matrix(l1: f64, l2: f64, g: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            -(l1 + l2 - g), l2 - g, l1 - g, g,
            0.0, -l1, 0.0, l1,
            0.0, 0.0, -l2, l2,
            0.0, 0.0, 0.0, 0.0,
        ],
    )
}

fn extreme_matrix(l: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(4, 4);
    m[(0, 0)] = -l;
    m[(0, 3)] = l;
    m
}

/// Common-jump rates `g = eta * min(λ¹, λ²)` on top of independent defaults.
#[derive(Debug)]
struct StrongCommonJumpRates {
    marginals: [Generator; 2],
    eta: f64,
}

impl RateFunction for StrongCommonJumpRates {
    fn rates(&self, t: f64) -> DMatrix<f64> {
        let l1 = intensity(&self.marginals[0], t);
        let l2 = intensity(&self.marginals[1], t);
        strong_matrix(l1, l2, self.eta * l1.min(l2))
    }
}

/// Both names default together at the shared marginal intensity.
#[derive(Debug)]
struct ExtremeContagionRates {
    marginal: Generator,
}

impl RateFunction for ExtremeContagionRates {
    fn rates(&self, t: f64) -> DMatrix<f64> {
        extreme_matrix(intensity(&self.marginal, t))
    }

    fn transition(&self, t: f64, s: f64) -> Option<DMatrix<f64>> {
        let stay = transition_unchecked(&self.marginal, t, s)[(0, 0)];
        let mut p = DMatrix::identity(4, 4);
        p[(0, 0)] = stay;
        p[(0, 3)] = 1.0 - stay;
        Some(p)
    }
}

/// Strong structure with simultaneous defaults at rate `eta * min(λ¹, λ²)`.
///
/// Starts from the all-zero state. `eta = 0` gives the independence structure.
pub fn strong_common_jump(marginals: &[Generator], eta: f64) -> Result<MarkovStructureSpec> {
    if !(0.0..=1.0).contains(&eta) {
        return domain(format!("eta = {eta} outside [0, 1]"));
    }
    let [m1, m2] = marginals else {
        return domain("strong common-jump structure needs exactly two marginals");
    };
    two_state_absorbing(m1, "marginal 0")?;
    two_state_absorbing(m2, "marginal 1")?;
    let space = StateSpace::uniform(2, 2)?;
    let generator = match (m1, m2) {
        (Generator::Piecewise(p1), Generator::Piecewise(p2)) => {
            let breakpoints = crate::chain::merge_breakpoints([p1.breakpoints(), p2.breakpoints()]);
            let mats = breakpoints
                .iter()
                .map(|&v| {
                    let (l1, l2) = (p1.at(v)[(0, 1)], p2.at(v)[(0, 1)]);
                    strong_matrix(l1, l2, eta * l1.min(l2))
                })
                .collect();
            Generator::Piecewise(PiecewiseConstantGenerator::validated(space.clone(), breakpoints, mats)?)
        }
        _ => {
            let mut breakpoints = m1.breakpoints();
            breakpoints.extend(m2.breakpoints());
            Generator::Smooth(SmoothGenerator::new(
                space.clone(),
                breakpoints,
                Arc::new(StrongCommonJumpRates {
                    marginals: [m1.clone(), m2.clone()],
                    eta,
                }),
            )?)
        }
    };
    MarkovStructureSpec::new(
        format!("strong common jumps (eta={eta})"),
        generator,
        origin(&space),
        marginals.to_vec(),
    )
}

/// Structure in which the two names only default together, matched to a
/// shared marginal law.
pub fn matched_extreme_contagion(marginal: &Generator) -> Result<MarkovStructureSpec> {
    two_state_absorbing(marginal, "marginal")?;
    let space = StateSpace::uniform(2, 2)?;
    let generator = match marginal {
        Generator::Piecewise(p) => {
            let mats = p.segments().iter().map(|m| extreme_matrix(m[(0, 1)])).collect();
            Generator::Piecewise(PiecewiseConstantGenerator::validated(space.clone(), p.breakpoints().to_vec(), mats)?)
        }
        _ => Generator::Smooth(SmoothGenerator::new(
            space.clone(),
            marginal.breakpoints(),
            Arc::new(ExtremeContagionRates {
                marginal: marginal.clone(),
            }),
        )?),
    };
    MarkovStructureSpec::new(
        "extreme contagion (matched)",
        generator,
        origin(&space),
        vec![marginal.clone(), marginal.clone()],
    )
}

/// Two-name parametric families with absorbing default state 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    /// Individual defaults at `a`, `b` and a common default at `c`.
    CommonJumps,
    /// Only simultaneous defaults, at rate `c`.
    ExtremeContagion,
    /// Only individual defaults, at `a` and `b`, and no default after the first.
    ExtremeAntiContagion,
    /// Name 0 defaults only with or after name 1; parameters `a`, `c`, `d`.
    SystemicImportance,
    /// Common jumps with `b = a`.
    SymmetricCommonJumps,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::CommonJumps,
        Family::ExtremeContagion,
        Family::ExtremeAntiContagion,
        Family::SystemicImportance,
        Family::SymmetricCommonJumps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::CommonJumps => "common_jumps",
            Family::ExtremeContagion => "extreme_contagion",
            Family::ExtremeAntiContagion => "extreme_anti_contagion",
            Family::SystemicImportance => "systemic_importance",
            Family::SymmetricCommonJumps => "symmetric_common_jumps",
        }
    }

    pub fn parameters(self) -> &'static [&'static str] {
        match self {
            Family::CommonJumps => &["a", "b", "c"],
            Family::ExtremeContagion => &["c"],
            Family::ExtremeAntiContagion => &["a", "b"],
            Family::SystemicImportance => &["a", "c", "d"],
            Family::SymmetricCommonJumps => &["a", "c"],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown family '{s}'")))
    }
}

/// Named parameter schedules of a family.
pub type FamilyParams = BTreeMap<String, PiecewiseConstantFn>;

fn param<'a>(params: &'a FamilyParams, family: Family, name: &str) -> Result<&'a PiecewiseConstantFn> {
    params
        .get(name)
        .ok_or_else(|| Error::Domain(format!("{family} needs parameter '{name}'")))
}

fn positive(f: &PiecewiseConstantFn, name: &str) -> Result<()> {
    if let Some((k, v)) = f.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return domain(format!("parameter '{name}' must be positive, interval {k} has {v}"));
    }
    Ok(())
}

fn sum(fns: &[&PiecewiseConstantFn]) -> PiecewiseConstantFn {
    let (breakpoints, values) = merged(fns);
    let totals = (0..breakpoints.len()).map(|k| values.iter().map(|v| v[k]).sum()).collect();
    PiecewiseConstantFn::new(breakpoints, totals).expect("merged schedules are well formed")
}

fn zero() -> PiecewiseConstantFn {
    PiecewiseConstantFn::constant(0.0)
}

fn hazard_marginal(
    exit_a: &PiecewiseConstantFn,
    feed: &PiecewiseConstantFn,
    exit_b: &PiecewiseConstantFn,
    hazard_a: &PiecewiseConstantFn,
    hazard_b: &PiecewiseConstantFn,
) -> Result<Generator> {
    let model = TwoPhaseHazard::new(exit_a, feed, exit_b, hazard_a, hazard_b, (1.0, 0.0))?;
    let breakpoints = model.breakpoints().to_vec();
    Ok(Generator::Smooth(SmoothGenerator::new(
        StateSpace::single(2)?,
        breakpoints,
        Arc::new(model),
    )?))
}

fn constant_marginal(rate: &PiecewiseConstantFn) -> Result<Generator> {
    let mats = rate
        .values()
        .iter()
        .map(|&l| DMatrix::from_row_slice(2, 2, &[-l, l, 0.0, 0.0]))
        .collect();
    Ok(PiecewiseConstantGenerator::validated(StateSpace::single(2)?, rate.breakpoints().to_vec(), mats)?.into())
}

fn four_state(fns: &[&PiecewiseConstantFn], build: impl Fn(&[f64]) -> DMatrix<f64>) -> Result<Generator> {
    let (breakpoints, values) = merged(fns);
    let mats = (0..breakpoints.len())
        .map(|k| {
            let at: Vec<f64> = values.iter().map(|v| v[k]).collect();
            build(&at)
        })
        .collect();
    Ok(PiecewiseConstantGenerator::validated(StateSpace::uniform(2, 2)?, breakpoints, mats)?.into())
}

fn common_jumps_matrix(a: f64, b: f64, c: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            -(a + b + c), a, b, c,
            0.0, -b, 0.0, b,
            0.0, 0.0, -a, a,
            0.0, 0.0, 0.0, 0.0,
        ],
    )
}

/// Builds a family's generator together with the exact marginal laws it
/// induces from the all-zero state.
pub fn example_family(family: Family, params: &FamilyParams) -> Result<MarkovStructureSpec> {
    for name in params.keys() {
        if !family.parameters().contains(&name.as_str()) {
            return domain(format!("{family} has no parameter '{name}'"));
        }
    }
    let get = |name| param(params, family, name);
    let (generator, marginals) = match family {
        Family::CommonJumps | Family::SymmetricCommonJumps => {
            let a = get("a")?;
            let b = if family == Family::CommonJumps { get("b")? } else { a };
            let c = get("c")?;
            positive(a, "a")?;
            positive(b, "b")?;
            positive(c, "c")?;
            let g = four_state(&[a, b, c], |p| common_jumps_matrix(p[0], p[1], p[2]))?;
            let exit = sum(&[a, b, c]);
            let m0 = hazard_marginal(&exit, a, b, &sum(&[b, c]), b)?;
            let m1 = hazard_marginal(&exit, b, a, &sum(&[a, c]), a)?;
            (g, vec![m0, m1])
        }
        Family::ExtremeContagion => {
            let c = get("c")?;
            positive(c, "c")?;
            let g = four_state(&[c], |p| extreme_matrix(p[0]))?;
            let m = constant_marginal(c)?;
            (g, vec![m.clone(), m])
        }
        Family::ExtremeAntiContagion => {
            let (a, b) = (get("a")?, get("b")?);
            positive(a, "a")?;
            positive(b, "b")?;
            let g = four_state(&[a, b], |p| {
                let mut m = DMatrix::zeros(4, 4);
                m[(0, 0)] = -(p[0] + p[1]);
                m[(0, 1)] = p[0];
                m[(0, 2)] = p[1];
                m
            })?;
            let exit = sum(&[a, b]);
            let m0 = hazard_marginal(&exit, a, &zero(), b, &zero())?;
            let m1 = hazard_marginal(&exit, b, &zero(), a, &zero())?;
            (g, vec![m0, m1])
        }
        Family::SystemicImportance => {
            let (a, c, d) = (get("a")?, get("c")?, get("d")?);
            positive(a, "a")?;
            positive(c, "c")?;
            positive(d, "d")?;
            let (_, values) = merged(&[c, d]);
            if let Some(k) = (0..values[0].len()).find(|&k| values[0][k] == values[1][k]) {
                return domain(format!("parameters 'c' and 'd' must differ, both are {} on interval {k}", values[0][k]));
            }
            let g = four_state(&[a, c, d], |p| {
                let (a, c, d) = (p[0], p[1], p[2]);
                DMatrix::from_row_slice(
                    4,
                    4,
                    &[
                        -(a + c), a, 0.0, c,
                        0.0, -d, 0.0, d,
                        0.0, 0.0, -(a + c), a + c,
                        0.0, 0.0, 0.0, 0.0,
                    ],
                )
            })?;
            let exit = sum(&[a, c]);
            let m0 = hazard_marginal(&exit, a, d, c, d)?;
            let m1 = constant_marginal(&exit)?;
            (g, vec![m0, m1])
        }
    };
    let space = generator.space().clone();
    MarkovStructureSpec::new(family.name(), generator, origin(&space), marginals)
}

/// Relabels a structure. New component `k` is old component
/// `component_perm[k]`, and old value `v` of component `j` becomes
/// `state_perms[j][v]`.
pub fn permute_structure(
    spec: &MarkovStructureSpec,
    component_perm: &[usize],
    state_perms: &[Vec<usize>],
) -> Result<MarkovStructureSpec> {
    let old = spec.space();
    let m = old.components();
    crate::chain::check_permutation(component_perm, m)?;
    if state_perms.len() != m {
        return domain(format!("{} state permutations for {m} components", state_perms.len()));
    }
    for (j, p) in state_perms.iter().enumerate() {
        crate::chain::check_permutation(p, old.component_size(j))?;
    }
    let new_space = StateSpace::new(component_perm.iter().map(|&j| old.component_size(j)).collect())?;
    let flat: Vec<usize> = (0..old.len())
        .map(|x| {
            let tuple = old.tuple_of(x);
            let new_tuple: Vec<usize> = component_perm.iter().map(|&j| state_perms[j][tuple[j]]).collect();
            new_space.index_of(&new_tuple).expect("permuted tuple is in range")
        })
        .collect();

    let marginals = component_perm
        .iter()
        .map(|&j| relabel(&spec.prescribed_marginals[j], StateSpace::single(old.component_size(j))?, &state_perms[j]))
        .collect::<Result<Vec<_>>>()?;

    let generator = match &spec.generator {
        Generator::Independence(ig) => {
            let factors = component_perm
                .iter()
                .map(|&j| relabel(&ig.factors()[j], StateSpace::single(old.component_size(j))?, &state_perms[j]))
                .collect::<Result<Vec<_>>>()?;
            Generator::Independence(IndependenceGenerator::new(factors)?)
        }
        g => relabel(g, new_space.clone(), &flat)?,
    };

    let mut probs = vec![0.0; new_space.len()];
    for (x, &p) in spec.initial.probs().iter().enumerate() {
        probs[flat[x]] = p;
    }
    let mut out = MarkovStructureSpec::new(
        spec.label.clone(),
        generator,
        Distribution::from_raw(new_space, probs),
        marginals,
    )?;
    out.classification = None;
    Ok(out)
}

fn relabel(g: &Generator, space: StateSpace, perm: &[usize]) -> Result<Generator> {
    if perm.iter().enumerate().all(|(k, &p)| k == p) && g.space() == &space {
        return Ok(g.clone());
    }
    match g {
        Generator::Piecewise(pc) => {
            let mats = pc
                .segments()
                .iter()
                .map(|m| crate::chain::permute_matrix(m, perm))
                .collect();
            Ok(PiecewiseConstantGenerator::new(space, pc.breakpoints().to_vec(), mats)?.into())
        }
        _ => Ok(Generator::Permuted(PermutedGenerator::new(g.clone(), space, perm.to_vec())?)),
    }
}
