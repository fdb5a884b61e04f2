//! Conditional-law operators, marginal generators and Markovian consistency
//! checks.
//!
//! `Θ_t^i` maps a component state to the conditional law of the full state
//! at time `t`; `Φ^i` extends component functions to the product space. The
//! marginal generator of component `i` is `Θ_t^i Λ_t Φ^i`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::chain::{Distribution, Generator, StateSpace};
use crate::error::{domain, Error, Result};
use crate::semigroup::{apply, propagate, propagate_many, transition_matrix, transition_unchecked};

/// Rate equalities in condition (M).
pub const RATE_TOL: f64 = 1e-12;
/// Probability equalities in condition (P).
pub const PROB_TOL: f64 = 1e-9;
/// Intertwining and Markov identity residuals.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Probability mass treated as zero when conditioning.
pub const MASS_TOL: f64 = 1e-14;

/// `Θ_t^i`: row `v` is the law of `X_t` given `X_t^i = v`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaOperator {
    component: usize,
    t: f64,
    entries: DMatrix<f64>,
    mass: Vec<f64>,
}

impl ThetaOperator {
    pub fn component(&self) -> usize {
        self.component
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `P(X_t^i = v)` for each component state `v`.
    pub fn component_law(&self) -> &[f64] {
        &self.mass
    }

    pub fn is_defined(&self, v: usize) -> bool {
        self.mass[v] > MASS_TOL
    }

    pub fn undefined_rows(&self) -> Vec<usize> {
        (0..self.mass.len()).filter(|&v| !self.is_defined(v)).collect()
    }
}

/// `Φ^i`: the 0/1 matrix reading coordinate `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiOperator {
    component: usize,
    entries: DMatrix<f64>,
}

impl PhiOperator {
    pub fn component(&self) -> usize {
        self.component
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

pub fn phi(space: &StateSpace, i: usize) -> Result<PhiOperator> {
    space.check_component(i)?;
    let mut entries = DMatrix::zeros(space.len(), space.component_size(i));
    for x in 0..space.len() {
        entries[(x, space.coordinate(x, i))] = 1.0;
    }
    Ok(PhiOperator { component: i, entries })
}

pub fn theta(g: &Generator, d0: &Distribution, i: usize, t: f64) -> Result<ThetaOperator> {
    let law = propagate(d0, g, t)?;
    theta_from_law(&law, i, t)
}

/// `Θ_t^i` from an already propagated law.
pub fn theta_from_law(law: &Distribution, i: usize, t: f64) -> Result<ThetaOperator> {
    let space = law.space();
    space.check_component(i)?;
    let k = space.component_size(i);
    let mut mass = vec![0.0; k];
    for (x, &p) in law.probs().iter().enumerate() {
        mass[space.coordinate(x, i)] += p;
    }
    let mut entries = DMatrix::zeros(k, space.len());
    for (x, &p) in law.probs().iter().enumerate() {
        let v = space.coordinate(x, i);
        if mass[v] > MASS_TOL {
            entries[(v, x)] = p / mass[v];
        }
    }
    Ok(ThetaOperator {
        component: i,
        t,
        entries,
        mass,
    })
}

/// `Θ_t^i Λ_t Φ^i`, failing if any row of `Θ_t^i` is undefined.
pub fn marginal_generator(g: &Generator, d0: &Distribution, i: usize, t: f64) -> Result<DMatrix<f64>> {
    let th = theta(g, d0, i, t)?;
    if let Some(&v) = th.undefined_rows().first() {
        return Err(Error::UndefinedTheta { component: i, state: v, t });
    }
    marginal_generator_with(g, &th)
}

/// `Θ Λ_t Φ` for a given `Θ`; rows where `Θ` is undefined come out zero.
pub fn marginal_generator_with(g: &Generator, th: &ThetaOperator) -> Result<DMatrix<f64>> {
    let lambda = g.rates_at(th.t)?;
    let ph = phi(g.space(), th.component)?;
    Ok(&th.entries * lambda * &ph.entries)
}

/// `Σ_{y ∈ H(v)} m[x, y]` for every component value `v`.
fn hyperplane_sums(m: &DMatrix<f64>, space: &StateSpace, i: usize, x: usize) -> Vec<f64> {
    let mut sums = vec![0.0; space.component_size(i)];
    for y in 0..space.len() {
        sums[space.coordinate(y, i)] += m[(x, y)];
    }
    sums
}

/// First `(x, x_hat, target, lhs, rhs)` where the hyperplane sums of rows in
/// the same hyperplane of component `i` disagree by more than `tol`.
fn hyperplane_mismatch(
    m: &DMatrix<f64>,
    space: &StateSpace,
    i: usize,
    tol: f64,
    admissible: impl Fn(usize) -> bool,
) -> Option<(usize, usize, usize, f64, f64)> {
    for v in 0..space.component_size(i) {
        let rows: Vec<usize> = space.hyperplane(i, v).into_iter().filter(|&x| admissible(x)).collect();
        let Some((&first, rest)) = rows.split_first() else {
            continue;
        };
        let reference = hyperplane_sums(m, space, i, first);
        for &x_hat in rest {
            let other = hyperplane_sums(m, space, i, x_hat);
            for target in (0..reference.len()).filter(|&w| w != v) {
                if (reference[target] - other[target]).abs() > tol {
                    return Some((first, x_hat, target, reference[target], other[target]));
                }
            }
        }
    }
    None
}

/// A violated hyperplane-sum equality in the rates of one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct MWitness {
    pub segment: usize,
    pub t: f64,
    pub component: usize,
    pub x: usize,
    pub x_hat: usize,
    pub target: usize,
    pub rate_x: f64,
    pub rate_x_hat: f64,
}

/// A violated hyperplane-sum equality in `P_{t,s}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PWitness {
    pub t: f64,
    pub s: f64,
    pub component: usize,
    pub x: usize,
    pub x_hat: usize,
    pub target: usize,
    pub prob_x: f64,
    pub prob_x_hat: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionM {
    pub holds: Vec<bool>,
    pub witnesses: Vec<Option<MWitness>>,
}

impl ConditionM {
    pub fn all(&self) -> bool {
        self.holds.iter().all(|&h| h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionP {
    pub holds: Vec<bool>,
    pub witnesses: Vec<Option<PWitness>>,
}

impl ConditionP {
    pub fn all(&self) -> bool {
        self.holds.iter().all(|&h| h)
    }
}

/// Rate matrices to inspect: every segment of a piecewise generator, the
/// sample times of any other.
fn rate_samples(g: &Generator) -> Vec<(usize, f64, DMatrix<f64>)> {
    match g {
        Generator::Piecewise(pc) => pc
            .breakpoints()
            .iter()
            .zip(pc.segments())
            .enumerate()
            .map(|(k, (&v, m))| (k, v, m.clone()))
            .collect(),
        _ => {
            let horizon = g.breakpoints().last().copied().unwrap_or(0.0) + 1.0;
            g.sample_times(horizon)
                .into_iter()
                .enumerate()
                .map(|(k, t)| (k, t, g.rates_unchecked(t)))
                .collect()
        }
    }
}

pub fn check_condition_m(g: &Generator) -> ConditionM {
    let space = g.space();
    let m = space.components();
    let mut witnesses: Vec<Option<MWitness>> = vec![None; m];
    for (segment, t, rates) in rate_samples(g) {
        for (i, slot) in witnesses.iter_mut().enumerate() {
            if slot.is_some() {
                continue;
            }
            if let Some((x, x_hat, target, a, b)) = hyperplane_mismatch(&rates, space, i, RATE_TOL, |_| true) {
                *slot = Some(MWitness {
                    segment,
                    t,
                    component: i,
                    x,
                    x_hat,
                    target,
                    rate_x: a,
                    rate_x_hat: b,
                });
            }
        }
    }
    ConditionM {
        holds: witnesses.iter().map(Option::is_none).collect(),
        witnesses,
    }
}

pub fn check_condition_p(g: &Generator, t: f64, s: f64) -> Result<ConditionP> {
    let p = transition_matrix(g, t, s)?;
    Ok(condition_p_on(g.space(), p.entries(), t, s, |_| true))
}

fn condition_p_on(
    space: &StateSpace,
    p: &DMatrix<f64>,
    t: f64,
    s: f64,
    admissible: impl Fn(usize) -> bool + Copy,
) -> ConditionP {
    let witnesses: Vec<Option<PWitness>> = (0..space.components())
        .map(|i| {
            hyperplane_mismatch(p, space, i, PROB_TOL, admissible).map(|(x, x_hat, target, a, b)| PWitness {
                t,
                s,
                component: i,
                x,
                x_hat,
                target,
                prob_x: a,
                prob_x_hat: b,
            })
        })
        .collect();
    ConditionP {
        holds: witnesses.iter().map(Option::is_none).collect(),
        witnesses,
    }
}

/// Worst intertwining residual of one component over a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct IntertwiningResidual {
    pub component: usize,
    pub max_residual: f64,
    pub worst_pair: Option<(f64, f64)>,
    /// Grid times at which some row of `Θ_t` is undefined.
    pub undefined_at: Vec<f64>,
    /// Pairs skipped because a needed row of `Θ_s` is undefined.
    pub excluded_pairs: Vec<(f64, f64)>,
}

impl IntertwiningResidual {
    pub fn holds(&self) -> bool {
        self.max_residual < IDENTITY_TOL
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntertwiningReport {
    pub components: Vec<IntertwiningResidual>,
}

impl IntertwiningReport {
    pub fn holds(&self) -> bool {
        self.components.iter().all(IntertwiningResidual::holds)
    }
}

/// Checks `Θ_t^i P_{t,s} = P̂^i_{t,s} Θ_s^i` for all grid pairs `t < s`,
/// where `P̂^i` is the semigroup of `marginals[i]`.
pub fn check_intertwining(
    g: &Generator,
    d0: &Distribution,
    marginals: &[Generator],
    grid: &[f64],
) -> Result<IntertwiningReport> {
    let space = g.space();
    if marginals.len() != space.components() {
        return domain(format!(
            "{} marginals for {} components",
            marginals.len(),
            space.components()
        ));
    }
    for (i, mg) in marginals.iter().enumerate() {
        if mg.space().len() != space.component_size(i) || mg.space().components() != 1 {
            return domain(format!("marginal {i} does not match component {i}"));
        }
    }
    intertwining(g, d0, grid, |i, t, s, _| transition_unchecked(&marginals[i], t, s))
}

/// Intertwining against the semigroup `Θ_t P_{t,s} Φ` that the structure
/// itself induces on each component.
pub fn check_intrinsic_intertwining(g: &Generator, d0: &Distribution, grid: &[f64]) -> Result<IntertwiningReport> {
    let space = g.space().clone();
    let phis: Vec<DMatrix<f64>> = (0..space.components())
        .map(|i| phi(&space, i).map(|p| p.entries))
        .collect::<Result<_>>()?;
    intertwining(g, d0, grid, |i, _, _, theta_p| theta_p * &phis[i])
}

fn sorted_grid(grid: &[f64]) -> Result<Vec<f64>> {
    let mut times = grid.to_vec();
    if times.iter().any(|t| !(t >= &0.0) || !t.is_finite()) {
        return domain("grid times must be finite and non-negative");
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    Ok(times)
}

fn intertwining(
    g: &Generator,
    d0: &Distribution,
    grid: &[f64],
    marginal_semigroup: impl Fn(usize, f64, f64, &DMatrix<f64>) -> DMatrix<f64>,
) -> Result<IntertwiningReport> {
    let times = sorted_grid(grid)?;
    let laws = propagate_many(d0, g, &times)?;
    let space = g.space();
    let steps: Vec<DMatrix<f64>> = times.windows(2).map(|w| transition_unchecked(g, w[0], w[1])).collect();
    let mut components = Vec::with_capacity(space.components());
    for i in 0..space.components() {
        let thetas: Vec<ThetaOperator> = times
            .iter()
            .zip(&laws)
            .map(|(&t, law)| theta_from_law(law, i, t))
            .collect::<Result<_>>()?;
        let mut report = IntertwiningResidual {
            component: i,
            max_residual: 0.0,
            worst_pair: None,
            undefined_at: thetas
                .iter()
                .filter(|th| !th.undefined_rows().is_empty())
                .map(|th| th.t)
                .collect(),
            excluded_pairs: Vec::new(),
        };
        for (a, th_t) in thetas.iter().enumerate() {
            let mut p = DMatrix::<f64>::identity(space.len(), space.len());
            for (b, th_s) in thetas.iter().enumerate().skip(a + 1) {
                p = p * &steps[b - 1];
                let lhs = &th_t.entries * &p;
                let p_hat = marginal_semigroup(i, th_t.t, th_s.t, &lhs);
                let defined: Vec<usize> = (0..th_t.mass.len()).filter(|&v| th_t.is_defined(v)).collect();
                let needs_undefined = defined.iter().any(|&v| {
                    (0..th_s.mass.len()).any(|w| p_hat[(v, w)].abs() > MASS_TOL && !th_s.is_defined(w))
                });
                if needs_undefined {
                    report.excluded_pairs.push((th_t.t, th_s.t));
                    continue;
                }
                let rhs = &p_hat * &th_s.entries;
                for &v in &defined {
                    let r = (lhs.row(v) - rhs.row(v)).amax();
                    if r > report.max_residual {
                        report.max_residual = r;
                        report.worst_pair = Some((th_t.t, th_s.t));
                    }
                }
            }
        }
        components.push(report);
    }
    Ok(IntertwiningReport { components })
}

/// A component path and target for which the sampled Markov identity fails.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovIdentityWitness {
    pub partition: Vec<f64>,
    pub path: Vec<usize>,
    pub s: f64,
    pub target: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovIdentityVerdict {
    pub component: usize,
    pub checked_paths: usize,
    /// Component paths of zero probability, which cannot be conditioned on.
    pub skipped_paths: usize,
    pub max_abs: f64,
    pub witness: Option<MarkovIdentityWitness>,
}

impl MarkovIdentityVerdict {
    pub fn falsified(&self) -> bool {
        self.witness.is_some()
    }
}

/// Maximum number of points in a sampled partition.
pub const MAX_PARTITION_POINTS: usize = 5;

/// Tests the Markov identity of component `i` on each partition
/// `0 = t_0 < .. < t_n = t`, with horizon `s >= t`.
///
/// For every component path `ψ` on the partition, the conditional law of
/// `X_t` given the whole path is compared with the one given `X_t^i` only;
/// the difference `Ξ` is pushed through `P_{t,s}` onto each hyperplane. The
/// check is a falsifier: passing on samples proves nothing in general.
pub fn check_markov_identity_sampled(
    g: &Generator,
    d0: &Distribution,
    i: usize,
    partitions: &[Vec<f64>],
    s: f64,
) -> Result<MarkovIdentityVerdict> {
    let space = g.space();
    space.check_component(i)?;
    let k = space.component_size(i);
    let mut verdict = MarkovIdentityVerdict {
        component: i,
        checked_paths: 0,
        skipped_paths: 0,
        max_abs: 0.0,
        witness: None,
    };
    for partition in partitions {
        let times = sorted_grid(partition)?;
        if times.first() != Some(&0.0) || times.len() < 2 || times.len() > MAX_PARTITION_POINTS {
            return domain(format!(
                "partition {partition:?} must start at 0 and have 2..={MAX_PARTITION_POINTS} points"
            ));
        }
        let t = *times.last().expect("non-empty");
        if s < t {
            return domain(format!("horizon {s} precedes partition end {t}"));
        }
        let steps: Vec<DMatrix<f64>> = times.windows(2).map(|w| transition_unchecked(g, w[0], w[1])).collect();
        let p_ts = transition_unchecked(g, t, s);
        let law_t = steps.iter().fold(d0.clone(), |d, p| apply(&d, p));
        let th = theta_from_law(&law_t, i, t)?;
        // Mass of each hyperplane reached from each state at time s.
        let to_hyperplane: Vec<Vec<f64>> = (0..space.len()).map(|x| hyperplane_sums(&p_ts, space, i, x)).collect();

        let n_points = times.len();
        let n_paths = k.pow(n_points as u32);
        for code in 0..n_paths {
            let path: Vec<usize> = (0..n_points).map(|j| (code / k.pow((n_points - 1 - j) as u32)) % k).collect();
            let mut alpha: Vec<f64> = d0
                .probs()
                .iter()
                .enumerate()
                .map(|(x, &p)| if space.coordinate(x, i) == path[0] { p } else { 0.0 })
                .collect();
            for (step, &v) in steps.iter().zip(&path[1..]) {
                let mut next = vec![0.0; space.len()];
                for (x, &ax) in alpha.iter().enumerate() {
                    if ax != 0.0 {
                        for (y, out) in next.iter_mut().enumerate() {
                            if space.coordinate(y, i) == v {
                                *out += ax * step[(x, y)];
                            }
                        }
                    }
                }
                alpha = next;
            }
            let mass: f64 = alpha.iter().sum();
            let last = path[n_points - 1];
            if mass <= MASS_TOL || !th.is_defined(last) {
                verdict.skipped_paths += 1;
                continue;
            }
            verdict.checked_paths += 1;
            for target in 0..k {
                let value: f64 = (0..space.len())
                    .filter(|&x| space.coordinate(x, i) == last)
                    .map(|x| (alpha[x] / mass - th.entries[(last, x)]) * to_hyperplane[x][target])
                    .sum();
                verdict.max_abs = verdict.max_abs.max(value.abs());
                if value.abs() > IDENTITY_TOL && verdict.witness.is_none() {
                    verdict.witness = Some(MarkovIdentityWitness {
                        partition: times.clone(),
                        path: path.clone(),
                        s,
                        target,
                        value,
                    });
                }
            }
        }
    }
    Ok(verdict)
}

/// Whether every component value entered by a jump is absorbing for the
/// component. Each component path then jumps at most once, which makes it
/// Markov in its own filtration whatever the other components do.
pub fn single_jump_certificate(g: &Generator, i: usize) -> Result<bool> {
    let space = g.space();
    space.check_component(i)?;
    let samples = rate_samples(g);
    let mut entered = vec![false; space.component_size(i)];
    for (_, _, m) in &samples {
        for x in 0..space.len() {
            for y in 0..space.len() {
                if x != y && m[(x, y)] > 0.0 && space.coordinate(x, i) != space.coordinate(y, i) {
                    entered[space.coordinate(y, i)] = true;
                }
            }
        }
    }
    for (_, _, m) in &samples {
        for x in 0..space.len() {
            let v = space.coordinate(x, i);
            if !entered[v] {
                continue;
            }
            let leaves = (0..space.len()).any(|y| m[(x, y)] > 0.0 && space.coordinate(y, i) != v);
            if leaves {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Consistency {
    Strong,
    WeakOnly,
    Weak,
    NotWeak,
    Undetermined,
}

impl Consistency {
    pub fn label(self) -> &'static str {
        match self {
            Consistency::Strong => "strong",
            Consistency::WeakOnly => "weak-only",
            Consistency::Weak => "weak",
            Consistency::NotWeak => "not-weak",
            Consistency::Undetermined => "undetermined",
        }
    }

    pub fn is_weak(self) -> bool {
        matches!(self, Consistency::Strong | Consistency::WeakOnly | Consistency::Weak)
    }
}

impl fmt::Display for Consistency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentReport {
    pub component: usize,
    pub classification: Consistency,
    pub condition_m: bool,
    pub m_witness: Option<MWitness>,
    /// Witness that the component is not Markov in the joint filtration:
    /// a (P) violation between two states that both carry probability.
    pub p_witness: Option<PWitness>,
    /// Intertwining residual against the induced marginal semigroup.
    pub intertwining: IntertwiningResidual,
    pub single_jump: bool,
    pub markov_identity: Option<MarkovIdentityVerdict>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub components: Vec<ComponentReport>,
    /// Whether the propagated law is strictly positive at every grid time `t > 0`.
    pub positive_law: bool,
    pub grid: Vec<f64>,
}

impl ConsistencyReport {
    /// Classification of the whole structure: strong only if every component
    /// is, weak-only if all are weak and one is certified weak-only.
    pub fn overall(&self) -> Consistency {
        let classes: Vec<Consistency> = self.components.iter().map(|c| c.classification).collect();
        if classes.iter().all(|&c| c == Consistency::Strong) {
            Consistency::Strong
        } else if classes.contains(&Consistency::NotWeak) {
            Consistency::NotWeak
        } else if classes.contains(&Consistency::Undetermined) {
            Consistency::Undetermined
        } else if classes.contains(&Consistency::WeakOnly) {
            Consistency::WeakOnly
        } else {
            Consistency::Weak
        }
    }
}

/// Default partitions for the Markov identity falsifier on `[0, horizon]`.
fn default_partitions(horizon: f64) -> Vec<Vec<f64>> {
    let h = horizon.max(1.0);
    vec![
        vec![0.0, 0.5 * h],
        vec![0.0, 0.25 * h, 0.5 * h],
        vec![0.0, 0.2 * h, 0.4 * h, 0.6 * h],
        vec![0.0, 0.1 * h, 0.3 * h, 0.5 * h, 0.7 * h],
    ]
}

/// Classifies each component as strong, weak-only, weak, not-weak or
/// undetermined.
///
/// A component is strong when condition (M i) holds. Otherwise it is weak
/// when intertwining with its induced semigroup holds on `grid` or when its
/// paths can jump at most once; such a component is weak-only when the law is
/// positive on the grid or a (P i) violation between charged states exists.
/// Components without weak evidence are checked with the Markov identity
/// falsifier and are not-weak if it fails, undetermined otherwise.
pub fn classify(g: &Generator, d0: &Distribution, grid: &[f64]) -> Result<ConsistencyReport> {
    let times = sorted_grid(grid)?;
    let space = g.space();
    let laws = propagate_many(d0, g, &times)?;
    let positive_law = times
        .iter()
        .zip(&laws)
        .filter(|(&t, _)| t > 0.0)
        .all(|(_, law)| law.probs().iter().all(|&p| p > MASS_TOL));
    let m = check_condition_m(g);
    let intertwining = check_intrinsic_intertwining(g, d0, &times)?;
    let horizon = times.last().copied().unwrap_or(0.0);

    let mut p_witnesses: Vec<Option<PWitness>> = vec![None; space.components()];
    for (k, w) in times.windows(2).enumerate() {
        let law = &laws[k];
        let charged = |x: usize| law.probs()[x] > MASS_TOL;
        let p = transition_unchecked(g, w[0], w[1]);
        let verdict = condition_p_on(space, &p, w[0], w[1], charged);
        for (slot, found) in p_witnesses.iter_mut().zip(verdict.witnesses) {
            if slot.is_none() {
                *slot = found;
            }
        }
    }

    let mut components = Vec::with_capacity(space.components());
    for i in 0..space.components() {
        let residual = intertwining.components[i].clone();
        let single_jump = single_jump_certificate(g, i)?;
        let mut markov_identity = None;
        let classification = if m.holds[i] {
            Consistency::Strong
        } else if residual.holds() || single_jump {
            if positive_law || p_witnesses[i].is_some() {
                Consistency::WeakOnly
            } else {
                Consistency::Weak
            }
        } else {
            let horizon_s = horizon.max(1.0);
            let verdict = check_markov_identity_sampled(g, d0, i, &default_partitions(0.8 * horizon_s), horizon_s)?;
            let falsified = verdict.falsified();
            markov_identity = Some(verdict);
            if falsified {
                Consistency::NotWeak
            } else {
                Consistency::Undetermined
            }
        };
        components.push(ComponentReport {
            component: i,
            classification,
            condition_m: m.holds[i],
            m_witness: m.witnesses[i].clone(),
            p_witness: p_witnesses[i].clone(),
            intertwining: residual,
            single_jump,
            markov_identity,
        });
    }
    Ok(ConsistencyReport {
        components,
        positive_law,
        grid: times,
    })
}

/// Summed jump rates of component `i` out of each of its states into each
/// other state, with the remaining coordinates fixed as in `conditioning`
/// (its `i`-th entry is ignored). Contagion shows up as dependence of this
/// map on the conditioning state.
pub fn contagion_rates(
    g: &Generator,
    t: f64,
    i: usize,
    conditioning: &[usize],
) -> Result<BTreeMap<(usize, usize), f64>> {
    let space = g.space();
    space.check_component(i)?;
    let base = space.index_of(conditioning)?;
    let rates = g.rates_at(t)?;
    let mut out = BTreeMap::new();
    for from in 0..space.component_size(i) {
        let x = space.with_coordinate(base, i, from);
        let sums = hyperplane_sums(&rates, space, i, x);
        for (to, &rate) in sums.iter().enumerate() {
            if to != from {
                out.insert((from, to), rate);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::chain::PiecewiseConstantGenerator;

    fn space() -> StateSpace {
        StateSpace::uniform(2, 2).unwrap()
    }

    fn absorbing(rate: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-rate, rate, 0.0, 0.0])
    }

    fn marginal(rate: f64) -> Generator {
        PiecewiseConstantGenerator::constant(StateSpace::single(2).unwrap(), absorbing(rate))
            .unwrap()
            .into()
    }

    fn common_jumps(a: f64, b: f64, c: f64) -> Generator {
        PiecewiseConstantGenerator::constant(
            space(),
            DMatrix::from_row_slice(
                4,
                4,
                &[
                    -(a + b + c), a, b, c,
                    0.0, -b, 0.0, b,
                    0.0, 0.0, -a, a,
                    0.0, 0.0, 0.0, 0.0,
                ],
            ),
        )
        .unwrap()
        .into()
    }

    fn tensor_contagion(a: f64, b: f64, c: f64, d: f64, f: f64) -> Generator {
        PiecewiseConstantGenerator::constant(
            space(),
            DMatrix::from_row_slice(
                4,
                4,
                &[
                    -(a + c + d), d, a, c,
                    f, -(a + f), 0.0, a,
                    b, 0.0, -(b + d), d,
                    0.0, b, f, -(b + f),
                ],
            ),
        )
        .unwrap()
        .into()
    }

    fn origin() -> Distribution {
        Distribution::point_mass(space(), &[0, 0]).unwrap()
    }

    fn grid(n: usize, step: f64) -> Vec<f64> {
        (0..=n).map(|k| k as f64 * step).collect()
    }

    #[test]
    fn phi_matrices() {
        let ph = phi(&space(), 1).unwrap();
        let expected = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(ph.entries(), &expected);
        let ph0 = phi(&space(), 0).unwrap();
        assert_eq!(ph0.entries().column(0).as_slice(), &[1.0, 1.0, 0.0, 0.0]);
        let single = phi(&StateSpace::single(3).unwrap(), 0).unwrap();
        assert_eq!(single.entries(), &DMatrix::identity(3, 3));
        assert!(phi(&space(), 2).is_err());
    }

    #[test]
    fn theta_at_time_zero_of_point_mass() {
        let th = theta(&common_jumps(0.01, 0.02, 0.08), &origin(), 0, 0.0).unwrap();
        assert_eq!(th.entries().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(th.undefined_rows(), vec![1]);
    }

    #[test]
    fn theta_of_product_law_factorizes() {
        let law = Distribution::new(space(), vec![0.6 * 0.3, 0.6 * 0.7, 0.4 * 0.3, 0.4 * 0.7]).unwrap();
        let th = theta_from_law(&law, 0, 1.0).unwrap();
        for (v, row) in [[0.3, 0.7, 0.0, 0.0], [0.0, 0.0, 0.3, 0.7]].iter().enumerate() {
            for x in 0..4 {
                assert_abs_diff_eq!(th.entries()[(v, x)], row[x], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn marginal_generator_of_independence_is_the_marginal() {
        let g = Generator::independence(vec![marginal(0.03), marginal(0.05)]).unwrap();
        let d0 = Distribution::uniform(space());
        let m = marginal_generator(&g, &d0, 1, 2.0).unwrap();
        assert_abs_diff_eq!(m[(0, 1)], 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn marginal_generator_reports_undefined_rows() {
        let err = marginal_generator(&common_jumps(0.01, 0.02, 0.08), &origin(), 0, 0.0).unwrap_err();
        assert!(matches!(err, Error::UndefinedTheta { component: 0, state: 1, .. }));
    }

    #[test]
    fn condition_m_on_common_jumps_has_paper_witness() {
        let m = check_condition_m(&common_jumps(0.01, 0.02, 0.08));
        assert!(!m.holds[0] && !m.holds[1]);
        let w = m.witnesses[0].as_ref().unwrap();
        assert_eq!((w.x, w.x_hat, w.target), (0, 1, 1));
        assert_abs_diff_eq!(w.rate_x, 0.02 + 0.08, epsilon = 1e-15);
        assert_abs_diff_eq!(w.rate_x_hat, 0.02, epsilon = 1e-15);
    }

    #[test]
    fn condition_m_and_p_on_independence() {
        let g = Generator::independence(vec![marginal(0.03), marginal(0.05)]).unwrap();
        assert!(check_condition_m(&g).all());
        assert!(check_condition_p(&g, 0.0, 7.0).unwrap().all());
        let dep = common_jumps(0.01, 0.02, 0.08);
        assert!(!check_condition_p(&dep, 0.0, 3.0).unwrap().all());
        assert!(check_condition_p(&dep, 3.0, 3.0).unwrap().all());
    }

    #[test]
    fn intertwining_of_independence_with_product_law() {
        let g = Generator::independence(vec![marginal(0.03), marginal(0.05)]).unwrap();
        let d0 = Distribution::uniform(space());
        let r = check_intertwining(&g, &d0, &[marginal(0.03), marginal(0.05)], &grid(10, 1.0)).unwrap();
        assert!(r.components.iter().all(|c| c.max_residual < 1e-10));
    }

    #[test]
    fn intertwining_detects_wrong_marginals() {
        let g = Generator::independence(vec![marginal(0.03), marginal(0.05)]).unwrap();
        let d0 = Distribution::uniform(space());
        let r = check_intertwining(&g, &d0, &[marginal(0.3), marginal(0.05)], &grid(10, 1.0)).unwrap();
        assert!(!r.components[0].holds());
        assert!(r.components[1].holds());
    }

    #[test]
    fn common_jumps_fail_intertwining_under_point_mass() {
        let g = common_jumps(0.01, 0.02, 0.08);
        let r = check_intrinsic_intertwining(&g, &origin(), &grid(30, 1.0)).unwrap();
        assert!(r.components[0].max_residual > 1e-3);
    }

    #[test]
    fn markov_identity_holds_for_single_jump_components() {
        let g = common_jumps(0.01, 0.02, 0.08);
        let v = check_markov_identity_sampled(&g, &origin(), 0, &[vec![0.0, 5.0, 10.0]], 15.0).unwrap();
        assert!(!v.falsified(), "{v:?}");
        assert!(v.checked_paths > 0 && v.skipped_paths > 0);
    }

    #[test]
    fn markov_identity_falsified_for_inconsistent_contagion() {
        let g = tensor_contagion(0.1, 0.2, 0.3, 0.1, 0.2);
        let d0 = Distribution::uniform(space());
        let v = check_markov_identity_sampled(&g, &d0, 0, &[vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 4.0, 6.0]], 8.0).unwrap();
        assert!(v.falsified());
    }

    #[test]
    fn markov_identity_rejects_long_partitions() {
        let g = common_jumps(0.01, 0.02, 0.08);
        let long: Vec<f64> = (0..6).map(f64::from).collect();
        assert!(check_markov_identity_sampled(&g, &origin(), 0, &[long], 9.0).is_err());
    }

    #[test]
    fn classify_examples() {
        let times = grid(30, 1.0);
        let ind = Generator::independence(vec![marginal(0.03), marginal(0.05)]).unwrap();
        assert_eq!(classify(&ind, &origin(), &times).unwrap().overall(), Consistency::Strong);

        let report = classify(&common_jumps(0.01, 0.02, 0.08), &origin(), &times).unwrap();
        assert_eq!(report.overall(), Consistency::WeakOnly);
        assert!(report.positive_law);
        assert!(report.components.iter().all(|c| c.m_witness.is_some()));

        let bad = classify(&tensor_contagion(0.1, 0.2, 0.3, 0.1, 0.2), &Distribution::uniform(space()), &times).unwrap();
        assert_eq!(bad.overall(), Consistency::NotWeak);
    }

    #[test]
    fn contagion_rates_follow_the_other_component() {
        let g = tensor_contagion(0.01, 0.02, 0.05, 0.03, 0.04);
        let calm = contagion_rates(&g, 0.0, 0, &[0, 0]).unwrap();
        let stressed = contagion_rates(&g, 0.0, 0, &[0, 1]).unwrap();
        assert_abs_diff_eq!(calm[&(0, 1)], 0.01 + 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(stressed[&(0, 1)], 0.01, epsilon = 1e-15);
        let none = tensor_contagion(0.01, 0.02, 0.0, 0.03, 0.04);
        assert_eq!(
            contagion_rates(&none, 0.0, 0, &[0, 0]).unwrap()[&(0, 1)],
            contagion_rates(&none, 0.0, 0, &[0, 1]).unwrap()[&(0, 1)]
        );
    }
}
