//! Step-by-step construction of weak structures from one-step-ahead
//! marginal generators.
//!
//! On a step of length `dt` the transition is replaced by `I + Λ dt` and the
//! intertwining identity `Θ_n (I + Λ dt) = (I + Λ^i dt) Θ_{n+1}` is imposed
//! for every component. `Θ_{n+1}` depends on `Λ` only through
//! `d_{n+1} = d_n (I + Λ dt)` and the component law at `t_{n+1}`, and the
//! latter is fixed in advance by the marginal step `m_n (I + Λ^i dt)`.
//! Writing `Θ_{n+1}(u, z) = d_{n+1}(z) / m_{n+1}(u)` makes the system linear
//! in the off-diagonal rates, which are then found by non-negative least
//! squares. The solver keeps the minimum-norm solution on the active set.

use nalgebra::{DMatrix, DVector};

use crate::chain::{Distribution, Generator, PiecewiseConstantGenerator, StateSpace};
use crate::consistency::{theta_from_law, ThetaOperator, MASS_TOL};
use crate::error::{domain, Error, Result};
use crate::semigroup::apply;

use super::MarkovStructureSpec;

pub const NNLS_MAX_ITER: usize = 500;
/// Accepted residual, relative to `dt`.
pub const STEP_RESIDUAL_TOL: f64 = 1e-8;

/// Off-diagonal entries that may carry a rate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsityMask {
    n: usize,
    allowed: Vec<bool>,
}

impl SparsityMask {
    /// Every off-diagonal entry allowed.
    pub fn full(n: usize) -> Self {
        let allowed = (0..n * n).map(|k| k / n != k % n).collect();
        Self { n, allowed }
    }

    /// Off-diagonal entries that are non-zero in `pattern`.
    pub fn from_pattern(pattern: &DMatrix<f64>) -> Self {
        let n = pattern.nrows();
        let allowed = (0..n * n).map(|k| k / n != k % n && pattern[(k / n, k % n)] != 0.0).collect();
        Self { n, allowed }
    }

    /// Union of the non-zero patterns of every segment of a generator.
    pub fn from_generator(g: &PiecewiseConstantGenerator) -> Self {
        let n = g.space().len();
        let mut mask = Self {
            n,
            allowed: vec![false; n * n],
        };
        for m in g.segments() {
            let other = Self::from_pattern(m);
            for (a, b) in mask.allowed.iter_mut().zip(other.allowed) {
                *a |= b;
            }
        }
        mask
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn allows(&self, x: usize, y: usize) -> bool {
        self.allowed[x * self.n + y]
    }

    fn entries(&self) -> Vec<(usize, usize)> {
        (0..self.n * self.n)
            .filter(|&k| self.allowed[k])
            .map(|k| (k / self.n, k % self.n))
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct StepOptions {
    pub mask: Option<SparsityMask>,
    /// Accept states of zero probability; rows of `Θ` for component values of
    /// zero probability are then left out of the system.
    pub allow_zero_mass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepSolution {
    pub rates: DMatrix<f64>,
    /// `max |Θ_n (I + Λ dt) - (I + Λ^i dt) Θ_{n+1}|` over components and defined rows.
    pub residual: f64,
    /// Active-set iterations of the least-squares solve.
    pub iterations: usize,
    pub next_law: Distribution,
}

/// One step of the discrete construction.
///
/// `marginals_next[i]` is the rate matrix of component `i` on the step.
/// Returns [`Error::Infeasible`] when the final residual exceeds `1e-8 * dt`.
pub fn solve_weak_structure_step(
    d_n: &Distribution,
    marginals_next: &[DMatrix<f64>],
    dt: f64,
    options: &StepOptions,
) -> Result<StepSolution> {
    solve_step(d_n, marginals_next, dt, options, 0)
}

fn solve_step(
    d_n: &Distribution,
    marginals_next: &[DMatrix<f64>],
    dt: f64,
    options: &StepOptions,
    step: usize,
) -> Result<StepSolution> {
    let space = d_n.space();
    check_inputs(space, d_n, marginals_next, dt, options)?;
    let n = space.len();
    let unknowns = options.mask.clone().unwrap_or_else(|| SparsityMask::full(n)).entries();
    let thetas_n: Vec<ThetaOperator> = (0..space.components())
        .map(|i| theta_from_law(d_n, i, 0.0))
        .collect::<Result<_>>()?;

    let (a, b) = assemble(d_n, &thetas_n, marginals_next, dt, &unknowns);
    let (lambda, iterations) = nnls(&a, &b, NNLS_MAX_ITER);
    let rates = rate_matrix(n, &unknowns, lambda.as_slice());
    if rates.diagonal().iter().any(|&v| -v * dt > 1.0) {
        return Err(Error::Infeasible {
            step,
            reason: "solved rates make I + Λ dt invalid; reduce dt".into(),
        });
    }
    let next_law = euler_step(d_n, &rates, dt);
    let residual = step_residual(space, &thetas_n, &next_law, marginals_next, &rates, dt)?;
    if !(residual < STEP_RESIDUAL_TOL * dt) {
        return Err(Error::Infeasible {
            step,
            reason: format!("intertwining residual {residual:.3e} exceeds {:.1e}", STEP_RESIDUAL_TOL * dt),
        });
    }
    Ok(StepSolution {
        rates,
        residual,
        iterations,
        next_law,
    })
}

fn check_inputs(
    space: &StateSpace,
    d_n: &Distribution,
    marginals_next: &[DMatrix<f64>],
    dt: f64,
    options: &StepOptions,
) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return domain(format!("step length {dt} must be positive"));
    }
    if !options.allow_zero_mass && !d_n.is_strictly_positive() {
        return domain("the law at the start of the step must be strictly positive");
    }
    if marginals_next.len() != space.components() {
        return domain(format!(
            "{} marginal generators for {} components",
            marginals_next.len(),
            space.components()
        ));
    }
    for (i, m) in marginals_next.iter().enumerate() {
        let k = space.component_size(i);
        if m.nrows() != k || m.ncols() != k {
            return domain(format!("marginal generator {i} is not {k}x{k}"));
        }
        if m.diagonal().iter().any(|&v| -v * dt > 1.0) {
            return domain(format!(
                "marginal {i} has rate above 1/dt = {}; I + Λ dt would not be stochastic",
                1.0 / dt
            ));
        }
    }
    if let Some(mask) = &options.mask {
        if mask.size() != space.len() {
            return domain("sparsity mask does not match the state space");
        }
    }
    Ok(())
}

fn rate_matrix(n: usize, unknowns: &[(usize, usize)], values: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (&(x, y), &v) in unknowns.iter().zip(values) {
        m[(x, y)] += v;
        m[(x, x)] -= v;
    }
    m
}

fn euler_step(d: &Distribution, rates: &DMatrix<f64>, dt: f64) -> Distribution {
    let n = rates.nrows();
    let p = DMatrix::identity(n, n) + rates * dt;
    apply(d, &p)
}

/// Stacks, over components `i`, defined rows `v` and states `z`, the
/// equations
/// `Σ_{x^i = v} d(x) P(x, z) / m(v) - P^i(v, z^i) Σ_x d(x) P(x, z) / m'(z^i) = 0`
/// with `P = I + Λ dt` and `m' = m P^i`, divided by `dt`. The component laws
/// `Σ_{z^i = u} (d P)(z) = m'(u)` are added as well: they follow from the
/// equations above when every row is defined, but not otherwise.
fn assemble(
    d_n: &Distribution,
    thetas_n: &[ThetaOperator],
    marginals: &[DMatrix<f64>],
    dt: f64,
    unknowns: &[(usize, usize)],
) -> (DMatrix<f64>, DVector<f64>) {
    let space = d_n.space();
    let d = d_n.probs();
    let mut coeffs: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();
    for (i, th) in thetas_n.iter().enumerate() {
        let k = space.component_size(i);
        let p_i = DMatrix::identity(k, k) + &marginals[i] * dt;
        let m = th.component_law();
        let m_next: Vec<f64> = (0..k).map(|u| (0..k).map(|v| m[v] * p_i[(v, u)]).sum()).collect();
        for v in (0..k).filter(|&v| th.is_defined(v)) {
            for z in 0..space.len() {
                let u = space.coordinate(z, i);
                let w = if m_next[u] > MASS_TOL { p_i[(v, u)] / m_next[u] } else { 0.0 };
                // Weight of d(x) P(x, z) in the equation.
                let weight = |x: usize| {
                    let own = if space.coordinate(x, i) == v { 1.0 / m[v] } else { 0.0 };
                    d[x] * (own - w)
                };
                let row = unknowns
                    .iter()
                    .map(|&(x, y)| {
                        if z == y {
                            weight(x)
                        } else if z == x {
                            -weight(x)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                coeffs.push(row);
                rhs.push(-weight(z) / dt);
            }
        }
        for u in 0..k {
            let row = unknowns
                .iter()
                .map(|&(x, y)| {
                    let into = f64::from(u8::from(space.coordinate(y, i) == u));
                    let out = f64::from(u8::from(space.coordinate(x, i) == u));
                    d[x] * (into - out)
                })
                .collect();
            coeffs.push(row);
            rhs.push((m_next[u] - m[u]) / dt);
        }
    }
    let a = DMatrix::from_fn(coeffs.len(), unknowns.len(), |r, c| coeffs[r][c]);
    (a, DVector::from_vec(rhs))
}

fn step_residual(
    space: &StateSpace,
    thetas_n: &[ThetaOperator],
    next_law: &Distribution,
    marginals: &[DMatrix<f64>],
    rates: &DMatrix<f64>,
    dt: f64,
) -> Result<f64> {
    let n = space.len();
    let step = DMatrix::identity(n, n) + rates * dt;
    let mut worst = 0.0_f64;
    for (i, th) in thetas_n.iter().enumerate() {
        let k = space.component_size(i);
        let th_next = theta_from_law(next_law, i, 0.0)?;
        let lhs = th.entries() * &step;
        let rhs = (DMatrix::identity(k, k) + &marginals[i] * dt) * th_next.entries();
        for v in (0..k).filter(|&v| th.is_defined(v)) {
            worst = worst.max((lhs.row(v) - rhs.row(v)).amax());
        }
    }
    Ok(worst)
}

/// Non-negative least squares by the Lawson–Hanson active-set method. The
/// passive-set subproblem uses the pseudo-inverse, so the returned point is
/// the minimum-norm solution supported on the final passive set.
pub(crate) fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize) -> (DVector<f64>, usize) {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    if n == 0 || a.nrows() == 0 {
        return (x, 0);
    }
    let tol = 10.0 * f64::EPSILON * a.abs().max() * a.nrows().max(n) as f64;
    let mut passive = vec![false; n];
    let solve = |passive: &[bool]| -> DVector<f64> {
        let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let mut out = DVector::zeros(n);
        if cols.is_empty() {
            return out;
        }
        let sub = a.select_columns(&cols);
        let pinv = sub.pseudo_inverse(1e-14).expect("non-negative tolerance");
        let s = pinv * b;
        for (k, &j) in cols.iter().enumerate() {
            out[j] = s[k];
        }
        out
    };
    let mut iterations = 0;
    loop {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            iterations += 1;
            let s = solve(&passive);
            let blocking: Vec<usize> = (0..n).filter(|&k| passive[k] && s[k] <= tol).collect();
            if blocking.is_empty() || iterations >= max_iter {
                x = s.map(|v| v.max(0.0));
                break;
            }
            let alpha = blocking
                .iter()
                .map(|&k| x[k] / (x[k] - s[k]))
                .fold(f64::INFINITY, f64::min);
            x += (s - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k] <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
        if iterations >= max_iter {
            break;
        }
    }
    (x, iterations)
}

/// Rate matrices of each marginal at the start of each of `n_steps` steps.
pub fn marginal_schedule(marginals: &[Generator], dt: f64, n_steps: usize) -> Result<Vec<Vec<DMatrix<f64>>>> {
    (0..n_steps)
        .map(|k| marginals.iter().map(|m| m.rates_at(k as f64 * dt)).collect())
        .collect()
}

#[derive(Debug)]
pub struct ChainFailure {
    pub step: usize,
    pub error: Error,
}

/// Result of [`chain_steps`]: the generator over the solved steps and, if a
/// step failed, which one and why.
#[derive(Debug)]
pub struct ChainOutcome {
    pub generator: Option<PiecewiseConstantGenerator>,
    pub steps_completed: usize,
    pub residuals: Vec<f64>,
    pub failure: Option<ChainFailure>,
}

impl ChainOutcome {
    /// The assembled structure, if every step succeeded.
    pub fn into_spec(
        self,
        label: impl Into<String>,
        initial: Distribution,
        prescribed_marginals: Vec<Generator>,
    ) -> Result<MarkovStructureSpec> {
        if let Some(f) = self.failure {
            return Err(f.error);
        }
        let g = self.generator.ok_or_else(|| Error::Domain("no steps were solved".into()))?;
        MarkovStructureSpec::new(label, g.into(), initial, prescribed_marginals)
    }
}

/// Runs [`solve_weak_structure_step`] over `n_steps` steps of length `dt`,
/// carrying the law forward, and concatenates the step generators.
///
/// States of zero probability are allowed: a point-mass start is the usual
/// case. The rates of such states are left at zero unless the system
/// constrains them.
pub fn chain_steps(
    initial: &Distribution,
    schedule: &[Vec<DMatrix<f64>>],
    dt: f64,
    n_steps: usize,
    mask: Option<SparsityMask>,
) -> ChainOutcome {
    let options = StepOptions {
        mask,
        allow_zero_mass: true,
    };
    let mut law = initial.clone();
    let mut matrices = Vec::with_capacity(n_steps);
    let mut residuals = Vec::with_capacity(n_steps);
    let mut failure = None;
    for step in 0..n_steps {
        let Some(marginals) = schedule.get(step) else {
            failure = Some(ChainFailure {
                step,
                error: Error::Domain(format!("marginal schedule has no entry for step {step}")),
            });
            break;
        };
        match solve_step(&law, marginals, dt, &options, step) {
            Ok(sol) => {
                matrices.push(sol.rates);
                residuals.push(sol.residual);
                law = sol.next_law;
                // Clean round-off so that unreachable states stay at zero mass.
                law = Distribution::from_raw(
                    law.space().clone(),
                    law.probs().iter().map(|&p| if p.abs() < MASS_TOL * 1e-2 { 0.0 } else { p }).collect(),
                );
            }
            Err(error) => {
                failure = Some(ChainFailure { step, error });
                break;
            }
        }
    }
    let steps_completed = matrices.len();
    let generator = if matrices.is_empty() {
        None
    } else {
        let breakpoints = (0..steps_completed).map(|k| k as f64 * dt).collect();
        PiecewiseConstantGenerator::new(initial.space().clone(), breakpoints, matrices).ok()
    };
    ChainOutcome {
        generator,
        steps_completed,
        residuals,
        failure,
    }
}
