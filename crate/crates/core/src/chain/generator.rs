use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::piecewise::merge_breakpoints;
use super::{PiecewiseConstantGenerator, StateSpace, ValidationReport};
use crate::error::{domain, Error, Result};

/// A time-dependent rate matrix given as a function of time.
///
/// `transition` may return the exact transition matrix when a closed form is
/// known; otherwise callers integrate the forward equation numerically.
pub trait RateFunction: Send + Sync + fmt::Debug {
    fn rates(&self, t: f64) -> DMatrix<f64>;

    fn transition(&self, _t: f64, _s: f64) -> Option<DMatrix<f64>> {
        None
    }
}

/// Generator driven by a [`RateFunction`]. Rates may jump at `breakpoints`
/// and are assumed smooth in between.
#[derive(Clone)]
pub struct SmoothGenerator {
    space: StateSpace,
    breakpoints: Vec<f64>,
    rates: Arc<dyn RateFunction>,
}

impl SmoothGenerator {
    pub fn new(space: StateSpace, breakpoints: Vec<f64>, rates: Arc<dyn RateFunction>) -> Result<Self> {
        let probe = rates.rates(0.0);
        if probe.nrows() != space.len() || probe.ncols() != space.len() {
            return domain(format!(
                "rate function returns {}x{} matrices for a space of {} states",
                probe.nrows(),
                probe.ncols(),
                space.len()
            ));
        }
        Ok(Self {
            space,
            breakpoints: merge_breakpoints([breakpoints.as_slice()]),
            rates,
        })
    }

    pub fn rate_function(&self) -> &Arc<dyn RateFunction> {
        &self.rates
    }
}

impl fmt::Debug for SmoothGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothGenerator")
            .field("space", &self.space)
            .field("breakpoints", &self.breakpoints)
            .field("rates", &self.rates)
            .finish()
    }
}

/// Kronecker sum of one-component generators, i.e. independent components.
#[derive(Clone, Debug)]
pub struct IndependenceGenerator {
    space: StateSpace,
    factors: Vec<Generator>,
}

impl IndependenceGenerator {
    pub fn new(factors: Vec<Generator>) -> Result<Self> {
        if factors.is_empty() {
            return domain("independence generator needs at least one marginal");
        }
        if let Some(k) = factors.iter().position(|f| f.space().components() != 1) {
            return domain(format!("marginal {k} is not a one-component generator"));
        }
        let sizes = factors.iter().map(|f| f.space().len()).collect();
        Ok(Self {
            space: StateSpace::new(sizes)?,
            factors,
        })
    }

    pub fn factors(&self) -> &[Generator] {
        &self.factors
    }
}

/// Generator conjugated by a state permutation: entry `(perm[x], perm[y])`
/// of the result is entry `(x, y)` of the inner generator.
#[derive(Clone, Debug)]
pub struct PermutedGenerator {
    inner: Box<Generator>,
    space: StateSpace,
    perm: Vec<usize>,
}

impl PermutedGenerator {
    pub fn new(inner: Generator, space: StateSpace, perm: Vec<usize>) -> Result<Self> {
        check_permutation(&perm, inner.space().len())?;
        if space.len() != perm.len() {
            return domain("permuted space size differs from the inner space");
        }
        Ok(Self {
            inner: Box::new(inner),
            space,
            perm,
        })
    }

    pub fn inner(&self) -> &Generator {
        &self.inner
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub(crate) fn conjugate(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        permute_matrix(m, &self.perm)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return domain(format!("permutation has {} entries, expected {n}", perm.len()));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return domain(format!("{perm:?} is not a permutation of 0..{n}"));
        }
        seen[p] = true;
    }
    Ok(())
}

pub(crate) fn permute_matrix(m: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for x in 0..m.nrows() {
        for y in 0..m.ncols() {
            out[(perm[x], perm[y])] = m[(x, y)];
        }
    }
    out
}

/// `sum_j I x .. x A_j x .. x I` in the lexicographic enumeration.
pub(crate) fn kronecker_sum(factors: &[DMatrix<f64>]) -> DMatrix<f64> {
    let sizes: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
    let mut total = DMatrix::zeros(sizes.iter().product(), sizes.iter().product());
    for (j, a) in factors.iter().enumerate() {
        let left = DMatrix::<f64>::identity(sizes[..j].iter().product(), sizes[..j].iter().product());
        let right = DMatrix::<f64>::identity(
            sizes[j + 1..].iter().product(),
            sizes[j + 1..].iter().product(),
        );
        total += left.kronecker(a).kronecker(&right);
    }
    total
}

/// Any generator the library can propagate.
#[derive(Clone, Debug)]
pub enum Generator {
    Piecewise(PiecewiseConstantGenerator),
    Smooth(SmoothGenerator),
    Independence(IndependenceGenerator),
    Permuted(PermutedGenerator),
}

impl From<PiecewiseConstantGenerator> for Generator {
    fn from(g: PiecewiseConstantGenerator) -> Self {
        Generator::Piecewise(g)
    }
}

impl Generator {
    /// Independence generator of the given marginals; stays piecewise constant
    /// when every marginal is.
    pub fn independence(marginals: Vec<Generator>) -> Result<Self> {
        if marginals.iter().all(|g| matches!(g, Generator::Piecewise(_))) {
            let pcs: Vec<&PiecewiseConstantGenerator> = marginals
                .iter()
                .filter_map(Generator::as_piecewise)
                .collect();
            return Ok(Generator::Piecewise(piecewise_independence(&pcs)?));
        }
        Ok(Generator::Independence(IndependenceGenerator::new(marginals)?))
    }

    pub fn space(&self) -> &StateSpace {
        match self {
            Generator::Piecewise(g) => g.space(),
            Generator::Smooth(g) => &g.space,
            Generator::Independence(g) => &g.space,
            Generator::Permuted(g) => &g.space,
        }
    }

    pub fn as_piecewise(&self) -> Option<&PiecewiseConstantGenerator> {
        match self {
            Generator::Piecewise(g) => Some(g),
            _ => None,
        }
    }

    /// Rate matrix at `t` (right-continuous at breakpoints).
    pub fn rates_at(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0) {
            return domain(format!("generator evaluated at negative time {t}"));
        }
        Ok(self.rates_unchecked(t))
    }

    pub(crate) fn rates_unchecked(&self, t: f64) -> DMatrix<f64> {
        match self {
            Generator::Piecewise(g) => g.at(t).clone(),
            Generator::Smooth(g) => g.rates.rates(t),
            Generator::Independence(g) => {
                let parts: Vec<_> = g.factors.iter().map(|f| f.rates_unchecked(t)).collect();
                kronecker_sum(&parts)
            }
            Generator::Permuted(g) => g.conjugate(&g.inner.rates_unchecked(t)),
        }
    }

    /// Times at which the rates may jump, always starting with 0.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Generator::Piecewise(g) => g.breakpoints().to_vec(),
            Generator::Smooth(g) => g.breakpoints.clone(),
            Generator::Independence(g) => {
                let sets: Vec<Vec<f64>> = g.factors.iter().map(|f| f.breakpoints()).collect();
                merge_breakpoints(sets.iter().map(|v| v.as_slice()))
            }
            Generator::Permuted(g) => g.inner.breakpoints(),
        }
    }

    /// Breakpoints, interval midpoints and `horizon`, all within `[0, horizon]`.
    pub fn sample_times(&self, horizon: f64) -> Vec<f64> {
        let bps: Vec<f64> = self.breakpoints().into_iter().filter(|&v| v < horizon).collect();
        let mut times = Vec::with_capacity(2 * bps.len() + 1);
        for (k, &v) in bps.iter().enumerate() {
            let next = bps.get(k + 1).copied().unwrap_or(horizon);
            times.push(v);
            times.push(0.5 * (v + next));
        }
        times.push(horizon);
        times.dedup();
        times
    }

    /// Checks the generator rules. Piecewise generators are checked on every
    /// segment, others at their [`sample_times`](Self::sample_times) up to
    /// one unit past the last breakpoint.
    pub fn validate(&self) -> ValidationReport {
        if let Generator::Piecewise(g) = self {
            return super::validate_generator(g);
        }
        let horizon = self.breakpoints().last().copied().unwrap_or(0.0) + 1.0;
        let mut report = ValidationReport::default();
        for (k, t) in self.sample_times(horizon).into_iter().enumerate() {
            report.check_matrix(k, &self.rates_unchecked(t));
        }
        report
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidGenerator(report))
        }
    }
}

fn piecewise_independence(marginals: &[&PiecewiseConstantGenerator]) -> Result<PiecewiseConstantGenerator> {
    if marginals.is_empty() {
        return domain("independence generator needs at least one marginal");
    }
    if let Some(k) = marginals.iter().position(|g| g.space().components() != 1) {
        return domain(format!("marginal {k} is not a one-component generator"));
    }
    let breakpoints = merge_breakpoints(marginals.iter().map(|g| g.breakpoints()));
    let space = StateSpace::new(marginals.iter().map(|g| g.space().len()).collect())?;
    let matrices = breakpoints
        .iter()
        .map(|&v| {
            let parts: Vec<_> = marginals.iter().map(|g| g.at(v).clone()).collect();
            kronecker_sum(&parts)
        })
        .collect();
    PiecewiseConstantGenerator::new(space, breakpoints, matrices)
}
