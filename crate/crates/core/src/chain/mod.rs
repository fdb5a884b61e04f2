//! State spaces, distributions and time-inhomogeneous generators.
//!
//! Product states are enumerated lexicographically with component 0 most
//! significant, so that Kronecker products of per-component matrices line up
//! with the flat index used everywhere else. Components are zero-based.

mod generator;
mod piecewise;

pub use generator::{Generator, IndependenceGenerator, PermutedGenerator, RateFunction, SmoothGenerator};
pub use piecewise::{
    evaluate_generator, validate_generator, PiecewiseConstantFn, PiecewiseConstantGenerator,
    ValidationReport, Violation, ViolationKind,
};
pub(crate) use generator::{check_permutation, permute_matrix};
#[cfg(test)]
pub(crate) use generator::kronecker_sum as generator_kronecker_sum;
pub(crate) use piecewise::merge_breakpoints;

use std::fmt;

use crate::error::{domain, Error, Result};

/// Row-sum and probability-sum tolerance for user supplied inputs.
pub const INPUT_TOL: f64 = 1e-12;

/// Product of finite component state sets `E_1 x ... x E_m`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StateSpace {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl StateSpace {
    pub fn new(component_sizes: Vec<usize>) -> Result<Self> {
        if component_sizes.is_empty() {
            return domain("state space needs at least one component");
        }
        if component_sizes.iter().any(|&n| n == 0) {
            return domain("component state sets must be non-empty");
        }
        let mut strides = vec![1; component_sizes.len()];
        for i in (0..component_sizes.len() - 1).rev() {
            strides[i] = strides[i + 1] * component_sizes[i + 1];
        }
        let len = component_sizes.iter().product();
        Ok(Self {
            sizes: component_sizes,
            strides,
            len,
        })
    }

    /// `m` components that all share `{0, .., k}`.
    pub fn uniform(m: usize, states_per_component: usize) -> Result<Self> {
        Self::new(vec![states_per_component; m])
    }

    /// One-component space with `n` states.
    pub fn single(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn components(&self) -> usize {
        self.sizes.len()
    }

    pub fn component_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn component_size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn check_component(&self, i: usize) -> Result<()> {
        if i >= self.sizes.len() {
            return domain(format!(
                "component {i} out of range (space has {} components)",
                self.sizes.len()
            ));
        }
        Ok(())
    }

    pub fn index_of(&self, tuple: &[usize]) -> Result<usize> {
        if tuple.len() != self.sizes.len() {
            return domain(format!(
                "state tuple has {} coordinates, expected {}",
                tuple.len(),
                self.sizes.len()
            ));
        }
        let mut idx = 0;
        for (c, (&x, &n)) in tuple.iter().zip(&self.sizes).enumerate() {
            if x >= n {
                return domain(format!("coordinate {c} = {x} outside 0..{n}"));
            }
            idx += x * self.strides[c];
        }
        Ok(idx)
    }

    pub fn tuple_of(&self, index: usize) -> Vec<usize> {
        debug_assert!(index < self.len);
        self.sizes
            .iter()
            .zip(&self.strides)
            .map(|(&n, &s)| (index / s) % n)
            .collect()
    }

    /// Coordinate `i` of the flat state `index`.
    pub fn coordinate(&self, index: usize, i: usize) -> usize {
        (index / self.strides[i]) % self.sizes[i]
    }

    /// Flat indices of the hyperplane `H(x^i) = {x in E : x^i = value}`.
    pub fn hyperplane(&self, i: usize, value: usize) -> Vec<usize> {
        (0..self.len)
            .filter(|&x| self.coordinate(x, i) == value)
            .collect()
    }

    /// Replace coordinate `i` of `index` by `value`.
    pub fn with_coordinate(&self, index: usize, i: usize, value: usize) -> usize {
        let old = self.coordinate(index, i);
        index - old * self.strides[i] + value * self.strides[i]
    }

    pub fn label(&self, index: usize) -> String {
        let parts: Vec<String> = self.tuple_of(index).iter().map(|x| x.to_string()).collect();
        format!("({})", parts.join(","))
    }
}

impl fmt::Display for StateSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.sizes.iter().map(|n| n.to_string()).collect();
        write!(f, "E[{}]", parts.join("x"))
    }
}

/// Probability vector over a [`StateSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    space: StateSpace,
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(space: StateSpace, probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(space, probs, INPUT_TOL)
    }

    pub(crate) fn with_tolerance(space: StateSpace, probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.len() != space.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} probabilities for a space of {} states",
                probs.len(),
                space.len()
            )));
        }
        if let Some((k, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < -tol)
        {
            return Err(Error::InvalidDistribution(format!(
                "entry {} = {p} is negative",
                space.label(k)
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { space, probs })
    }

    pub fn point_mass(space: StateSpace, state: &[usize]) -> Result<Self> {
        let idx = space.index_of(state)?;
        let mut probs = vec![0.0; space.len()];
        probs[idx] = 1.0;
        Ok(Self { space, probs })
    }

    pub fn uniform(space: StateSpace) -> Self {
        let n = space.len();
        Self {
            space,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: &[usize]) -> Result<f64> {
        Ok(self.probs[self.space.index_of(state)?])
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub(crate) fn from_raw(space: StateSpace, probs: Vec<f64>) -> Self {
        Self { space, probs }
    }
}

/// Law of component `i`: sums the joint over each hyperplane `H(x^i)`.
pub fn marginal_distribution(d: &Distribution, i: usize) -> Result<Distribution> {
    let space = d.space();
    space.check_component(i)?;
    let mut probs = vec![0.0; space.component_size(i)];
    for (x, p) in d.probs().iter().enumerate() {
        probs[space.coordinate(x, i)] += p;
    }
    Ok(Distribution::from_raw(
        StateSpace::single(space.component_size(i))?,
        probs,
    ))
}
