use std::fmt;

use nalgebra::DMatrix;

use super::{StateSpace, INPUT_TOL};
use crate::error::{domain, Error, Result};

fn check_breakpoints(breakpoints: &[f64]) -> Result<()> {
    match breakpoints.first() {
        None => return domain("at least one breakpoint (0) is required"),
        Some(&v0) if v0 != 0.0 => return domain(format!("first breakpoint must be 0, got {v0}")),
        _ => {}
    }
    if breakpoints.iter().any(|v| !v.is_finite()) {
        return domain("breakpoints must be finite");
    }
    if let Some(w) = breakpoints.windows(2).find(|w| w[1] <= w[0]) {
        return domain(format!(
            "breakpoints must be strictly increasing ({} then {})",
            w[0], w[1]
        ));
    }
    Ok(())
}

/// Index `k` of the interval `[v_k, v_{k+1})` containing `t`.
fn segment_of(breakpoints: &[f64], t: f64) -> usize {
    breakpoints.partition_point(|&v| v <= t).saturating_sub(1)
}

/// Scalar function constant on `[v_k, v_{k+1})`, extended by its last value.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstantFn {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstantFn {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_breakpoints(&breakpoints)?;
        if values.len() != breakpoints.len() {
            return domain(format!(
                "{} values for {} breakpoints",
                values.len(),
                breakpoints.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("values must be finite");
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            breakpoints: vec![0.0],
            values: vec![value],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, t: f64) -> f64 {
        self.values[segment_of(&self.breakpoints, t)]
    }

    /// `int_a^b f(u) du` for `0 <= a <= b`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for (k, &v) in self.values.iter().enumerate() {
            let lo = self.breakpoints[k].max(a);
            let hi = self.breakpoints.get(k + 1).copied().unwrap_or(f64::INFINITY).min(b);
            if hi > lo {
                total += v * (hi - lo);
            }
        }
        total
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Re-express on a finer breakpoint set containing all of ours.
    pub fn refine(&self, breakpoints: &[f64]) -> Self {
        Self {
            breakpoints: breakpoints.to_vec(),
            values: breakpoints.iter().map(|&v| self.at(v)).collect(),
        }
    }
}

/// Sorted union of breakpoint sets.
pub(crate) fn merge_breakpoints<'a>(sets: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut all: Vec<f64> = sets.into_iter().flatten().copied().collect();
    all.push(0.0);
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

#[derive(Clone, Debug, PartialEq)]
pub enum ViolationKind {
    NegativeOffDiagonal { col: usize, value: f64 },
    PositiveDiagonal { value: f64 },
    RowSum { sum: f64 },
    NonFinite { col: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub segment: usize,
    pub row: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "segment {} row {}: ", self.segment, self.row)?;
        match &self.kind {
            ViolationKind::NegativeOffDiagonal { col, value } => {
                write!(f, "negative off-diagonal rate {value} in column {col}")
            }
            ViolationKind::PositiveDiagonal { value } => write!(f, "positive diagonal {value}"),
            ViolationKind::RowSum { sum } => write!(f, "row sums to {sum:e}, not 0"),
            ViolationKind::NonFinite { col } => write!(f, "non-finite entry in column {col}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn check_matrix(&mut self, segment: usize, m: &DMatrix<f64>) {
        for r in 0..m.nrows() {
            let mut sum = 0.0;
            let mut finite = true;
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if !v.is_finite() {
                    self.violations.push(Violation {
                        segment,
                        row: r,
                        kind: ViolationKind::NonFinite { col: c },
                    });
                    finite = false;
                    continue;
                }
                sum += v;
                if c != r && v < 0.0 {
                    self.violations.push(Violation {
                        segment,
                        row: r,
                        kind: ViolationKind::NegativeOffDiagonal { col: c, value: v },
                    });
                }
            }
            if m[(r, r)] > 0.0 {
                self.violations.push(Violation {
                    segment,
                    row: r,
                    kind: ViolationKind::PositiveDiagonal { value: m[(r, r)] },
                });
            }
            if finite && sum.abs() > INPUT_TOL {
                self.violations.push(Violation {
                    segment,
                    row: r,
                    kind: ViolationKind::RowSum { sum },
                });
            }
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Rate matrix function that is constant on each `[v_k, v_{k+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstantGenerator {
    space: StateSpace,
    breakpoints: Vec<f64>,
    matrices: Vec<DMatrix<f64>>,
    report: ValidationReport,
}

impl PiecewiseConstantGenerator {
    /// Builds the generator and records (but does not reject) rate violations;
    /// see [`validate_generator`]. Shape errors are rejected.
    pub fn new(space: StateSpace, breakpoints: Vec<f64>, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        check_breakpoints(&breakpoints)?;
        if matrices.len() != breakpoints.len() {
            return domain(format!(
                "{} segment matrices for {} breakpoints",
                matrices.len(),
                breakpoints.len()
            ));
        }
        let n = space.len();
        if let Some(k) = matrices.iter().position(|m| m.nrows() != n || m.ncols() != n) {
            return domain(format!("segment {k} matrix is not {n}x{n}"));
        }
        let mut report = ValidationReport::default();
        for (k, m) in matrices.iter().enumerate() {
            report.check_matrix(k, m);
        }
        Ok(Self {
            space,
            breakpoints,
            matrices,
            report,
        })
    }

    pub fn constant(space: StateSpace, matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(space, vec![0.0], vec![matrix])
    }

    /// Like [`new`](Self::new) but fails when any segment violates the generator rules.
    pub fn validated(space: StateSpace, breakpoints: Vec<f64>, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let g = Self::new(space, breakpoints, matrices)?;
        g.ensure_valid()?;
        Ok(g)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        if self.report.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidGenerator(self.report.clone()))
        }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn segment_index(&self, t: f64) -> usize {
        segment_of(&self.breakpoints, t)
    }

    pub fn at(&self, t: f64) -> &DMatrix<f64> {
        &self.matrices[self.segment_index(t)]
    }

    /// Same generator on a refined breakpoint set.
    pub fn refine(&self, breakpoints: &[f64]) -> Self {
        let matrices = breakpoints.iter().map(|&v| self.at(v).clone()).collect();
        Self {
            space: self.space.clone(),
            breakpoints: breakpoints.to_vec(),
            matrices,
            report: self.report.clone(),
        }
    }
}

pub fn validate_generator(g: &PiecewiseConstantGenerator) -> ValidationReport {
    g.report.clone()
}

/// Right-continuous lookup of the segment matrix active at `t`.
pub fn evaluate_generator(g: &PiecewiseConstantGenerator, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) {
        return domain(format!("generator evaluated at negative time {t}"));
    }
    Ok(g.at(t).clone())
}
