//! Exact default intensity of one component of a two-name structure.
//!
//! While component `i` has not defaulted the pair sits in one of two states:
//! `A`, where neither name has defaulted, and `B`, where only the other name
//! has. Mass leaves `A` at rate `r_A`, of which `q` feeds `B`; mass leaves
//! `B` at rate `r_B`. Component `i` defaults from `A` at rate `h_A` and from
//! `B` at rate `h_B`. With all five rates piecewise constant the masses have
//! a closed form on each interval, and the intensity of the component is
//! `(h_A P_A + h_B P_B) / (P_A + P_B)`.

use nalgebra::DMatrix;

use crate::chain::{PiecewiseConstantFn, RateFunction};
use crate::error::{domain, Result};

use super::merged;

/// `(1 - e^{-x}) / x`, continuous at 0.
fn relative_expm1(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// Rates of the two-state survival model, one value per interval.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoPhaseHazard {
    breakpoints: Vec<f64>,
    exit_a: Vec<f64>,
    feed: Vec<f64>,
    exit_b: Vec<f64>,
    hazard_a: Vec<f64>,
    hazard_b: Vec<f64>,
    /// `(P_A, P_B)` at each breakpoint.
    start: Vec<(f64, f64)>,
}

impl TwoPhaseHazard {
    /// Builds the model from rate schedules and the initial masses of `A` and `B`.
    pub fn new(
        exit_a: &PiecewiseConstantFn,
        feed: &PiecewiseConstantFn,
        exit_b: &PiecewiseConstantFn,
        hazard_a: &PiecewiseConstantFn,
        hazard_b: &PiecewiseConstantFn,
        initial: (f64, f64),
    ) -> Result<Self> {
        let fns = [exit_a, feed, exit_b, hazard_a, hazard_b];
        let (breakpoints, values) = merged(&fns);
        if values.iter().flatten().any(|&v| v < 0.0) {
            return domain("hazard model rates must be non-negative");
        }
        if initial.0 < 0.0 || initial.1 < 0.0 || initial.0 + initial.1 <= 0.0 {
            return domain("component must start undefaulted with positive probability");
        }
        let mut model = Self {
            breakpoints,
            exit_a: values[0].clone(),
            feed: values[1].clone(),
            exit_b: values[2].clone(),
            hazard_a: values[3].clone(),
            hazard_b: values[4].clone(),
            start: vec![initial],
        };
        for k in 1..model.breakpoints.len() {
            let tau = model.breakpoints[k] - model.breakpoints[k - 1];
            let next = model.evolve(k - 1, tau);
            model.start.push(next);
        }
        Ok(model)
    }

    fn segment(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&v| v <= t).saturating_sub(1)
    }

    fn evolve(&self, k: usize, tau: f64) -> (f64, f64) {
        let (pa, pb) = self.start[k];
        let (ra, rb) = (self.exit_a[k], self.exit_b[k]);
        let decay_b = (-rb * tau).exp();
        let a = pa * (-ra * tau).exp();
        let b = pb * decay_b + self.feed[k] * pa * decay_b * tau * relative_expm1((ra - rb) * tau);
        (a, b)
    }

    /// `(P_A(t), P_B(t))`.
    pub fn masses(&self, t: f64) -> (f64, f64) {
        let k = self.segment(t);
        self.evolve(k, t - self.breakpoints[k])
    }

    /// Probability that the component has not defaulted by `t`.
    pub fn survival(&self, t: f64) -> f64 {
        let (a, b) = self.masses(t);
        a + b
    }

    /// Default intensity at `t`.
    pub fn intensity(&self, t: f64) -> f64 {
        let k = self.segment(t);
        let (a, b) = self.masses(t);
        if a + b <= 0.0 {
            return self.hazard_a[k];
        }
        (self.hazard_a[k] * a + self.hazard_b[k] * b) / (a + b)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
}

impl RateFunction for TwoPhaseHazard {
    fn rates(&self, t: f64) -> DMatrix<f64> {
        let l = self.intensity(t);
        DMatrix::from_row_slice(2, 2, &[-l, l, 0.0, 0.0])
    }

    fn transition(&self, t: f64, s: f64) -> Option<DMatrix<f64>> {
        let (st, ss) = (self.survival(t), self.survival(s));
        let stay = if st > 0.0 { (ss / st).min(1.0) } else { 1.0 };
        Some(DMatrix::from_row_slice(2, 2, &[stay, 1.0 - stay, 0.0, 1.0]))
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn constant(v: f64) -> PiecewiseConstantFn {
        PiecewiseConstantFn::constant(v)
    }

    #[test]
    fn constant_rates_match_common_jump_closed_form() {
        let (a, b, c) = (0.01, 0.02, 0.08);
        let h = TwoPhaseHazard::new(
            &constant(a + b + c),
            &constant(a),
            &constant(b),
            &constant(b + c),
            &constant(b),
            (1.0, 0.0),
        )
        .unwrap();
        for u in [0.0, 1.0, 7.5, 30.0] {
            let e = (-(a + b + c) * u).exp();
            let expected = (c * (a + b + c) * e + a * b * (-b * u).exp()) / (a * (-b * u).exp() + c * e);
            assert_abs_diff_eq!(h.intensity(u), expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn equal_exit_rates_use_the_limit() {
        let h = TwoPhaseHazard::new(&constant(0.1), &constant(0.05), &constant(0.1), &constant(0.05), &constant(0.1), (1.0, 0.0))
            .unwrap();
        let (pa, pb) = h.masses(2.0);
        assert_abs_diff_eq!(pa, (-0.2_f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(pb, 0.05 * 2.0 * (-0.2_f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn survival_solves_the_intensity_ode() {
        let c = PiecewiseConstantFn::new(vec![0.0, 3.0, 10.0], vec![0.08, 0.15, 0.2]).unwrap();
        let exit_a = c.map(|v| v + 0.03);
        let hazard_a = c.map(|v| v + 0.02);
        let h = TwoPhaseHazard::new(&exit_a, &constant(0.01), &constant(0.02), &hazard_a, &constant(0.02), (1.0, 0.0))
            .unwrap();
        // Composite Simpson on each interval where the rates are constant.
        let mut integral = 0.0;
        for (lo, hi) in [(0.0, 3.0), (3.0, 10.0), (10.0, 25.0)] {
            let n = 2000;
            let dt = (hi - lo) / n as f64;
            let f = |u: f64| h.intensity(u.min(hi - 1e-12));
            for k in 0..n {
                let u = lo + k as f64 * dt;
                integral += dt / 6.0 * (f(u) + 4.0 * f(u + 0.5 * dt) + f(u + dt));
            }
        }
        assert_abs_diff_eq!(h.survival(25.0), (-integral).exp(), epsilon = 1e-7);
    }

    #[test]
    fn exact_transition_is_survival_ratio() {
        let h = TwoPhaseHazard::new(&constant(0.3), &constant(0.1), &constant(0.05), &constant(0.2), &constant(0.05), (1.0, 0.0))
            .unwrap();
        let p = h.transition(2.0, 5.0).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], h.survival(5.0) / h.survival(2.0), epsilon = 1e-15);
        assert_eq!(p[(1, 1)], 1.0);
    }
}
