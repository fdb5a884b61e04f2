//! Transition matrices `P_{t,s}` of time-inhomogeneous chains.
//!
//! Constant segments are exponentiated by uniformization and multiplied in
//! time order. Generators whose rates vary smoothly between breakpoints use
//! fourth-order Magnus steps unless their rate function supplies the exact
//! transition matrix.

use nalgebra::DMatrix;

use crate::chain::{Distribution, Generator, StateSpace};
use crate::error::{domain, Result};

/// Poisson tail mass below which the uniformization series is truncated.
pub const UNIFORMIZATION_TAIL: f64 = 1e-14;

/// Step length for Magnus integration of smoothly varying rates.
pub const MAGNUS_STEP: f64 = 0.05;

/// Largest `q * dt` handled in a single uniformization pass; longer spans are
/// split into equal pieces and the piece exponential is raised to a power.
const MAX_POISSON_MEAN: f64 = 8.0;

/// Row-stochastic matrix `P_{t,s}` over a state space.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    space: StateSpace,
    t: f64,
    s: f64,
    entries: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn start(&self) -> f64 {
        self.t
    }

    pub fn end(&self) -> f64 {
        self.s
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[(x, y)]
    }
}

/// `exp(a * dt)` by uniformization with rate `q = max |a_xx|`.
pub fn matrix_exponential(a: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let q = a.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if q == 0.0 || dt == 0.0 {
        return DMatrix::identity(n, n);
    }
    let mean = q * dt;
    let pieces = (mean / MAX_POISSON_MEAN).ceil().max(1.0) as u32;
    let piece = uniformized(a, q, mean / pieces as f64);
    let mut out = piece.clone();
    for _ in 1..pieces {
        out = &out * &piece;
    }
    out
}

fn uniformized(a: &DMatrix<f64>, q: f64, mean: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let p = DMatrix::identity(n, n) + a / q;
    let mut weight = (-mean).exp();
    let mut mass = weight;
    let mut term = DMatrix::identity(n, n);
    let mut out = &term * weight;
    let mut k = 0.0;
    while 1.0 - mass > UNIFORMIZATION_TAIL && k < 500.0 {
        k += 1.0;
        weight *= mean / k;
        mass += weight;
        term = &term * &p;
        out += &term * weight;
    }
    out /= mass;
    // States without exits stay put exactly.
    for x in 0..n {
        if a.row(x).iter().all(|&v| v == 0.0) {
            out.row_mut(x).fill(0.0);
            out[(x, x)] = 1.0;
        }
    }
    out
}

/// `P_{t,s}` for `0 <= t <= s`.
pub fn transition_matrix(g: &Generator, t: f64, s: f64) -> Result<TransitionMatrix> {
    check_interval(t, s)?;
    if let Generator::Piecewise(pc) = g {
        pc.ensure_valid()?;
    }
    Ok(TransitionMatrix {
        space: g.space().clone(),
        t,
        s,
        entries: transition_unchecked(g, t, s),
    })
}

fn check_interval(t: f64, s: f64) -> Result<()> {
    if !(t >= 0.0) || !s.is_finite() {
        return domain(format!("transition requested on [{t}, {s}]"));
    }
    if t > s {
        return domain(format!("transition requested with t = {t} > s = {s}"));
    }
    Ok(())
}

pub(crate) fn transition_unchecked(g: &Generator, t: f64, s: f64) -> DMatrix<f64> {
    let n = g.space().len();
    if s == t {
        return DMatrix::identity(n, n);
    }
    match g {
        Generator::Piecewise(pc) => {
            let mut out = DMatrix::identity(n, n);
            for (lo, hi) in split(pc.breakpoints(), t, s) {
                out = out * matrix_exponential(pc.at(lo), hi - lo);
            }
            out
        }
        Generator::Smooth(sg) => {
            if let Some(exact) = sg.rate_function().transition(t, s) {
                return exact;
            }
            let mut out = DMatrix::identity(n, n);
            for (lo, hi) in split(&g.breakpoints(), t, s) {
                out = out * magnus(g, lo, hi);
            }
            out
        }
        Generator::Independence(ig) => {
            let mut parts = ig.factors().iter().map(|f| transition_unchecked(f, t, s));
            let first = parts.next().expect("at least one factor");
            parts.fold(first, |acc, p| acc.kronecker(&p))
        }
        Generator::Permuted(pg) => pg.conjugate(&transition_unchecked(pg.inner(), t, s)),
    }
}

/// Sub-intervals of `[t, s]` cut at the breakpoints strictly inside it.
fn split(breakpoints: &[f64], t: f64, s: f64) -> Vec<(f64, f64)> {
    let mut cuts = vec![t];
    cuts.extend(breakpoints.iter().copied().filter(|&v| v > t && v < s));
    cuts.push(s);
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Fourth-order Magnus propagator for the row equation `P' = P A(u)` on a
/// span where `A` is smooth.
fn magnus(g: &Generator, a: f64, b: f64) -> DMatrix<f64> {
    let n = g.space().len();
    let steps = ((b - a) / MAGNUS_STEP).ceil().max(1.0) as usize;
    let h = (b - a) / steps as f64;
    let offset = 3.0_f64.sqrt() / 6.0;
    let mut out = DMatrix::identity(n, n);
    for k in 0..steps {
        let u = a + k as f64 * h;
        let a1 = g.rates_unchecked(u + (0.5 - offset) * h);
        let a2 = g.rates_unchecked(u + (0.5 + offset) * h);
        let commutator = &a1 * &a2 - &a2 * &a1;
        let omega = (&a1 + &a2) * (0.5 * h) + commutator * (3.0_f64.sqrt() / 12.0 * h * h);
        out = out * matrix_exponential(&omega, 1.0);
    }
    out
}

/// Law at time `t` of the chain started from `d0` at time 0.
pub fn propagate(d0: &Distribution, g: &Generator, t: f64) -> Result<Distribution> {
    check_space(d0, g)?;
    let p = transition_matrix(g, 0.0, t)?;
    Ok(apply(d0, p.entries()))
}

/// Laws at each of the increasing `times`, reusing earlier steps.
pub fn propagate_many(d0: &Distribution, g: &Generator, times: &[f64]) -> Result<Vec<Distribution>> {
    check_space(d0, g)?;
    if let Generator::Piecewise(pc) = g {
        pc.ensure_valid()?;
    }
    let mut out = Vec::with_capacity(times.len());
    let mut current = d0.clone();
    let mut at = 0.0;
    for &t in times {
        check_interval(at, t)?;
        current = apply(&current, &transition_unchecked(g, at, t));
        at = t;
        out.push(current.clone());
    }
    Ok(out)
}

fn check_space(d0: &Distribution, g: &Generator) -> Result<()> {
    if d0.space() != g.space() {
        return domain(format!(
            "distribution on {} but generator on {}",
            d0.space(),
            g.space()
        ));
    }
    Ok(())
}

/// Row vector times matrix.
pub(crate) fn apply(d: &Distribution, p: &DMatrix<f64>) -> Distribution {
    let n = p.ncols();
    let mut probs = vec![0.0; n];
    for (x, &px) in d.probs().iter().enumerate() {
        if px != 0.0 {
            for (y, out) in probs.iter_mut().enumerate() {
                *out += px * p[(x, y)];
            }
        }
    }
    Distribution::from_raw(d.space().clone(), probs)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::chain::{PiecewiseConstantGenerator, RateFunction, SmoothGenerator};

    fn absorbing(rate: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-rate, rate, 0.0, 0.0])
    }

    fn common_jumps(a: f64, b: f64, c: f64) -> DMatrix<f64> {
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

    fn ex1_s1() -> Generator {
        let mats = [0.08, 0.15, 0.2, 0.2]
            .iter()
            .map(|&c| common_jumps(0.01, 0.02, c))
            .collect();
        PiecewiseConstantGenerator::new(StateSpace::uniform(2, 2).unwrap(), vec![0.0, 3.0, 10.0, 30.0], mats)
            .unwrap()
            .into()
    }

    /// Forward-equation RK4 with fixed step, restarted at each breakpoint so
    /// that no step straddles a jump in the rates.
    fn rk4(g: &Generator, t: f64, s: f64, h: f64) -> DMatrix<f64> {
        let n = g.space().len();
        let mut p = DMatrix::<f64>::identity(n, n);
        for (lo, hi) in split(&g.breakpoints(), t, s) {
            let steps = ((hi - lo) / h).round().max(1.0) as usize;
            let step = (hi - lo) / steps as f64;
            // Rates are sampled just inside the span so the segment on the
            // left of a breakpoint is never read from its right end.
            let rate = |at: f64| g.rates_at(at.clamp(lo, hi - 1e-12)).unwrap();
            for k in 0..steps {
                let u = lo + k as f64 * step;
                let k1 = &p * rate(u);
                let k2 = (&p + &k1 * (step / 2.0)) * rate(u + step / 2.0);
                let k3 = (&p + &k2 * (step / 2.0)) * rate(u + step / 2.0);
                let k4 = (&p + &k3 * step) * rate(u + step);
                p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0);
            }
        }
        p
    }

    #[test]
    fn zero_generator_and_zero_time_give_identity() {
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(matrix_exponential(&DMatrix::zeros(4, 4), 3.0), id);
        assert_eq!(matrix_exponential(&common_jumps(0.1, 0.2, 0.3), 0.0), id);
    }

    #[test]
    fn two_state_exponential_closed_form() {
        let e = matrix_exponential(&absorbing(1.0), 1.0);
        assert_abs_diff_eq!(e[(0, 0)], (-1.0_f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(0, 1)], 1.0 - (-1.0_f64).exp(), epsilon = 1e-14);
        assert_eq!(e[(1, 0)], 0.0);
        assert_eq!(e[(1, 1)], 1.0);
    }

    #[test]
    fn large_poisson_mean_is_split() {
        let e = matrix_exponential(&absorbing(50.0), 20.0);
        assert!(e[(0, 0)] >= 0.0 && e[(0, 0)] < 1e-300);
        assert_abs_diff_eq!(e[(0, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_absorbing_transition() {
        let g: Generator = PiecewiseConstantGenerator::constant(StateSpace::single(2).unwrap(), absorbing(0.1))
            .unwrap()
            .into();
        let p = transition_matrix(&g, 0.0, 3.0).unwrap();
        assert_abs_diff_eq!(p.get(0, 0), (-0.3_f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(p.get(0, 1), 1.0 - (-0.3_f64).exp(), epsilon = 1e-14);
        assert!(transition_matrix(&g, 3.0, 1.0).is_err());
    }

    #[test]
    fn piecewise_product_matches_rk4() {
        let g = ex1_s1();
        let p = transition_matrix(&g, 0.0, 30.0).unwrap();
        let oracle = rk4(&g, 0.0, 30.0, 1e-3);
        assert!((p.entries() - oracle).amax() < 1e-8);
    }

    #[test]
    fn invalid_generator_is_rejected() {
        let mut m = common_jumps(0.1, 0.2, 0.3);
        m[(0, 1)] = -0.1;
        let g: Generator = PiecewiseConstantGenerator::constant(StateSpace::uniform(2, 2).unwrap(), m)
            .unwrap()
            .into();
        assert!(transition_matrix(&g, 0.0, 1.0).is_err());
    }

    #[derive(Debug)]
    struct Wavy;

    impl RateFunction for Wavy {
        fn rates(&self, t: f64) -> DMatrix<f64> {
            let a = 0.05 + 0.03 * (0.4 * t).sin();
            let b = 0.02 + 0.01 * (0.3 * t).cos();
            let c = 0.04 * (-0.05 * t).exp();
            common_jumps(a, b, c)
        }
    }

    #[test]
    fn magnus_matches_rk4_for_smooth_rates() {
        let g = Generator::Smooth(
            SmoothGenerator::new(StateSpace::uniform(2, 2).unwrap(), vec![0.0, 7.5], Arc::new(Wavy)).unwrap(),
        );
        let p = transition_matrix(&g, 1.0, 20.0).unwrap();
        let oracle = rk4(&g, 1.0, 20.0, 1e-3);
        assert!((p.entries() - oracle).amax() < 1e-8);
    }

    #[test]
    fn propagate_absorbing_point_mass_stays() {
        let g = ex1_s1();
        let d = Distribution::point_mass(StateSpace::uniform(2, 2).unwrap(), &[1, 1]).unwrap();
        for t in [0.0, 1.0, 17.0] {
            assert_eq!(propagate(&d, &g, t).unwrap().probs(), &[0.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn propagate_many_matches_single_calls() {
        let g = ex1_s1();
        let d = Distribution::point_mass(StateSpace::uniform(2, 2).unwrap(), &[0, 0]).unwrap();
        let times = [0.0, 2.5, 3.0, 12.0, 31.0];
        let many = propagate_many(&d, &g, &times).unwrap();
        for (t, law) in times.iter().zip(&many) {
            let single = propagate(&d, &g, *t).unwrap();
            for (a, b) in law.probs().iter().zip(single.probs()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-13);
            }
        }
    }

    fn arb_generator() -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(0.0..0.5_f64, 16).prop_map(|v| {
            let mut m = DMatrix::from_row_slice(4, 4, &v);
            for x in 0..4 {
                m[(x, x)] = 0.0;
                let row: f64 = m.row(x).sum();
                m[(x, x)] = -row;
            }
            m
        })
    }

    proptest! {
        #[test]
        fn exponential_is_stochastic(a in arb_generator(), dt in 0.0..40.0_f64) {
            let e = matrix_exponential(&a, dt);
            for x in 0..4 {
                prop_assert!((e.row(x).sum() - 1.0).abs() < 1e-12);
                prop_assert!(e.row(x).iter().all(|&v| v >= -1e-15 && v <= 1.0 + 1e-12));
            }
        }

        #[test]
        fn chapman_kolmogorov(a in arb_generator(), b in arb_generator(), t in 0.0..5.0_f64, v in 0.0..5.0_f64, s in 0.0..5.0_f64) {
            let g: Generator = PiecewiseConstantGenerator::new(
                StateSpace::uniform(2, 2).unwrap(), vec![0.0, 2.0], vec![a, b],
            ).unwrap().into();
            let mut pts = [t, v, s];
            pts.sort_by(f64::total_cmp);
            let [t, v, s] = pts;
            let direct = transition_matrix(&g, t, s).unwrap().into_matrix();
            let composed = transition_matrix(&g, t, v).unwrap().into_matrix() * transition_matrix(&g, v, s).unwrap().into_matrix();
            prop_assert!((direct - composed).amax() < 1e-9);
        }
    }
}
