//! Reference computations that share no code with the library: a fixed-step
//! RK4 integrator for the forward equation and the printed closed-form
//! marginal intensities of the two-name families.
#![allow(dead_code)]

use markov_structures::chain::PiecewiseConstantFn;
use markov_structures::structures::{Family, FamilyParams};
use nalgebra::DMatrix;

pub const RK4_STEP: f64 = 1e-3;

/// `P(t0, r)` for every `r` in `record`, from `dP/ds = P Λ(s)` with classical
/// RK4. Steps never straddle a breakpoint, and rates on `[lo, hi)` are read
/// strictly inside the interval so that a jump at `hi` is not seen early.
pub fn rk4_transitions(
    rates: impl Fn(f64) -> DMatrix<f64>,
    breakpoints: &[f64],
    t0: f64,
    record: &[f64],
    step: f64,
) -> Vec<DMatrix<f64>> {
    let end = record.iter().copied().fold(t0, f64::max);
    let mut knots: Vec<f64> = breakpoints
        .iter()
        .chain(record)
        .copied()
        .filter(|&b| b > t0 && b < end)
        .collect();
    knots.push(end);
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let n = rates(t0).nrows();
    let mut p = DMatrix::<f64>::identity(n, n);
    let mut at = vec![(t0, p.clone())];
    let mut lo = t0;
    for &hi in &knots {
        let steps = ((hi - lo) / step).ceil().max(1.0) as usize;
        let h = (hi - lo) / steps as f64;
        let inside = |u: f64| rates(u.min(hi - 1e-9 * (1.0 + hi.abs())));
        for k in 0..steps {
            let u = lo + k as f64 * h;
            let k1 = &p * inside(u);
            let k2 = (&p + &k1 * (h / 2.0)) * inside(u + h / 2.0);
            let k3 = (&p + &k2 * (h / 2.0)) * inside(u + h / 2.0);
            let k4 = (&p + &k3 * h) * inside(u + h);
            p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        at.push((hi, p.clone()));
        lo = hi;
    }
    record
        .iter()
        .map(|&r| {
            at.iter()
                .find(|(t, _)| *t == r)
                .map(|(_, m)| m.clone())
                .expect("record times are knots")
        })
        .collect()
}

fn int(f: &PiecewiseConstantFn, u: f64) -> f64 {
    f.integral(0.0, u)
}

/// The printed marginal default intensities `(λ¹_u, λ²_u)` of a family, in the
/// component order of the library's state labelling.
pub fn printed_intensities(family: Family, params: &FamilyParams, u: f64) -> [f64; 2] {
    let p = |name: &str| &params[name];
    match family {
        Family::CommonJumps | Family::SymmetricCommonJumps => {
            let a = p("a").at(u);
            let b = if family == Family::CommonJumps { p("b").at(u) } else { a };
            let c = p("c").at(u);
            let e = (-(a + b) * u - int(p("c"), u)).exp();
            let l1 = (c * (a + b + c) * e + a * b * (-b * u).exp()) / (a * (-b * u).exp() + c * e);
            let l2 = (c * (a + b + c) * e + a * b * (-a * u).exp()) / (b * (-a * u).exp() + c * e);
            [l1, l2]
        }
        Family::ExtremeContagion => {
            let c = p("c").at(u);
            [c, c]
        }
        Family::ExtremeAntiContagion => {
            let (a, b) = (p("a").at(u), p("b").at(u));
            let e = (-int(p("a"), u) - int(p("b"), u)).exp();
            [b * (a + b) * e / (a + b * e), a * (a + b) * e / (b + a * e)]
        }
        Family::SystemicImportance => {
            let (a, c, d) = (p("a").at(u), p("c").at(u), p("d").at(u));
            let e = (-int(p("a"), u) - int(p("c"), u)).exp();
            let f = (-int(p("d"), u)).exp();
            let theta = e / ((c - d) / (a + c - d) * e + a / (a + c - d) * f);
            [theta * (c - d) + d, a + c]
        }
    }
}
