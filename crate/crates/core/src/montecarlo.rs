//! Exact path simulation for piecewise-constant generators.
//!
//! Inside a segment the holding time is exponential with the current exit
//! rate. At a segment boundary the holding time is drawn again with the new
//! rates, which is exact by memorylessness. Path `k` of a run with seed `s`
//! uses a ChaCha8 stream `k` keyed by `s`, so results do not depend on the
//! number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::{Distribution, PiecewiseConstantGenerator};
use crate::error::{domain, Result};

/// One realisation of the chain on `[0, terminal]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    /// `jump_times[k]` is when the chain entered `states[k + 1]`.
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
    pub terminal: f64,
}

impl SamplePath {
    pub fn initial_state(&self) -> usize {
        self.states[0]
    }

    /// State at `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.states[k]
    }

    pub fn final_state(&self) -> usize {
        *self.states.last().expect("a path always has an initial state")
    }
}

fn draw_index(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = f64> + Clone, total: f64) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = k;
        acc += w;
        if target < acc {
            return k;
        }
    }
    last
}

fn check_inputs(g: &PiecewiseConstantGenerator, d0: &Distribution, horizon: f64) -> Result<()> {
    g.ensure_valid()?;
    if d0.space() != g.space() {
        return domain("initial law and generator live on different spaces");
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return domain(format!("horizon {horizon} must be non-negative"));
    }
    Ok(())
}

fn simulate_stream(g: &PiecewiseConstantGenerator, d0: &Distribution, horizon: f64, seed: u64, stream: u64) -> SamplePath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let probs = d0.probs();
    let mut x = draw_index(&mut rng, probs.iter().copied(), probs.iter().sum());
    let mut path = SamplePath {
        jump_times: Vec::new(),
        states: vec![x],
        terminal: horizon,
    };
    let bps = g.breakpoints();
    let mut t = 0.0;
    while t < horizon {
        let k = g.segment_index(t);
        let seg_end = bps.get(k + 1).copied().unwrap_or(f64::INFINITY).min(horizon);
        let q = &g.segments()[k];
        let rate = -q[(x, x)];
        if rate <= 0.0 {
            if seg_end >= horizon {
                break;
            }
            t = seg_end;
            continue;
        }
        let u: f64 = rng.random();
        let hold = -(-u).ln_1p() / rate;
        if t + hold >= seg_end {
            t = seg_end;
            continue;
        }
        t += hold;
        let off = (0..q.ncols()).map(|y| if y == x { 0.0 } else { q[(x, y)] });
        x = draw_index(&mut rng, off, rate);
        path.jump_times.push(t);
        path.states.push(x);
    }
    path
}

/// Simulates one path from `d0` up to `horizon`. Deterministic in `seed`.
pub fn simulate(g: &PiecewiseConstantGenerator, d0: &Distribution, horizon: f64, seed: u64) -> Result<SamplePath> {
    check_inputs(g, d0, horizon)?;
    Ok(simulate_stream(g, d0, horizon, seed, 0))
}

/// Simulates `n_paths` independent paths in parallel; path `k` is the one
/// [`simulate`] would give on stream `k`.
pub fn simulate_many(
    g: &PiecewiseConstantGenerator,
    d0: &Distribution,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<SamplePath>> {
    check_inputs(g, d0, horizon)?;
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|k| simulate_stream(g, d0, horizon, seed, k))
        .collect())
}

/// A Monte Carlo proportion with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl Estimate {
    fn from_hits(hits: usize, n: usize) -> Self {
        let mean = hits as f64 / n as f64;
        Self {
            mean,
            std_error: (mean * (1.0 - mean) / n as f64).sqrt(),
            n_paths: n,
        }
    }

    /// Whether `value` lies within `k` standard errors. A zero standard error
    /// requires an exact match up to `1 / n_paths`.
    pub fn within(&self, value: f64, k: f64) -> bool {
        let band = (k * self.std_error).max(1.0 / self.n_paths as f64);
        (self.mean - value).abs() <= band
    }
}

/// Fraction of paths with at least `h` components `i` in state `z[i]` at
/// `horizon`.
pub fn estimate_event(
    g: &PiecewiseConstantGenerator,
    d0: &Distribution,
    horizon: f64,
    z: &[usize],
    h: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_paths == 0 {
        return domain("need at least one path");
    }
    let space = g.space();
    if z.len() != space.components() {
        return domain("target state has the wrong number of components");
    }
    space.index_of(z)?;
    check_inputs(g, d0, horizon)?;
    let hits = (0..n_paths as u64)
        .into_par_iter()
        .filter(|&k| {
            let y = simulate_stream(g, d0, horizon, seed, k).final_state();
            (0..z.len()).filter(|&i| space.coordinate(y, i) == z[i]).count() >= h
        })
        .count();
    Ok(Estimate::from_hits(hits, n_paths))
}

/// Empirical joint law at each of `times`.
pub fn empirical_law(
    g: &PiecewiseConstantGenerator,
    d0: &Distribution,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n_paths == 0 {
        return domain("need at least one path");
    }
    let horizon = times.iter().copied().fold(0.0, f64::max);
    check_inputs(g, d0, horizon)?;
    let n = g.space().len();
    let counts = (0..n_paths as u64)
        .into_par_iter()
        .fold(
            || vec![0usize; times.len() * n],
            |mut acc, k| {
                let path = simulate_stream(g, d0, horizon, seed, k);
                for (j, &t) in times.iter().enumerate() {
                    acc[j * n + path.state_at(t)] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0usize; times.len() * n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(counts
        .chunks(n)
        .map(|c| c.iter().map(|&v| v as f64 / n_paths as f64).collect())
        .collect())
}

/// Empirical law of component `i` at each of `times`.
pub fn empirical_marginal_law(
    g: &PiecewiseConstantGenerator,
    d0: &Distribution,
    i: usize,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let space = g.space();
    space.check_component(i)?;
    let joint = empirical_law(g, d0, times, n_paths, seed)?;
    Ok(joint
        .iter()
        .map(|law| {
            let mut out = vec![0.0; space.component_size(i)];
            for (y, &p) in law.iter().enumerate() {
                out[space.coordinate(y, i)] += p;
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;
    use crate::chain::{PiecewiseConstantFn, StateSpace};
    use crate::semigroup::propagate;
    use crate::structures::{example_family, origin, Family, FamilyParams};

    fn space() -> StateSpace {
        StateSpace::uniform(2, 2).unwrap()
    }

    fn family(f: Family, entries: &[(&str, f64)]) -> PiecewiseConstantGenerator {
        let p: FamilyParams = entries
            .iter()
            .map(|(k, v)| (k.to_string(), PiecewiseConstantFn::constant(*v)))
            .collect();
        example_family(f, &p).unwrap().generator.as_piecewise().unwrap().clone()
    }

    #[test]
    fn zero_generator_never_jumps() {
        let g = PiecewiseConstantGenerator::constant(space(), DMatrix::zeros(4, 4)).unwrap();
        let path = simulate(&g, &Distribution::uniform(space()), 30.0, 7).unwrap();
        assert!(path.jump_times.is_empty());
    }

    #[test]
    fn same_seed_same_path() {
        let g = family(Family::CommonJumps, &[("a", 0.1), ("b", 0.2), ("c", 0.3)]);
        let d = origin(&space());
        assert_eq!(simulate(&g, &d, 30.0, 11).unwrap(), simulate(&g, &d, 30.0, 11).unwrap());
        let many = simulate_many(&g, &d, 30.0, 4, 11).unwrap();
        assert_eq!(many[0], simulate(&g, &d, 30.0, 11).unwrap());
    }

    #[test]
    fn paths_are_consistent() {
        let g = family(Family::CommonJumps, &[("a", 0.1), ("b", 0.2), ("c", 0.3)]);
        let d = origin(&space());
        for path in simulate_many(&g, &d, 30.0, 200, 3).unwrap() {
            assert!(path.jump_times.windows(2).all(|w| w[0] < w[1]));
            assert!(path.jump_times.iter().all(|&t| t <= 30.0));
            assert!(path.states.windows(2).all(|w| w[0] != w[1]));
            // (1,1) is absorbing.
            if let Some(k) = path.states.iter().position(|&s| s == 3) {
                assert_eq!(k, path.states.len() - 1);
            }
        }
    }

    #[test]
    fn extreme_contagion_jumps_once_to_joint_default() {
        let g = family(Family::ExtremeContagion, &[("c", 0.1)]);
        for path in simulate_many(&g, &origin(&space()), 30.0, 500, 5).unwrap() {
            assert!(path.states == vec![0] || path.states == vec![0, 3]);
        }
    }

    #[test]
    fn anti_contagion_never_defaults_jointly() {
        let g = family(Family::ExtremeAntiContagion, &[("a", 0.1), ("b", 0.2)]);
        let e = estimate_event(&g, &origin(&space()), 30.0, &[1, 1], 2, 2000, 1).unwrap();
        assert_eq!(e.mean, 0.0);
    }

    #[test]
    fn horizon_zero_is_an_indicator() {
        let g = family(Family::CommonJumps, &[("a", 0.1), ("b", 0.2), ("c", 0.3)]);
        let d = Distribution::point_mass(space(), &[1, 1]).unwrap();
        assert_eq!(estimate_event(&g, &d, 0.0, &[1, 1], 2, 10, 1).unwrap().mean, 1.0);
        assert_eq!(estimate_event(&g, &origin(&space()), 0.0, &[1, 1], 1, 10, 1).unwrap().mean, 0.0);
    }

    #[test]
    fn empirical_law_matches_propagation() {
        let g = family(Family::CommonJumps, &[("a", 0.01), ("b", 0.02), ("c", 0.08)]);
        let d = origin(&space());
        let n = 20_000;
        let laws = empirical_law(&g, &d, &[0.0, 10.0], n, 9).unwrap();
        assert_eq!(laws[0], vec![1.0, 0.0, 0.0, 0.0]);
        let exact = propagate(&d, &g.clone().into(), 10.0).unwrap();
        for (p, q) in laws[1].iter().zip(exact.probs()) {
            let se = (q * (1.0 - q) / n as f64).sqrt();
            assert!((p - q).abs() <= 4.0 * se + 1.0 / n as f64, "{p} vs {q}");
        }
        let marginal = empirical_marginal_law(&g, &d, 1, &[10.0], n, 9).unwrap();
        assert_default_mass_matches(&marginal[0], &laws[1]);
    }

    fn assert_default_mass_matches(marginal: &[f64], joint: &[f64]) {
        assert!((marginal[1] - (joint[1] + joint[3])).abs() < 1e-12);
    }

    #[test]
    fn empty_runs_are_rejected() {
        let g = family(Family::ExtremeContagion, &[("c", 0.1)]);
        assert!(estimate_event(&g, &origin(&space()), 1.0, &[1, 1], 2, 0, 1).is_err());
    }
}
