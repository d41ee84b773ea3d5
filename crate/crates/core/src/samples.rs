//! Sample sets for scans: lattice survivors, attractor orbits and exact
//! periodic orbits of the Hénon horseshoe.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{orbit, BoxRegion, Family, MapDef, Orbit, Time};
use crate::error::{Error, Result};
use crate::geometry::Vec2;

const SYMBOLIC_MAX_ITERS: usize = 500;
const SYMBOLIC_TOL: f64 = 1e-15;
const CYCLE_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleStrategy {
    /// Lattice points of `region` whose window `[−window, window]` survives.
    GridSurvivors { region: BoxRegion, grid: usize, window: usize },
    /// `count` consecutive points of the orbit of `seed` after `burn_in` steps.
    AttractorOrbit { seed: Vec2, burn_in: usize, count: usize },
    /// Every point of every Hénon periodic orbit of period `≤ max_period`,
    /// found from its two-symbol itinerary.
    PeriodicOrbits { max_period: usize },
}

/// A sample point together with the orbit window used to evaluate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub point: Vec2,
    /// Set for samples on an exact periodic orbit.
    pub cycle: Option<std::sync::Arc<Vec<Vec2>>>,
    pub cycle_index: usize,
}

impl Sample {
    pub fn free(point: Vec2) -> Self {
        Sample {
            point,
            cycle: None,
            cycle_index: 0,
        }
    }

    /// Orbit window around the sample; periodic samples are cycled.
    pub fn window(&self, map: &MapDef, n_back: usize, n_fwd: usize) -> Result<Orbit> {
        match &self.cycle {
            Some(c) => Ok(Orbit::from_cycle(map, c, self.cycle_index, n_back, n_fwd)),
            None => orbit(map, self.point, n_back, n_fwd),
        }
    }

    /// The sample `k` steps ahead on the same cycle, if periodic.
    pub fn cycle_image(&self, k: usize) -> Option<Vec2> {
        self.cycle.as_ref().map(|c| c[(self.cycle_index + k) % c.len()])
    }
}

pub fn build_samples(map: &MapDef, strategy: &SampleStrategy) -> Result<Vec<Sample>> {
    match strategy {
        SampleStrategy::GridSurvivors { region, grid, window } => {
            Ok(grid_survivors(map, region, *grid, *window).into_iter().map(Sample::free).collect())
        }
        SampleStrategy::AttractorOrbit { seed, burn_in, count } => {
            Ok(attractor_orbit(map, *seed, *burn_in, *count)?.into_iter().map(Sample::free).collect())
        }
        SampleStrategy::PeriodicOrbits { max_period } => {
            let Family::Henon { a, b } = map.family else {
                return Err(Error::InvalidArgument("periodic-orbit sampling needs a Hénon map".into()));
            };
            let mut out = Vec::new();
            for period in 1..=*max_period {
                for cycle in henon_symbolic_cycles(a, b, period)? {
                    let cycle = std::sync::Arc::new(cycle);
                    for i in 0..cycle.len() {
                        out.push(Sample {
                            point: cycle[i],
                            cycle: Some(cycle.clone()),
                            cycle_index: i,
                        });
                    }
                }
            }
            Ok(out)
        }
    }
}

pub fn grid_survivors(map: &MapDef, region: &BoxRegion, grid: usize, window: usize) -> Vec<Vec2> {
    region
        .lattice(grid)
        .into_par_iter()
        .filter(|&p| {
            map.iterate(p, window, Time::Forward).is_ok() && map.iterate(p, window, Time::Backward).is_ok()
        })
        .collect()
}

pub fn attractor_orbit(map: &MapDef, seed: Vec2, burn_in: usize, count: usize) -> Result<Vec<Vec2>> {
    let (mut x, _) = map.iterate(seed, burn_in, Time::Forward)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(x);
        x = map.step(x, Time::Forward)?.0;
    }
    Ok(out)
}

/// Primitive binary words of length `n` that are minimal among their
/// rotations, one per periodic orbit of minimal period `n`.
pub fn necklaces(n: usize) -> Vec<Vec<bool>> {
    if n == 0 || n > 24 {
        return Vec::new();
    }
    (0u32..1 << n)
        .filter_map(|w| {
            let word: Vec<bool> = (0..n).map(|i| w >> (n - 1 - i) & 1 == 1).collect();
            let rotations_larger = (1..n).all(|r| {
                let rot: Vec<bool> = (0..n).map(|i| word[(i + r) % n]).collect();
                rot > word
            });
            rotations_larger.then_some(word)
        })
        .collect()
}

/// Periodic orbit with the given itinerary, found by the contraction
/// `x_i = s_i √(x_{i+1} + a + b x_{i−1})` (valid deep in the horseshoe).
pub fn henon_symbolic_orbit(a: f64, b: f64, symbols: &[bool]) -> Result<Vec<Vec2>> {
    let n = symbols.len();
    let sign = |s: bool| if s { 1.0 } else { -1.0 };
    let mut x: Vec<f64> = symbols.iter().map(|&s| sign(s) * a.sqrt()).collect();
    let mut converged = false;
    for _ in 0..SYMBOLIC_MAX_ITERS {
        let mut change = 0.0f64;
        for i in 0..n {
            let next = x[(i + 1) % n];
            let prev = x[(i + n - 1) % n];
            let radicand = next + a + b * prev;
            if radicand <= 0.0 {
                return Err(Error::InvalidArgument("itinerary not realized: parameters outside the horseshoe regime".into()));
            }
            let new = sign(symbols[i]) * radicand.sqrt();
            change = change.max((new - x[i]).abs());
            x[i] = new;
        }
        if change < SYMBOLIC_TOL * a.sqrt() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::InvalidArgument("symbolic iteration did not converge".into()));
    }
    // Point i is (x_i, x_{i−1}); f maps it to (x_{i+1}, x_i).
    let cycle: Vec<Vec2> = (0..n).map(|i| Vec2::new(x[i], x[(i + n - 1) % n])).collect();
    let map = MapDef::henon(a, b)?;
    for i in 0..n {
        let (q, _) = map.eval(cycle[i], Time::Forward)?;
        if q.dist(cycle[(i + 1) % n]) > CYCLE_RESIDUAL_TOL {
            return Err(Error::InvalidArgument("symbolic orbit failed the residual check".into()));
        }
    }
    Ok(cycle)
}

/// All Hénon periodic orbits of minimal period `period`, one cycle each.
pub fn henon_symbolic_cycles(a: f64, b: f64, period: usize) -> Result<Vec<Vec<Vec2>>> {
    necklaces(period)
        .par_iter()
        .map(|w| henon_symbolic_orbit(a, b, w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn necklace_counts() {
        // Number of primitive binary necklaces of length n.
        let counts: Vec<usize> = (1..=8).map(|n| necklaces(n).len()).collect();
        assert_eq!(counts, vec![2, 1, 2, 3, 6, 9, 18, 30]);
    }

    #[test]
    fn symbolic_fixed_points_match_quadratic() {
        let (a, b) = (6.0, 0.3);
        let disc = ((1.0 + b) * (1.0f64 + b) + 4.0 * a).sqrt();
        let cycles = henon_symbolic_cycles(a, b, 1).unwrap();
        let mut xs: Vec<f64> = cycles.iter().map(|c| c[0].x).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] - ((1.0 + b) - disc) / 2.0).abs() < 1e-12);
        assert!((xs[1] - ((1.0 + b) + disc) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn cycles_are_closed_and_distinct() {
        let map = MapDef::henon(6.0, 0.3).unwrap();
        let samples = build_samples(&map, &SampleStrategy::PeriodicOrbits { max_period: 6 }).unwrap();
        // Σ_{n ≤ 6} n·(primitive necklaces of length n) = 2 + 2 + 6 + 12 + 30 + 54.
        assert_eq!(samples.len(), 106);
        for s in &samples {
            let (q, _) = map.eval(s.point, Time::Forward).unwrap();
            assert!(q.dist(s.cycle_image(1).unwrap()) < 1e-12);
        }
        for i in 0..samples.len() {
            for j in 0..i {
                assert!(samples[i].point.dist(samples[j].point) > 1e-8);
            }
        }
    }

    #[test]
    fn grid_survivors_shrink_with_window() {
        let map = MapDef::henon(6.0, 0.3).unwrap();
        let region = BoxRegion::square(4.0);
        let short = grid_survivors(&map, &region, 80, 1);
        let long = grid_survivors(&map, &region, 80, 3);
        assert!(!short.is_empty());
        assert!(long.len() < short.len());
        assert!(long.iter().all(|p| short.contains(p)));
    }

    #[test]
    fn wrong_regime_is_rejected() {
        assert!(henon_symbolic_orbit(0.1, 0.3, &[true, false]).is_err());
    }
}
