//! Finite-window detection of critical points and directions.
//!
//! A point is critical when some direction keeps `g^n ≥ 1` for every integer
//! `n`. At window `N` the score of a point is
//! `max_θ min_{|n| ≤ N} ln g^n(θ)`, so critical points score `≥ 0` at every
//! window. The one-sided scores restrict the minimum to `n ≥ 0` or `n ≤ 0`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::trace_orbit;
use crate::dynamics::{orbit, MapDef, Orbit, Time};
use crate::error::{Error, Result};
use crate::geometry::{singular_pair, slope, Direction, Mat2, Vec2};
use crate::samples::Sample;

pub const DEFAULT_GRID: usize = 720;
pub const DEFAULT_REFINE_TOL: f64 = 1e-6;
pub const DEFAULT_THRESHOLD: f64 = -0.1;
/// Number of grid local maxima polished by golden-section search.
const REFINE_CANDIDATES: usize = 4;
const EXACT_RETURN: f64 = 1e-14;
/// Values this close count as ties, so rounding noise cannot move the choice.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub grid: usize,
    pub refine_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            grid: DEFAULT_GRID,
            refine_tol: DEFAULT_REFINE_TOL,
        }
    }
}

/// Maximizes `objective` over RP¹: dense grid, then golden-section
/// refinement of the best few grid local maxima. Ties keep the earliest grid
/// direction.
pub fn maximize_direction(objective: impl Fn(f64) -> f64, opts: &SearchOptions) -> (Direction, f64) {
    let n = opts.grid.max(1);
    let h = PI / n as f64;
    let values: Vec<f64> = (0..n).map(|i| objective(i as f64 * h)).collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_i = values.iter().position(|&v| v >= max - TIE_TOL).unwrap_or(0);
    let mut best = (best_i as f64 * h, values[best_i]);

    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let prev = values[(i + n - 1) % n];
            let next = values[(i + 1) % n];
            values[i] >= prev && values[i] >= next
        })
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    for &i in peaks.iter().take(REFINE_CANDIDATES) {
        let center = i as f64 * h;
        let (theta, value) = golden_section(&objective, center - h, center + h, opts.refine_tol);
        // Polishing the chosen peak always counts; another peak must win clearly.
        if value > best.1 + TIE_TOL || (i == best_i && value > best.1) {
            best = (theta, value);
        }
    }
    (Direction::new(best.0), best.1)
}

fn golden_section(objective: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    let mut best = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            if x1 >= x2 || x1 <= lo {
                break;
            }
            f1 = objective(x1);
            if f1 > best.1 {
                best = (x1, f1);
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            if x2 <= x1 || x2 >= hi {
                break;
            }
            f2 = objective(x2);
            if f2 > best.1 {
                best = (x2, f2);
            }
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = objective(mid);
    if fm > best.1 {
        best = (mid, fm);
    }
    best
}

/// Per-step data for evaluating `ln g^n(θ)` along a fixed orbit window.
#[derive(Debug, Clone)]
pub struct WindowCocycle {
    forward: Vec<(Mat2, f64)>,
    backward: Vec<(Mat2, f64)>,
}

impl WindowCocycle {
    pub fn new(orbit: &Orbit) -> Result<Self> {
        let forward = (0..orbit.n_fwd as i64)
            .map(|n| {
                let j = orbit.jacobian(n).expect("inside window");
                let det = j.check_invertible()?;
                Ok((j, det.abs().ln()))
            })
            .collect::<Result<Vec<_>>>()?;
        let backward = (1..=orbit.n_back as i64)
            .map(|n| {
                let inv = orbit.jacobian(-n).expect("inside window").inverse()?;
                Ok((inv, inv.det().abs().ln()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WindowCocycle { forward, backward })
    }

    fn leg_min(steps: &[(Mat2, f64)], theta: f64, upto: usize) -> f64 {
        let (s, c) = theta.sin_cos();
        let mut u = Vec2::new(c, s);
        let mut acc = 0.0f64;
        let mut min = 0.0f64;
        for (jac, log_det) in steps.iter().take(upto) {
            let w = jac.apply(u);
            let len = w.norm();
            acc += log_det - 2.0 * len.ln();
            min = min.min(acc);
            u = w * (1.0 / len);
        }
        min
    }

    /// `min_{0 ≤ n ≤ N} ln g^n(θ)`.
    pub fn forward_min(&self, theta: f64) -> f64 {
        Self::leg_min(&self.forward, theta, usize::MAX)
    }

    /// `min_{−N ≤ n ≤ 0} ln g^n(θ)`.
    pub fn backward_min(&self, theta: f64) -> f64 {
        Self::leg_min(&self.backward, theta, usize::MAX)
    }

    pub fn two_sided_min(&self, theta: f64) -> f64 {
        self.forward_min(theta).min(self.backward_min(theta))
    }

    /// Forward log-values `ln g^n(θ)` for `n = 1..=horizon`.
    pub fn forward_profile(&self, theta: f64, horizon: usize) -> Vec<f64> {
        let (s, c) = theta.sin_cos();
        let mut u = Vec2::new(c, s);
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(horizon);
        for (jac, log_det) in self.forward.iter().take(horizon) {
            let w = jac.apply(u);
            let len = w.norm();
            acc += log_det - 2.0 * len.ln();
            out.push(acc);
            u = w * (1.0 / len);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    pub base: Vec2,
    pub window: usize,
    pub score: f64,
    pub best_direction: Direction,
    pub forward_score: f64,
    pub backward_score: f64,
    /// `ln g^n` at the best direction for `n = −N..=N`.
    pub profile: Vec<f64>,
}

fn escaped_error(orb: &Orbit) -> Option<Error> {
    orb.escaped_at().map(|index| Error::Escaped {
        index,
        point: orb.point(index).unwrap_or(orb.base),
    })
}

/// Window-`N` criticality of `p`. Fails with `Escaped` when the orbit window
/// leaves the domain.
pub fn criticality_score(map: &MapDef, p: Vec2, window: usize, opts: &SearchOptions) -> Result<CriticalityReport> {
    let orb = orbit(map, p, window, window)?;
    if let Some(e) = escaped_error(&orb) {
        return Err(e);
    }
    criticality_of_orbit(&orb, opts)
}

/// Criticality over a precomputed symmetric orbit window (e.g. one assembled
/// from invariant-manifold parameterizations).
pub fn criticality_of_orbit(orb: &Orbit, opts: &SearchOptions) -> Result<CriticalityReport> {
    let window = orb.n_back.min(orb.n_fwd);
    let wc = WindowCocycle::new(orb)?;
    let (best_direction, score) = maximize_direction(|t| wc.two_sided_min(t), opts);
    let (_, fwd) = maximize_direction(|t| wc.forward_min(t), opts);
    let (_, bwd) = maximize_direction(|t| wc.backward_min(t), opts);
    let at_best = best_direction.theta();
    let forward_score = fwd.max(wc.forward_min(at_best));
    let backward_score = bwd.max(wc.backward_min(at_best));
    let profile = trace_orbit(orb, best_direction)?.log_g;
    Ok(CriticalityReport {
        base: orb.base,
        window,
        score,
        best_direction,
        forward_score,
        backward_score,
        profile,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HomothetyVerdict {
    FarAtThisHorizon,
    HomothetyLikeWitnessFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarFromHomothetyReport {
    pub base: Vec2,
    pub delta: f64,
    pub horizon: usize,
    pub witness_direction: Option<Direction>,
    /// Best achieved `min_n` distance of `ln g^n` to the band edges (positive
    /// inside the band).
    pub margin: f64,
    pub verdict: HomothetyVerdict,
}

/// Searches for a direction with `(1−δ)^n < g^n < (1+δ)^n` for `0 < n ≤ horizon`.
pub fn far_from_homotheties(
    map: &MapDef,
    p: Vec2,
    delta: f64,
    horizon: usize,
    opts: &SearchOptions,
) -> Result<FarFromHomothetyReport> {
    if !(delta > 0.0 && delta < 1.0) || horizon == 0 {
        return Err(Error::InvalidArgument("need 0 < delta < 1 and horizon > 0".into()));
    }
    let orb = orbit(map, p, 0, horizon)?;
    if let Some(e) = escaped_error(&orb) {
        return Err(e);
    }
    let wc = WindowCocycle::new(&orb)?;
    let lo = (1.0 - delta).ln();
    let hi = (1.0 + delta).ln();
    let margin_of = |theta: f64| {
        wc.forward_profile(theta, horizon)
            .iter()
            .enumerate()
            .map(|(i, &lg)| {
                let n = (i + 1) as f64;
                (lg - n * lo).min(n * hi - lg)
            })
            .fold(f64::INFINITY, f64::min)
    };
    let (dir, margin) = maximize_direction(margin_of, opts);
    let found = margin > 0.0;
    Ok(FarFromHomothetyReport {
        base: p,
        delta,
        horizon,
        witness_direction: found.then_some(dir),
        margin,
        verdict: if found {
            HomothetyVerdict::HomothetyLikeWitnessFound
        } else {
            HomothetyVerdict::FarAtThisHorizon
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSlope {
    pub n: usize,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalCandidate {
    pub point: Vec2,
    pub direction: Direction,
    pub window: usize,
    pub score: f64,
    /// `slope(e_n, direction)` with `e_n` the most contracted direction of
    /// `Df^n`; conformal products are skipped.
    pub alignment_slopes: Vec<AlignmentSlope>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    /// Every non-escaping sample, in input order.
    pub reports: Vec<CriticalityReport>,
    /// Samples at or above threshold, by descending score.
    pub candidates: Vec<CriticalCandidate>,
    pub escaped: usize,
}

pub fn alignment_slopes(map: &MapDef, p: Vec2, direction: Direction, horizon: usize) -> Vec<AlignmentSlope> {
    let mut prod = Mat2::IDENTITY;
    let mut x = p;
    let mut out = Vec::new();
    for n in 1..=horizon {
        let Ok((next, jac)) = map.eval(x, Time::Forward) else { break };
        prod = jac * prod;
        let s = prod.max_abs();
        if s > 0.0 && s.is_finite() {
            prod = prod.scale(1.0 / s);
        }
        x = next;
        if let Ok(sp) = singular_pair(&prod) {
            out.push(AlignmentSlope {
                n,
                slope: slope(sp.e, direction),
            });
        }
    }
    out
}

pub fn critical_scan(
    map: &MapDef,
    samples: &[Vec2],
    window: usize,
    threshold: f64,
    opts: &SearchOptions,
) -> Result<ScanResult> {
    let samples: Vec<Sample> = samples.iter().copied().map(Sample::free).collect();
    critical_scan_samples(map, &samples, window, threshold, opts)
}

/// Scan over samples; periodic samples use cycled windows.
pub fn critical_scan_samples(
    map: &MapDef,
    samples: &[Sample],
    window: usize,
    threshold: f64,
    opts: &SearchOptions,
) -> Result<ScanResult> {
    let results: Vec<Option<CriticalityReport>> = samples
        .par_iter()
        .map(|s| {
            let orb = s.window(map, window, window)?;
            if orb.escaped_at().is_some() {
                return Ok(None);
            }
            criticality_of_orbit(&orb, opts).map(Some)
        })
        .collect::<Result<_>>()?;
    let escaped = results.iter().filter(|r| r.is_none()).count();
    let reports: Vec<CriticalityReport> = results.into_iter().flatten().collect();
    let mut candidates: Vec<CriticalCandidate> = reports
        .par_iter()
        .filter(|r| r.score >= threshold)
        .map(|r| CriticalCandidate {
            point: r.base,
            direction: r.best_direction,
            window,
            score: r.score,
            alignment_slopes: alignment_slopes(map, r.base, r.best_direction, window),
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.point.x.total_cmp(&b.point.x))
            .then(a.point.y.total_cmp(&b.point.y))
    });
    Ok(ScanResult {
        reports,
        candidates,
        escaped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recurrence {
    /// `min_k (1/k) ln d(f^k c, c)` and the minimizing `k`.
    Rate { value: f64, k: usize },
    /// The orbit returned to `c` (distance below 1e-14) at step `k`.
    ExactReturn { k: usize },
}

pub fn recurrence_rate(map: &MapDef, c: Vec2, horizon: usize) -> Result<Recurrence> {
    let mut x = c;
    let mut best: Option<(f64, usize)> = None;
    for k in 1..=horizon {
        let (next, _) = map.step(x, Time::Forward).map_err(|e| match e {
            Error::Escaped { point, .. } => Error::Escaped { index: k as i64 - 1, point },
            other => other,
        })?;
        x = next;
        let d = x.dist(c);
        if d < EXACT_RETURN {
            return Ok(Recurrence::ExactReturn { k });
        }
        let rate = d.ln() / k as f64;
        if best.is_none_or(|(v, _)| rate < v) {
            best = Some((rate, k));
        }
    }
    let (value, k) = best.ok_or_else(|| Error::InvalidArgument("horizon must be positive".into()))?;
    Ok(Recurrence::Rate { value, k })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisiurewiczVerdict {
    /// Neither half-orbit re-enters the union of balls between its exit
    /// from the candidate's own ball and the horizon.
    MisiurewiczAtHorizon { exit_forward: usize, exit_backward: usize },
    /// Signed iterate that lies in the union of balls (negative = backward).
    RecurrenceWitness { k: i64 },
    Escaped { index: i64 },
}

fn half_orbit_check(map: &MapDef, c: Vec2, centers: &[Vec2], radius: f64, horizon: usize, burn_in: usize, time: Time) -> std::result::Result<usize, (bool, i64)> {
    let sign = if time == Time::Forward { 1 } else { -1 };
    let mut x = c;
    let mut exit = None;
    for k in 1..=horizon {
        match map.step(x, time) {
            Ok((next, _)) => x = next,
            Err(_) => return Err((true, sign * (k as i64 - 1))),
        }
        if k < burn_in {
            continue;
        }
        match exit {
            None => {
                if x.dist(c) >= radius {
                    exit = Some(k);
                } else {
                    continue;
                }
            }
            Some(_) => {}
        }
        if centers.iter().any(|&q| x.dist(q) < radius) {
            return Err((false, sign * k as i64));
        }
    }
    // Never leaving the own ball is recurrence in the strongest sense.
    exit.ok_or((false, sign * burn_in.max(1) as i64))
}

pub fn misiurewicz_check(
    map: &MapDef,
    candidates: &[CriticalCandidate],
    radius: f64,
    horizon: usize,
    burn_in: usize,
) -> Vec<MisiurewiczVerdict> {
    let centers: Vec<Vec2> = candidates.iter().map(|c| c.point).collect();
    candidates
        .par_iter()
        .map(|cand| {
            let fwd = half_orbit_check(map, cand.point, &centers, radius, horizon, burn_in, Time::Forward);
            let bwd = half_orbit_check(map, cand.point, &centers, radius, horizon, burn_in, Time::Backward);
            match (fwd, bwd) {
                (Err((true, index)), _) | (_, Err((true, index))) => MisiurewiczVerdict::Escaped { index },
                (Err((false, k)), _) | (_, Err((false, k))) => MisiurewiczVerdict::RecurrenceWitness { k },
                (Ok(exit_forward), Ok(exit_backward)) => MisiurewiczVerdict::MisiurewiczAtHorizon {
                    exit_forward,
                    exit_backward,
                },
            }
        })
        .collect()
}
