//! Windowed products of the projective cocycle, kept in log scale.

use serde::{Deserialize, Serialize};

use crate::dynamics::{orbit, MapDef, Orbit, PeriodicPoint, Time};
use crate::error::{Error, Result};
use crate::geometry::{most_expanded_direction, step_cocycle, Direction, Mat2, Vec2};

/// Directions are renormalized this often when growing tangent vectors.
const RENORMALIZE_EVERY: usize = 10;
/// Steps discarded before averaging in [`lyapunov`].
pub const LYAPUNOV_WARMUP: usize = 100;

/// `ln g^n(v)` and `G^n(v)` along `f^n(base)` for `n ∈ [−n_back, n_fwd]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocycleTrace {
    pub base: Vec2,
    pub initial: Direction,
    pub n_back: usize,
    pub n_fwd: usize,
    /// Ordered from `−n_back` to `n_fwd`; the entry for `n = 0` is zero.
    pub log_g: Vec<f64>,
    pub directions: Vec<Direction>,
    pub escaped: Option<i64>,
}

impl CocycleTrace {
    fn slot(&self, n: i64) -> Option<usize> {
        if n < -(self.n_back as i64) || n > self.n_fwd as i64 {
            None
        } else {
            Some((n + self.n_back as i64) as usize)
        }
    }

    pub fn log_g(&self, n: i64) -> Option<f64> {
        self.slot(n).map(|i| self.log_g[i])
    }

    pub fn direction(&self, n: i64) -> Option<Direction> {
        self.slot(n).map(|i| self.directions[i])
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<i64> {
        -(self.n_back as i64)..=self.n_fwd as i64
    }

    pub fn min_log_g(&self) -> f64 {
        self.log_g.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Cocycle along a precomputed orbit. The backward leg uses the inverse of
/// the forward Jacobian at the preceding point.
pub fn trace_orbit(orbit: &Orbit, v: Direction) -> Result<CocycleTrace> {
    let n_back = orbit.n_back;
    let n_fwd = orbit.n_fwd;
    let mut fwd_log = Vec::with_capacity(n_fwd + 1);
    let mut fwd_dir = Vec::with_capacity(n_fwd + 1);
    fwd_log.push(0.0);
    fwd_dir.push(v);
    let (mut acc, mut dir) = (0.0, v);
    for n in 0..n_fwd as i64 {
        let jac = orbit.jacobian(n).expect("inside window");
        let (next, lg) = step_cocycle(&jac, dir)?;
        acc += lg;
        dir = next;
        fwd_log.push(acc);
        fwd_dir.push(dir);
    }
    let mut back_log = Vec::with_capacity(n_back);
    let mut back_dir = Vec::with_capacity(n_back);
    let (mut acc, mut dir) = (0.0, v);
    for n in 1..=n_back as i64 {
        let inv = orbit.jacobian(-n).expect("inside window").inverse()?;
        let (next, lg) = step_cocycle(&inv, dir)?;
        acc += lg;
        dir = next;
        back_log.push(acc);
        back_dir.push(dir);
    }
    back_log.reverse();
    back_dir.reverse();
    back_log.extend(fwd_log);
    back_dir.extend(fwd_dir);
    Ok(CocycleTrace {
        base: orbit.base,
        initial: v,
        n_back,
        n_fwd,
        log_g: back_log,
        directions: back_dir,
        escaped: orbit.escaped_at(),
    })
}

pub fn trace(map: &MapDef, p: Vec2, v: Direction, n_back: usize, n_fwd: usize) -> Result<CocycleTrace> {
    let orb = orbit(map, p, n_back, n_fwd)?;
    trace_orbit(&orb, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub horizon: usize,
}

/// Two Lyapunov exponents over `horizon` steps after [`LYAPUNOV_WARMUP`]
/// discarded steps. The leading exponent is the mean log-growth of a tangent
/// vector renormalized every ten steps; the other follows from `ln|det|`.
pub fn lyapunov(map: &MapDef, p: Vec2, horizon: usize) -> Result<LyapunovEstimate> {
    let mut x = p;
    let mut failure = None;
    let jacobians = (0..LYAPUNOV_WARMUP + horizon).map_while(|i| match map.step(x, Time::Forward) {
        Ok((next, jac)) => {
            x = next;
            Some(jac)
        }
        Err(e) => {
            failure = Some(match e {
                Error::Escaped { point, .. } => Error::Escaped { index: i as i64, point },
                other => other,
            });
            None
        }
    });
    let est = lyapunov_from_jacobians(jacobians, horizon);
    match failure {
        Some(e) => Err(e),
        None => est,
    }
}

/// Same estimator along a periodic orbit, cycling its stored points so that
/// round-off cannot push the orbit off the saddle.
pub fn lyapunov_periodic(map: &MapDef, pp: &PeriodicPoint, horizon: usize) -> Result<LyapunovEstimate> {
    let jacs: Vec<Mat2> = pp.orbit_points(map).into_iter().map(|q| map.jacobian(q)).collect();
    lyapunov_from_jacobians(jacs.iter().copied().cycle().take(LYAPUNOV_WARMUP + horizon), horizon)
}

/// Expects `LYAPUNOV_WARMUP + horizon` Jacobians in orbit order.
pub fn lyapunov_from_jacobians(jacobians: impl IntoIterator<Item = Mat2>, horizon: usize) -> Result<LyapunovEstimate> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let total = LYAPUNOV_WARMUP + horizon;
    let mut jacobians = jacobians.into_iter().peekable();
    let first = jacobians
        .peek()
        .copied()
        .ok_or_else(|| Error::InvalidArgument("empty Jacobian sequence".into()))?;
    let mut u = most_expanded_direction(&first).unit();
    let mut growth = 0.0;
    let mut log_det = 0.0;
    let mut count = 0;
    for (i, jac) in jacobians.take(total).enumerate() {
        count += 1;
        u = jac.apply(u);
        if i >= LYAPUNOV_WARMUP {
            log_det += jac.det().abs().ln();
        }
        if (i + 1) % RENORMALIZE_EVERY == 0 || i + 1 == total || i + 1 == LYAPUNOV_WARMUP {
            let len = u.norm();
            if i >= LYAPUNOV_WARMUP {
                growth += len.ln();
            }
            u = u * (1.0 / len);
        }
    }
    if count < total {
        return Err(Error::InvalidArgument(format!("need {total} Jacobians, got {count}")));
    }
    let h = horizon as f64;
    let top = growth / h;
    let other = log_det / h - top;
    Ok(LyapunovEstimate {
        lambda_plus: top.max(other),
        lambda_minus: top.min(other),
        horizon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlissTimes {
    pub gamma0: f64,
    pub gamma1: f64,
    pub bound_a: f64,
    pub times: Vec<usize>,
    pub density: f64,
}

/// All cut positions `t ∈ [0, n)` with `Π_{i=t}^{k-1} seq[i] < γ₁^{k−t}` for
/// every `t < k ≤ n`.
pub fn pliss_times(seq: &[f64], gamma0: f64, gamma1: f64, bound_a: f64) -> Result<PlissTimes> {
    if !(0.0 < gamma0 && gamma0 < gamma1) {
        return Err(Error::EmptyHypothesis("require 0 < gamma0 < gamma1".into()));
    }
    if seq.is_empty() {
        return Err(Error::EmptyHypothesis("empty sequence".into()));
    }
    if let Some(x) = seq.iter().find(|&&x| !(x > 1.0 / bound_a && x < bound_a)) {
        return Err(Error::EmptyHypothesis(format!("entry {x} outside (1/a, a)")));
    }
    let n = seq.len();
    let total: f64 = seq.iter().map(|x| x.ln()).sum();
    if !(total < n as f64 * gamma0.ln()) {
        return Err(Error::EmptyHypothesis("product is not below gamma0^n".into()));
    }
    // Partial sums of ln(a_i / γ₁); t qualifies iff its partial sum strictly
    // exceeds every later one.
    let lg1 = gamma1.ln();
    let mut partial = Vec::with_capacity(n + 1);
    partial.push(0.0);
    for x in seq {
        let last = *partial.last().unwrap();
        partial.push(last + (x.ln() - lg1));
    }
    let mut times = Vec::new();
    let mut suffix_max = partial[n];
    for t in (0..n).rev() {
        if partial[t] > suffix_max {
            times.push(t);
        }
        suffix_max = suffix_max.max(partial[t]);
    }
    times.reverse();
    let density = times.len() as f64 / n as f64;
    Ok(PlissTimes {
        gamma0,
        gamma1,
        bound_a,
        times,
        density,
    })
}

/// Index `K` (1-based, `0` meaning "before the first element") at which the
/// prefix products `P_j = Π_{i≤j} a_i` are minimal. Every product of
/// consecutive entries starting right after `K` is `≥ 1`, and every product
/// of consecutive entries ending at `K` is `≤ 1`.
///
/// Ties go to the smallest positive index; `0` is returned only when every
/// `P_j` with `j ≥ 1` is strictly above one.
pub fn cumulative_min_split(seq: &[f64]) -> Result<usize> {
    if seq.is_empty() {
        return Err(Error::HypothesisFailed("empty sequence".into()));
    }
    if let Some(x) = seq.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::HypothesisFailed(format!("entry {x} is not a positive real")));
    }
    let mut prefix = 0.0;
    let mut best = (f64::INFINITY, 0usize);
    for (j, x) in seq.iter().enumerate() {
        prefix += x.ln();
        if prefix < best.0 {
            best = (prefix, j + 1);
        }
    }
    if prefix < -1e-9 {
        return Err(Error::HypothesisFailed(format!("product e^{prefix} < 1")));
    }
    Ok(if best.0 > 0.0 { 0 } else { best.1 })
}
