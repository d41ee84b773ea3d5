//! Planar diffeomorphisms, orbits and periodic points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{classify_linear, LinearClass, Mat2, Vec2};

pub const DEFAULT_ESCAPE_RADIUS: f64 = 1e6;

const NEWTON_MAX_ITERS: usize = 50;
const NEWTON_STEP_TOL: f64 = 1e-12;
const NEWTON_MAX_HALVINGS: usize = 30;
const PERIODIC_RESIDUAL_TOL: f64 = 1e-10;
const MIN_PERIOD_TOL: f64 = 1e-9;
const DEDUP_DISTANCE: f64 = 1e-6;
const ISOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Time {
    Forward,
    Backward,
}

impl Time {
    pub fn reversed(self) -> Time {
        match self {
            Time::Forward => Time::Backward,
            Time::Backward => Time::Forward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear(Mat2),
    /// `(x, y) ↦ (x² − a − b·y, x)`.
    Henon { a: f64, b: f64 },
    /// Applied left to right: the first entry acts first.
    Composed(Vec<Family>),
}

impl Family {
    fn validate(&self) -> Result<()> {
        match self {
            Family::Linear(m) => {
                m.check_invertible()
                    .map_err(|_| Error::InvalidMap("linear map requires an invertible matrix".into()))?;
            }
            Family::Henon { a, b } => {
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidMap("Hénon parameters must be finite".into()));
                }
                if *b == 0.0 {
                    return Err(Error::NonInvertible("Hénon map requires b ≠ 0".into()));
                }
            }
            Family::Composed(parts) => {
                if parts.is_empty() {
                    return Err(Error::InvalidMap("composed map must be non-empty".into()));
                }
                for part in parts {
                    part.validate()?;
                }
            }
        }
        Ok(())
    }

    fn forward(&self, p: Vec2) -> (Vec2, Mat2) {
        match self {
            Family::Linear(m) => (m.apply(p), *m),
            Family::Henon { a, b } => (
                Vec2::new(p.x * p.x - a - b * p.y, p.x),
                Mat2::new(2.0 * p.x, -b, 1.0, 0.0),
            ),
            Family::Composed(parts) => {
                let mut q = p;
                let mut jac = Mat2::IDENTITY;
                for part in parts {
                    let (next, j) = part.forward(q);
                    jac = j * jac;
                    q = next;
                }
                (q, jac)
            }
        }
    }

    fn backward(&self, p: Vec2) -> Result<(Vec2, Mat2)> {
        match self {
            Family::Linear(m) => {
                let inv = m.inverse()?;
                Ok((inv.apply(p), inv))
            }
            Family::Henon { a, b } => {
                if *b == 0.0 {
                    return Err(Error::NonInvertible("Hénon map with b = 0".into()));
                }
                let y = (p.y * p.y - a - p.x) / b;
                Ok((Vec2::new(p.y, y), Mat2::new(0.0, 1.0, -1.0 / b, 2.0 * p.y / b)))
            }
            Family::Composed(parts) => {
                let mut q = p;
                let mut jac = Mat2::IDENTITY;
                for part in parts.iter().rev() {
                    let (next, j) = part.backward(q)?;
                    jac = j * jac;
                    q = next;
                }
                Ok((q, jac))
            }
        }
    }
}

impl Family {
    /// `f(base + δ) − f(base)`, accurate relative to `|δ|`.
    fn forward_offset(&self, base: Vec2, d: Vec2) -> Vec2 {
        match self {
            Family::Linear(m) => m.apply(d),
            Family::Henon { b, .. } => Vec2::new((2.0 * base.x + d.x) * d.x - b * d.y, d.x),
            Family::Composed(parts) => {
                let (mut q, mut d) = (base, d);
                for part in parts {
                    d = part.forward_offset(q, d);
                    q = part.forward(q).0;
                }
                d
            }
        }
    }

    /// `f⁻¹(base + δ) − f⁻¹(base)`, accurate relative to `|δ|`.
    fn backward_offset(&self, base: Vec2, d: Vec2) -> Result<Vec2> {
        match self {
            Family::Linear(m) => Ok(m.inverse()?.apply(d)),
            Family::Henon { b, .. } => {
                if *b == 0.0 {
                    return Err(Error::NonInvertible("Hénon map with b = 0".into()));
                }
                Ok(Vec2::new(d.y, ((2.0 * base.y + d.y) * d.y - d.x) / b))
            }
            Family::Composed(parts) => {
                let (mut q, mut d) = (base, d);
                for part in parts.iter().rev() {
                    d = part.backward_offset(q, d)?;
                    q = part.backward(q)?.0;
                }
                Ok(d)
            }
        }
    }
}

/// A parameterized planar diffeomorphism with an escape radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDef {
    pub family: Family,
    #[serde(default = "default_escape_radius")]
    pub escape_radius: f64,
    /// When set, forward and backward are exchanged (the map is `f⁻¹`).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reversed: bool,
}

fn default_escape_radius() -> f64 {
    DEFAULT_ESCAPE_RADIUS
}

impl MapDef {
    pub fn new(family: Family) -> Result<Self> {
        let map = MapDef {
            family,
            escape_radius: DEFAULT_ESCAPE_RADIUS,
            reversed: false,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn henon(a: f64, b: f64) -> Result<Self> {
        Self::new(Family::Henon { a, b })
    }

    pub fn linear(m: Mat2) -> Result<Self> {
        Self::new(Family::Linear(m))
    }

    pub fn with_escape_radius(mut self, radius: f64) -> Self {
        self.escape_radius = radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.escape_radius > 0.0) {
            return Err(Error::InvalidMap("escape radius must be positive".into()));
        }
        self.family.validate()
    }

    /// The time-reversed map `f⁻¹`.
    pub fn inverse(&self) -> MapDef {
        MapDef {
            reversed: !self.reversed,
            ..self.clone()
        }
    }

    /// Image of `p` and the Jacobian of the applied map at `p`, without the
    /// escape check.
    pub fn eval(&self, p: Vec2, time: Time) -> Result<(Vec2, Mat2)> {
        let time = if self.reversed { time.reversed() } else { time };
        match time {
            Time::Forward => Ok(self.family.forward(p)),
            Time::Backward => self.family.backward(p),
        }
    }

    /// `g(base + δ) − g(base)` for the applied map `g`, without cancellation
    /// when `δ` is small.
    pub fn eval_offset(&self, base: Vec2, delta: Vec2, time: Time) -> Result<Vec2> {
        let time = if self.reversed { time.reversed() } else { time };
        match time {
            Time::Forward => Ok(self.family.forward_offset(base, delta)),
            Time::Backward => self.family.backward_offset(base, delta),
        }
    }

    pub fn step(&self, p: Vec2, time: Time) -> Result<(Vec2, Mat2)> {
        let (q, jac) = self.eval(p, time)?;
        if self.is_outside(q) {
            return Err(Error::Escaped { index: 0, point: q });
        }
        Ok((q, jac))
    }

    pub fn jacobian(&self, p: Vec2) -> Mat2 {
        // Forward evaluation never fails.
        self.eval(p, Time::Forward).map(|(_, j)| j).unwrap_or(Mat2::IDENTITY)
    }

    pub fn is_outside(&self, p: Vec2) -> bool {
        !p.is_finite() || p.norm() > self.escape_radius
    }

    /// Radius of a box containing every bounded orbit, when one is known.
    pub fn trapping_radius(&self) -> Option<f64> {
        match self.family {
            Family::Henon { a, b } if b.abs() <= 1.0 => {
                let s = 1.0 + b.abs();
                Some(0.5 * (s + (s * s + 4.0 * a.abs()).sqrt()))
            }
            _ => None,
        }
    }

    /// True when `p` lies in a region from which iteration in direction
    /// `time` provably leaves every bounded set. Falls back to the escape
    /// radius for families without a closed-form escape region.
    pub fn escapes_under(&self, p: Vec2, time: Time) -> bool {
        if self.is_outside(p) {
            return true;
        }
        let time = if self.reversed { time.reversed() } else { time };
        match (&self.family, self.trapping_radius()) {
            (Family::Henon { .. }, Some(r)) => match time {
                Time::Forward => p.x.abs() > r && p.x.abs() >= p.y.abs(),
                Time::Backward => p.y.abs() > r && p.y.abs() >= p.x.abs(),
            },
            _ => false,
        }
    }

    /// `f^n(p)` and the ordered Jacobian product, with escape checks.
    pub fn iterate(&self, p: Vec2, n: usize, time: Time) -> Result<(Vec2, Mat2)> {
        let mut q = p;
        let mut jac = Mat2::IDENTITY;
        for i in 0..n {
            let (next, j) = self.eval(q, time)?;
            if self.is_outside(next) {
                let index = i as i64;
                return Err(Error::Escaped {
                    index: if time == Time::Forward { index } else { -index },
                    point: next,
                });
            }
            jac = j * jac;
            q = next;
        }
        Ok((q, jac))
    }
}

/// A finite orbit segment `f^n(base)` for `n ∈ [−n_back, n_fwd]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub base: Vec2,
    /// Number of backward points actually stored.
    pub n_back: usize,
    /// Number of forward points actually stored.
    pub n_fwd: usize,
    /// Points ordered from `−n_back` to `n_fwd`.
    pub points: Vec<Vec2>,
    /// Forward Jacobian at each stored point.
    pub jacobians: Vec<Mat2>,
    /// Last stored forward index when the forward leg escaped.
    pub escaped_forward: Option<usize>,
    /// Last stored backward index (as a positive count) when the backward leg escaped.
    pub escaped_backward: Option<usize>,
}

impl Orbit {
    pub fn point(&self, n: i64) -> Option<Vec2> {
        self.slot(n).map(|i| self.points[i])
    }

    pub fn jacobian(&self, n: i64) -> Option<Mat2> {
        self.slot(n).map(|i| self.jacobians[i])
    }

    fn slot(&self, n: i64) -> Option<usize> {
        if n < -(self.n_back as i64) || n > self.n_fwd as i64 {
            None
        } else {
            Some((n + self.n_back as i64) as usize)
        }
    }

    /// Signed index of the last stored point on the leg that escaped;
    /// forward escapes take precedence.
    pub fn escaped_at(&self) -> Option<i64> {
        self.escaped_forward
            .map(|n| n as i64)
            .or(self.escaped_backward.map(|n| -(n as i64)))
    }

    /// Ordered product `Df^n` at the base, for `n` inside the stored window.
    /// Negative `n` gives the derivative of `f^{−|n|}`.
    pub fn derivative_product(&self, n: i64) -> Option<Mat2> {
        let mut prod = Mat2::IDENTITY;
        if n >= 0 {
            for i in 0..n {
                prod = self.jacobian(i)? * prod;
            }
        } else {
            for i in 1..=(-n) {
                prod = self.jacobian(-i)?.inverse().ok()? * prod;
            }
        }
        Some(prod)
    }

    /// Builds an orbit from an externally computed point sequence.
    pub fn from_points(map: &MapDef, points: Vec<Vec2>, base_index: usize) -> Orbit {
        let jacobians = points.iter().map(|&p| map.jacobian(p)).collect();
        Orbit {
            base: points[base_index],
            n_back: base_index,
            n_fwd: points.len() - 1 - base_index,
            points,
            jacobians,
            escaped_forward: None,
            escaped_backward: None,
        }
    }

    /// Window `[−n_back, n_fwd]` around `cycle[start]` obtained by cycling a
    /// periodic orbit instead of iterating, so the window never drifts off.
    pub fn from_cycle(map: &MapDef, cycle: &[Vec2], start: usize, n_back: usize, n_fwd: usize) -> Orbit {
        let len = cycle.len() as i64;
        let points = (-(n_back as i64)..=n_fwd as i64)
            .map(|n| cycle[(start as i64 + n).rem_euclid(len) as usize])
            .collect();
        Orbit::from_points(map, points, n_back)
    }
}

pub fn orbit(map: &MapDef, p: Vec2, n_back: usize, n_fwd: usize) -> Result<Orbit> {
    let mut fwd = vec![p];
    let mut escaped_forward = None;
    for i in 0..n_fwd {
        match map.step(fwd[i], Time::Forward) {
            Ok((q, _)) => fwd.push(q),
            Err(Error::Escaped { .. }) => {
                escaped_forward = Some(i);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let mut back = Vec::new();
    let mut escaped_backward = None;
    let mut cur = p;
    for i in 0..n_back {
        match map.step(cur, Time::Backward) {
            Ok((q, _)) => {
                back.push(q);
                cur = q;
            }
            Err(Error::Escaped { .. }) => {
                escaped_backward = Some(i);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let stored_back = back.len();
    let stored_fwd = fwd.len() - 1;
    back.reverse();
    back.extend(fwd);
    let jacobians = back.iter().map(|&q| map.jacobian(q)).collect();
    Ok(Orbit {
        base: p,
        n_back: stored_back,
        n_fwd: stored_fwd,
        points: back,
        jacobians,
        escaped_forward,
        escaped_backward,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BoxRegion {
    pub fn square(half: f64) -> Self {
        BoxRegion {
            x_min: -half,
            x_max: half,
            y_min: -half,
            y_max: half,
        }
    }

    pub fn contains(&self, p: Vec2, margin: f64) -> bool {
        p.x >= self.x_min - margin
            && p.x <= self.x_max + margin
            && p.y >= self.y_min - margin
            && p.y <= self.y_max + margin
    }

    /// `n × n` lattice including the edges (the center for `n = 1`).
    pub fn lattice(&self, n: usize) -> Vec<Vec2> {
        let coord = |lo: f64, hi: f64, i: usize| {
            if n == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                out.push(Vec2::new(coord(self.x_min, self.x_max, i), coord(self.y_min, self.y_max, j)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub location: Vec2,
    pub period: usize,
    pub derivative_at_period: Mat2,
    pub class: LinearClass,
    pub eigenvalues: [Complex64; 2],
}

impl PeriodicPoint {
    pub fn from_location(map: &MapDef, location: Vec2, period: usize) -> Result<Self> {
        let (_, deriv) = map.iterate(location, period, Time::Forward)?;
        Ok(PeriodicPoint {
            location,
            period,
            derivative_at_period: deriv,
            class: classify_linear(&deriv)?,
            eigenvalues: deriv.eigenvalues(),
        })
    }

    /// All points of the periodic orbit, starting at `location`.
    pub fn orbit_points(&self, map: &MapDef) -> Vec<Vec2> {
        let mut pts = vec![self.location];
        let mut q = self.location;
        for _ in 1..self.period {
            q = map.eval(q, Time::Forward).map(|(q, _)| q).unwrap_or(q);
            pts.push(q);
        }
        pts
    }
}

fn newton_periodic(map: &MapDef, seed: Vec2, period: usize) -> Option<Vec2> {
    let residual = |p: Vec2| -> Option<(Vec2, Mat2)> {
        let (q, jac) = map.iterate(p, period, Time::Forward).ok()?;
        Some((q - p, jac))
    };
    let mut p = seed;
    let (mut r, mut jac) = residual(p)?;
    for _ in 0..NEWTON_MAX_ITERS {
        let res = r.norm();
        if res == 0.0 {
            return Some(p);
        }
        let a = Mat2::new(jac.a - 1.0, jac.b, jac.c, jac.d - 1.0);
        let inv = a.inverse().ok()?;
        let delta = -inv.apply(r);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..NEWTON_MAX_HALVINGS {
            let cand = p + delta * lambda;
            if let Some((rn, jn)) = residual(cand) {
                if rn.norm() <= res {
                    accepted = Some((cand, rn, jn));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let (cand, rn, jn) = accepted?;
        let moved = (cand - p).norm();
        p = cand;
        r = rn;
        jac = jn;
        if moved < NEWTON_STEP_TOL {
            return Some(p);
        }
    }
    None
}

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|d| n % d == 0).collect()
}

fn lexicographic_lt(a: Vec2, b: Vec2) -> bool {
    a.x < b.x || (a.x == b.x && a.y < b.y)
}

/// Validates a Newton root and reduces it to its minimal period and the
/// lexicographically smallest point of its orbit.
fn canonicalize(map: &MapDef, p: Vec2, period: usize) -> Option<(Vec2, usize)> {
    let (q, _) = map.iterate(p, period, Time::Forward).ok()?;
    if (q - p).norm() >= PERIODIC_RESIDUAL_TOL * (1.0 + p.norm()) {
        return None;
    }
    let minimal = divisors(period).into_iter().find(|&m| {
        map.iterate(p, m, Time::Forward)
            .map(|(q, _)| (q - p).norm() < MIN_PERIOD_TOL * (1.0 + p.norm()))
            .unwrap_or(false)
    })?;
    // Non-isolated periodic points (e.g. a whole disk of them) are rejected.
    let (_, deriv) = map.iterate(p, minimal, Time::Forward).ok()?;
    let a = Mat2::new(deriv.a - 1.0, deriv.b, deriv.c, deriv.d - 1.0);
    if a.det().abs() <= ISOLATION_TOL * deriv.max_abs().max(1.0).powi(2) {
        return None;
    }
    let mut best = p;
    let mut cur = p;
    for _ in 1..minimal {
        cur = map.eval(cur, Time::Forward).ok()?.0;
        if lexicographic_lt(cur, best) {
            best = cur;
        }
    }
    Some((best, minimal))
}

/// Newton's method on `f^period − id` seeded on a `grid × grid` lattice of
/// `region`, for every divisor of `period`. One representative per orbit.
pub fn find_periodic_points(
    map: &MapDef,
    period: usize,
    region: &BoxRegion,
    grid: usize,
) -> Result<Vec<PeriodicPoint>> {
    if period == 0 || grid == 0 {
        return Err(Error::InvalidArgument("period and grid must be positive".into()));
    }
    let seeds = region.lattice(grid);
    let mut found: Vec<(usize, Vec2)> = divisors(period)
        .into_iter()
        .flat_map(|d| {
            seeds
                .par_iter()
                .filter_map(|&s| {
                    let root = newton_periodic(map, s, d)?;
                    if !region.contains(root, 1e-9) {
                        return None;
                    }
                    let (rep, minimal) = canonicalize(map, root, d)?;
                    Some((minimal, rep))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    found.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.x.total_cmp(&b.1.x))
            .then(a.1.y.total_cmp(&b.1.y))
    });
    let mut kept: Vec<(usize, Vec2)> = Vec::new();
    for (per, p) in found {
        if kept.iter().any(|&(kp, kq)| kp == per && kq.dist(p) < DEDUP_DISTANCE) {
            continue;
        }
        kept.push((per, p));
    }
    kept.into_iter()
        .map(|(per, p)| PeriodicPoint::from_location(map, p, per))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn henon() -> MapDef {
        MapDef::henon(6.0, 0.3).unwrap()
    }

    #[test]
    fn henon_step_forward_and_back() {
        let map = henon();
        let (q, j) = map.step(Vec2::ZERO, Time::Forward).unwrap();
        assert_eq!(q, Vec2::new(-6.0, 0.0));
        assert_eq!(j, Mat2::new(0.0, -0.3, 1.0, 0.0));
        let (back, jb) = map.step(Vec2::new(-6.0, 0.0), Time::Backward).unwrap();
        assert!(back.dist(Vec2::ZERO) < 1e-15);
        let prod = jb * map.jacobian(back);
        assert!((prod.a - 1.0).abs() < 1e-12 && prod.b.abs() < 1e-12);
        assert!(prod.c.abs() < 1e-12 && (prod.d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_step() {
        let map = MapDef::linear(Mat2::diag(2.0, 0.5)).unwrap();
        let (q, j) = map.step(Vec2::new(1.0, 1.0), Time::Forward).unwrap();
        assert_eq!(q, Vec2::new(2.0, 0.5));
        assert_eq!(j, Mat2::diag(2.0, 0.5));
    }

    #[test]
    fn invalid_definitions_rejected() {
        assert!(matches!(MapDef::henon(1.0, 0.0), Err(Error::NonInvertible(_))));
        assert!(MapDef::linear(Mat2::new(1.0, 1.0, 1.0, 1.0)).is_err());
        assert!(MapDef::new(Family::Composed(vec![])).is_err());
    }

    #[test]
    fn composed_applies_in_order() {
        let fam = Family::Composed(vec![
            Family::Linear(Mat2::diag(2.0, 1.0)),
            Family::Henon { a: 1.0, b: 0.5 },
        ]);
        let map = MapDef::new(fam).unwrap();
        let p = Vec2::new(0.3, -0.2);
        let (q, j) = map.step(p, Time::Forward).unwrap();
        let h = MapDef::henon(1.0, 0.5).unwrap();
        let (q2, j2) = h.step(Vec2::new(0.6, -0.2), Time::Forward).unwrap();
        assert!(q.dist(q2) < 1e-15);
        let expected = j2 * Mat2::diag(2.0, 1.0);
        assert!((j.a - expected.a).abs() < 1e-15 && (j.b - expected.b).abs() < 1e-15);
        let (back, _) = map.step(q, Time::Backward).unwrap();
        assert!(back.dist(p) < 1e-14);
    }

    #[test]
    fn orbit_on_rotation_stays_on_circle() {
        let map = MapDef::linear(Mat2::rotation(1.0)).unwrap();
        let o = orbit(&map, Vec2::new(1.0, 0.0), 5, 5).unwrap();
        assert_eq!(o.points.len(), 11);
        for p in &o.points {
            assert!((p.norm() - 1.0).abs() < 1e-14);
        }
        assert_eq!(o.escaped_at(), None);
    }

    #[test]
    fn orbit_records_escape() {
        let o = orbit(&henon(), Vec2::new(100.0, 0.0), 0, 2).unwrap();
        assert_eq!(o.escaped_at(), Some(1));
        assert_eq!(o.n_fwd, 1);
        for p in &o.points {
            assert!(p.norm() <= 1e6);
        }
    }

    #[test]
    fn henon_fixed_points_match_quadratic() {
        let (a, b) = (6.0f64, 0.3f64);
        let disc = ((1.0 + b).powi(2) + 4.0 * a).sqrt();
        let expected = [0.5 * ((1.0 + b) - disc), 0.5 * ((1.0 + b) + disc)];
        let pts = find_periodic_points(&henon(), 1, &BoxRegion::square(10.0), 40).unwrap();
        assert_eq!(pts.len(), 2);
        for (pp, x) in pts.iter().zip(expected) {
            assert!((pp.location.x - x).abs() < 1e-9);
            assert!((pp.location.y - x).abs() < 1e-9);
            assert_eq!(pp.class, LinearClass::HyperbolicSaddle);
        }
        assert!((expected[1] - 3.1843).abs() < 1e-4);
        assert!((expected[0] + 1.8843).abs() < 1e-4);

        // Backward steps amplify rounding by 1/|λs| ≈ 12 each, so the
        // backward leg is kept short enough to stay below 1e-8.
        let o = orbit(&henon(), pts[0].location, 6, 10).unwrap();
        for p in &o.points {
            assert!(p.dist(pts[0].location) < 1e-8);
        }
    }

    #[test]
    fn linear_saddle_fixed_point() {
        let map = MapDef::linear(Mat2::diag(2.0, 0.5)).unwrap();
        let pts = find_periodic_points(&map, 1, &BoxRegion::square(1.0), 7).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].location.norm() < 1e-12);
        assert_eq!(pts[0].class, LinearClass::HyperbolicSaddle);
    }

    #[test]
    fn quarter_rotation_period_four_reduces_to_origin() {
        let map = MapDef::linear(Mat2::rotation(PI / 2.0)).unwrap();
        let pts = find_periodic_points(&map, 4, &BoxRegion::square(1.0), 6).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].period, 1);
        assert!(pts[0].location.norm() < 1e-12);
    }

    #[test]
    fn henon_period_two_orbit_found_once() {
        let map = henon();
        let pts = find_periodic_points(&map, 2, &BoxRegion::square(4.0), 30).unwrap();
        // Two fixed points plus one genuine period-two orbit of the horseshoe.
        assert_eq!(pts.iter().filter(|p| p.period == 1).count(), 2);
        assert_eq!(pts.iter().filter(|p| p.period == 2).count(), 1);
        for pp in &pts {
            let (q, _) = map.iterate(pp.location, pp.period, Time::Forward).unwrap();
            assert!(q.dist(pp.location) < 1e-8);
        }
    }

    #[test]
    fn escape_regions_are_forward_invariant() {
        let map = henon();
        let r = map.trapping_radius().unwrap();
        assert!((r - 3.184_271).abs() < 1e-5);
        let p = Vec2::new(-3.5, 1.0);
        assert!(map.escapes_under(p, Time::Forward));
        let (q, _) = map.eval(p, Time::Forward).unwrap();
        assert!(map.escapes_under(q, Time::Forward));
        let s = Vec2::new(1.0, -3.5);
        assert!(map.escapes_under(s, Time::Backward));
        let (t, _) = map.eval(s, Time::Backward).unwrap();
        assert!(map.escapes_under(t, Time::Backward));
        assert!(map.inverse().escapes_under(s, Time::Forward));
    }
}
