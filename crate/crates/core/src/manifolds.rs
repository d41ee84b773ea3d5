//! Stable and unstable branches of saddles, their intersections, crossing
//! classification and the first-tangency search in the Hénon family.
//!
//! A branch is the curve `γ(τ) = F^k(p + (τ/λ^k) v)` where `F = f^period`
//! (`f⁻¹` for stable branches), `v` the eigenvector of `λ`, and `k` chosen so
//! that `τ/λ^k` lies in the seed fundamental domain. Then `F(γ(τ)) = γ(λτ)`
//! exactly, so any point of the branch can be recomputed from its parameter.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::cumulative_min_split;
use crate::criticality::{criticality_of_orbit, SearchOptions};
use crate::dynamics::{MapDef, Orbit, PeriodicPoint, Time};
use crate::error::{Error, Result};
use crate::geometry::{log_g_step, Direction, LinearClass, Vec2};

pub const DEFAULT_CURVATURE_TOL: f64 = 0.2;
pub const DEFAULT_MAX_GAP: f64 = 0.05;
pub const FUNDAMENTAL_LENGTH: f64 = 1e-5;
const MIN_EIGEN_ANGLE: f64 = 1e-6;
const MAX_POINTS: usize = 2_000_000;
const MAX_REFINE_PASSES: usize = 60;
/// Smallest relative parameter spacing worth refining.
const PARAM_RESOLUTION: f64 = 1e-13;
const NEWTON_ITERS: usize = 40;
const OFFSET_SWITCH: f64 = 0.1;
const LOCAL_GAP_FACTOR: f64 = 100.0;
const MIN_CHORD: f64 = 1e-10;
/// Domains adding less arclength than this mean the branch has run into an
/// attracting orbit.
const STALLED_ARCLENGTH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

/// Evaluates branch points from their parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchGenerator {
    /// The map whose forward iteration grows the branch (`f⁻¹` for stable).
    pub growth_map: MapDef,
    pub saddle: Vec2,
    /// The saddle cycle under the growth map, starting at `saddle`.
    pub cycle: Vec<Vec2>,
    pub period: usize,
    /// Eigenvalue of `D(growth map)^period` along `eigenvector`; `|λ| > 1`.
    pub lambda: f64,
    pub eigenvector: Vec2,
    /// Inner edge of the seed fundamental domain `|τ| ∈ [s0, |λ| s0)`.
    pub s0: f64,
}

impl BranchGenerator {
    /// `γ(τ)`, or `None` once the orbit of the seed leaves the domain.
    pub fn eval(&self, tau: f64) -> Option<Vec2> {
        self.eval_parts(tau).map(|(base, d)| base + d)
    }

    /// `γ(τ)` split as a base point plus an offset. While the orbit stays
    /// near the cycle the base is a cycle point and the offset carries full
    /// relative precision.
    fn eval_parts(&self, tau: f64) -> Option<(Vec2, Vec2)> {
        let abs_lambda = self.lambda.abs();
        let mut k = 0i32;
        if tau.abs() >= self.s0 {
            k = ((tau.abs() / self.s0).ln() / abs_lambda.ln()).floor() as i32;
            // Guard the floor against rounding at domain edges.
            while k > 0 && tau.abs() < self.s0 * abs_lambda.powi(k) {
                k -= 1;
            }
        }
        let s = tau / self.lambda.powi(k);
        let mut d = self.eigenvector * s;
        let steps = k as usize * self.period;
        let mut i = 0;
        while i < steps && d.norm() < OFFSET_SWITCH {
            d = self.growth_map.eval_offset(self.cycle[i % self.period], d, Time::Forward).ok()?;
            i += 1;
        }
        if i == steps {
            return Some((self.cycle[i % self.period], d));
        }
        let mut q = self.cycle[i % self.period] + d;
        for _ in i..steps {
            q = self.growth_map.eval(q, Time::Forward).ok()?.0;
            if self.growth_map.is_outside(q) {
                return None;
            }
        }
        Some((q, Vec2::new(0.0, 0.0)))
    }

    /// `dγ/dτ` by central differences at step `h`, differencing offsets when
    /// both ends are still near the cycle.
    pub fn tangent(&self, tau: f64, h: f64) -> Option<Vec2> {
        let (ba, da) = self.eval_parts(tau - h)?;
        let (bb, db) = self.eval_parts(tau + h)?;
        if ba == bb && da.norm() > 0.0 && db.norm() > 0.0 {
            return Some((db - da) * (0.5 / h));
        }
        Some(((bb + db) - (ba + da)) * (0.5 / h))
    }

    /// True when the point provably leaves under further growth.
    fn pruned(&self, q: Vec2) -> bool {
        self.growth_map.escapes_under(q, Time::Forward)
    }
}

/// A connected run of branch points with their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub points: Vec<Vec2>,
    pub params: Vec<f64>,
}

impl Piece {
    pub fn arclength(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldBranch {
    pub saddle: Option<PeriodicPoint>,
    pub kind: BranchKind,
    pub side: Side,
    /// Pieces in parameter order; gaps are stretches pruned as escaping.
    pub pieces: Vec<Piece>,
    pub arclength: f64,
    pub max_gap: f64,
    pub generator: Option<BranchGenerator>,
}

impl ManifoldBranch {
    /// A branch given directly as a polyline (no generator; intersections are
    /// located on the polyline itself).
    pub fn from_polyline(kind: BranchKind, points: Vec<Vec2>) -> Self {
        let params: Vec<f64> = (0..points.len()).map(|i| i as f64).collect();
        let piece = Piece { points, params };
        let arclength = piece.arclength();
        let max_gap = piece.points.windows(2).map(|w| w[0].dist(w[1])).fold(0.0, f64::max);
        ManifoldBranch {
            saddle: None,
            kind,
            side: Side::Plus,
            pieces: vec![piece],
            arclength,
            max_gap,
            generator: None,
        }
    }

    /// All points, pieces concatenated.
    pub fn polyline(&self) -> Vec<Vec2> {
        self.pieces.iter().flat_map(|p| p.points.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.pieces.iter().map(|p| p.points.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point at parameter `tau`: recomputed by the generator when present,
    /// interpolated along the polyline otherwise.
    pub fn eval(&self, tau: f64) -> Option<Vec2> {
        if let Some(g) = &self.generator {
            return g.eval(tau);
        }
        for piece in &self.pieces {
            let n = piece.params.len();
            if n >= 2 && tau >= piece.params[0] && tau <= piece.params[n - 1] {
                let i = piece.params.partition_point(|&t| t <= tau).clamp(1, n - 1) - 1;
                let u = (tau - piece.params[i]) / (piece.params[i + 1] - piece.params[i]);
                return Some(piece.points[i].lerp(piece.points[i + 1], u));
            }
        }
        None
    }

    fn tangent(&self, tau: f64, h: f64) -> Option<Vec2> {
        match &self.generator {
            Some(g) => g.tangent(tau, h),
            None => {
                let a = self.eval(tau - h).or_else(|| self.eval(tau))?;
                let b = self.eval(tau + h).or_else(|| self.eval(tau))?;
                Some(b - a)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowOptions {
    pub arclength_budget: f64,
    pub curvature_tol: f64,
    pub max_gap: f64,
    pub fundamental_length: f64,
}

impl GrowOptions {
    pub fn with_budget(arclength_budget: f64) -> Self {
        GrowOptions {
            arclength_budget,
            curvature_tol: DEFAULT_CURVATURE_TOL,
            max_gap: DEFAULT_MAX_GAP,
            fundamental_length: FUNDAMENTAL_LENGTH,
        }
    }
}

/// Generator for one branch of a hyperbolic saddle.
pub fn branch_generator(map: &MapDef, saddle: &PeriodicPoint, kind: BranchKind, side: Side, fundamental_length: f64) -> Result<BranchGenerator> {
    if saddle.class != LinearClass::HyperbolicSaddle {
        return Err(Error::NotASaddle);
    }
    let m = saddle.derivative_at_period;
    let lu = saddle.eigenvalues[0].re;
    let ls = saddle.eigenvalues[1].re;
    let du = m.eigendirection(lu).ok_or(Error::NotASaddle)?;
    let ds = m.eigendirection(ls).ok_or(Error::NotASaddle)?;
    let angle = du.distance(ds);
    if angle <= MIN_EIGEN_ANGLE {
        return Err(Error::EigenDegenerate { angle });
    }
    let (growth_map, lambda, dir) = match kind {
        BranchKind::Unstable => (map.clone(), lu, du),
        BranchKind::Stable => (map.inverse(), 1.0 / ls, ds),
    };
    let sign = if side == Side::Plus { 1.0 } else { -1.0 };
    let mut cycle = vec![saddle.location];
    for _ in 1..saddle.period {
        let next = growth_map.eval(*cycle.last().unwrap(), Time::Forward)?.0;
        cycle.push(next);
    }
    Ok(BranchGenerator {
        growth_map,
        saddle: saddle.location,
        cycle,
        period: saddle.period,
        lambda,
        eigenvector: dir.unit() * sign,
        s0: fundamental_length / (lambda.abs() - 1.0),
    })
}

fn turning(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let u = b - a;
    let v = c - b;
    u.cross(v).atan2(u.dot(v)).abs()
}

#[derive(Clone, Copy)]
struct Sample {
    tau: f64,
    point: Option<Vec2>,
    kept: bool,
    /// Whether the same seed survived in the previous domain.
    parent_kept: bool,
}

fn make_sample(g: &BranchGenerator, tau: f64, parent_kept: bool) -> Sample {
    let point = g.eval(tau);
    let kept = point.is_some_and(|q| !g.pruned(q));
    Sample {
        tau,
        point,
        kept,
        parent_kept,
    }
}

/// Refines one fundamental domain until spacing and turning limits hold on
/// every stretch that survives (or whose seeds survived one domain earlier).
fn refine_domain(g: &BranchGenerator, mut samples: Vec<Sample>, opts: &GrowOptions, budget_points: usize) -> Vec<Sample> {
    for _ in 0..MAX_REFINE_PASSES {
        let n = samples.len();
        if n < 2 {
            break;
        }
        let mut split = vec![false; n - 1];
        for i in 0..n - 1 {
            let (a, b) = (&samples[i], &samples[i + 1]);
            let resolvable = (b.tau - a.tau).abs() > PARAM_RESOLUTION * a.tau.abs().max(b.tau.abs());
            if !resolvable {
                continue;
            }
            let gap = match (a.point, b.point) {
                (Some(p), Some(q)) => p.dist(q),
                _ => f64::INFINITY,
            };
            // Between two pruned points a surviving fold can only hide where
            // the parent stretch survived and the images are still local.
            let active = a.kept || b.kept || (a.parent_kept && b.parent_kept && gap <= LOCAL_GAP_FACTOR * opts.max_gap);
            if active && gap > opts.max_gap {
                split[i] = true;
            }
        }
        for i in 1..n - 1 {
            let (a, b, c) = (&samples[i - 1], &samples[i], &samples[i + 1]);
            if !(a.kept && b.kept && c.kept) {
                continue;
            }
            let (Some(p), Some(q), Some(r)) = (a.point, b.point, c.point) else { continue };
            // Turning across sub-resolution chords is rounding noise.
            if p.dist(q).min(q.dist(r)) < MIN_CHORD {
                continue;
            }
            if turning(p, q, r) > opts.curvature_tol {
                let res = PARAM_RESOLUTION * c.tau.abs();
                if (b.tau - a.tau).abs() > res {
                    split[i - 1] = true;
                }
                if (c.tau - b.tau).abs() > res {
                    split[i] = true;
                }
            }
        }
        if !split.iter().any(|&s| s) || samples.len() > budget_points {
            break;
        }
        let mids: Vec<Option<Sample>> = split
            .par_iter()
            .enumerate()
            .map(|(i, &s)| {
                let (a, b) = (&samples[i], &samples[i + 1]);
                s.then(|| make_sample(g, 0.5 * (a.tau + b.tau), a.parent_kept && b.parent_kept))
            })
            .collect();
        let mut next = Vec::with_capacity(samples.len() * 2);
        let mut mids = mids.into_iter();
        for s in samples {
            next.push(s);
            if let Some(Some(m)) = mids.next() {
                next.push(m);
            }
        }
        samples = next;
    }
    samples
}

/// Seeds of the next domain: surviving seeds and their neighbours, carried
/// forward by `ratio` (the kept set only shrinks from domain to domain).
fn carry_seeds(g: &BranchGenerator, prev: &[Sample], ratio: f64) -> Vec<Sample> {
    let n = prev.len();
    let keep: Vec<usize> = (0..n)
        .filter(|&i| prev[i].kept || (i > 0 && prev[i - 1].kept) || (i + 1 < n && prev[i + 1].kept))
        .collect();
    keep.par_iter().map(|&i| make_sample(g, prev[i].tau * ratio, prev[i].kept)).collect()
}

/// Grows one branch by fundamental domains until the arclength budget is
/// spent or the whole branch has been pruned as escaping.
pub fn grow_branch(map: &MapDef, saddle: &PeriodicPoint, kind: BranchKind, side: Side, opts: &GrowOptions) -> Result<ManifoldBranch> {
    let g = branch_generator(map, saddle, kind, side, opts.fundamental_length)?;
    let abs_lambda = g.lambda.abs();
    // Same-side domains: with λ < 0 one step of F swaps sides.
    let stride = if g.lambda < 0.0 { 2 } else { 1 };
    let ratio = abs_lambda.powi(stride);
    let mut pieces: Vec<Piece> = Vec::new();
    let mut current = Piece {
        points: Vec::new(),
        params: Vec::new(),
    };
    let mut arclength = 0.0;
    let mut lo = g.s0;
    let mut total = 0usize;
    let mut prev: Option<Vec<Sample>> = None;
    'domains: loop {
        let hi = lo * ratio;
        let arclength_before = arclength;
        let seeds = match &prev {
            None => (0..=16).map(|i| make_sample(&g, lo + (hi - lo) * i as f64 / 16.0, true)).collect(),
            Some(p) => carry_seeds(&g, p, ratio),
        };
        let samples = refine_domain(&g, seeds, opts, MAX_POINTS.saturating_sub(total));
        total += samples.len();
        let mut any_kept = false;
        for (i, s) in samples.iter().enumerate() {
            if i == 0 && !current.params.is_empty() && current.params.last() == Some(&s.tau) {
                continue;
            }
            if !s.kept {
                if current.points.len() > 1 {
                    pieces.push(std::mem::replace(
                        &mut current,
                        Piece {
                            points: Vec::new(),
                            params: Vec::new(),
                        },
                    ));
                } else {
                    current.points.clear();
                    current.params.clear();
                }
                continue;
            }
            any_kept = true;
            let q = s.point.expect("kept samples have points");
            if let Some(&last) = current.points.last() {
                let step = last.dist(q);
                if arclength + step >= opts.arclength_budget {
                    let u = (opts.arclength_budget - arclength) / step;
                    let tau = current.params.last().unwrap() + u * (s.tau - current.params.last().unwrap());
                    current.points.push(last.lerp(q, u));
                    current.params.push(tau);
                    arclength = opts.arclength_budget;
                    break 'domains;
                }
                arclength += step;
            }
            current.points.push(q);
            current.params.push(s.tau);
        }
        if !any_kept || total >= MAX_POINTS || !hi.is_finite() {
            break;
        }
        if prev.is_some() && arclength - arclength_before < STALLED_ARCLENGTH {
            break;
        }
        if current.points.len() > 1 {
            // Domains join at a shared seed only when both ends survive.
            pieces.push(std::mem::replace(
                &mut current,
                Piece {
                    points: Vec::new(),
                    params: Vec::new(),
                },
            ));
        }
        prev = Some(samples);
        lo = hi;
    }
    if current.points.len() > 1 {
        pieces.push(current);
    }
    let max_gap = pieces
        .iter()
        .flat_map(|p| p.points.windows(2).map(|w| w[0].dist(w[1])))
        .fold(0.0, f64::max);
    Ok(ManifoldBranch {
        saddle: Some(saddle.clone()),
        kind,
        side,
        pieces,
        arclength,
        max_gap,
        generator: Some(g),
    })
}

/// Smallest distance to the saddle orbit over the first `steps` iterates of
/// `q` toward the saddle (`f⁻¹` for unstable branches, `f` for stable).
pub fn saddle_approach(map: &MapDef, saddle: &PeriodicPoint, kind: BranchKind, q: Vec2, steps: usize) -> f64 {
    let time = match kind {
        BranchKind::Unstable => Time::Backward,
        BranchKind::Stable => Time::Forward,
    };
    let cycle = saddle.orbit_points(map);
    let dist = |x: Vec2| cycle.iter().map(|c| c.dist(x)).fold(f64::INFINITY, f64::min);
    let mut best = dist(q);
    let mut x = q;
    for _ in 0..steps {
        match map.eval(x, time) {
            Ok((y, _)) if !map.is_outside(y) => x = y,
            _ => break,
        }
        best = best.min(dist(x));
    }
    best
}

/// Reference to segment `index` (between points `index` and `index + 1`) of
/// piece `piece`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentRef {
    pub piece: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionEvent {
    pub point: Vec2,
    /// RP¹ angle between the refined tangents.
    pub angle: f64,
    pub segment_a: SegmentRef,
    pub segment_b: SegmentRef,
    pub param_a: f64,
    pub param_b: f64,
    pub tangent_a: Direction,
    pub tangent_b: Direction,
    /// Final mismatch `|γ_A − γ_B|`.
    pub residual: f64,
}

struct Seg {
    r: SegmentRef,
    p: Vec2,
    q: Vec2,
    tp: f64,
    tq: f64,
}

fn segments(b: &ManifoldBranch) -> Vec<Seg> {
    let mut out = Vec::new();
    for (pi, piece) in b.pieces.iter().enumerate() {
        for i in 0..piece.points.len().saturating_sub(1) {
            out.push(Seg {
                r: SegmentRef { piece: pi, index: i },
                p: piece.points[i],
                q: piece.points[i + 1],
                tp: piece.params[i],
                tq: piece.params[i + 1],
            });
        }
    }
    out
}

/// Parameters `(u, v)` with `p1 + u(q1−p1) = p2 + v(q2−p2)`, if the segments
/// meet with `u, v ∈ [0, 1)`.
fn segment_hit(p1: Vec2, q1: Vec2, p2: Vec2, q2: Vec2) -> Option<(f64, f64)> {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let den = d1.cross(d2);
    if den == 0.0 {
        return None;
    }
    let w = p2 - p1;
    let u = w.cross(d2) / den;
    let v = w.cross(d1) / den;
    ((0.0..1.0).contains(&u) && (0.0..1.0).contains(&v)).then_some((u, v))
}

fn cell_of(p: Vec2, size: f64) -> (i64, i64) {
    ((p.x / size).floor() as i64, (p.y / size).floor() as i64)
}

fn cells_of(s: &Seg, size: f64) -> impl Iterator<Item = (i64, i64)> {
    let (x0, y0) = cell_of(Vec2::new(s.p.x.min(s.q.x), s.p.y.min(s.q.y)), size);
    let (x1, y1) = cell_of(Vec2::new(s.p.x.max(s.q.x), s.p.y.max(s.q.y)), size);
    (x0..=x1).flat_map(move |x| (y0..=y1).map(move |y| (x, y)))
}

fn refine_event(a: &ManifoldBranch, b: &ManifoldBranch, sa: &Seg, sb: &Seg, u: f64, v: f64, refine_tol: f64) -> IntersectionEvent {
    let mut ta = sa.tp + u * (sa.tq - sa.tp);
    let mut tb = sb.tp + v * (sb.tq - sb.tp);
    let ha = (sa.tq - sa.tp).abs() * 1e-3;
    let hb = (sb.tq - sb.tp).abs() * 1e-3;
    let fallback_point = sa.p.lerp(sa.q, u);
    let mut best: Option<(f64, f64, Vec2, f64)> = None;
    if a.generator.is_some() || b.generator.is_some() {
        let span_a = (sa.tq - sa.tp).abs() * 4.0;
        let span_b = (sb.tq - sb.tp).abs() * 4.0;
        let (ta0, tb0) = (ta, tb);
        for _ in 0..NEWTON_ITERS {
            let (Some(pa), Some(pb), Some(da), Some(db)) = (a.eval(ta), b.eval(tb), a.tangent(ta, ha), b.tangent(tb, hb)) else {
                break;
            };
            let r = pa - pb;
            let res = r.norm();
            if best.is_none_or(|(_, _, _, e)| res < e) {
                best = Some((ta, tb, pa.lerp(pb, 0.5), res));
            }
            if res <= refine_tol {
                break;
            }
            // Solve da·x − db·y = −r.
            let det = da.cross(db * -1.0);
            if det == 0.0 || !det.is_finite() {
                break;
            }
            let x = (-r).cross(db * -1.0) / det;
            let y = da.cross(-r) / det;
            ta += x;
            tb += y;
            if (ta - ta0).abs() > span_a || (tb - tb0).abs() > span_b {
                break;
            }
        }
    }
    let (ta, tb, point, residual) = best.unwrap_or((ta, tb, fallback_point, 0.0));
    let dir = |v: Option<Vec2>, fallback: Vec2| {
        let v = v.filter(|v| v.norm() > 0.0).unwrap_or(fallback);
        Direction::new(v.y.atan2(v.x))
    };
    let tangent_a = dir(a.tangent(ta, ha), sa.q - sa.p);
    let tangent_b = dir(b.tangent(tb, hb), sb.q - sb.p);
    IntersectionEvent {
        point,
        angle: tangent_a.distance(tangent_b),
        segment_a: sa.r,
        segment_b: sb.r,
        param_a: ta,
        param_b: tb,
        tangent_a,
        tangent_b,
        residual,
    }
}

/// All contacts between the polylines of `a` and `b`, refined on the
/// generating curves. Events are ordered by `(param_a, param_b)`.
pub fn find_intersections(a: &ManifoldBranch, b: &ManifoldBranch, refine_tol: f64) -> Vec<IntersectionEvent> {
    let sa = segments(a);
    let sb = segments(b);
    if sa.is_empty() || sb.is_empty() {
        return Vec::new();
    }
    let longest = sa
        .iter()
        .chain(sb.iter())
        .map(|s| s.p.dist(s.q))
        .fold(0.0, f64::max)
        .max(1e-12);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (j, s) in sb.iter().enumerate() {
        for c in cells_of(s, longest) {
            grid.entry(c).or_default().push(j);
        }
    }
    let mut hits: Vec<(usize, usize, f64, f64)> = sa
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, s)| {
            let mut cand: Vec<usize> = cells_of(s, longest)
                .filter_map(|c| grid.get(&c))
                .flatten()
                .copied()
                .collect();
            cand.sort_unstable();
            cand.dedup();
            cand.into_iter()
                .filter_map(|j| segment_hit(s.p, s.q, sb[j].p, sb[j].q).map(|(u, v)| (i, j, u, v)))
                .collect::<Vec<_>>()
        })
        .collect();
    hits.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut events: Vec<IntersectionEvent> = hits
        .par_iter()
        .map(|&(i, j, u, v)| refine_event(a, b, &sa[i], &sb[j], u, v, refine_tol))
        .collect();
    events.sort_by(|x, y| x.param_a.total_cmp(&y.param_a).then(x.param_b.total_cmp(&y.param_b)));
    // Neighbouring segment pairs can refine onto the same contact.
    let mut out: Vec<IntersectionEvent> = Vec::with_capacity(events.len());
    for e in events {
        let dup = out.iter().rev().take(4).any(|o| {
            let same_a = (o.param_a - e.param_a).abs() <= 1e-9 * o.param_a.abs().max(1e-300);
            let same_b = (o.param_b - e.param_b).abs() <= 1e-9 * o.param_b.abs().max(1e-300);
            same_a && same_b
        });
        if !dup {
            out.push(e);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingType {
    Crossing,
    Tangential,
    OneSided,
}

/// Closest point of a piece to `x`: `(segment index, arclength position)`.
fn locate(piece: &Piece, x: Vec2) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    let mut s = 0.0;
    for i in 0..piece.points.len().saturating_sub(1) {
        let (p, q) = (piece.points[i], piece.points[i + 1]);
        let d = q - p;
        let len = d.norm();
        let u = if len > 0.0 { ((x - p).dot(d) / (len * len)).clamp(0.0, 1.0) } else { 0.0 };
        let dist = x.dist(p.lerp(q, u));
        if best.is_none_or(|b| dist < b.1) {
            best = Some((i, dist, s + u * len));
        }
        s += len;
    }
    best.map(|(i, _, pos)| (i, pos))
}

fn nearest_piece(branch: &ManifoldBranch, x: Vec2) -> Option<(usize, usize, f64)> {
    branch
        .pieces
        .iter()
        .enumerate()
        .filter_map(|(pi, piece)| {
            let (i, pos) = locate(piece, x)?;
            let (p, q) = (piece.points[i], piece.points[i + 1]);
            let d = q - p;
            let u = ((x - p).dot(d) / d.dot(d)).clamp(0.0, 1.0);
            Some((pi, i, pos, x.dist(p.lerp(q, u))))
        })
        .min_by(|a, b| a.3.total_cmp(&b.3))
        .map(|(pi, i, pos, _)| (pi, i, pos))
}

/// Points of `piece` whose arclength position lies within `band` of `center`.
fn band_points(piece: &Piece, center: f64, band: f64) -> Vec<Vec2> {
    let mut s = 0.0;
    let mut out = Vec::new();
    for (i, &p) in piece.points.iter().enumerate() {
        if i > 0 {
            s += piece.points[i - 1].dist(p);
        }
        if (s - center).abs() <= band {
            out.push(p);
        }
    }
    out
}

/// Whether the unstable branch passes from one side of the stable branch to
/// the other within arclength `band` of the event.
pub fn classify_crossing(stable: &ManifoldBranch, unstable: &ManifoldBranch, event: &IntersectionEvent, band: f64) -> Result<CrossingType> {
    let x = event.point;
    let (spi, _, spos) = nearest_piece(stable, x).ok_or_else(|| Error::Undetermined("stable branch is empty".into()))?;
    let spiece = &stable.pieces[spi];
    let slen = spiece.arclength();
    if spos < 2.0 * band || slen - spos < 2.0 * band {
        return Err(Error::Undetermined("stable branch does not span the band around the event".into()));
    }
    let (upi, _, upos) = nearest_piece(unstable, x).ok_or_else(|| Error::Undetermined("unstable branch is empty".into()))?;
    let local = Piece {
        points: band_points(spiece, spos, 3.0 * band),
        params: Vec::new(),
    };
    let side_of = |q: Vec2| -> f64 {
        let (i, _) = locate(&local, q).expect("band has segments");
        let (p, r) = (local.points[i], local.points[i + 1]);
        (r - p).cross(q - p)
    };
    let scale = band.max(1e-300);
    let tol = 1e-12 * scale;
    let mut plus = false;
    let mut minus = false;
    for q in band_points(&unstable.pieces[upi], upos, band) {
        let s = side_of(q);
        plus |= s > tol;
        minus |= s < -tol;
    }
    Ok(match (plus, minus) {
        (true, true) => CrossingType::Crossing,
        (false, false) => CrossingType::Tangential,
        _ => CrossingType::OneSided,
    })
}

pub const DEFAULT_SCAN_STEP: f64 = 0.01;
pub const DEFAULT_TANGENCY_BUDGET: f64 = 15.0;
/// Minimum angle required at the top of the bracket.
const BRACKET_MIN_ANGLE: f64 = 0.02;
const WINDOW_SAMPLES: usize = 4000;
/// Events closer than this between scan steps are the same contact.
const MATCH_DISTANCE: f64 = 0.1;
const POST_HOC_WINDOW: usize = 15;
/// Largest pair angle at the top of the final bracket accepted as a fold.
const FOLD_ANGLE: f64 = 0.05;
const MAX_FORWARD_EXTENSION: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangencyBudgets {
    /// Arclength budget of every branch grown during the scan.
    pub arclength: f64,
    /// Step of the downward scan that looks for a vanishing pair.
    pub scan_step: f64,
    pub refine_tol: f64,
}

impl Default for TangencyBudgets {
    fn default() -> Self {
        TangencyBudgets {
            arclength: DEFAULT_TANGENCY_BUDGET,
            scan_step: DEFAULT_SCAN_STEP,
            refine_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    pub family_b: f64,
    /// Top of the final bracket, where the pair is still present.
    pub a_star: f64,
    pub bracket: (f64, f64),
    pub saddle: Vec2,
    pub tangency_point: Vec2,
    /// Smallest angle of the surviving pair at `a_star`.
    pub tangency_angle: f64,
    pub tangency_direction: Direction,
    pub critical_iterate: i64,
    pub critical_point_estimate: Vec2,
    /// Manifold tangent at the critical iterate.
    pub critical_direction: Direction,
    /// Tangency orbit; `orbit[i]` is iterate `orbit_start + i`.
    pub orbit: Vec<Vec2>,
    pub orbit_start: i64,
    /// `ln g` of one step along the manifold tangents, one per orbit point but the last.
    pub log_g: Vec<f64>,
    /// Largest `|f(x_i) − x_{i+1}|` along the orbit.
    pub orbit_defect: f64,
}

impl TangencyReport {
    pub fn map(&self) -> Result<MapDef> {
        MapDef::henon(self.a_star, self.family_b)
    }

    pub fn iterate_point(&self, n: i64) -> Option<Vec2> {
        let i = n - self.orbit_start;
        (i >= 0).then(|| self.orbit.get(i as usize).copied()).flatten()
    }

    /// Window orbit of half-width `window` around iterate `n`.
    pub fn window_orbit(&self, n: i64, window: usize) -> Option<Orbit> {
        let i = n - self.orbit_start;
        let w = window as i64;
        if i - w < 0 || i + w >= self.orbit.len() as i64 {
            return None;
        }
        let pts = self.orbit[(i - w) as usize..=(i + w) as usize].to_vec();
        Some(Orbit::from_points(&self.map().ok()?, pts, window))
    }
}

/// Post-hoc comparison of the critical iterate with the cocycle criticality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyCheck {
    pub window: usize,
    pub score: f64,
    pub best_direction: Direction,
    /// RP¹ distance between `best_direction` and the manifold tangent.
    pub alignment: f64,
    /// Window score of every iterate that has a full window.
    pub iterate_scores: Vec<(i64, f64)>,
    pub argmax_iterate: i64,
}

pub fn tangency_criticality(report: &TangencyReport, window: usize, opts: &SearchOptions) -> Result<TangencyCheck> {
    let orb = report
        .window_orbit(report.critical_iterate, window)
        .ok_or_else(|| Error::InvalidArgument("tangency orbit too short for the window".into()))?;
    let rep = criticality_of_orbit(&orb, opts)?;
    let first = report.orbit_start + window as i64;
    let last = report.orbit_start + report.orbit.len() as i64 - 1 - window as i64;
    let iterate_scores: Vec<(i64, f64)> = (first..=last)
        .into_par_iter()
        .map(|n| {
            let o = report.window_orbit(n, window).expect("index inside the orbit");
            criticality_of_orbit(&o, opts).map(|r| (n, r.score))
        })
        .collect::<Result<_>>()?;
    let argmax_iterate = iterate_scores
        .iter()
        .fold((report.critical_iterate, f64::NEG_INFINITY), |best, &(n, s)| if s > best.1 { (n, s) } else { best })
        .0;
    Ok(TangencyCheck {
        window,
        score: rep.score,
        best_direction: rep.best_direction,
        alignment: rep.best_direction.distance(report.critical_direction),
        iterate_scores,
        argmax_iterate,
    })
}

/// The fixed point with the larger `x`, when it is a saddle.
fn outer_saddle(map: &MapDef, a: f64, b: f64) -> Option<PeriodicPoint> {
    let disc = (1.0 + b) * (1.0 + b) + 4.0 * a;
    if disc < 0.0 {
        return None;
    }
    let x = ((1.0 + b) + disc.sqrt()) / 2.0;
    let p = PeriodicPoint::from_location(map, Vec2::new(x, x), 1).ok()?;
    (p.class == LinearClass::HyperbolicSaddle).then_some(p)
}

struct Pattern {
    unstable: Vec<ManifoldBranch>,
    stable: Vec<ManifoldBranch>,
    /// `(unstable index, stable index, event)`.
    events: Vec<(usize, usize, IntersectionEvent)>,
}

impl Pattern {
    fn min_angle(&self) -> f64 {
        self.events.iter().map(|e| e.2.angle).fold(f64::INFINITY, f64::min)
    }
}

fn homoclinic_pattern(a: f64, b: f64, budgets: &TangencyBudgets) -> Result<Option<Pattern>> {
    let map = MapDef::henon(a, b)?;
    let Some(saddle) = outer_saddle(&map, a, b) else {
        return Ok(None);
    };
    let grow = |kind| -> Result<Vec<ManifoldBranch>> {
        [Side::Plus, Side::Minus]
            .into_iter()
            .map(|side| grow_branch(&map, &saddle, kind, side, &GrowOptions::with_budget(budgets.arclength)))
            .collect()
    };
    let unstable = grow(BranchKind::Unstable)?;
    let stable = grow(BranchKind::Stable)?;
    let mut events = Vec::new();
    for (i, u) in unstable.iter().enumerate() {
        for (j, s) in stable.iter().enumerate() {
            events.extend(find_intersections(u, s, budgets.refine_tol).into_iter().map(|e| (i, j, e)));
        }
    }
    Ok(Some(Pattern {
        unstable,
        stable,
        events,
    }))
}

/// Pairs of upper-level events without a counterpart below, on a common
/// branch pair, closest first.
fn vanished_pairs(upper: &Pattern, lower: Option<&Pattern>) -> Vec<(usize, usize)> {
    let nearest = |from: &[(usize, usize, IntersectionEvent)], e: &(usize, usize, IntersectionEvent)| {
        from.iter()
            .enumerate()
            .filter(|(_, o)| o.0 == e.0 && o.1 == e.1)
            .map(|(k, o)| (k, o.2.point.dist(e.2.point)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
    };
    let unmatched: Vec<usize> = (0..upper.events.len())
        .filter(|&k| {
            let Some(lower) = lower else { return true };
            match nearest(&lower.events, &upper.events[k]) {
                Some((m, d)) if d < MATCH_DISTANCE => {
                    // Mutual nearest neighbours only.
                    nearest(&upper.events, &lower.events[m]).map(|(back, _)| back) != Some(k)
                }
                _ => true,
            }
        })
        .collect();
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (x, &i) in unmatched.iter().enumerate() {
        for &j in &unmatched[x + 1..] {
            let (ei, ej) = (&upper.events[i], &upper.events[j]);
            if ei.0 == ej.0 && ei.1 == ej.1 {
                pairs.push((i, j, ei.2.point.dist(ej.2.point)));
            }
        }
    }
    pairs.sort_by(|x, y| x.2.total_cmp(&y.2));
    pairs.into_iter().map(|(i, j, _)| (i, j)).collect()
}

/// Branch restricted to `τ ∈ [lo, hi]`, sampled uniformly.
fn window_branch(kind: BranchKind, side: Side, g: BranchGenerator, lo: f64, hi: f64) -> ManifoldBranch {
    let mut pieces = Vec::new();
    let mut cur = Piece {
        points: Vec::new(),
        params: Vec::new(),
    };
    for i in 0..=WINDOW_SAMPLES {
        let tau = lo + (hi - lo) * i as f64 / WINDOW_SAMPLES as f64;
        match g.eval(tau) {
            Some(q) => {
                cur.points.push(q);
                cur.params.push(tau);
            }
            None if !cur.points.is_empty() => pieces.push(std::mem::replace(
                &mut cur,
                Piece {
                    points: Vec::new(),
                    params: Vec::new(),
                },
            )),
            None => {}
        }
    }
    if !cur.points.is_empty() {
        pieces.push(cur);
    }
    let arclength = pieces.iter().map(Piece::arclength).sum();
    let max_gap = pieces
        .iter()
        .flat_map(|p| p.points.windows(2).map(|w| w[0].dist(w[1])))
        .fold(0.0, f64::max);
    ManifoldBranch {
        saddle: None,
        kind,
        side,
        pieces,
        arclength,
        max_gap,
        generator: Some(g),
    }
}

/// Parameter windows around a pair, tracked through nearby parameters.
struct LocalPair {
    b: f64,
    u_side: Side,
    s_side: Side,
    u_range: (f64, f64),
    s_range: (f64, f64),
    refine_tol: f64,
}

struct LocalEvents {
    map: MapDef,
    saddle: PeriodicPoint,
    u_gen: BranchGenerator,
    s_gen: BranchGenerator,
    events: Vec<IntersectionEvent>,
}

impl LocalPair {
    fn new(pattern: &Pattern, i: usize, j: usize, b: f64, refine_tol: f64) -> Self {
        let (ei, ej) = (&pattern.events[i], &pattern.events[j]);
        let widen = |x: f64, y: f64| {
            let w = (x - y).abs();
            (x.min(y) - w, x.max(y) + w)
        };
        LocalPair {
            b,
            u_side: pattern.unstable[ei.0].side,
            s_side: pattern.stable[ei.1].side,
            u_range: widen(ei.2.param_a, ej.2.param_a),
            s_range: widen(ei.2.param_b, ej.2.param_b),
            refine_tol,
        }
    }

    fn events(&self, a: f64) -> Result<Option<LocalEvents>> {
        let map = MapDef::henon(a, self.b)?;
        let Some(saddle) = outer_saddle(&map, a, self.b) else {
            return Ok(None);
        };
        let u_gen = branch_generator(&map, &saddle, BranchKind::Unstable, self.u_side, FUNDAMENTAL_LENGTH)?;
        let s_gen = branch_generator(&map, &saddle, BranchKind::Stable, self.s_side, FUNDAMENTAL_LENGTH)?;
        let u = window_branch(BranchKind::Unstable, self.u_side, u_gen.clone(), self.u_range.0, self.u_range.1);
        let s = window_branch(BranchKind::Stable, self.s_side, s_gen.clone(), self.s_range.0, self.s_range.1);
        let events = find_intersections(&u, &s, self.refine_tol);
        Ok(Some(LocalEvents {
            map,
            saddle,
            u_gen,
            s_gen,
            events,
        }))
    }

    fn count(&self, a: f64) -> Result<usize> {
        Ok(self.events(a)?.map_or(0, |l| l.events.len()))
    }
}

/// Bisects for the first parameter, scanning down from `a_range.1`, at which
/// a homoclinic intersection pair of the outer saddle of the Hénon map
/// disappears, then locates the critical iterate on the tangency orbit.
pub fn first_tangency(b: f64, a_range: (f64, f64), budgets: &TangencyBudgets, tol: f64) -> Result<TangencyReport> {
    let (a_lo, a_hi) = a_range;
    MapDef::henon(a_hi, b)?;
    if !(a_lo < a_hi) || !(tol > 0.0) || !(budgets.scan_step > 0.0) {
        return Err(Error::InvalidArgument("need a_lo < a_hi and positive tol and scan step".into()));
    }
    let top = homoclinic_pattern(a_hi, b, budgets)?
        .ok_or_else(|| Error::BracketInvalid(format!("no saddle at a = {a_hi}")))?;
    if top.events.is_empty() {
        return Err(Error::BracketInvalid(format!("no homoclinic intersections at a = {a_hi}")));
    }
    if top.min_angle() <= BRACKET_MIN_ANGLE {
        return Err(Error::BracketInvalid(format!(
            "minimum intersection angle {:.3e} at a = {a_hi} is not above {BRACKET_MIN_ANGLE}",
            top.min_angle()
        )));
    }
    let mut upper = top;
    let mut a_up = a_hi;
    while a_up > a_lo {
        let a_down = (a_up - budgets.scan_step).max(a_lo);
        let lower = homoclinic_pattern(a_down, b, budgets)?;
        for (i, j) in vanished_pairs(&upper, lower.as_ref()) {
            let local = LocalPair::new(&upper, i, j, b, budgets.refine_tol);
            let present = local.count(a_up)?;
            if present < 2 || local.count(a_down)? + 2 > present {
                continue;
            }
            let (mut lo, mut hi) = (a_down, a_up);
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if local.count(mid)? >= present {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let report = tangency_report(b, (lo, hi), &local)?;
            // A fold closes with a vanishing angle; anything else slid out of a window.
            if report.tangency_angle < FOLD_ANGLE.max(10.0 * tol.sqrt()) {
                return Ok(report);
            }
        }
        match lower {
            Some(p) => upper = p,
            None => break,
        }
        a_up = a_down;
    }
    Err(Error::BracketInvalid(format!("no intersection pair disappears in [{a_lo}, {a_hi}]")))
}

fn tangency_report(b: f64, bracket: (f64, f64), local: &LocalPair) -> Result<TangencyReport> {
    let a_star = bracket.1;
    let l = local
        .events(a_star)?
        .ok_or_else(|| Error::BracketInvalid("saddle lost at the top of the bracket".into()))?;
    // The closest pair is the one about to merge.
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..l.events.len() {
        for j in i + 1..l.events.len() {
            let d = l.events[i].point.dist(l.events[j].point);
            if best.is_none_or(|x| d < x.2) {
                best = Some((i, j, d));
            }
        }
    }
    let (i, j, _) = best.ok_or_else(|| Error::BracketInvalid("pair not present at the top of the bracket".into()))?;
    let (ei, ej) = (&l.events[i], &l.events[j]);
    let e = if ei.angle <= ej.angle { ei } else { ej };
    let tau_u = 0.5 * (ei.param_a + ej.param_a);
    let tau_s = 0.5 * (ei.param_b + ej.param_b);
    let x0 = l.u_gen.eval(tau_u).zip(l.s_gen.eval(tau_s)).map(|(p, q)| p.lerp(q, 0.5)).unwrap_or(e.point);

    let tangent = |g: &BranchGenerator, tau: f64| -> Result<Direction> {
        let h = (tau.abs() * 1e-6).max(1e-300);
        let v = g
            .tangent(tau, h)
            .filter(|v| v.norm() > 0.0)
            .ok_or_else(|| Error::InvalidArgument(format!("tangent undefined at parameter {tau:e}")))?;
        Ok(Direction::new(v.y.atan2(v.x)))
    };
    let point = |g: &BranchGenerator, tau: f64| g.eval(tau).ok_or(Error::Escaped { index: 0, point: x0 });
    // Steps until the parameter reaches the seed domain: both ends saddle-local.
    let steps_to_local = |g: &BranchGenerator, tau: f64| {
        let mut k = 0;
        let mut t = tau.abs();
        while t > g.s0 {
            t /= g.lambda.abs();
            k += 1;
        }
        k
    };
    let n_back = steps_to_local(&l.u_gen, tau_u) + POST_HOC_WINDOW + 1;
    let mut n_fwd = steps_to_local(&l.s_gen, tau_s) + POST_HOC_WINDOW + 1;

    let mut orbit = Vec::new();
    let mut dirs = Vec::new();
    for k in (1..=n_back).rev() {
        let t = tau_u / l.u_gen.lambda.powi(k as i32);
        orbit.push(point(&l.u_gen, t)?);
        dirs.push(tangent(&l.u_gen, t)?);
    }
    orbit.push(x0);
    dirs.push(tangent(&l.s_gen, tau_s)?);
    let push_forward = |k: usize, orbit: &mut Vec<Vec2>, dirs: &mut Vec<Direction>| -> Result<()> {
        let t = tau_s / l.s_gen.lambda.powi(k as i32);
        orbit.push(point(&l.s_gen, t)?);
        dirs.push(tangent(&l.s_gen, t)?);
        Ok(())
    };
    for k in 1..=n_fwd {
        push_forward(k, &mut orbit, &mut dirs)?;
    }
    let log_g_of = |orbit: &[Vec2], dirs: &[Direction]| -> Result<Vec<f64>> {
        (0..orbit.len() - 1).map(|i| log_g_step(&l.map.jacobian(orbit[i]), dirs[i])).collect()
    };
    let mut log_g = log_g_of(&orbit, &dirs)?;
    // The split needs a total product of at least one.
    let mut extra = 0;
    while log_g.iter().sum::<f64>() < 0.0 && extra < MAX_FORWARD_EXTENSION {
        n_fwd += 1;
        extra += 1;
        push_forward(n_fwd, &mut orbit, &mut dirs)?;
        log_g = log_g_of(&orbit, &dirs)?;
    }
    let seq: Vec<f64> = log_g.iter().map(|x| x.exp()).collect();
    let k = cumulative_min_split(&seq)?;
    let orbit_start = -(n_back as i64);
    let critical_iterate = orbit_start + k as i64;
    let orbit_defect = orbit
        .windows(2)
        .map(|w| l.map.eval(w[0], Time::Forward).map(|(q, _)| q.dist(w[1])).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    Ok(TangencyReport {
        family_b: b,
        a_star,
        bracket,
        saddle: l.saddle.location,
        tangency_point: x0,
        tangency_angle: ei.angle.min(ej.angle),
        tangency_direction: e.tangent_a,
        critical_iterate,
        critical_point_estimate: orbit[k],
        critical_direction: dirs[k],
        orbit,
        orbit_start,
        log_g,
        orbit_defect,
    })
}
