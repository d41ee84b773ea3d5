//! Splitting estimates, the `(*)` growth condition and cone-field checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapDef, Orbit};
use crate::error::{Error, Result};
use crate::geometry::{g_step, most_expanded_direction, singular_pair, Direction, Mat2, Vec2};
use crate::samples::Sample;

pub const DEGENERATE_ANGLE: f64 = 1e-8;
pub const CONE_MARGIN: f64 = 1e-3;
pub const DEFAULT_DELTA: f64 = 0.2;
pub const DEFAULT_N: usize = 10;
pub const DEFAULT_TRANSPORT: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingEstimate {
    pub base: Vec2,
    #[serde(rename = "E")]
    pub e: Direction,
    #[serde(rename = "F")]
    pub f: Direction,
    pub transport_horizon: usize,
    pub angle: f64,
}

fn transport(dir: Direction, mats: impl Iterator<Item = Mat2>) -> Direction {
    let mut u = dir.unit();
    for m in mats {
        let w = m.apply(u);
        u = w * (1.0 / w.norm());
    }
    Direction::new(u.y.atan2(u.x))
}

pub fn estimate_splitting(map: &MapDef, p: Vec2, horizon: usize) -> Result<SplittingEstimate> {
    let orb = crate::dynamics::orbit(map, p, horizon, horizon)?;
    if let Some(index) = orb.escaped_at() {
        return Err(Error::Escaped {
            index,
            point: orb.point(index).unwrap_or(p),
        });
    }
    estimate_splitting_orbit(&orb, horizon)
}

/// Splitting at `orb.base` using `horizon` steps of transport on each side.
pub fn estimate_splitting_orbit(orb: &Orbit, horizon: usize) -> Result<SplittingEstimate> {
    let t = horizon as i64;
    if orb.n_back < horizon || orb.n_fwd < horizon {
        return Err(Error::InvalidArgument("orbit window shorter than the transport horizon".into()));
    }
    let first = orb.jacobian(-t).expect("inside window");
    let last = orb.jacobian(t - 1).expect("inside window");
    // Conformal steps have no preferred direction to seed from.
    for m in [first, last] {
        if let Err(Error::ConformalMatrix) = singular_pair(&m) {
            return Err(Error::DegenerateAngle { angle: 0.0 });
        }
    }
    let f_seed = most_expanded_direction(&first);
    let f = transport(f_seed, (-t..0).map(|n| orb.jacobian(n).expect("inside window")));

    let inverses = (1..=t)
        .map(|n| orb.jacobian(n - 1).expect("inside window").inverse())
        .collect::<Result<Vec<_>>>()?;
    let e_seed = most_expanded_direction(&inverses[inverses.len() - 1]);
    let e = transport(e_seed, inverses.iter().rev().skip(1).copied());

    let angle = e.distance(f);
    if angle < DEGENERATE_ANGLE {
        return Err(Error::DegenerateAngle { angle });
    }
    Ok(SplittingEstimate {
        base: orb.base,
        e,
        f,
        transport_horizon: horizon,
        angle,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Exceeds,
    DegenerateAngle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub point: Vec2,
    pub m: Option<usize>,
    pub value: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub samples: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub delta: f64,
    pub m_horizon: usize,
    pub transport_horizon: usize,
    /// `max (1/N) ln g^N(G^m F̂)`; `−∞` when nothing was evaluated.
    pub max_ratio: f64,
    pub condition_star_holds: bool,
    pub violations: Vec<Violation>,
    /// Samples whose window left the domain (precondition not met).
    pub escaped: usize,
}

impl DominationReport {
    /// `ln(1+δ) − max_ratio`: how far inside the `(*)` bound the worst case is.
    pub fn margin(&self) -> f64 {
        (1.0 + self.delta).ln() - self.max_ratio
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionStarParams {
    pub n: usize,
    pub delta: f64,
    pub m_horizon: usize,
    pub transport_horizon: usize,
}

impl Default for ConditionStarParams {
    fn default() -> Self {
        ConditionStarParams {
            n: DEFAULT_N,
            delta: DEFAULT_DELTA,
            m_horizon: 40,
            transport_horizon: DEFAULT_TRANSPORT,
        }
    }
}

enum SampleOutcome {
    Ratios(Vec2, Vec<f64>),
    Degenerate(Vec2, f64),
    Escaped,
}

fn star_ratios(orb: &Orbit, params: &ConditionStarParams) -> Result<Vec<f64>> {
    let est = estimate_splitting_orbit(orb, params.transport_horizon)?;
    let steps = params.m_horizon + params.n;
    let mut u = est.f.unit();
    let mut cumulative = vec![0.0];
    for k in 0..steps as i64 {
        let jac = orb.jacobian(k).expect("inside window");
        let w = jac.apply(u);
        let len = w.norm();
        cumulative.push(cumulative[k as usize] + jac.det().abs().ln() - 2.0 * len.ln());
        u = w * (1.0 / len);
    }
    let n = params.n;
    Ok((0..=params.m_horizon)
        .map(|m| (cumulative[m + n] - cumulative[m]) / n as f64)
        .collect())
}

pub fn condition_star(map: &MapDef, samples: &[Sample], params: &ConditionStarParams) -> Result<DominationReport> {
    if !(params.delta > 0.0) || params.n == 0 {
        return Err(Error::InvalidArgument("need delta > 0 and N > 0".into()));
    }
    let fwd = params.transport_horizon.max(params.m_horizon + params.n);
    let outcomes: Vec<SampleOutcome> = samples
        .par_iter()
        .map(|s| {
            let orb = match s.window(map, params.transport_horizon, fwd) {
                Ok(o) if o.escaped_at().is_none() => o,
                Ok(_) | Err(Error::Escaped { .. }) => return Ok(SampleOutcome::Escaped),
                Err(e) => return Err(e),
            };
            match star_ratios(&orb, params) {
                Ok(r) => Ok(SampleOutcome::Ratios(s.point, r)),
                Err(Error::DegenerateAngle { angle }) => Ok(SampleOutcome::Degenerate(s.point, angle)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let bound = (1.0 + params.delta).ln();
    let mut max_ratio = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    let mut escaped = 0;
    for outcome in outcomes {
        match outcome {
            SampleOutcome::Ratios(point, ratios) => {
                for (m, &r) in ratios.iter().enumerate() {
                    max_ratio = max_ratio.max(r);
                    if r >= bound {
                        violations.push(Violation {
                            point,
                            m: Some(m),
                            value: r,
                            kind: ViolationKind::Exceeds,
                        });
                    }
                }
            }
            SampleOutcome::Degenerate(point, angle) => violations.push(Violation {
                point,
                m: None,
                value: angle,
                kind: ViolationKind::DegenerateAngle,
            }),
            SampleOutcome::Escaped => escaped += 1,
        }
    }
    Ok(DominationReport {
        samples: samples.len(),
        n: params.n,
        delta: params.delta,
        m_horizon: params.m_horizon,
        transport_horizon: params.transport_horizon,
        max_ratio,
        condition_star_holds: violations.is_empty(),
        violations,
        escaped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeField {
    pub centers: Vec<Direction>,
    /// Centers of the repelling cones; perpendicular to `centers` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dual_centers: Option<Vec<Direction>>,
    pub half_width: f64,
}

impl ConeField {
    pub fn new(centers: Vec<Direction>, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width <= std::f64::consts::FRAC_PI_4) {
            return Err(Error::InvalidArgument("cone half-width must lie in (0, π/4]".into()));
        }
        Ok(ConeField {
            centers,
            dual_centers: None,
            half_width,
        })
    }

    pub fn dual_center(&self, i: usize) -> Direction {
        match &self.dual_centers {
            Some(d) => d[i],
            None => self.centers[i].perp(),
        }
    }

    /// Cones centered on the estimated `F` at every sample, repelling cones
    /// on the estimated `E`.
    pub fn from_splitting(map: &MapDef, samples: &[Sample], transport_horizon: usize, half_width: f64) -> Result<Self> {
        let centers = samples
            .par_iter()
            .map(|s| {
                let orb = s.window(map, transport_horizon, transport_horizon)?;
                if let Some(index) = orb.escaped_at() {
                    return Err(Error::Escaped { index, point: s.point });
                }
                let est = estimate_splitting_orbit(&orb, transport_horizon)?;
                Ok((est.f, est.e))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut field = ConeField::new(centers.iter().map(|c| c.0).collect(), half_width)?;
        field.dual_centers = Some(centers.iter().map(|c| c.1).collect());
        Ok(field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeFieldReport {
    pub holds: bool,
    /// Smallest slack (radians) between image cones and target cones.
    pub min_margin: f64,
    /// Smallest ratio `min g on the repelling cone / max g on the cone`.
    pub min_factor: f64,
    /// Indices of samples failing either check.
    pub failures: Vec<usize>,
    pub max_match_distance: f64,
}

fn nearest(samples: &[Sample], q: Vec2) -> (usize, f64) {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s.point.dist(q)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("nonempty samples")
}

/// Slack of `jac · cone(src)` inside `cone(dst)` (negative when it sticks out).
fn image_margin(jac: &Mat2, src: Direction, dst: Direction, w: f64) -> f64 {
    let map_dir = |d: Direction| {
        let v = jac.apply(d.unit());
        Direction::new(v.y.atan2(v.x))
    };
    let lo = dst.offset_to(map_dir(src.rotated(-w)));
    let mid = dst.offset_to(map_dir(src));
    let hi = dst.offset_to(map_dir(src.rotated(w)));
    let (a, b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    if !(a <= mid && mid <= b) {
        // The image arc wraps through the far side of the target.
        return -std::f64::consts::FRAC_PI_2;
    }
    (w - a.abs()).min(w - b.abs())
}

/// `min g on the repelling cone / max g on the cone`, both of half-width `w`. `g`
/// peaks at the most contracted direction `e` and is monotone on each side,
/// so the extremes sit at the arc points nearest to `e` and `f`.
fn expansion_factor(jac: &Mat2, center: Direction, dual: Direction, w: f64) -> Result<f64> {
    let sp = match singular_pair(jac) {
        Ok(sp) => sp,
        Err(Error::ConformalMatrix) => return Ok(1.0),
        Err(e) => return Err(e),
    };
    let closest = |c: Direction, target: Direction| c.rotated(c.offset_to(target).clamp(-w, w));
    let g_cone_max = g_step(jac, closest(center, sp.e))?;
    let g_dual_min = g_step(jac, closest(dual, sp.f))?;
    Ok(g_dual_min / g_cone_max)
}

pub fn verify_cone_field(
    map: &MapDef,
    samples: &[Sample],
    cone: &ConeField,
    steps: usize,
    mesh_tol: f64,
) -> Result<ConeFieldReport> {
    if cone.centers.len() != samples.len() {
        return Err(Error::InvalidArgument("one cone center per sample required".into()));
    }
    let w = cone.half_width;
    let steps = steps.max(1);
    let per_sample = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let (image, jac) = map.iterate(s.point, steps, crate::dynamics::Time::Forward)?;
            let (j, dist) = nearest(samples, image);
            if dist > mesh_tol {
                return Err(Error::MeshTooCoarse {
                    distance: dist,
                    tolerance: mesh_tol,
                });
            }
            let margin = image_margin(&jac, cone.centers[i], cone.centers[j], w);
            let factor = expansion_factor(&jac, cone.centers[i], cone.dual_center(i), w)?;
            Ok((margin, factor, dist))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = ConeFieldReport {
        holds: true,
        min_margin: f64::INFINITY,
        min_factor: f64::INFINITY,
        failures: Vec::new(),
        max_match_distance: 0.0,
    };
    for (i, (margin, factor, dist)) in per_sample.into_iter().enumerate() {
        report.min_margin = report.min_margin.min(margin);
        report.min_factor = report.min_factor.min(factor);
        report.max_match_distance = report.max_match_distance.max(dist);
        if margin < CONE_MARGIN || factor <= 1.0 {
            report.failures.push(i);
        }
    }
    report.holds = report.failures.is_empty() && !samples.is_empty();
    Ok(report)
}
