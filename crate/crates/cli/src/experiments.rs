//! Experiment runners. Each returns its tables and JSON report in memory;
//! nothing touches the filesystem here.

use std::time::Instant;

use critset_core::cocycle::pliss_times;
use critset_core::criticality::{critical_scan_samples, criticality_score, far_from_homotheties, CriticalityReport};
use critset_core::domination::{condition_star, verify_cone_field, ConditionStarParams, ConeField};
use critset_core::dynamics::{find_periodic_points, BoxRegion, Family, MapDef};
use critset_core::manifolds::{
    classify_crossing, find_intersections, first_tangency, grow_branch, tangency_criticality, BranchKind, GrowOptions,
    Side, TangencyBudgets,
};
use critset_core::samples::{build_samples, Sample, SampleStrategy};
use critset_core::Error;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::scenario::*;
use crate::CliError;

/// Half-width of the box searched for the polished saddle.
const SADDLE_SEARCH: f64 = 0.05;
const SADDLE_SEEDS: usize = 5;

pub struct Table {
    pub file: &'static str,
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

pub struct Outcome {
    pub tables: Vec<Table>,
    pub report: Value,
    pub warnings: Vec<String>,
    pub stages: Vec<Stage>,
}

struct Recorder {
    stages: Vec<Stage>,
    warnings: Vec<String>,
}

impl Recorder {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.push(Stage {
            name: name.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }

    fn finish(self, tables: Vec<Table>, report: Value) -> Outcome {
        Outcome {
            tables,
            report,
            warnings: self.warnings,
            stages: self.stages,
        }
    }
}

/// Shortest decimal string that round-trips to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn core_error(e: Error) -> CliError {
    match e {
        Error::InvalidArgument(_) | Error::EmptyHypothesis(_) | Error::NonInvertible(_) | Error::InvalidMap(_) => {
            CliError::Validation(e.to_string())
        }
        _ => CliError::Numerical(e.to_string()),
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

pub const SCORE_COLUMNS: &[&str] = &["x", "y", "score", "theta_best", "fwd_score", "bwd_score"];

pub fn score_row(r: &CriticalityReport) -> Vec<String> {
    vec![
        num(r.base.x),
        num(r.base.y),
        num(r.score),
        num(r.best_direction.theta()),
        num(r.forward_score),
        num(r.backward_score),
    ]
}

pub fn run(scenario: &Scenario) -> Result<Outcome, CliError> {
    let mut rec = Recorder {
        stages: Vec::new(),
        warnings: Vec::new(),
    };
    match &scenario.params {
        Params::Score(p) => score(scenario.map(), p, rec),
        Params::Scan(p) => scan(scenario.map(), p, &mut rec).map(|(t, r)| rec.finish(t, r)),
        Params::FarFromHomothety(p) => far(scenario.map(), p, rec),
        Params::Domination(p) => domination(scenario.map(), p, &mut rec).map(|(t, r)| rec.finish(t, r)),
        Params::Manifolds(p) => manifolds(scenario.map(), p, &mut rec).map(|(t, r)| rec.finish(t, r)),
        Params::FirstTangency(p) => tangency(scenario.map(), p, &mut rec).map(|(t, r)| rec.finish(t, r)),
        Params::Pliss(p) => {
            let times = rec
                .stage("pliss", || pliss_times(&p.sequence, p.gamma0, p.gamma1, p.bound_a))
                .map_err(core_error)?;
            let rows = times.times.iter().map(|t| vec![t.to_string()]).collect();
            let table = Table {
                file: "results.csv",
                header: &["t"],
                rows,
            };
            Ok(rec.finish(vec![table], to_json(&times)))
        }
    }
}

fn score(map: &MapDef, p: &ScoreParams, mut rec: Recorder) -> Result<Outcome, CliError> {
    let results: Vec<Result<CriticalityReport, Error>> = rec.stage("score", || {
        p.points
            .par_iter()
            .map(|&x| criticality_score(map, x, p.window, &p.search))
            .collect()
    });
    let mut reports = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => reports.push(r),
            Err(e @ Error::Escaped { .. }) => rec.warnings.push(format!("point {i}: {e}")),
            Err(e) => return Err(core_error(e)),
        }
    }
    if reports.is_empty() {
        return Err(CliError::Numerical(format!("all {} points escaped", p.points.len())));
    }
    let table = Table {
        file: "results.csv",
        header: SCORE_COLUMNS,
        rows: reports.iter().map(score_row).collect(),
    };
    Ok(rec.finish(vec![table], to_json(&reports)))
}

fn samples(map: &MapDef, spec: &SampleSet) -> Result<Vec<Sample>, CliError> {
    let strategy = match spec {
        SampleSet::Points { points } => return Ok(points.iter().copied().map(Sample::free).collect()),
        SampleSet::Grid { region, grid } => return Ok(region.lattice(*grid).into_iter().map(Sample::free).collect()),
        SampleSet::GridSurvivors { region, grid, window } => SampleStrategy::GridSurvivors {
            region: *region,
            grid: *grid,
            window: *window,
        },
        SampleSet::AttractorOrbit { seed, burn_in, count } => SampleStrategy::AttractorOrbit {
            seed: *seed,
            burn_in: *burn_in,
            count: *count,
        },
        SampleSet::PeriodicOrbits { max_period } => SampleStrategy::PeriodicOrbits {
            max_period: *max_period,
        },
    };
    let out = build_samples(map, &strategy).map_err(core_error)?;
    if out.is_empty() {
        return Err(CliError::Numerical("sample set is empty: every candidate escaped".into()));
    }
    Ok(out)
}

fn scan(map: &MapDef, p: &ScanParams, rec: &mut Recorder) -> Result<(Vec<Table>, Value), CliError> {
    let samples = rec.stage("samples", || samples(map, &p.samples))?;
    let result = rec
        .stage("scan", || critical_scan_samples(map, &samples, p.window, p.threshold, &p.search))
        .map_err(core_error)?;
    if result.reports.is_empty() {
        return Err(CliError::Numerical(format!("all {} samples escaped", samples.len())));
    }
    if result.escaped > 0 {
        rec.warnings
            .push(format!("{} of {} samples escaped and were skipped", result.escaped, samples.len()));
    }
    let results = Table {
        file: "results.csv",
        header: SCORE_COLUMNS,
        rows: result.reports.iter().map(score_row).collect(),
    };
    let candidates = Table {
        file: "candidates.csv",
        header: &["x", "y", "theta", "score", "final_slope"],
        rows: result
            .candidates
            .iter()
            .map(|c| {
                let slope = c.alignment_slopes.last().map(|s| num(s.slope)).unwrap_or_default();
                vec![num(c.point.x), num(c.point.y), num(c.direction.theta()), num(c.score), slope]
            })
            .collect(),
    };
    Ok((vec![results, candidates], to_json(&result)))
}

fn far(map: &MapDef, p: &FarFromHomothetyParams, mut rec: Recorder) -> Result<Outcome, CliError> {
    let deltas = p.deltas.expand();
    let jobs: Vec<(f64, usize)> = deltas
        .iter()
        .flat_map(|&d| (0..p.points.len()).map(move |i| (d, i)))
        .collect();
    let results: Vec<_> = rec.stage("far_from_homothety", || {
        jobs.par_iter()
            .map(|&(d, i)| far_from_homotheties(map, p.points[i], d, p.horizon, &p.search))
            .collect()
    });
    let mut reports = Vec::new();
    for ((d, i), r) in jobs.iter().zip(results) {
        match r {
            Ok(r) => reports.push(r),
            Err(e @ Error::Escaped { .. }) => rec.warnings.push(format!("point {i} at delta {d}: {e}")),
            Err(e) => return Err(core_error(e)),
        }
    }
    if reports.is_empty() {
        return Err(CliError::Numerical("every point escaped".into()));
    }
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                num(r.delta),
                num(r.base.x),
                num(r.base.y),
                r.witness_direction.is_some().to_string(),
                r.witness_direction.map(|d| num(d.theta())).unwrap_or_default(),
                num(r.margin),
            ]
        })
        .collect();
    let table = Table {
        file: "results.csv",
        header: &["delta", "x", "y", "witness", "witness_theta", "margin"],
        rows,
    };
    Ok(rec.finish(vec![table], to_json(&reports)))
}

fn domination(map: &MapDef, p: &DominationParams, rec: &mut Recorder) -> Result<(Vec<Table>, Value), CliError> {
    let all = rec.stage("samples", || samples(map, &p.samples))?;
    let fwd = p.transport_horizon.max(p.m_horizon + p.n);
    let keep: Vec<bool> = rec.stage("survival", || {
        all.par_iter()
            .map(|s| s.window(map, p.transport_horizon, fwd).is_ok_and(|o| o.escaped_at().is_none()))
            .collect()
    });
    let samples: Vec<Sample> = all.iter().zip(&keep).filter(|(_, k)| **k).map(|(s, _)| s.clone()).collect();
    if samples.is_empty() {
        return Err(CliError::Numerical(format!("all {} samples escaped", all.len())));
    }
    if samples.len() < all.len() {
        rec.warnings
            .push(format!("{} of {} samples escaped and were skipped", all.len() - samples.len(), all.len()));
    }
    let params = ConditionStarParams {
        n: p.n,
        delta: p.delta,
        m_horizon: p.m_horizon,
        transport_horizon: p.transport_horizon,
    };
    let star = rec.stage("condition_star", || condition_star(map, &samples, &params)).map_err(core_error)?;
    let cones = rec
        .stage("cone_field", || {
            let field = ConeField::from_splitting(map, &samples, p.transport_horizon, p.cone_half_width)?;
            verify_cone_field(map, &samples, &field, p.cone_steps, p.mesh_tol)
        })
        .map_err(core_error)?;
    let summary = Table {
        file: "results.csv",
        header: &[
            "samples",
            "N",
            "delta",
            "max_ratio",
            "margin",
            "condition_star_holds",
            "cone_field_holds",
            "cone_min_margin",
            "cone_min_factor",
            "cone_failures",
        ],
        rows: vec![vec![
            star.samples.to_string(),
            star.n.to_string(),
            num(star.delta),
            num(star.max_ratio),
            num(star.margin()),
            star.condition_star_holds.to_string(),
            cones.holds.to_string(),
            num(cones.min_margin),
            num(cones.min_factor),
            cones.failures.len().to_string(),
        ]],
    };
    let violations = Table {
        file: "violations.csv",
        header: &["x", "y", "m", "value", "kind"],
        rows: star
            .violations
            .iter()
            .map(|v| {
                vec![
                    num(v.point.x),
                    num(v.point.y),
                    v.m.map(|m| m.to_string()).unwrap_or_default(),
                    num(v.value),
                    to_json(&v.kind).as_str().unwrap_or_default().to_string(),
                ]
            })
            .collect(),
    };
    let report = json!({ "condition_star": star, "margin": star.margin(), "cone_field": cones });
    Ok((vec![summary, violations], report))
}

fn label<T: Serialize>(v: &T) -> String {
    to_json(v).as_str().unwrap_or_default().to_string()
}

fn manifolds(map: &MapDef, p: &ManifoldsParams, rec: &mut Recorder) -> Result<(Vec<Table>, Value), CliError> {
    let region = BoxRegion {
        x_min: p.saddle.x - SADDLE_SEARCH,
        x_max: p.saddle.x + SADDLE_SEARCH,
        y_min: p.saddle.y - SADDLE_SEARCH,
        y_max: p.saddle.y + SADDLE_SEARCH,
    };
    let found = rec
        .stage("saddle", || find_periodic_points(map, p.period, &region, SADDLE_SEEDS))
        .map_err(core_error)?;
    let saddle = found
        .into_iter()
        .filter(|pp| pp.period == p.period)
        .min_by(|a, b| a.location.dist(p.saddle).total_cmp(&b.location.dist(p.saddle)))
        .ok_or_else(|| CliError::Numerical(format!("no period-{} point within {SADDLE_SEARCH} of the saddle guess", p.period)))?;
    let opts = GrowOptions {
        arclength_budget: p.budget,
        curvature_tol: p.curvature_tol,
        max_gap: p.max_gap,
        fundamental_length: p.fundamental_length,
    };
    let mut branches = Vec::new();
    rec.stage("grow", || -> Result<(), CliError> {
        for kind in [BranchKind::Unstable, BranchKind::Stable] {
            for side in [Side::Plus, Side::Minus] {
                branches.push(grow_branch(map, &saddle, kind, side, &opts).map_err(core_error)?);
            }
        }
        Ok(())
    })?;
    let mut events = Vec::new();
    rec.stage("intersections", || {
        for u in branches.iter().filter(|b| b.kind == BranchKind::Unstable) {
            for s in branches.iter().filter(|b| b.kind == BranchKind::Stable) {
                for ev in find_intersections(u, s, p.refine_tol) {
                    let crossing = match classify_crossing(s, u, &ev, p.crossing_band) {
                        Ok(c) => label(&c),
                        Err(_) => "undetermined".to_string(),
                    };
                    events.push((u.side, s.side, ev, crossing));
                }
            }
        }
    });
    let mut points = Vec::new();
    for b in &branches {
        for (pi, piece) in b.pieces.iter().enumerate() {
            for (i, (x, t)) in piece.points.iter().zip(&piece.params).enumerate() {
                points.push(vec![label(&b.kind), label(&b.side), pi.to_string(), i.to_string(), num(*t), num(x.x), num(x.y)]);
            }
        }
    }
    let intersections = Table {
        file: "intersections.csv",
        header: &["unstable_side", "stable_side", "x", "y", "angle", "param_u", "param_s", "residual", "crossing"],
        rows: events
            .iter()
            .map(|(us, ss, ev, c)| {
                vec![
                    label(us),
                    label(ss),
                    num(ev.point.x),
                    num(ev.point.y),
                    num(ev.angle),
                    num(ev.param_a),
                    num(ev.param_b),
                    num(ev.residual),
                    c.clone(),
                ]
            })
            .collect(),
    };
    let report = json!({
        "saddle": saddle,
        "branches": branches,
        "intersections": events.iter().map(|(us, ss, ev, c)| json!({
            "unstable_side": us, "stable_side": ss, "event": ev, "crossing": c,
        })).collect::<Vec<_>>(),
    });
    let table = Table {
        file: "results.csv",
        header: &["kind", "side", "piece", "index", "param", "x", "y"],
        rows: points,
    };
    Ok((vec![table, intersections], report))
}

fn tangency(map: &MapDef, p: &FirstTangencyParams, rec: &mut Recorder) -> Result<(Vec<Table>, Value), CliError> {
    let Family::Henon { b, .. } = map.family else {
        return Err(CliError::Validation("first_tangency needs a Hénon map".into()));
    };
    let budgets = TangencyBudgets {
        arclength: p.arclength,
        scan_step: p.scan_step,
        refine_tol: p.refine_tol,
    };
    let report = rec
        .stage("first_tangency", || first_tangency(b, p.a_range, &budgets, p.tol))
        .map_err(core_error)?;
    let check = if p.check_window > 0 {
        Some(
            rec.stage("criticality_check", || tangency_criticality(&report, p.check_window, &p.search))
                .map_err(core_error)?,
        )
    } else {
        None
    };
    let crit = report.critical_point_estimate;
    let opt = |v: Option<String>| v.unwrap_or_default();
    let summary = Table {
        file: "results.csv",
        header: &[
            "b",
            "a_star",
            "bracket_lo",
            "bracket_hi",
            "tangency_x",
            "tangency_y",
            "tangency_angle",
            "critical_iterate",
            "critical_x",
            "critical_y",
            "critical_theta",
            "check_window",
            "check_score",
            "check_alignment",
            "argmax_iterate",
        ],
        rows: vec![vec![
            num(report.family_b),
            num(report.a_star),
            num(report.bracket.0),
            num(report.bracket.1),
            num(report.tangency_point.x),
            num(report.tangency_point.y),
            num(report.tangency_angle),
            report.critical_iterate.to_string(),
            num(crit.x),
            num(crit.y),
            num(report.critical_direction.theta()),
            p.check_window.to_string(),
            opt(check.as_ref().map(|c| num(c.score))),
            opt(check.as_ref().map(|c| num(c.alignment))),
            opt(check.as_ref().map(|c| c.argmax_iterate.to_string())),
        ]],
    };
    let orbit = Table {
        file: "orbit.csv",
        header: &["n", "x", "y", "log_g"],
        rows: report
            .orbit
            .iter()
            .enumerate()
            .map(|(i, x)| {
                vec![
                    (report.orbit_start + i as i64).to_string(),
                    num(x.x),
                    num(x.y),
                    report.log_g.get(i).map(|v| num(*v)).unwrap_or_default(),
                ]
            })
            .collect(),
    };
    let json = json!({ "tangency": report, "criticality_check": check });
    Ok((vec![summary, orbit], json))
}
