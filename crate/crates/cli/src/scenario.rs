//! Scenario files: parsing and validation.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};
use std::path::PathBuf;

use critset_core::cocycle::pliss_times;
use critset_core::criticality::{SearchOptions, DEFAULT_THRESHOLD};
use critset_core::domination::{DEFAULT_DELTA, DEFAULT_N, DEFAULT_TRANSPORT};
use critset_core::dynamics::{BoxRegion, Family, MapDef};
use critset_core::geometry::Vec2;
use critset_core::manifolds::{DEFAULT_CURVATURE_TOL, DEFAULT_MAX_GAP, DEFAULT_SCAN_STEP, DEFAULT_TANGENCY_BUDGET, FUNDAMENTAL_LENGTH};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Upper bound on the symbolic period of horseshoe samples (2^period seeds).
const MAX_SYMBOLIC_PERIOD: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Score,
    Scan,
    FarFromHomothety,
    Domination,
    Manifolds,
    FirstTangency,
    Pliss,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Score => "score",
            ExperimentKind::Scan => "scan",
            ExperimentKind::FarFromHomothety => "far_from_homothety",
            ExperimentKind::Domination => "domination",
            ExperimentKind::Manifolds => "manifolds",
            ExperimentKind::FirstTangency => "first_tangency",
            ExperimentKind::Pliss => "pliss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ThreadsRepr", into = "ThreadsRepr")]
pub enum Threads {
    Auto,
    Count(usize),
}

impl Default for Threads {
    fn default() -> Self {
        Threads::Auto
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ThreadsRepr {
    Count(usize),
    Name(String),
}

impl TryFrom<ThreadsRepr> for Threads {
    type Error = String;

    fn try_from(r: ThreadsRepr) -> Result<Self, String> {
        match r {
            ThreadsRepr::Count(0) => Err("threads must be positive or \"auto\"".into()),
            ThreadsRepr::Count(n) => Ok(Threads::Count(n)),
            ThreadsRepr::Name(s) => Threads::parse(&s),
        }
    }
}

impl From<Threads> for ThreadsRepr {
    fn from(t: Threads) -> Self {
        match t {
            Threads::Auto => ThreadsRepr::Name("auto".into()),
            Threads::Count(n) => ThreadsRepr::Count(n),
        }
    }
}

impl Threads {
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threads::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Threads::Count(n)),
            _ => Err(format!("threads must be a positive integer or \"auto\", got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputOptions {
    /// Relative paths are resolved against the scenario file's directory.
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub csv: bool,
    #[serde(default = "yes")]
    pub json: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    map: Option<MapDef>,
    experiment: ExperimentKind,
    #[serde(default)]
    params: Option<serde_json::Value>,
    output: OutputOptions,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    threads: Threads,
}

/// A list of values or an inclusive `linspace`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Values {
    List(Vec<f64>),
    Linspace(Linspace),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub num: usize,
}

impl Values {
    pub fn expand(&self) -> Vec<f64> {
        match self {
            Values::List(v) => v.clone(),
            Values::Linspace(l) => match l.num {
                0 => Vec::new(),
                1 => vec![l.start],
                n => (0..n)
                    .map(|i| l.start + (l.stop - l.start) * i as f64 / (n - 1) as f64)
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleSet {
    Points { points: Vec<Vec2> },
    /// Every lattice point; escaping ones are counted, not scored.
    Grid { region: BoxRegion, grid: usize },
    GridSurvivors { region: BoxRegion, grid: usize, window: usize },
    AttractorOrbit { seed: Vec2, burn_in: usize, count: usize },
    PeriodicOrbits { max_period: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreParams {
    pub points: Vec<Vec2>,
    pub window: usize,
    #[serde(default)]
    pub search: SearchOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanParams {
    pub samples: SampleSet,
    pub window: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub search: SearchOptions,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarFromHomothetyParams {
    pub points: Vec<Vec2>,
    pub deltas: Values,
    pub horizon: usize,
    #[serde(default)]
    pub search: SearchOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominationParams {
    pub samples: SampleSet,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_m_horizon")]
    pub m_horizon: usize,
    #[serde(default = "default_transport")]
    pub transport_horizon: usize,
    #[serde(default = "default_half_width")]
    pub cone_half_width: f64,
    #[serde(default = "default_cone_steps")]
    pub cone_steps: usize,
    #[serde(default = "default_mesh_tol")]
    pub mesh_tol: f64,
}

fn default_n() -> usize {
    DEFAULT_N
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_m_horizon() -> usize {
    40
}
fn default_transport() -> usize {
    DEFAULT_TRANSPORT
}
fn default_half_width() -> f64 {
    FRAC_PI_6
}
fn default_cone_steps() -> usize {
    1
}
fn default_mesh_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldsParams {
    /// Approximate saddle location, polished by Newton's method.
    pub saddle: Vec2,
    #[serde(default = "one")]
    pub period: usize,
    pub budget: f64,
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
    #[serde(default = "default_curvature_tol")]
    pub curvature_tol: f64,
    #[serde(default = "default_max_gap")]
    pub max_gap: f64,
    #[serde(default = "default_fundamental_length")]
    pub fundamental_length: f64,
    #[serde(default = "default_band")]
    pub crossing_band: f64,
}

fn one() -> usize {
    1
}
fn default_refine_tol() -> f64 {
    1e-12
}
fn default_curvature_tol() -> f64 {
    DEFAULT_CURVATURE_TOL
}
fn default_max_gap() -> f64 {
    DEFAULT_MAX_GAP
}
fn default_fundamental_length() -> f64 {
    FUNDAMENTAL_LENGTH
}
fn default_band() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirstTangencyParams {
    pub a_range: (f64, f64),
    #[serde(default = "default_tangency_tol")]
    pub tol: f64,
    #[serde(default = "default_tangency_budget")]
    pub arclength: f64,
    #[serde(default = "default_scan_step")]
    pub scan_step: f64,
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
    /// Window of the post-hoc criticality check; 0 skips it.
    #[serde(default = "default_check_window")]
    pub check_window: usize,
    #[serde(default)]
    pub search: SearchOptions,
}

fn default_tangency_tol() -> f64 {
    1e-6
}
fn default_tangency_budget() -> f64 {
    DEFAULT_TANGENCY_BUDGET
}
fn default_scan_step() -> f64 {
    DEFAULT_SCAN_STEP
}
fn default_check_window() -> usize {
    15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlissParams {
    pub sequence: Vec<f64>,
    pub gamma0: f64,
    pub gamma1: f64,
    pub bound_a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Score(ScoreParams),
    Scan(ScanParams),
    FarFromHomothety(FarFromHomothetyParams),
    Domination(DominationParams),
    Manifolds(ManifoldsParams),
    FirstTangency(FirstTangencyParams),
    Pliss(PlissParams),
}

/// A fully validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub map: Option<MapDef>,
    pub experiment: ExperimentKind,
    pub params: Params,
    pub output: OutputOptions,
    pub seed: u64,
    pub threads: Threads,
}

impl Scenario {
    /// The map, present for every experiment except `pliss`.
    pub fn map(&self) -> &MapDef {
        self.map.as_ref().expect("validated scenario carries a map")
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn typed<T: DeserializeOwned>(kind: ExperimentKind, value: serde_json::Value) -> Result<T, CliError> {
    serde_json::from_value(value).map_err(|e| invalid(format!("params for {}: {e}", kind.name())))
}

fn check(cond: bool, msg: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(invalid(msg))
    }
}

fn check_search(s: &SearchOptions) -> Result<(), CliError> {
    check(s.grid > 0, "search.grid must be positive")?;
    check(s.refine_tol > 0.0 && s.refine_tol.is_finite(), "search.refine_tol must be positive")
}

fn check_region(r: &BoxRegion) -> Result<(), CliError> {
    check(
        r.x_min < r.x_max && r.y_min < r.y_max && [r.x_min, r.x_max, r.y_min, r.y_max].iter().all(|v| v.is_finite()),
        "region needs finite bounds with x_min < x_max and y_min < y_max",
    )
}

fn check_points(points: &[Vec2]) -> Result<(), CliError> {
    check(!points.is_empty(), "points must be nonempty")?;
    check(points.iter().all(|p| p.is_finite()), "points must be finite")
}

fn is_henon(map: &MapDef) -> bool {
    matches!(map.family, Family::Henon { .. }) && !map.reversed
}

fn check_samples(s: &SampleSet, map: &MapDef) -> Result<(), CliError> {
    match s {
        SampleSet::Points { points } => check_points(points),
        SampleSet::Grid { region, grid } => {
            check_region(region)?;
            check(*grid > 0, "samples.grid must be positive")
        }
        SampleSet::GridSurvivors { region, grid, .. } => {
            check_region(region)?;
            check(*grid > 0, "samples.grid must be positive")
        }
        SampleSet::AttractorOrbit { seed, count, .. } => {
            check(seed.is_finite(), "samples.seed must be finite")?;
            check(*count > 0, "samples.count must be positive")
        }
        SampleSet::PeriodicOrbits { max_period } => {
            check(is_henon(map), "periodic_orbits samples need a Hénon map")?;
            check(
                (1..=MAX_SYMBOLIC_PERIOD).contains(max_period),
                &format!("samples.max_period must lie in 1..={MAX_SYMBOLIC_PERIOD}"),
            )
        }
    }
}

fn validate_params(kind: ExperimentKind, map: Option<&MapDef>, value: serde_json::Value) -> Result<Params, CliError> {
    let need_map = || map.ok_or_else(|| invalid(format!("experiment {} needs a map", kind.name())));
    let params = match kind {
        ExperimentKind::Score => {
            let p: ScoreParams = typed(kind, value)?;
            need_map()?;
            check_points(&p.points)?;
            check(p.window > 0, "window must be positive")?;
            check_search(&p.search)?;
            Params::Score(p)
        }
        ExperimentKind::Scan => {
            let p: ScanParams = typed(kind, value)?;
            check_samples(&p.samples, need_map()?)?;
            check(p.window > 0, "window must be positive")?;
            check(p.threshold.is_finite(), "threshold must be finite")?;
            check_search(&p.search)?;
            Params::Scan(p)
        }
        ExperimentKind::FarFromHomothety => {
            let p: FarFromHomothetyParams = typed(kind, value)?;
            need_map()?;
            check_points(&p.points)?;
            check(p.horizon > 0, "horizon must be positive")?;
            let deltas = p.deltas.expand();
            check(!deltas.is_empty(), "deltas must be nonempty")?;
            check(deltas.iter().all(|d| *d > 0.0 && *d < 1.0), "every delta must lie in (0, 1)")?;
            check_search(&p.search)?;
            Params::FarFromHomothety(p)
        }
        ExperimentKind::Domination => {
            let p: DominationParams = typed(kind, value)?;
            check_samples(&p.samples, need_map()?)?;
            check(p.n > 0, "n must be positive")?;
            check(p.delta > 0.0 && p.delta.is_finite(), "delta must be positive")?;
            check(p.transport_horizon > 0, "transport_horizon must be positive")?;
            check(
                p.cone_half_width > 0.0 && p.cone_half_width <= FRAC_PI_4,
                "cone_half_width must lie in (0, π/4]",
            )?;
            check(p.mesh_tol > 0.0, "mesh_tol must be positive")?;
            Params::Domination(p)
        }
        ExperimentKind::Manifolds => {
            let p: ManifoldsParams = typed(kind, value)?;
            need_map()?;
            check(p.saddle.is_finite(), "saddle must be finite")?;
            check(p.period > 0, "period must be positive")?;
            check(p.budget > 0.0 && p.budget.is_finite(), "budget must be positive")?;
            for (v, name) in [
                (p.refine_tol, "refine_tol"),
                (p.curvature_tol, "curvature_tol"),
                (p.max_gap, "max_gap"),
                (p.fundamental_length, "fundamental_length"),
                (p.crossing_band, "crossing_band"),
            ] {
                check(v > 0.0 && v.is_finite(), &format!("{name} must be positive"))?;
            }
            Params::Manifolds(p)
        }
        ExperimentKind::FirstTangency => {
            let p: FirstTangencyParams = typed(kind, value)?;
            check(is_henon(need_map()?), "first_tangency needs a Hénon map (its b is used)")?;
            let (lo, hi) = p.a_range;
            check(lo.is_finite() && hi.is_finite() && lo < hi, "a_range must be an increasing pair")?;
            check(p.tol > 0.0, "tol must be positive")?;
            check(p.arclength > 0.0, "arclength must be positive")?;
            check(p.scan_step > 0.0, "scan_step must be positive")?;
            check(p.refine_tol > 0.0, "refine_tol must be positive")?;
            check_search(&p.search)?;
            Params::FirstTangency(p)
        }
        ExperimentKind::Pliss => {
            let p: PlissParams = typed(kind, value)?;
            pliss_times(&p.sequence, p.gamma0, p.gamma1, p.bound_a).map_err(|e| invalid(e.to_string()))?;
            Params::Pliss(p)
        }
    };
    Ok(params)
}

/// Parses and validates a scenario; nothing is computed.
pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    let raw: RawScenario = serde_json::from_str(text).map_err(|e| invalid(format!("scenario: {e}")))?;
    if let Some(map) = &raw.map {
        map.validate().map_err(|e| invalid(format!("map: {e}")))?;
    }
    let value = raw.params.unwrap_or_else(|| serde_json::Value::Object(Default::default()));
    let params = validate_params(raw.experiment, raw.map.as_ref(), value)?;
    check(!raw.output.dir.as_os_str().is_empty(), "output.dir must be nonempty")?;
    Ok(Scenario {
        map: raw.map,
        experiment: raw.experiment,
        params,
        output: raw.output,
        seed: raw.seed,
        threads: raw.threads,
    })
}
