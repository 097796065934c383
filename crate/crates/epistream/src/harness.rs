//! Experiment harness: axis sweeps over the config space, seed
//! replication with mean/stddev aggregation, figure presets, and CSV
//! emission. Points and seeds run in parallel; output row order is
//! fixed by the spec of the sweep alone, so regeneration is
//! byte-identical.

use crate::analytics::min_diffusion_delay;
use crate::engine::{run, SimError};
use crate::metrics::Metrics;
use crate::model::{ConfigError, Scheme, SimConfig, UploadDist};
use rayon::prelude::*;
use serde::Deserialize;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Default replication when a sweep does not pin its own seeds.
pub const DEFAULT_SEEDS: [u64; 5] = [42, 43, 44, 45, 46];

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Num(f64),
    Int(u64),
    Text(String),
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Num(x) => write!(f, "{x}"),
            FieldValue::Int(x) => write!(f, "{x}"),
            FieldValue::Text(s) => write!(f, "{s}"),
        }
    }
}

impl FieldValue {
    fn as_f64(&self, field: &str) -> Result<f64, ConfigError> {
        match self {
            FieldValue::Num(x) => Ok(*x),
            FieldValue::Int(x) => Ok(*x as f64),
            FieldValue::Text(_) => Err(invalid(field, "expected a number")),
        }
    }

    fn as_u64(&self, field: &str) -> Result<u64, ConfigError> {
        match self {
            FieldValue::Int(x) => Ok(*x),
            _ => Err(invalid(field, "expected an integer")),
        }
    }

    fn as_text(&self, field: &str) -> Result<&str, ConfigError> {
        match self {
            FieldValue::Text(s) => Ok(s),
            _ => Err(invalid(field, "expected a string")),
        }
    }
}

fn invalid(field: &str, reason: &str) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), reason: reason.to_string() }
}

/// Writes one sweepable knob into a config. Besides the literal config
/// fields, three composite knobs exist: `rtt_ms` (constant latency),
/// `latency_scale` (scales whatever latency model the base uses, so
/// sweeps stay paired draw-for-draw), and `mprime_m` (an "m'/m" pair
/// like "2/6" setting upload slots and probe set together).
pub fn apply_field(cfg: &mut SimConfig, field: &str, value: &FieldValue) -> Result<(), ConfigError> {
    match field {
        "n" => cfg.n = value.as_u64(field)? as usize,
        "edge_prob" => cfg.edge_prob = value.as_f64(field)?,
        "stream_rate" => cfg.stream_rate = value.as_f64(field)?,
        "chunk_size" => cfg.chunk_size = value.as_f64(field)?,
        "control_msg_size" => cfg.control_msg_size = value.as_f64(field)?,
        "probe_set_size" => cfg.probe_set_size = value.as_u64(field)? as usize,
        "max_parallel_uploads" => cfg.max_parallel_uploads = value.as_u64(field)? as usize,
        "source_upload" => cfg.source_upload = value.as_f64(field)?,
        "buffer_capacity" => cfg.buffer_capacity = value.as_u64(field)?,
        "warmup_chunks" => cfg.warmup_chunks = value.as_u64(field)?,
        "measured_chunks" => cfg.measured_chunks = value.as_u64(field)?,
        "scheme" => cfg.scheme = Scheme::from_str(value.as_text(field)?)?,
        "upload_rate" => {
            cfg.upload_dist = UploadDist::Homogeneous { rate: value.as_f64(field)? }
        }
        "upload_dist" => match value.as_text(field)? {
            "heterogeneous" => cfg.upload_dist = UploadDist::heterogeneous(),
            "homogeneous" => {
                cfg.upload_dist = UploadDist::Homogeneous { rate: SimConfig::default().source_upload }
            }
            other => return Err(invalid(field, &format!("unknown distribution {other:?}"))),
        },
        "rtt_ms" => {
            cfg.latency_model =
                crate::model::LatencySpec::Constant { rtt_ms: value.as_f64(field)? }
        }
        "latency_scale" => cfg.latency_model = cfg.latency_model.scaled(value.as_f64(field)?),
        "mprime_m" => {
            let text = value.as_text(field)?;
            let (mp, m) = text
                .split_once('/')
                .ok_or_else(|| invalid(field, "expected \"m'/m\" like \"2/6\""))?;
            let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| invalid(field, &e.to_string()));
            cfg.max_parallel_uploads = parse(mp)?;
            cfg.probe_set_size = parse(m)?;
        }
        other => return Err(invalid(other, "not a sweepable field")),
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Axis {
    pub field: String,
    pub values: Vec<FieldValue>,
}

impl Axis {
    pub fn new(field: &str, values: Vec<FieldValue>) -> Self {
        Axis { field: field.to_string(), values }
    }

    fn nums(field: &str, values: &[f64]) -> Self {
        Axis::new(field, values.iter().map(|&v| FieldValue::Num(v)).collect())
    }

    fn texts(field: &str, values: &[&str]) -> Self {
        Axis::new(field, values.iter().map(|v| FieldValue::Text(v.to_string())).collect())
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: SimConfig,
    pub axes: Vec<Axis>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    Invalid(#[from] ConfigError),
    #[error("sweep file: {0}")]
    Parse(String),
    #[error("point {point}: {source}")]
    Point { point: String, source: SimError },
}

/// Everything the full-scale presets share; desk scale trades peers
/// and measured chunks for turnaround time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    Full,
    Desk,
}

impl ScaleMode {
    fn base(self) -> SimConfig {
        match self {
            ScaleMode::Full => SimConfig::default(),
            ScaleMode::Desk => SimConfig {
                n: 300,
                warmup_chunks: 150,
                measured_chunks: 500,
                ..SimConfig::default()
            },
        }
    }
}

impl FromStr for ScaleMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(ScaleMode::Full),
            "desk" => Ok(ScaleMode::Desk),
            other => Err(invalid("scale", &format!("unknown scale {other:?}"))),
        }
    }
}

const CHUNK_AXIS: [f64; 5] = [0.05, 0.1, 0.2, 0.4, 0.8];
const RANGE_CHUNK_AXIS: [f64; 7] = [0.02, 0.04, 0.08, 0.15, 0.3, 0.6, 1.2];

impl SweepSpec {
    pub fn new(base: SimConfig, axes: Vec<Axis>, seeds: Vec<u64>) -> Self {
        SweepSpec { base, axes, seeds }
    }

    /// Named experiment grids mirroring the homogeneous chunk-size
    /// study (fig1-fig3 share one grid), the latency-scaled range
    /// study (fig4), the probe-set grids at two chunk sizes (fig5a,
    /// fig5b), and the three-scheme comparison under heterogeneous
    /// bandwidth (fig6).
    pub fn preset(id: &str, scale: ScaleMode) -> Option<SweepSpec> {
        let base = scale.base();
        let seeds = DEFAULT_SEEDS.to_vec();
        let spec = match id {
            "fig1" | "fig2" | "fig3" => SweepSpec::new(
                base,
                vec![
                    Axis::texts("mprime_m", &["1/1", "2/2", "3/3", "4/4", "5/5"]),
                    Axis::nums("chunk_size", &CHUNK_AXIS),
                ],
                seeds,
            ),
            "fig4" => SweepSpec::new(
                base,
                vec![
                    Axis::nums("latency_scale", &[0.5, 1.0, 2.0, 4.0]),
                    Axis::nums("chunk_size", &RANGE_CHUNK_AXIS),
                ],
                seeds,
            ),
            "fig5a" | "fig5b" => {
                let mut pairs = Vec::new();
                for mp in 1..=4usize {
                    for m in mp..=6 {
                        pairs.push(format!("{mp}/{m}"));
                    }
                }
                let pairs: Vec<&str> = pairs.iter().map(String::as_str).collect();
                SweepSpec::new(
                    SimConfig {
                        chunk_size: if id == "fig5a" { 0.15 } else { 0.035 },
                        ..base
                    },
                    vec![Axis::texts("mprime_m", &pairs)],
                    seeds,
                )
            }
            "fig6" => SweepSpec::new(
                SimConfig { upload_dist: UploadDist::heterogeneous(), ..base },
                vec![
                    Axis::texts("scheme", &["rp_lu", "rp_lb", "ba_lu"]),
                    Axis::nums("rtt_ms", &[50.0, 100.0]),
                    Axis::nums("chunk_size", &CHUNK_AXIS),
                ],
                seeds,
            ),
            _ => return None,
        };
        Some(spec)
    }

    /// Cross product of all axes, in axis order with the last axis
    /// fastest. No axes means the single base point.
    pub fn points(&self) -> Vec<Vec<(String, FieldValue)>> {
        let mut points: Vec<Vec<(String, FieldValue)>> = vec![Vec::new()];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(points.len() * axis.values.len());
            for point in &points {
                for value in &axis.values {
                    let mut p = point.clone();
                    p.push((axis.field.clone(), value.clone()));
                    next.push(p);
                }
            }
            points = next;
        }
        points
    }

    /// The concrete config a point runs, before seeding.
    pub fn config_at(&self, point: &[(String, FieldValue)]) -> Result<SimConfig, ConfigError> {
        let mut cfg = self.base.clone();
        for (field, value) in point {
            apply_field(&mut cfg, field, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.seeds.is_empty() {
            return Err(SweepError::Invalid(invalid("seeds", "need at least one seed")));
        }
        for axis in &self.axes {
            if axis.values.is_empty() {
                return Err(SweepError::Invalid(invalid(&axis.field, "axis has no values")));
            }
        }
        for point in self.points() {
            self.config_at(&point)
                .map_err(|e| SweepError::Point { point: point_label(&point), source: e.into() })?;
        }
        Ok(())
    }

    /// Parses a sweep description:
    ///
    /// ```toml
    /// seeds = [1, 2, 3]
    /// [base]            # any config fields; the rest default
    /// n = 300
    /// [[axes]]
    /// field = "chunk_size"
    /// values = [0.1, 0.2, 0.4]
    /// ```
    pub fn from_toml_str(text: &str) -> Result<SweepSpec, SweepError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct RawSweep {
            base: Option<toml::Table>,
            axes: Option<Vec<RawAxis>>,
            seeds: Option<Vec<u64>>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct RawAxis {
            field: String,
            values: Vec<toml::Value>,
        }
        let raw: RawSweep = toml::from_str(text).map_err(|e| SweepError::Parse(e.to_string()))?;
        let base = match raw.base {
            None => SimConfig::default(),
            Some(table) => {
                let text = toml::to_string(&table).map_err(|e| SweepError::Parse(e.to_string()))?;
                SimConfig::from_toml_str(&text)?
            }
        };
        let mut axes = Vec::new();
        for raw_axis in raw.axes.unwrap_or_default() {
            let mut values = Vec::new();
            for v in raw_axis.values {
                values.push(match v {
                    toml::Value::Integer(i) if i >= 0 => FieldValue::Int(i as u64),
                    toml::Value::Integer(i) => FieldValue::Num(i as f64),
                    toml::Value::Float(x) => FieldValue::Num(x),
                    toml::Value::String(s) => FieldValue::Text(s),
                    other => {
                        return Err(SweepError::Parse(format!(
                            "axis {}: unsupported value {other}",
                            raw_axis.field
                        )))
                    }
                });
            }
            axes.push(Axis::new(&raw_axis.field, values));
        }
        Ok(SweepSpec {
            base,
            axes,
            seeds: raw.seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec()),
        })
    }
}

pub fn point_label(point: &[(String, FieldValue)]) -> String {
    if point.is_empty() {
        return "base".to_string();
    }
    point
        .iter()
        .map(|(f, v)| format!("{f}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// One seeded run's worth of reported numbers.
#[derive(Debug, Clone, Copy)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Metrics,
    pub median_rtt: f64,
}

/// The columns aggregated across seeds, in CSV order.
pub const METRIC_COLS: [&str; 7] = [
    "miss_ratio",
    "avg_delay",
    "goodput",
    "throughput",
    "overhead_control",
    "overhead_duplicate",
    "median_rtt",
];

fn metric_vector(run: &SeedRun) -> [f64; 7] {
    let m = &run.metrics;
    [
        m.miss_ratio,
        m.avg_delay,
        m.goodput,
        m.throughput,
        m.overhead_control,
        m.overhead_duplicate,
        run.median_rtt,
    ]
}

#[derive(Debug, Clone)]
pub struct Replicates {
    pub runs: Vec<SeedRun>,
    pub mean: [f64; 7],
    /// Sample standard deviation; zero for a single seed.
    pub stddev: [f64; 7],
}

pub fn aggregate(runs: Vec<SeedRun>) -> Replicates {
    let k = runs.len() as f64;
    let mut mean = [0.0; 7];
    for run in &runs {
        for (acc, v) in mean.iter_mut().zip(metric_vector(run)) {
            *acc += v / k;
        }
    }
    let mut stddev = [0.0; 7];
    if runs.len() > 1 {
        for run in &runs {
            for ((acc, v), mu) in stddev.iter_mut().zip(metric_vector(run)).zip(mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        for acc in &mut stddev {
            *acc = (*acc / (k - 1.0)).sqrt();
        }
    }
    Replicates { runs, mean, stddev }
}

/// Runs one config across seeds (in parallel) and aggregates.
pub fn replicate(cfg: &SimConfig, seeds: &[u64]) -> Result<Replicates, SimError> {
    let runs: Result<Vec<SeedRun>, SimError> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            let out = run(&c)?;
            Ok(SeedRun { seed, metrics: out.metrics, median_rtt: out.stats.median_rtt })
        })
        .collect();
    Ok(aggregate(runs?))
}

/// Runs the whole sweep and renders the CSV table: one row per
/// (point, seed) plus a mean and a sample-stddev row per point, rows
/// ordered by point then seed. The `seed` column carries the seed
/// number or the aggregate tag.
pub fn run_sweep(spec: &SweepSpec) -> Result<String, SweepError> {
    spec.validate()?;
    let points = spec.points();
    let jobs: Vec<(usize, SimConfig, String)> = points
        .iter()
        .enumerate()
        .map(|(i, point)| {
            let cfg = spec.config_at(point).expect("validated above");
            (i, cfg, point_label(point))
        })
        .collect();

    let results: Result<Vec<(usize, Replicates)>, SweepError> = jobs
        .par_iter()
        .map(|(i, cfg, label)| {
            let reps = replicate(cfg, &spec.seeds)
                .map_err(|e| SweepError::Point { point: label.clone(), source: e })?;
            Ok((*i, reps))
        })
        .collect();
    let mut results = results?;
    results.sort_by_key(|(i, _)| *i);

    let mut csv = String::new();
    for axis in &spec.axes {
        csv.push_str(&axis.field);
        csv.push(',');
    }
    for col in METRIC_COLS {
        csv.push_str(col);
        csv.push(',');
    }
    csv.push_str("d_min,seed\n");

    for (i, reps) in results {
        let point = &points[i];
        let cfg = &jobs[i].1;
        let d_min = min_diffusion_delay(
            cfg.probe_set_size,
            cfg.chunk_size,
            cfg.n,
            cfg.stream_rate,
        );
        let prefix: String = point.iter().map(|(_, v)| format!("{v},")).collect();
        for run in &reps.runs {
            csv.push_str(&prefix);
            for v in metric_vector(run) {
                csv.push_str(&format!("{v},"));
            }
            csv.push_str(&format!("{d_min},{}\n", run.seed));
        }
        for (tag, vals) in [("mean", reps.mean), ("stddev", reps.stddev)] {
            csv.push_str(&prefix);
            for v in vals {
                csv.push_str(&format!("{v},"));
            }
            csv.push_str(&format!("{d_min},{tag}\n"));
        }
    }
    Ok(csv)
}

/// Pulls `(chunk_size, mean miss_ratio)` points back out of a sweep
/// CSV, keyed by the other varied columns; feeds the range analysis.
pub fn miss_curve_from_csv(
    csv: &str,
    group: &[(& str, &str)],
) -> Result<Vec<(f64, f64)>, SweepError> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| SweepError::Parse("empty csv".into()))?
        .split(',')
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| SweepError::Parse(format!("missing column {name}")))
    };
    let c_col = col("chunk_size")?;
    let miss_col = col("miss_ratio")?;
    let seed_col = col("seed")?;
    let group_cols: Vec<(usize, &str)> = group
        .iter()
        .map(|(name, want)| col(name).map(|i| (i, *want)))
        .collect::<Result<_, _>>()?;
    let mut points = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.get(seed_col).copied() != Some("mean") {
            continue;
        }
        if group_cols.iter().any(|(i, want)| cells.get(*i).copied() != Some(*want)) {
            continue;
        }
        let parse = |i: usize, what: &str| {
            cells
                .get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| SweepError::Parse(format!("bad {what} in {line:?}")))
        };
        points.push((parse(c_col, "chunk_size")?, parse(miss_col, "miss_ratio")?));
    }
    Ok(points)
}
