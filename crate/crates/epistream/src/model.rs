//! Run configuration: the knobs of a single simulation, their defaults,
//! validation, and the on-disk TOML form.
//!
//! Internal units are megabits, megabits per second, and seconds. The
//! config file speaks milliseconds for latencies because that is how
//! people think about RTTs; conversion happens where latencies are
//! sampled, not here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;
pub type ChunkIndex = u64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("config parse error: {0}")]
    Parse(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Dissemination scheme: how a sender picks whom to serve and what to send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Random peer, latest chunk in the sender's buffer, no control traffic.
    #[serde(rename = "rp_lb")]
    RpLb,
    /// Random peer, latest chunk the probed peer is missing.
    #[serde(rename = "rp_lu")]
    RpLu,
    /// Peer drawn proportionally to its upload bandwidth, latest useful chunk.
    #[serde(rename = "ba_lu")]
    BaLu,
}

impl Scheme {
    pub fn uses_probes(self) -> bool {
        !matches!(self, Scheme::RpLb)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::RpLb => "rp_lb",
            Scheme::RpLu => "rp_lu",
            Scheme::BaLu => "ba_lu",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "rp_lb" => Ok(Scheme::RpLb),
            "rp_lu" => Ok(Scheme::RpLu),
            "ba_lu" => Ok(Scheme::BaLu),
            other => Err(invalid("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

/// One bandwidth class of a discrete upload distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthClass {
    /// Upload rate in Mb/s.
    pub rate: f64,
    /// Probability a peer falls in this class.
    pub prob: f64,
}

/// Per-peer upload bandwidth assignment.
#[derive(Debug, Clone, PartialEq)]
pub enum UploadDist {
    Homogeneous { rate: f64 },
    Discrete { classes: Vec<BandwidthClass> },
}

impl UploadDist {
    /// Three-class mix used by the heterogeneous experiments: a dialup
    /// minority, a broadband majority at the default rate, and a fast
    /// tail that carries most of the replication load.
    pub fn heterogeneous() -> Self {
        UploadDist::Discrete {
            classes: vec![
                BandwidthClass { rate: 0.1, prob: 0.15 },
                BandwidthClass { rate: 1.03, prob: 0.45 },
                BandwidthClass { rate: 4.0, prob: 0.4 },
            ],
        }
    }

    pub fn mean_rate(&self) -> f64 {
        match self {
            UploadDist::Homogeneous { rate } => *rate,
            UploadDist::Discrete { classes } => {
                classes.iter().map(|c| c.rate * c.prob).sum()
            }
        }
    }
}

/// How edge RTTs are produced. All figures in milliseconds here.
#[derive(Debug, Clone, PartialEq)]
pub enum LatencySpec {
    /// Every edge gets the same round-trip time.
    Constant { rtt_ms: f64 },
    /// Edges sample uniformly from the RTT entries of a measurement file,
    /// multiplied by `scale`.
    Matrix { path: String, scale: f64 },
    /// Log-normal RTTs with the given median; `sigma` is the shape of the
    /// underlying normal.
    Lognormal { median_ms: f64, sigma: f64 },
}

impl LatencySpec {
    /// Same distribution with every produced RTT multiplied by `k`.
    /// Scaling the location parameter keeps the underlying draws aligned,
    /// so two runs differing only in `k` see proportional edge latencies.
    pub fn scaled(&self, k: f64) -> Self {
        match self {
            LatencySpec::Constant { rtt_ms } => LatencySpec::Constant { rtt_ms: rtt_ms * k },
            LatencySpec::Matrix { path, scale } => LatencySpec::Matrix {
                path: path.clone(),
                scale: scale * k,
            },
            LatencySpec::Lognormal { median_ms, sigma } => LatencySpec::Lognormal {
                median_ms: median_ms * k,
                sigma: *sigma,
            },
        }
    }
}

/// A fully validated simulation configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Number of receiving peers; the source is one extra node.
    pub n: usize,
    /// Edge probability of the random overlay graph.
    pub edge_prob: f64,
    /// Stream bitrate in Mb/s.
    pub stream_rate: f64,
    /// Chunk size in Mb.
    pub chunk_size: f64,
    /// Size of one probe or reply message in Mb.
    pub control_msg_size: f64,
    /// Number of neighbors probed per control round (m).
    pub probe_set_size: usize,
    /// Upload slots a peer may fill in parallel (m').
    pub max_parallel_uploads: usize,
    /// Peer upload bandwidth assignment.
    pub upload_dist: UploadDist,
    /// Source upload bandwidth in Mb/s.
    pub source_upload: f64,
    /// Buffer window capacity in chunks (B).
    pub buffer_capacity: u64,
    /// Edge RTT model.
    pub latency_model: LatencySpec,
    pub scheme: Scheme,
    /// Chunks excluded from metrics while the system reaches steady state.
    pub warmup_chunks: u64,
    /// Chunks the metrics are computed over.
    pub measured_chunks: u64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 1000,
            edge_prob: 0.05,
            stream_rate: 0.9,
            chunk_size: 0.15,
            control_msg_size: 0.0005,
            probe_set_size: 1,
            max_parallel_uploads: 1,
            upload_dist: UploadDist::Homogeneous { rate: 1.03 },
            source_upload: 1.03,
            buffer_capacity: 300,
            latency_model: LatencySpec::Constant { rtt_ms: 80.0 },
            scheme: Scheme::RpLu,
            warmup_chunks: 200,
            measured_chunks: 800,
            seed: 42,
        }
    }
}

impl SimConfig {
    /// Id of the source node; peers are `0..n`.
    pub fn source_id(&self) -> NodeId {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.n + 1
    }

    /// Seconds between consecutive chunk creations.
    pub fn chunk_interval(&self) -> f64 {
        self.chunk_size / self.stream_rate
    }

    pub fn total_chunks(&self) -> u64 {
        self.warmup_chunks + self.measured_chunks
    }

    pub fn creation_time(&self, chunk: ChunkIndex) -> f64 {
        chunk as f64 * self.chunk_interval()
    }

    /// Deadline after which a delivery of `chunk` no longer counts: the
    /// playout point has moved a full buffer window past its creation.
    pub fn horizon(&self, chunk: ChunkIndex) -> f64 {
        self.creation_time(chunk) + self.buffer_capacity as f64 * self.chunk_interval()
    }

    pub fn measured_range(&self) -> std::ops::Range<ChunkIndex> {
        self.warmup_chunks..self.total_chunks()
    }

    /// Start and end of the measurement window.
    pub fn window(&self) -> (f64, f64) {
        (
            self.creation_time(self.warmup_chunks),
            self.creation_time(self.total_chunks()),
        )
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 1 {
            return Err(invalid("n", "need at least one peer"));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return Err(invalid(
                "edge_prob",
                format!("{} is not a probability", self.edge_prob),
            ));
        }
        for (field, v) in [
            ("stream_rate", self.stream_rate),
            ("chunk_size", self.chunk_size),
            ("source_upload", self.source_upload),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(field, format!("{v} must be positive and finite")));
            }
        }
        if !(self.control_msg_size >= 0.0) || !self.control_msg_size.is_finite() {
            return Err(invalid(
                "control_msg_size",
                "must be finite and non-negative",
            ));
        }
        if self.probe_set_size < 1 {
            return Err(invalid("probe_set_size", "need at least one probe target"));
        }
        if self.max_parallel_uploads < 1 {
            return Err(invalid("max_parallel_uploads", "need at least one slot"));
        }
        if self.buffer_capacity < 1 {
            return Err(invalid("buffer_capacity", "need at least one chunk"));
        }
        if self.measured_chunks < 1 {
            return Err(invalid("measured_chunks", "nothing to measure"));
        }
        match &self.upload_dist {
            UploadDist::Homogeneous { rate } => {
                if !(*rate > 0.0) || !rate.is_finite() {
                    return Err(invalid("upload_dist", "rate must be positive and finite"));
                }
            }
            UploadDist::Discrete { classes } => {
                if classes.is_empty() {
                    return Err(invalid("upload_dist", "no bandwidth classes"));
                }
                let mut total = 0.0;
                for c in classes {
                    if !(c.rate > 0.0) || !c.rate.is_finite() {
                        return Err(invalid("upload_dist", "class rates must be positive"));
                    }
                    if !(c.prob >= 0.0) || !c.prob.is_finite() {
                        return Err(invalid("upload_dist", "class probabilities must be >= 0"));
                    }
                    total += c.prob;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid(
                        "upload_dist",
                        format!("class probabilities sum to {total}, expected 1"),
                    ));
                }
            }
        }
        match &self.latency_model {
            LatencySpec::Constant { rtt_ms } => {
                if !(*rtt_ms >= 0.0) || !rtt_ms.is_finite() {
                    return Err(invalid("latency_model", "rtt_ms must be >= 0"));
                }
            }
            LatencySpec::Matrix { path, scale } => {
                if path.is_empty() {
                    return Err(invalid("latency_model", "matrix path is empty"));
                }
                if !(*scale > 0.0) || !scale.is_finite() {
                    return Err(invalid("latency_model", "scale must be positive"));
                }
            }
            LatencySpec::Lognormal { median_ms, sigma } => {
                if !(*median_ms > 0.0) || !median_ms.is_finite() {
                    return Err(invalid("latency_model", "median_ms must be positive"));
                }
                if !(*sigma >= 0.0) || !sigma.is_finite() {
                    return Err(invalid("latency_model", "sigma must be >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let cfg = raw.into_config()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&RawConfig::from_config(self))
            .expect("config serialization cannot fail")
    }
}

/// On-disk shape. Every field optional; absent fields take defaults.
/// Unknown keys are rejected rather than ignored, so a typoed field name
/// fails loudly instead of silently running the default.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    edge_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stream_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chunk_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    control_msg_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probe_set_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_parallel_uploads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_upload: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    buffer_capacity: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scheme: Option<Scheme>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warmup_chunks: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    measured_chunks: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    upload_dist: Option<RawUploadDist>,
    #[serde(skip_serializing_if = "Option::is_none")]
    latency_model: Option<RawLatency>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUploadDist {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    classes: Option<Vec<BandwidthClass>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLatency {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    rtt_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    median_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
}

/// Rejects fields that do not belong to the chosen `kind`.
fn reject_stray(
    field: &str,
    kind: &str,
    strays: &[(&str, bool)],
) -> Result<(), ConfigError> {
    for (name, present) in strays {
        if *present {
            return Err(invalid(
                field,
                format!("`{name}` does not apply to kind `{kind}`"),
            ));
        }
    }
    Ok(())
}

impl RawConfig {
    fn into_config(self) -> Result<SimConfig, ConfigError> {
        let d = SimConfig::default();
        let upload_dist = match self.upload_dist {
            None => d.upload_dist.clone(),
            Some(raw) => match raw.kind.as_str() {
                "homogeneous" => {
                    reject_stray(
                        "upload_dist",
                        "homogeneous",
                        &[("classes", raw.classes.is_some())],
                    )?;
                    UploadDist::Homogeneous {
                        rate: raw
                            .rate
                            .ok_or_else(|| invalid("upload_dist", "missing `rate`"))?,
                    }
                }
                "discrete" => {
                    reject_stray("upload_dist", "discrete", &[("rate", raw.rate.is_some())])?;
                    UploadDist::Discrete {
                        classes: raw
                            .classes
                            .ok_or_else(|| invalid("upload_dist", "missing `classes`"))?,
                    }
                }
                other => {
                    return Err(invalid("upload_dist", format!("unknown kind `{other}`")))
                }
            },
        };
        let latency_model = match self.latency_model {
            None => d.latency_model.clone(),
            Some(raw) => {
                let strays = [
                    ("rtt_ms", raw.rtt_ms.is_some()),
                    ("path", raw.path.is_some()),
                    ("scale", raw.scale.is_some()),
                    ("median_ms", raw.median_ms.is_some()),
                    ("sigma", raw.sigma.is_some()),
                ];
                match raw.kind.as_str() {
                    "constant" => {
                        reject_stray(
                            "latency_model",
                            "constant",
                            &[strays[1], strays[2], strays[3], strays[4]],
                        )?;
                        LatencySpec::Constant {
                            rtt_ms: raw
                                .rtt_ms
                                .ok_or_else(|| invalid("latency_model", "missing `rtt_ms`"))?,
                        }
                    }
                    "matrix" => {
                        reject_stray(
                            "latency_model",
                            "matrix",
                            &[strays[0], strays[3], strays[4]],
                        )?;
                        LatencySpec::Matrix {
                            path: raw
                                .path
                                .ok_or_else(|| invalid("latency_model", "missing `path`"))?,
                            scale: raw.scale.unwrap_or(1.0),
                        }
                    }
                    "lognormal" => {
                        reject_stray(
                            "latency_model",
                            "lognormal",
                            &[strays[0], strays[1], strays[2]],
                        )?;
                        LatencySpec::Lognormal {
                            median_ms: raw.median_ms.ok_or_else(|| {
                                invalid("latency_model", "missing `median_ms`")
                            })?,
                            sigma: raw
                                .sigma
                                .ok_or_else(|| invalid("latency_model", "missing `sigma`"))?,
                        }
                    }
                    other => {
                        return Err(invalid("latency_model", format!("unknown kind `{other}`")))
                    }
                }
            }
        };
        Ok(SimConfig {
            n: self.n.unwrap_or(d.n),
            edge_prob: self.edge_prob.unwrap_or(d.edge_prob),
            stream_rate: self.stream_rate.unwrap_or(d.stream_rate),
            chunk_size: self.chunk_size.unwrap_or(d.chunk_size),
            control_msg_size: self.control_msg_size.unwrap_or(d.control_msg_size),
            probe_set_size: self.probe_set_size.unwrap_or(d.probe_set_size),
            max_parallel_uploads: self.max_parallel_uploads.unwrap_or(d.max_parallel_uploads),
            upload_dist,
            source_upload: self.source_upload.unwrap_or(d.source_upload),
            buffer_capacity: self.buffer_capacity.unwrap_or(d.buffer_capacity),
            latency_model,
            scheme: self.scheme.unwrap_or(d.scheme),
            warmup_chunks: self.warmup_chunks.unwrap_or(d.warmup_chunks),
            measured_chunks: self.measured_chunks.unwrap_or(d.measured_chunks),
            seed: self.seed.unwrap_or(d.seed),
        })
    }

    fn from_config(cfg: &SimConfig) -> RawConfig {
        let upload_dist = Some(match &cfg.upload_dist {
            UploadDist::Homogeneous { rate } => RawUploadDist {
                kind: "homogeneous".into(),
                rate: Some(*rate),
                classes: None,
            },
            UploadDist::Discrete { classes } => RawUploadDist {
                kind: "discrete".into(),
                rate: None,
                classes: Some(classes.clone()),
            },
        });
        let latency_model = Some(match &cfg.latency_model {
            LatencySpec::Constant { rtt_ms } => RawLatency {
                kind: "constant".into(),
                rtt_ms: Some(*rtt_ms),
                path: None,
                scale: None,
                median_ms: None,
                sigma: None,
            },
            LatencySpec::Matrix { path, scale } => RawLatency {
                kind: "matrix".into(),
                rtt_ms: None,
                path: Some(path.clone()),
                scale: Some(*scale),
                median_ms: None,
                sigma: None,
            },
            LatencySpec::Lognormal { median_ms, sigma } => RawLatency {
                kind: "lognormal".into(),
                rtt_ms: None,
                path: None,
                scale: None,
                median_ms: Some(*median_ms),
                sigma: Some(*sigma),
            },
        });
        RawConfig {
            n: Some(cfg.n),
            edge_prob: Some(cfg.edge_prob),
            stream_rate: Some(cfg.stream_rate),
            chunk_size: Some(cfg.chunk_size),
            control_msg_size: Some(cfg.control_msg_size),
            probe_set_size: Some(cfg.probe_set_size),
            max_parallel_uploads: Some(cfg.max_parallel_uploads),
            source_upload: Some(cfg.source_upload),
            buffer_capacity: Some(cfg.buffer_capacity),
            scheme: Some(cfg.scheme),
            warmup_chunks: Some(cfg.warmup_chunks),
            measured_chunks: Some(cfg.measured_chunks),
            seed: Some(cfg.seed),
            upload_dist,
            latency_model,
        }
    }
}
