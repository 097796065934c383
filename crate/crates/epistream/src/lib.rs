//! Discrete-event simulator for push-based epidemic live streaming.
//!
//! A source emits a fixed-rate stream of chunks into a random overlay of
//! peers with capacity-shared upload links. Peers push chunks onward
//! according to one of three gossip scheduling schemes, and the simulator
//! measures what fraction of the stream every peer manages to play out,
//! with how much delay, at what message cost.

pub mod analytics;
pub mod engine;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod overlay;
pub mod rng;
pub mod schemes;
pub mod trace;
pub mod tracecheck;

pub use model::{
    BandwidthClass, ChunkIndex, ConfigError, LatencySpec, NodeId, Scheme, SimConfig, UploadDist,
};
