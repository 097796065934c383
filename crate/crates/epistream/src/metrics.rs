//! Turns raw run accounting into the headline measurements: miss ratio,
//! delays, and the bandwidth split between useful payload, control
//! chatter, and wasted duplicates.
//!
//! All rate-style numbers are normalized per peer per second of measured
//! stream time, so `goodput` equals the stream rate exactly when nothing
//! is missed, and `throughput = goodput + overhead_control +
//! overhead_duplicate` holds by construction.

use crate::engine::RunStats;
use crate::model::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Fraction of (peer, measured chunk) pairs with no delivery by the
    /// chunk's playout horizon.
    pub miss_ratio: f64,
    /// Mean (arrival - creation) over timely first deliveries. NaN when
    /// nothing was delivered.
    pub avg_delay: f64,
    /// Mean time for a chunk to reach the last of all peers, over
    /// measured chunks that reached everyone timely. NaN if none did.
    pub diffusion_delay: f64,
    /// Timely payload per peer per second (Mb/s).
    pub goodput: f64,
    /// Probe and reply bytes per peer per second.
    pub overhead_control: f64,
    /// Duplicate and post-horizon payload bytes per peer per second.
    pub overhead_duplicate: f64,
    /// Total send-side bandwidth per peer per second.
    pub throughput: f64,
    pub timely_deliveries: u64,
    /// Measured chunks that reached all peers timely.
    pub complete_chunks: u64,
}

impl Metrics {
    pub fn compute(cfg: &SimConfig, stats: &RunStats) -> Metrics {
        let mut timely = 0u64;
        let mut delay_sum = 0.0;
        let mut complete = 0u64;
        let mut diffusion_sum = 0.0;
        for chunk in cfg.measured_range() {
            let i = chunk as usize;
            timely += stats.timely_count[i] as u64;
            delay_sum += stats.delay_sum[i];
            if stats.timely_count[i] as usize == cfg.n {
                complete += 1;
                diffusion_sum += stats.max_timely_arrival[i] - cfg.creation_time(chunk);
            }
        }
        let pairs = cfg.n as f64 * cfg.measured_chunks as f64;
        let norm = cfg.n as f64 * cfg.measured_chunks as f64 * cfg.chunk_interval();
        let goodput = timely as f64 * cfg.chunk_size / norm;
        let overhead_control = stats.control_bytes_window / norm;
        let overhead_duplicate = stats.dup_bytes_window / norm;
        Metrics {
            miss_ratio: 1.0 - timely as f64 / pairs,
            avg_delay: if timely > 0 { delay_sum / timely as f64 } else { f64::NAN },
            diffusion_delay: if complete > 0 {
                diffusion_sum / complete as f64
            } else {
                f64::NAN
            },
            goodput,
            overhead_control,
            overhead_duplicate,
            throughput: goodput + overhead_control + overhead_duplicate,
            timely_deliveries: timely,
            complete_chunks: complete,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RunStats;
    use crate::model::SimConfig;

    fn stats_for(cfg: &SimConfig) -> RunStats {
        let total = cfg.total_chunks() as usize;
        RunStats {
            timely_count: vec![0; total],
            delay_sum: vec![0.0; total],
            max_timely_arrival: vec![f64::NEG_INFINITY; total],
            control_bytes_window: 0.0,
            dup_bytes_window: 0.0,
            dup_arrivals_window: 0,
            control_msgs_total: 0,
            data_sends_total: 0,
            median_rtt: 0.08,
            sim_end: 0.0,
        }
    }

    fn small_cfg() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.n = 2;
        cfg.warmup_chunks = 1;
        cfg.measured_chunks = 2;
        cfg.chunk_size = 0.15;
        cfg.stream_rate = 0.9;
        cfg
    }

    #[test]
    fn one_miss_in_four_pairs() {
        let cfg = small_cfg();
        let mut stats = stats_for(&cfg);
        let dt = cfg.chunk_interval();
        // Chunk 1: both peers timely. Chunk 2: one peer missed.
        stats.timely_count[1] = 2;
        stats.delay_sum[1] = 0.3 + 0.5;
        stats.max_timely_arrival[1] = cfg.creation_time(1) + 0.5;
        stats.timely_count[2] = 1;
        stats.delay_sum[2] = 0.4;
        // Warmup chunk 0 is ignored even if fully delivered.
        stats.timely_count[0] = 2;
        stats.delay_sum[0] = 99.0;
        let m = Metrics::compute(&cfg, &stats);
        assert!((m.miss_ratio - 0.25).abs() < 1e-12);
        assert_eq!(m.timely_deliveries, 3);
        assert!((m.avg_delay - 1.2 / 3.0).abs() < 1e-12);
        // goodput = s * (1 - miss) identically.
        assert!((m.goodput - 0.9 * 0.75).abs() < 1e-12);
        // Only chunk 1 reached everyone.
        assert_eq!(m.complete_chunks, 1);
        assert!((m.diffusion_delay - 0.5).abs() < 1e-12);
        let _ = dt;
    }

    #[test]
    fn overheads_normalize_per_peer_second() {
        let cfg = small_cfg();
        let mut stats = stats_for(&cfg);
        for i in 1..3 {
            stats.timely_count[i] = 2;
            stats.delay_sum[i] = 0.2;
            stats.max_timely_arrival[i] = cfg.creation_time(i as u64) + 0.1;
        }
        stats.control_bytes_window = 0.02;
        stats.dup_bytes_window = 0.15;
        let m = Metrics::compute(&cfg, &stats);
        let norm = 2.0 * 2.0 * cfg.chunk_interval();
        assert!((m.overhead_control - 0.02 / norm).abs() < 1e-12);
        assert!((m.overhead_duplicate - 0.15 / norm).abs() < 1e-12);
        assert!((m.goodput - 0.9).abs() < 1e-12);
        assert!(
            (m.throughput - (m.goodput + m.overhead_control + m.overhead_duplicate)).abs()
                < 1e-15
        );
        assert_eq!(m.miss_ratio, 0.0);
    }

    #[test]
    fn empty_run_is_all_miss_with_nan_delays() {
        let cfg = small_cfg();
        let stats = stats_for(&cfg);
        let m = Metrics::compute(&cfg, &stats);
        assert_eq!(m.miss_ratio, 1.0);
        assert_eq!(m.goodput, 0.0);
        assert!(m.avg_delay.is_nan());
        assert!(m.diffusion_delay.is_nan());
        assert_eq!(m.complete_chunks, 0);
    }
}
