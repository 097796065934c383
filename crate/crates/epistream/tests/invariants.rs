//! Run-level invariants: the whole pipeline is a pure function of the
//! config, the accounting identities hold exactly, and mid-size runs of
//! every scheme survive the independent trace audit.

use epistream::engine::{run, run_traced};
use epistream::model::{Scheme, SimConfig};
use epistream::trace::{MemorySink, TraceKind};
use epistream::tracecheck::{check_config, reconcile};

fn mid_cfg(scheme: Scheme, seed: u64) -> SimConfig {
    SimConfig {
        n: 50,
        edge_prob: 0.2,
        warmup_chunks: 10,
        measured_chunks: 60,
        // Small window so eviction is actually exercised.
        buffer_capacity: 20,
        scheme,
        seed,
        ..SimConfig::default()
    }
}

fn bits(x: f64) -> u64 {
    x.to_bits()
}

#[test]
fn same_seed_reproduces_the_run_bit_for_bit() {
    let cfg = mid_cfg(Scheme::RpLu, 11);
    let mut a = MemorySink::default();
    let mut b = MemorySink::default();
    let out_a = run_traced(&cfg, &mut a).unwrap();
    let out_b = run_traced(&cfg, &mut b).unwrap();
    assert_eq!(a.events, b.events);
    let (ma, mb) = (out_a.metrics, out_b.metrics);
    assert_eq!(bits(ma.miss_ratio), bits(mb.miss_ratio));
    assert_eq!(bits(ma.avg_delay), bits(mb.avg_delay));
    assert_eq!(bits(ma.diffusion_delay), bits(mb.diffusion_delay));
    assert_eq!(bits(ma.goodput), bits(mb.goodput));
    assert_eq!(bits(ma.overhead_control), bits(mb.overhead_control));
    assert_eq!(bits(ma.overhead_duplicate), bits(mb.overhead_duplicate));
    assert_eq!(bits(ma.throughput), bits(mb.throughput));
    assert_eq!(ma.timely_deliveries, mb.timely_deliveries);
    assert_eq!(ma.complete_chunks, mb.complete_chunks);
}

#[test]
fn different_seed_changes_the_run() {
    let mut a = MemorySink::default();
    let mut b = MemorySink::default();
    run_traced(&mid_cfg(Scheme::RpLu, 11), &mut a).unwrap();
    run_traced(&mid_cfg(Scheme::RpLu, 12), &mut b).unwrap();
    assert_ne!(a.events, b.events);
}

#[test]
fn accounting_identities_hold_exactly() {
    for scheme in [Scheme::RpLu, Scheme::RpLb, Scheme::BaLu] {
        let cfg = mid_cfg(scheme, 5);
        let m = run(&cfg).unwrap().metrics;
        let name = scheme.name();
        assert!((0.0..=1.0).contains(&m.miss_ratio), "{name}: miss {}", m.miss_ratio);
        assert!(m.overhead_control >= 0.0 && m.overhead_duplicate >= 0.0, "{name}");
        // Goodput is timely bytes over stream time; misses are the
        // exact complement.
        let expect = cfg.stream_rate * (1.0 - m.miss_ratio);
        assert!((m.goodput - expect).abs() <= 1e-12, "{name}: {} vs {expect}", m.goodput);
        // Throughput decomposes into its three parts with nothing left.
        let sum = m.goodput + m.overhead_control + m.overhead_duplicate;
        assert!((m.throughput - sum).abs() <= 1e-12, "{name}: {} vs {sum}", m.throughput);
        let cap = cfg.n as u64 * cfg.measured_chunks;
        assert!(m.timely_deliveries <= cap, "{name}");
        assert!(m.complete_chunks <= cfg.measured_chunks, "{name}");
        if m.timely_deliveries > 0 {
            assert!(m.avg_delay > 0.0, "{name}");
        }
    }
}

#[test]
fn mid_size_runs_survive_the_trace_audit() {
    for scheme in [Scheme::RpLu, Scheme::RpLb, Scheme::BaLu] {
        let cfg = mid_cfg(scheme, 3);
        let mut sink = MemorySink::default();
        let out = run_traced(&cfg, &mut sink).unwrap();
        let name = scheme.name();
        let report = check_config(&sink.events, &cfg).unwrap();
        assert!(
            report.is_clean(),
            "{name}: {:?}",
            &report.violations[..report.violations.len().min(5)]
        );
        let issues = reconcile(&sink.events, &cfg, &out.stats);
        assert!(issues.is_empty(), "{name}: {issues:?}");
        // The log comes out in causal order with every chunk creation
        // on its exact schedule.
        let mut last = f64::NEG_INFINITY;
        let mut creates = 0u64;
        for ev in &sink.events {
            assert!(ev.time >= last, "{name}: time went backwards");
            last = ev.time;
            if ev.kind == TraceKind::Create {
                assert_eq!(ev.time, cfg.creation_time(creates), "{name}");
                creates += 1;
            }
        }
        assert_eq!(creates, cfg.total_chunks(), "{name}");
    }
}
