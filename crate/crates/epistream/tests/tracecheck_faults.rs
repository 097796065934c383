//! The trace auditor has to earn its keep two ways: a genuine engine
//! trace must come back clean, and each class of corruption injected
//! into a trace must surface as exactly the right violation.

use epistream::engine::run_traced;
use epistream::model::{LatencySpec, Scheme, SimConfig};
use epistream::overlay::Overlay;
use epistream::trace::{MemorySink, TraceEvent, TraceKind};
use epistream::tracecheck::{check, check_config, reconcile, Violation};

fn small_cfg(scheme: Scheme) -> SimConfig {
    SimConfig {
        n: 6,
        edge_prob: 0.9,
        warmup_chunks: 5,
        measured_chunks: 20,
        latency_model: LatencySpec::Constant { rtt_ms: 50.0 },
        scheme,
        seed: 7,
        ..SimConfig::default()
    }
}

fn traced_events(cfg: &SimConfig) -> (Vec<TraceEvent>, epistream::engine::RunStats) {
    let mut sink = MemorySink::default();
    let out = run_traced(cfg, &mut sink).unwrap();
    (sink.events, out.stats)
}

#[test]
fn engine_traces_come_back_clean() {
    for scheme in [Scheme::RpLu, Scheme::RpLb, Scheme::BaLu] {
        let cfg = small_cfg(scheme);
        let (events, stats) = traced_events(&cfg);
        let report = check_config(&events, &cfg).unwrap();
        assert!(
            report.is_clean(),
            "{}: {:?}",
            scheme.name(),
            &report.violations[..report.violations.len().min(5)]
        );
        assert!(report.transfers_checked > 0);
        assert_eq!(report.transfers_checked, report.arrivals_checked);
        let issues = reconcile(&events, &cfg, &stats);
        assert!(issues.is_empty(), "{issues:?}");
    }
}

#[test]
fn shifted_arrival_is_flagged() {
    let cfg = small_cfg(Scheme::RpLu);
    let (mut events, _) = traced_events(&cfg);
    let idx = events
        .iter()
        .position(|e| e.kind == TraceKind::ArrData)
        .unwrap();
    events[idx].time -= 1e-3;
    let report = check_config(&events, &cfg).unwrap();
    assert!(report
        .violations
        .iter()
        .any(|v| matches!(v, Violation::LatencyMismatch { .. })));
}

#[test]
fn early_completion_is_flagged() {
    let cfg = small_cfg(Scheme::RpLu);
    let (mut events, _) = traced_events(&cfg);
    // Pull one data completion 20 ms earlier than the link allows, and
    // its arrival along with it so only the capacity check can trip.
    let idx = events
        .iter()
        .position(|e| e.kind == TraceKind::DoneData)
        .unwrap();
    let (src, dst, chunk) = (events[idx].src, events[idx].dst, events[idx].chunk);
    events[idx].time -= 20e-3;
    let arr = events
        .iter()
        .position(|e| {
            e.kind == TraceKind::ArrData && e.src == src && e.dst == dst && e.chunk == chunk
        })
        .unwrap();
    events[arr].time -= 20e-3;
    let report = check_config(&events, &cfg).unwrap();
    assert!(report
        .violations
        .iter()
        .any(|v| matches!(v, Violation::EarlyCompletion { .. })));
}

#[test]
fn missing_arrival_is_flagged() {
    let cfg = small_cfg(Scheme::RpLu);
    let (mut events, _) = traced_events(&cfg);
    let idx = events
        .iter()
        .position(|e| e.kind == TraceKind::ArrData)
        .unwrap();
    events.remove(idx);
    let report = check_config(&events, &cfg).unwrap();
    assert!(report
        .violations
        .iter()
        .any(|v| matches!(v, Violation::MissingArrival { .. })));
}

#[test]
fn sending_unheld_chunk_is_flagged() {
    let cfg = small_cfg(Scheme::RpLu);
    let (mut events, _) = traced_events(&cfg);
    // Forge a full, capacity-respecting send of a chunk the sender
    // never held: peer 0 pushing chunk 9999 over a real edge, long
    // after the stream ended.
    let (overlay, _) = epistream::engine::build_inputs(&cfg).unwrap();
    let dst = overlay.neighbors(0)[0];
    let end = events.last().unwrap().time + 10.0;
    let rtt = overlay.try_rtt(0, dst).unwrap();
    events.push(TraceEvent::data(end, TraceKind::StartData, 0, dst, 9999, cfg.chunk_size));
    events.push(TraceEvent::data(end + 5.0, TraceKind::DoneData, 0, dst, 9999, cfg.chunk_size));
    events.push(TraceEvent::data(
        end + 5.0 + rtt / 2.0,
        TraceKind::ArrData,
        0,
        dst,
        9999,
        cfg.chunk_size,
    ));
    let report = check_config(&events, &cfg).unwrap();
    let faults: Vec<_> = report.violations.iter().collect();
    assert!(
        faults
            .iter()
            .any(|v| matches!(v, Violation::SendWithoutChunk { node: 0, chunk: 9999, .. })),
        "{faults:?}"
    );
}

#[test]
fn traffic_off_the_overlay_is_flagged() {
    // Hand-built overlay: a 3-node path 0-1-2 with source 2. Traffic
    // 0->2 has no edge.
    let overlay = Overlay::from_edges(3, 2, &[(0, 1, 0.1), (1, 2, 0.1)]);
    let bw = vec![1.0, 1.0, 1.0];
    let events = vec![
        TraceEvent::create(0.0, 2, 0, 0.15),
        TraceEvent::data(0.0, TraceKind::StartData, 0, 2, 0, 0.15),
        TraceEvent::data(0.15, TraceKind::DoneData, 0, 2, 0, 0.15),
        TraceEvent::data(0.2, TraceKind::ArrData, 0, 2, 0, 0.15),
    ];
    let report = check(&events, &overlay, &bw, 300);
    assert!(report
        .violations
        .iter()
        .any(|v| matches!(v, Violation::UnknownEdge { src: 0, dst: 2, .. })));
}

#[test]
fn evicted_chunk_send_is_flagged() {
    // B = 3: once node 1 has seen chunk 10, chunk 0 is long gone.
    let overlay = Overlay::from_edges(3, 2, &[(0, 1, 0.1), (1, 2, 0.1)]);
    let bw = vec![10.0, 10.0, 10.0];
    let c = 0.1;
    let mut events = Vec::new();
    // Source legally ships chunks 0 and 10 to node 1.
    for (t, chunk) in [(0.0, 0), (1.0, 10)] {
        events.push(TraceEvent::create(t, 2, chunk, c));
        events.push(TraceEvent::data(t, TraceKind::StartData, 2, 1, chunk, c));
        events.push(TraceEvent::data(t + c / 10.0, TraceKind::DoneData, 2, 1, chunk, c));
        events.push(TraceEvent::data(t + c / 10.0 + 0.05, TraceKind::ArrData, 2, 1, chunk, c));
    }
    // Node 1 then forwards chunk 0, which its window evicted.
    events.push(TraceEvent::data(2.0, TraceKind::StartData, 1, 0, 0, c));
    events.push(TraceEvent::data(2.0 + c / 10.0, TraceKind::DoneData, 1, 0, 0, c));
    events.push(TraceEvent::data(2.0 + c / 10.0 + 0.05, TraceKind::ArrData, 1, 0, 0, c));
    let report = check(&events, &overlay, &bw, 3);
    assert!(
        report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::StaleSend { node: 1, chunk: 0, max_seen: 10, .. })),
        "{:?}",
        report.violations
    );
}

#[test]
fn fabricated_arrival_and_unstarted_done_are_flagged() {
    let cfg = small_cfg(Scheme::RpLu);
    let (events, _) = traced_events(&cfg);
    let (overlay, bw) = epistream::engine::build_inputs(&cfg).unwrap();

    let mut with_arr = events.clone();
    let idx = with_arr
        .iter()
        .position(|e| e.kind == TraceKind::ArrData)
        .unwrap();
    let dup = with_arr[idx].clone();
    with_arr.push(dup);
    let report = check(&with_arr, &overlay, &bw, cfg.buffer_capacity);
    assert!(report
        .violations
        .iter()
        .any(|v| matches!(v, Violation::FabricatedArrival { .. })));

    let mut with_done = events.clone();
    let idx = with_done
        .iter()
        .position(|e| e.kind == TraceKind::DoneData)
        .unwrap();
    let mut dup = with_done[idx].clone();
    dup.time = with_done.last().unwrap().time + 1.0;
    with_done.push(dup);
    let report = check(&with_done, &overlay, &bw, cfg.buffer_capacity);
    assert!(report
        .violations
        .iter()
        .any(|v| matches!(v, Violation::DoneWithoutStart { .. })));
}
