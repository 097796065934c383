//! Wire-level trace records. Every link admission, completion, arrival,
//! and chunk creation can be logged as one tab-separated line, precise
//! enough that an independent checker can replay the run and audit every
//! transfer against the bandwidth and latency model.

use crate::model::{ChunkIndex, NodeId};
use std::fmt;
use std::io::{self, BufRead, Write};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// Source produced a chunk. `dst` is unused (-1).
    Create,
    /// Data transfer admitted to the sender's upload link.
    StartData,
    /// Control message (probe or reply) admitted.
    StartCtrl,
    /// Data transfer finished draining the sender's link.
    DoneData,
    /// Control message finished draining.
    DoneCtrl,
    /// Data payload reached the receiver (one-way latency after done).
    ArrData,
    /// Control message reached the receiver.
    ArrCtrl,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Create => "create",
            TraceKind::StartData => "start_data",
            TraceKind::StartCtrl => "start_ctrl",
            TraceKind::DoneData => "done_data",
            TraceKind::DoneCtrl => "done_ctrl",
            TraceKind::ArrData => "arr_data",
            TraceKind::ArrCtrl => "arr_ctrl",
        }
    }

    pub fn is_data(self) -> bool {
        matches!(
            self,
            TraceKind::StartData | TraceKind::DoneData | TraceKind::ArrData
        )
    }
}

impl std::str::FromStr for TraceKind {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "create" => TraceKind::Create,
            "start_data" => TraceKind::StartData,
            "start_ctrl" => TraceKind::StartCtrl,
            "done_data" => TraceKind::DoneData,
            "done_ctrl" => TraceKind::DoneCtrl,
            "arr_data" => TraceKind::ArrData,
            "arr_ctrl" => TraceKind::ArrCtrl,
            _ => return Err(()),
        })
    }
}

/// One trace line. `chunk` is -1 for control messages; `dst` is -1 for
/// creations. `size` is the full message size in Mb.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: TraceKind,
    pub src: NodeId,
    pub dst: i64,
    pub chunk: i64,
    pub size: f64,
}

impl TraceEvent {
    pub fn data(time: f64, kind: TraceKind, src: NodeId, dst: NodeId, chunk: ChunkIndex, size: f64) -> Self {
        TraceEvent { time, kind, src, dst: dst as i64, chunk: chunk as i64, size }
    }

    pub fn ctrl(time: f64, kind: TraceKind, src: NodeId, dst: NodeId, size: f64) -> Self {
        TraceEvent { time, kind, src, dst: dst as i64, chunk: -1, size }
    }

    pub fn create(time: f64, src: NodeId, chunk: ChunkIndex, size: f64) -> Self {
        TraceEvent { time, kind: TraceKind::Create, src, dst: -1, chunk: chunk as i64, size }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `{}` on f64 prints the shortest digits that round-trip, so a
        // parsed trace reproduces times and sizes bit for bit.
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.time,
            self.kind.as_str(),
            self.src,
            self.dst,
            self.chunk,
            self.size
        )
    }
}

/// Where trace events go during a run.
pub trait TraceSink {
    fn record(&mut self, ev: &TraceEvent);
}

/// Discards everything; the zero-cost default.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _: &TraceEvent) {}
}

/// Collects events in memory, mostly for tests and the trace checker.
#[derive(Default)]
pub struct MemorySink {
    pub events: Vec<TraceEvent>,
}

impl TraceSink for MemorySink {
    fn record(&mut self, ev: &TraceEvent) {
        self.events.push(*ev);
    }
}

/// Streams tab-separated lines to a writer.
pub struct WriteSink<W: Write> {
    w: W,
    pub error: Option<io::Error>,
}

impl<W: Write> WriteSink<W> {
    pub fn new(mut w: W) -> io::Result<Self> {
        writeln!(w, "# time\tkind\tsrc\tdst\tchunk\tsize")?;
        Ok(WriteSink { w, error: None })
    }

    pub fn finish(mut self) -> io::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.w.flush()
    }
}

impl<W: Write> TraceSink for WriteSink<W> {
    fn record(&mut self, ev: &TraceEvent) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.w, "{ev}") {
                self.error = Some(e);
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceParseError {
    #[error("trace line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("trace read error: {0}")]
    Io(#[from] io::Error),
}

/// Parses a trace produced by `WriteSink`. Blank lines and `#` comments
/// are skipped.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<TraceEvent>, TraceParseError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let bad = |reason: String| TraceParseError::Malformed { line: lineno, reason };
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 6 {
            return Err(bad(format!("expected 6 fields, got {}", fields.len())));
        }
        let time: f64 = fields[0].parse().map_err(|_| bad(format!("bad time `{}`", fields[0])))?;
        let kind: TraceKind = fields[1]
            .parse()
            .map_err(|_| bad(format!("unknown kind `{}`", fields[1])))?;
        let src: NodeId = fields[2].parse().map_err(|_| bad(format!("bad src `{}`", fields[2])))?;
        let dst: i64 = fields[3].parse().map_err(|_| bad(format!("bad dst `{}`", fields[3])))?;
        let chunk: i64 = fields[4].parse().map_err(|_| bad(format!("bad chunk `{}`", fields[4])))?;
        let size: f64 = fields[5].parse().map_err(|_| bad(format!("bad size `{}`", fields[5])))?;
        if !time.is_finite() || !size.is_finite() {
            return Err(bad("non-finite time or size".into()));
        }
        out.push(TraceEvent { time, kind, src, dst, chunk, size });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse_round_trip_exactly() {
        let events = vec![
            TraceEvent::create(0.0, 5, 0, 0.15),
            TraceEvent::ctrl(0.007766990291262136, TraceKind::StartCtrl, 5, 2, 0.008),
            TraceEvent::data(0.3266990291262136, TraceKind::ArrData, 5, 2, 7, 0.15),
            TraceEvent::data(1e-9, TraceKind::DoneData, 0, 1, 42, 0.0005),
        ];
        let mut buf = Vec::new();
        let mut sink = WriteSink::new(&mut buf).unwrap();
        for ev in &events {
            sink.record(ev);
        }
        sink.finish().unwrap();
        let back = parse_trace(&buf[..]).unwrap();
        assert_eq!(back, events);
        // Bit-exact times survive the text round trip.
        assert_eq!(back[2].time.to_bits(), events[2].time.to_bits());
    }

    #[test]
    fn malformed_lines_are_located() {
        let text = "0\tcreate\t5\t-1\t0\t0.15\n0.1\tbogus\t1\t2\t3\t0.1\n";
        match parse_trace(text.as_bytes()) {
            Err(TraceParseError::Malformed { line: 2, reason }) => {
                assert!(reason.contains("bogus"));
            }
            other => panic!("expected line-2 error, got {other:?}"),
        }
        let text = "0\tcreate\t5\t-1\t0\n";
        assert!(matches!(
            parse_trace(text.as_bytes()),
            Err(TraceParseError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let text = "# header\n\n0.5\tarr_ctrl\t3\t4\t-1\t0.008\n";
        let got = parse_trace(text.as_bytes()).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].kind, TraceKind::ArrCtrl);
        assert_eq!(got[0].chunk, -1);
    }
}
