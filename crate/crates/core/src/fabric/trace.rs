//! Trace records and trace-derived measurements.

use serde::{Deserialize, Serialize};

use super::node;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TraceKind {
    MessageSent { src: String, dst: String, topic: String, seq: u64 },
    MessageDelivered { src: String, dst: String, topic: String, seq: u64 },
    MessageProcessed { dst: String, topic: String, seq: u64 },
    /// Node state transitions and annotations.
    NodeNote { node: String, kind: String, detail: String },
    /// Ground truth: a keyword just ended in the rendered audio.
    KeywordEnd { stream_id: u64 },
    RoutingError { src: String, dst: String, topic: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t_ms: f64,
    pub kind: TraceKind,
}

/// Serialize a trace as newline-delimited JSON records.
pub fn write_trace<W: std::io::Write>(mut out: W, trace: &[TraceEvent]) -> std::io::Result<()> {
    for e in trace {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<R: std::io::Read>(input: R) -> std::io::Result<Vec<TraceEvent>> {
    use std::io::BufRead;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(input).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples: usize,
    pub missed: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Wake latency from the trace: for each keyword-end ground-truth mark, the
/// dialog node's receipt time of the next wake message, minus the mark.
///
/// Returns `None` when the trace contains no keyword marks.
pub fn measure_wake_latency(trace: &[TraceEvent]) -> Option<LatencyStats> {
    let marks: Vec<f64> = trace
        .iter()
        .filter_map(|e| match &e.kind {
            TraceKind::KeywordEnd { .. } => Some(e.t_ms),
            _ => None,
        })
        .collect();
    if marks.is_empty() {
        return None;
    }
    let receipts: Vec<f64> = trace
        .iter()
        .filter_map(|e| match &e.kind {
            TraceKind::MessageDelivered { dst, topic, .. }
                if dst == node::DIALOG && topic == "wake" =>
            {
                Some(e.t_ms)
            }
            _ => None,
        })
        .collect();
    let mut samples: Vec<f64> = Vec::new();
    let mut missed = 0usize;
    for (i, &mark) in marks.iter().enumerate() {
        let window_end = marks.get(i + 1).copied().unwrap_or(f64::INFINITY);
        // a detection may commit up to a couple of frames before the
        // scripted keyword end; pair receipts from shortly before the mark
        match receipts
            .iter()
            .find(|&&r| r >= mark - 100.0 && r < window_end)
        {
            Some(&r) => samples.push(r - mark),
            None => missed += 1,
        }
    }
    if samples.is_empty() {
        return Some(LatencyStats {
            samples: 0,
            missed,
            mean_ms: f64::NAN,
            median_ms: f64::NAN,
            p95_ms: f64::NAN,
            min_ms: f64::NAN,
            max_ms: f64::NAN,
        });
    }
    let mut sorted = samples.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let median = sorted[sorted.len() / 2];
    let p95_idx = ((sorted.len() as f64 * 0.95).ceil() as usize).saturating_sub(1);
    Some(LatencyStats {
        samples: sorted.len(),
        missed,
        mean_ms: mean,
        median_ms: median,
        p95_ms: sorted[p95_idx],
        min_ms: sorted[0],
        max_ms: *sorted.last().unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mark(t: f64) -> TraceEvent {
        TraceEvent { t_ms: t, kind: TraceKind::KeywordEnd { stream_id: 0 } }
    }

    fn wake(t: f64) -> TraceEvent {
        TraceEvent {
            t_ms: t,
            kind: TraceKind::MessageDelivered {
                src: node::WAKE.into(),
                dst: node::DIALOG.into(),
                topic: "wake".into(),
                seq: 1,
            },
        }
    }

    #[test]
    fn empty_trace_has_no_stats() {
        assert!(measure_wake_latency(&[]).is_none());
    }

    #[test]
    fn pairs_marks_with_following_receipts() {
        let trace = vec![mark(1000.0), wake(1105.0), mark(5000.0), wake(5110.0)];
        let stats = measure_wake_latency(&trace).unwrap();
        assert_eq!(stats.samples, 2);
        assert_eq!(stats.missed, 0);
        assert!((stats.mean_ms - 107.5).abs() < 1e-9);
        assert_eq!(stats.min_ms, 105.0);
        assert_eq!(stats.max_ms, 110.0);
    }

    #[test]
    fn unmatched_marks_count_as_missed() {
        let trace = vec![mark(1000.0), mark(5000.0), wake(5100.0)];
        let stats = measure_wake_latency(&trace).unwrap();
        assert_eq!(stats.samples, 1);
        assert_eq!(stats.missed, 1);
    }

    #[test]
    fn trace_roundtrips_as_jsonl() {
        let trace = vec![mark(1.5), wake(2.25)];
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        assert_eq!(read_trace(buf.as_slice()).unwrap(), trace);
    }
}
