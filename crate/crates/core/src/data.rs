//! Dataset ingestion and matrix diagnostics.
//!
//! Matrix file: first line `n`, then `n` lines of `n` whitespace separated
//! distances in ms, `-1` marking an unmeasured entry. Trace file: CSV with header
//! `t_ms,src,dst,rtt_ms`, rows sorted by `t_ms`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::baselines::singular_values;
use crate::error::{Error, Result};
use crate::matrix::PartialMatrix;
use crate::model::NodeId;
use crate::stats::median;

/// Sentinel for unmeasured entries in matrix files.
pub const UNMEASURED: f64 = -1.0;

pub fn load_matrix(path: impl AsRef<Path>) -> Result<PartialMatrix> {
    parse_matrix(BufReader::new(File::open(path)?))
}

/// Parses the matrix format. Errors name the 1-based line they occur on.
pub fn parse_matrix<R: BufRead>(reader: R) -> Result<PartialMatrix> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (line_no, header) = loop {
        match lines.next() {
            Some((no, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break (no, line);
                }
            }
            None => return Err(Error::parse(1, "missing node count")),
        }
    };
    let n: usize = header
        .trim()
        .parse()
        .map_err(|_| Error::parse(line_no, format!("invalid node count {:?}", header.trim())))?;

    let mut m = PartialMatrix::empty(n);
    let mut row = 0;
    let mut last_line = line_no;
    for (no, line) in lines {
        let line = line?;
        last_line = no;
        if line.trim().is_empty() {
            continue;
        }
        if row == n {
            return Err(Error::parse(no, format!("more than {n} rows")));
        }
        let mut count = 0;
        for (col, tok) in line.split_whitespace().enumerate() {
            count += 1;
            if col >= n {
                continue;
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(no, format!("invalid value {tok:?} in column {}", col + 1)))?;
            if !v.is_finite() {
                return Err(Error::parse(no, format!("non-finite value {tok:?}")));
            }
            if v == UNMEASURED || row == col {
                continue;
            }
            if v < 0.0 {
                return Err(Error::parse(no, format!("negative distance {v} (only -1 marks unmeasured)")));
            }
            m.set(row, col, v).map_err(|e| Error::parse(no, e.to_string()))?;
        }
        if count != n {
            return Err(Error::parse(no, format!("expected {n} values, found {count}")));
        }
        row += 1;
    }
    if row != n {
        return Err(Error::parse(last_line, format!("expected {n} rows, found {row}")));
    }
    Ok(m)
}

pub fn save_matrix(m: &PartialMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(m, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes the canonical form: diagonal `0`, unmeasured `-1`, values in shortest
/// round-trip notation, single spaces, LF line endings.
pub fn write_matrix<W: Write>(m: &PartialMatrix, w: &mut W) -> Result<()> {
    let n = m.n();
    writeln!(w, "{n}")?;
    let mut line = String::new();
    for i in 0..n {
        line.clear();
        for j in 0..n {
            if j > 0 {
                line.push(' ');
            }
            let v = if i == j { 0.0 } else { m.get(i, j).unwrap_or(UNMEASURED) };
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// One timestamped RTT sample from `src` to `dst`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct MeasurementEvent {
    #[serde(rename = "t_ms")]
    pub t: f64,
    pub src: NodeId,
    pub dst: NodeId,
    #[serde(rename = "rtt_ms")]
    pub rtt: f64,
}

/// Time-ordered measurement events over nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceDataset {
    events: Vec<MeasurementEvent>,
    n: usize,
}

impl TraceDataset {
    /// Validates ordering and ids. `n` defaults to one past the largest id seen.
    pub fn new(events: Vec<MeasurementEvent>, n: Option<usize>) -> Result<Self> {
        let max_id = events.iter().map(|e| e.src.max(e.dst) + 1).max().unwrap_or(0);
        let n = n.unwrap_or(max_id);
        for (idx, e) in events.iter().enumerate() {
            let at = |msg: String| Error::contract(format!("event {idx}: {msg}"));
            if e.src == e.dst {
                return Err(at(format!("src and dst are both {}", e.src)));
            }
            if e.src >= n || e.dst >= n {
                return Err(at(format!("node id out of range for n = {n}")));
            }
            if !e.rtt.is_finite() || e.rtt < 0.0 || !e.t.is_finite() {
                return Err(at(format!("invalid time or rtt ({}, {})", e.t, e.rtt)));
            }
            if idx > 0 && e.t < events[idx - 1].t {
                return Err(at("events are not sorted by time".into()));
            }
        }
        Ok(Self { events, n })
    }

    pub fn events(&self) -> &[MeasurementEvent] {
        &self.events
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<TraceDataset> {
    parse_trace(File::open(path)?)
}

/// Parses the trace CSV. Unsorted input is rejected with the offending line.
pub fn parse_trace<R: Read>(reader: R) -> Result<TraceDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    let expected = ["t_ms", "src", "dst", "rtt_ms"];
    if headers.iter().ne(expected) {
        return Err(Error::parse(1, format!("expected header {:?}, found {:?}", expected.join(","), headers)));
    }
    let mut events: Vec<MeasurementEvent> = Vec::new();
    for (idx, rec) in rdr.deserialize::<MeasurementEvent>().enumerate() {
        let line = idx + 2;
        let e = rec.map_err(|err| Error::parse(line, err.to_string()))?;
        if e.src == e.dst {
            return Err(Error::parse(line, "src equals dst"));
        }
        if !e.rtt.is_finite() || e.rtt < 0.0 {
            return Err(Error::parse(line, format!("rtt must be finite and >= 0, got {}", e.rtt)));
        }
        if !e.t.is_finite() {
            return Err(Error::parse(line, "timestamp must be finite"));
        }
        if let Some(prev) = events.last() {
            if e.t < prev.t {
                return Err(Error::parse(line, format!("timestamp {} precedes {}; trace must be sorted", e.t, prev.t)));
            }
        }
        events.push(e);
    }
    TraceDataset::new(events, None)
}

/// Median of the samples with timestamp in `(now - window, now]`; `None` when the
/// window is empty. `samples` are `(t, rtt)` pairs in any order.
pub fn median_filter(samples: &[(f64, f64)], window: f64, now: f64) -> Option<f64> {
    let in_window: Vec<f64> = samples
        .iter()
        .filter(|(t, _)| *t > now - window && *t <= now)
        .map(|&(_, rtt)| rtt)
        .collect();
    median(&in_window)
}

/// Streaming moving-window median filter over all node pairs.
#[derive(Debug, Clone)]
pub struct PairFilter {
    window: f64,
    streams: HashMap<(NodeId, NodeId), VecDeque<(f64, f64)>>,
}

impl PairFilter {
    pub fn new(window: f64) -> Self {
        Self {
            window,
            streams: HashMap::new(),
        }
    }

    /// Adds a sample and returns the filtered value for the pair at time `t`.
    pub fn push(&mut self, src: NodeId, dst: NodeId, t: f64, rtt: f64) -> f64 {
        let stream = self.streams.entry((src, dst)).or_default();
        stream.push_back((t, rtt));
        let window = self.window;
        while stream.front().is_some_and(|&(s, _)| s <= t - window) {
            stream.pop_front();
        }
        let values: Vec<f64> = stream.iter().map(|&(_, v)| v).collect();
        median(&values).unwrap_or(rtt)
    }

    /// Filtered value for the pair at time `now`, if any sample is in the window.
    pub fn value(&self, src: NodeId, dst: NodeId, now: f64) -> Option<f64> {
        let stream = self.streams.get(&(src, dst))?;
        let values: Vec<f64> = stream
            .iter()
            .filter(|(t, _)| *t > now - self.window && *t <= now)
            .map(|&(_, v)| v)
            .collect();
        median(&values)
    }
}

/// Static matrix of per-pair medians over the whole trace; pairs never measured
/// stay unmeasured.
pub fn ground_truth(trace: &TraceDataset) -> PartialMatrix {
    let mut per_pair: BTreeMap<(NodeId, NodeId), Vec<f64>> = BTreeMap::new();
    for e in trace.events() {
        per_pair.entry((e.src, e.dst)).or_default().push(e.rtt);
    }
    let mut m = PartialMatrix::empty(trace.n());
    for ((i, j), values) in per_pair {
        if let Some(med) = median(&values) {
            m.set(i, j, med).expect("trace ids and rtts are validated on construction");
        }
    }
    m
}

/// Fraction of measured edges `AB` (`A < B`) for which some `C` with `AC` and `BC`
/// measured gives `d(A,B) > d(B,C) + d(A,C)`.
pub fn tiv_ratio(m: &PartialMatrix) -> f64 {
    let n = m.n();
    let mut edges = 0usize;
    let mut violations = 0usize;
    for a in 0..n {
        for b in (a + 1)..n {
            let Some(ab) = m.get(a, b) else { continue };
            edges += 1;
            let violated = (0..n).any(|c| {
                c != a
                    && c != b
                    && match (m.get(b, c), m.get(a, c)) {
                        (Some(bc), Some(ac)) => ab > bc + ac,
                        _ => false,
                    }
            });
            if violated {
                violations += 1;
            }
        }
    }
    if edges == 0 {
        0.0
    } else {
        violations as f64 / edges as f64
    }
}

/// The largest `count` singular values of a complete matrix, divided by the largest.
pub fn singular_profile(m: &PartialMatrix, count: usize) -> Result<Vec<f64>> {
    let dense = m.to_dense()?;
    let sv = singular_values(&dense)?;
    let top = sv.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::contract("matrix has no nonzero singular value"));
    }
    Ok(sv.iter().take(count).map(|s| s / top).collect())
}
