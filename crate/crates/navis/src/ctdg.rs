//! Continuous-time dynamic graph data model and dataset pipeline.
//!
//! A CTDG is an ordered stream of timestamped weighted interactions
//! `(source, dest, time, weight)`. This module ingests event CSVs,
//! bucketizes the time axis into fixed-length periods, converts link
//! streams into per-node affinity targets, and splits the resulting
//! labeled sequence chronologically.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Node identifier. Dataset-native ids are kept as-is; dense indices into
/// affinity vectors come from [`CandidateIndex`].
pub type NodeId = u64;

/// One timestamped weighted edge of the stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionEvent {
    pub source: NodeId,
    pub dest: NodeId,
    /// Timestamp in dataset-native units. Non-decreasing in stream order.
    pub time: f64,
    pub weight: f64,
}

/// An ordered event stream plus the registry of every node id seen,
/// in first-appearance order.
#[derive(Debug, Clone, Default)]
pub struct EventStream {
    pub events: Vec<InteractionEvent>,
    pub nodes: Vec<NodeId>,
}

#[derive(Debug, Error)]
pub enum CtdgError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: time {time} is earlier than previous time {prev}")]
    TimeRegression { line: usize, time: f64, prev: f64 },
    #[error("destinations-only candidate index requires a non-empty event stream")]
    EmptyCandidates,
    #[error("period must be positive, got {0}")]
    NonPositivePeriod(f64),
    #[error("chronological split needs at least 3 periods, got {0}")]
    TooFewPeriods(usize),
    #[error("split fractions must sum to 1, got {0}")]
    BadFractions(f64),
    #[error("manifest error: {0}")]
    Manifest(String),
}

/// Supported event file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
}

/// Reads an event CSV with header `source,dest,time,weight`.
///
/// Rows must already be sorted by time; a regression is rejected with the
/// offending line number rather than silently re-sorted.
pub fn load_events(path: &Path, _format: EventFormat) -> Result<EventStream, CtdgError> {
    let file = std::fs::File::open(path).map_err(|source| CtdgError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, Ok(h))) => h,
        Some((_, Err(source))) => {
            return Err(CtdgError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
        None => {
            return Err(CtdgError::Parse {
                line: 1,
                msg: "empty file, expected header source,dest,time,weight".into(),
            })
        }
    };
    if header.trim() != "source,dest,time,weight" {
        return Err(CtdgError::Parse {
            line: 1,
            msg: format!("bad header {header:?}, expected source,dest,time,weight"),
        });
    }

    let mut stream = EventStream::default();
    let mut seen = HashMap::new();
    let mut prev_time = f64::NEG_INFINITY;
    for (idx, line) in lines {
        let line_no = idx + 1; // 1-based, header is line 1
        let line = line.map_err(|source| CtdgError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CtdgError::Parse {
                line: line_no,
                msg: format!("expected 4 columns, got {}", fields.len()),
            });
        }
        let parse_u64 = |s: &str, what: &str| {
            s.trim().parse::<u64>().map_err(|_| CtdgError::Parse {
                line: line_no,
                msg: format!("bad {what} {s:?}"),
            })
        };
        let parse_f64 = |s: &str, what: &str| {
            s.trim().parse::<f64>().map_err(|_| CtdgError::Parse {
                line: line_no,
                msg: format!("bad {what} {s:?}"),
            })
        };
        let event = InteractionEvent {
            source: parse_u64(fields[0], "source id")?,
            dest: parse_u64(fields[1], "dest id")?,
            time: parse_f64(fields[2], "time")?,
            weight: parse_f64(fields[3], "weight")?,
        };
        if !event.time.is_finite() {
            return Err(CtdgError::Parse {
                line: line_no,
                msg: format!("non-finite time {}", event.time),
            });
        }
        if event.time < prev_time {
            return Err(CtdgError::TimeRegression {
                line: line_no,
                time: event.time,
                prev: prev_time,
            });
        }
        prev_time = event.time;
        for id in [event.source, event.dest] {
            if seen.insert(id, ()).is_none() {
                stream.nodes.push(id);
            }
        }
        stream.events.push(event);
    }
    Ok(stream)
}

/// Which nodes form the affinity candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMode {
    AllNodes,
    DestinationsOnly,
}

impl fmt::Display for CandidateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidateMode::AllNodes => write!(f, "all-nodes"),
            CandidateMode::DestinationsOnly => write!(f, "destinations-only"),
        }
    }
}

/// Bijection between node ids and dense indices `[0, d)` over the
/// candidate target set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateIndex {
    ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
}

impl CandidateIndex {
    /// Builds an index from an explicit id list in order.
    pub fn from_ids(ids: Vec<NodeId>) -> Self {
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Self { ids, index }
    }

    pub fn d(&self) -> usize {
        self.ids.len()
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn id_at(&self, idx: usize) -> NodeId {
        self.ids[idx]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}

/// Builds the candidate index, assigning indices in first-appearance order.
pub fn build_candidate_index(
    stream: &EventStream,
    mode: CandidateMode,
) -> Result<CandidateIndex, CtdgError> {
    match mode {
        CandidateMode::AllNodes => Ok(CandidateIndex::from_ids(stream.nodes.clone())),
        CandidateMode::DestinationsOnly => {
            if stream.events.is_empty() {
                return Err(CtdgError::EmptyCandidates);
            }
            let mut ids = Vec::new();
            let mut seen = HashMap::new();
            for ev in &stream.events {
                if seen.insert(ev.dest, ()).is_none() {
                    ids.push(ev.dest);
                }
            }
            Ok(CandidateIndex::from_ids(ids))
        }
    }
}

/// Dense non-negative scores over the candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityVector {
    pub scores: Vec<f64>,
    /// True when the entries sum to 1 (or the vector is all-zero).
    pub normalized: bool,
}

impl AffinityVector {
    pub fn zeros(d: usize) -> Self {
        Self {
            scores: vec![0.0; d],
            normalized: true,
        }
    }

    pub fn from_scores(scores: Vec<f64>) -> Self {
        Self {
            scores,
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.scores.iter().all(|&v| v == 0.0)
    }

    /// Normalizes to sum 1; a non-positive sum yields the all-zero vector.
    pub fn normalized(mut self) -> Self {
        let sum: f64 = self.scores.iter().sum();
        if sum > 0.0 {
            for v in &mut self.scores {
                *v /= sum;
            }
        } else {
            for v in &mut self.scores {
                *v = 0.0;
            }
        }
        self.normalized = true;
        self
    }
}

/// Running weighted interaction counts for one source node.
#[derive(Debug, Clone)]
pub struct EstimateAccumulator {
    raw: Vec<f64>,
    dropped: usize,
}

impl EstimateAccumulator {
    pub fn new(d: usize) -> Self {
        Self {
            raw: vec![0.0; d],
            dropped: 0,
        }
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    /// Count of events skipped because their dest is outside the candidate set.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Adds one interaction weight to the dest entry. Events whose dest is
    /// not a candidate are skipped and counted.
    pub fn accumulate(&mut self, event: &InteractionEvent, index: &CandidateIndex) {
        match index.index_of(event.dest) {
            Some(i) => self.raw[i] += event.weight,
            None => self.dropped += 1,
        }
    }

    /// Normalizes the counts into an affinity vector and resets the
    /// accumulator to zero. A non-positive sum yields all-zero.
    pub fn finalize(&mut self) -> AffinityVector {
        let sum: f64 = self.raw.iter().sum();
        let scores = if sum > 0.0 {
            self.raw.iter().map(|&v| v / sum).collect()
        } else {
            vec![0.0; self.raw.len()]
        };
        for v in &mut self.raw {
            *v = 0.0;
        }
        AffinityVector {
            scores,
            normalized: true,
        }
    }
}

/// One supervised query: predict `target` for `node` at `time`
/// (the start of the period the target aggregates).
#[derive(Debug, Clone)]
pub struct LabeledQuery {
    pub node: NodeId,
    /// Bucket start time; prediction uses only information before it.
    pub time: f64,
    /// Zero-based period index since the first event.
    pub period_index: usize,
    /// Number of stream events strictly before `time`.
    pub events_before: usize,
    pub target: AffinityVector,
}

/// Chronologically ordered labeled queries over fixed-length periods.
#[derive(Debug, Clone)]
pub struct LabeledSequence {
    pub queries: Vec<LabeledQuery>,
    pub period: f64,
    /// Total number of periods covered (max period index + 1).
    pub num_periods: usize,
    /// Time of the first event; period k starts at `start_time + k * period`.
    pub start_time: f64,
    /// Events whose dest fell outside the candidate set during conversion.
    pub dropped_events: usize,
}

/// Converts a link stream into per-source affinity targets.
///
/// The time axis is partitioned into consecutive buckets of length `period`
/// anchored at the first event time. For each bucket and each source active
/// in it, the target is the per-destination sum of weights in that bucket,
/// normalized to sum 1.
pub fn convert_links_to_affinity(
    stream: &EventStream,
    period: f64,
    index: &CandidateIndex,
) -> Result<LabeledSequence, CtdgError> {
    if !(period > 0.0) {
        return Err(CtdgError::NonPositivePeriod(period));
    }
    let mut seq = LabeledSequence {
        queries: Vec::new(),
        period,
        num_periods: 0,
        start_time: stream.events.first().map(|e| e.time).unwrap_or(0.0),
        dropped_events: 0,
    };
    if stream.events.is_empty() {
        return Ok(seq);
    }
    let t0 = seq.start_time;
    let bucket_of = |t: f64| (((t - t0) / period).floor().max(0.0)) as usize;

    let mut pos = 0;
    while pos < stream.events.len() {
        let bucket = bucket_of(stream.events[pos].time);
        let bucket_start = t0 + bucket as f64 * period;
        let mut end = pos;
        while end < stream.events.len() && bucket_of(stream.events[end].time) == bucket {
            end += 1;
        }
        // events_before counts events strictly before the bucket start; the
        // first event of bucket 0 coincides with its start, so pos is exact.
        let mut per_source: HashMap<NodeId, Vec<f64>> = HashMap::new();
        let mut order: Vec<NodeId> = Vec::new();
        for ev in &stream.events[pos..end] {
            let Some(di) = index.index_of(ev.dest) else {
                seq.dropped_events += 1;
                continue;
            };
            let entry = per_source.entry(ev.source).or_insert_with(|| {
                order.push(ev.source);
                vec![0.0; index.d()]
            });
            entry[di] += ev.weight;
        }
        for node in order {
            let raw = per_source.remove(&node).unwrap();
            let target = AffinityVector::from_scores(raw).normalized();
            seq.queries.push(LabeledQuery {
                node,
                time: bucket_start,
                period_index: bucket,
                events_before: pos,
                target,
            });
        }
        seq.num_periods = bucket + 1;
        pos = end;
    }
    Ok(seq)
}

/// Splits a labeled sequence chronologically on period boundaries.
///
/// Train and validation get `floor(fraction * num_periods)` periods each;
/// the remainder goes to test, so the test set is always the strictly
/// latest data. Period indices are kept absolute across the splits.
pub fn chronological_split(
    seq: &LabeledSequence,
    fractions: [f64; 3],
) -> Result<(LabeledSequence, LabeledSequence, LabeledSequence), CtdgError> {
    let (cut1, cut2) = split_points(seq.num_periods, fractions)?;
    let n = seq.num_periods;
    let portion = |lo: usize, hi: usize| LabeledSequence {
        queries: seq
            .queries
            .iter()
            .filter(|q| q.period_index >= lo && q.period_index < hi)
            .cloned()
            .collect(),
        period: seq.period,
        num_periods: seq.num_periods,
        start_time: seq.start_time,
        dropped_events: 0,
    };
    Ok((portion(0, cut1), portion(cut1, cut2), portion(cut2, n)))
}

/// Period boundaries of a chronological split: train covers periods
/// `[0, cut1)`, validation `[cut1, cut2)`, test `[cut2, num_periods)`.
pub fn split_points(num_periods: usize, fractions: [f64; 3]) -> Result<(usize, usize), CtdgError> {
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CtdgError::BadFractions(total));
    }
    if num_periods < 3 {
        return Err(CtdgError::TooFewPeriods(num_periods));
    }
    let train_p = (fractions[0] * num_periods as f64).floor() as usize;
    let val_p = (fractions[1] * num_periods as f64).floor() as usize;
    Ok((train_p, train_p + val_p))
}

/// Dataset manifest: a structured-text description binding an event CSV to
/// its candidate mode and period. The field names (`events`, `candidate_mode`,
/// `period`, `node_count`) are a stable contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Path to the event CSV, relative to the manifest file.
    pub events: PathBuf,
    pub candidate_mode: CandidateMode,
    /// Period length in the dataset's native time units.
    pub period: f64,
    /// Expected node count; validated when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_count: Option<usize>,
}

/// A fully loaded dataset ready for training and evaluation.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub stream: EventStream,
    pub index: CandidateIndex,
    pub sequence: LabeledSequence,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, CtdgError> {
        let text = std::fs::read_to_string(path).map_err(|source| CtdgError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CtdgError::Manifest(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), CtdgError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text).map_err(|source| CtdgError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Loads the event CSV named by the manifest and runs the conversion
    /// pipeline.
    pub fn load_dataset(&self, manifest_path: &Path) -> Result<Dataset, CtdgError> {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let stream = load_events(&base.join(&self.events), EventFormat::Csv)?;
        if let Some(expected) = self.node_count {
            if stream.nodes.len() != expected {
                return Err(CtdgError::Manifest(format!(
                    "manifest declares {expected} nodes, stream has {}",
                    stream.nodes.len()
                )));
            }
        }
        let index = build_candidate_index(&stream, self.candidate_mode)?;
        let sequence = convert_links_to_affinity(&stream, self.period, &index)?;
        Ok(Dataset {
            stream,
            index,
            sequence,
        })
    }
}
