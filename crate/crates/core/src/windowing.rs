//! Half-overlapping time windows and the per-window cyber feature vector.
//!
//! Column layout of every vector is fixed by a [`FeatureSchema`] fitted on
//! baseline traffic: eighteen traffic statistics, one message count per
//! baseline id (ascending), then optional per-(id, byte) payload means.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::can_io::{CanFrame, FrameKind, FrameLabel, HIGH_PRIORITY_ID};

#[derive(Debug, Error)]
pub enum WindowingError {
    #[error("capture contains no frames")]
    EmptyCapture,
    #[error("window size must be positive and finite, got {0}")]
    BadWindowSize(f64),
    #[error("feature csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The traffic statistics present in every schema, in column order.
pub const FIXED_FEATURES: [&str; 18] = [
    "no_of_records",
    "no_of_ids",
    "no_of_dlc",
    "min_time_interval",
    "max_time_interval",
    "mean_time_interval",
    "no_of_req_msgs",
    "no_of_res",
    "no_of_lost",
    "min_ratio",
    "max_ratio",
    "mean_ratio",
    "instant_reply_count",
    "min_reply_time_interval",
    "max_reply_time_interval",
    "mean_reply_time_interval",
    "high_priority_count",
    "no_odd_ids",
];

/// Column indices of the fixed features.
pub mod col {
    pub const NO_OF_RECORDS: usize = 0;
    pub const NO_OF_IDS: usize = 1;
    pub const NO_OF_DLC: usize = 2;
    pub const MIN_TIME_INTERVAL: usize = 3;
    pub const NO_OF_REQ_MSGS: usize = 6;
    pub const NO_OF_RES: usize = 7;
    pub const NO_OF_LOST: usize = 8;
    pub const MIN_RATIO: usize = 9;
    pub const INSTANT_REPLY_COUNT: usize = 12;
    pub const MIN_REPLY_TIME_INTERVAL: usize = 13;
    pub const HIGH_PRIORITY_COUNT: usize = 16;
    pub const NO_ODD_IDS: usize = 17;
    /// Start of each (min, max, mean) triple.
    pub const TRIPLES: [usize; 3] = [MIN_TIME_INTERVAL, MIN_RATIO, MIN_REPLY_TIME_INTERVAL];
}

/// Window geometry. The stride is always half the window size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    win_size: f64,
    start_time: f64,
}

impl WindowSpec {
    pub fn new(win_size: f64, start_time: f64) -> Result<Self, WindowingError> {
        if !(win_size.is_finite() && win_size > 0.0) {
            return Err(WindowingError::BadWindowSize(win_size));
        }
        Ok(WindowSpec {
            win_size,
            start_time,
        })
    }

    /// Window starting at the first frame's timestamp.
    pub fn for_capture(win_size: f64, frames: &[CanFrame]) -> Result<Self, WindowingError> {
        let start = frames.first().map_or(0.0, |f| f.timestamp);
        Self::new(win_size, start)
    }

    pub fn win_size(&self) -> f64 {
        self.win_size
    }

    pub fn stride(&self) -> f64 {
        self.win_size / 2.0
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn window_start(&self, k: usize) -> f64 {
        self.start_time + k as f64 * self.stride()
    }

    /// Exclusive end of window `k`; equal to the start of window `k + 2`, so a
    /// frame never lands in more than two windows.
    pub fn window_end(&self, k: usize) -> f64 {
        self.window_start(k + 2)
    }

    /// Number of windows whose start lies strictly before `t_last`.
    pub fn window_count(&self, t_last: f64) -> usize {
        let mut k = 0;
        if t_last > self.start_time {
            k = ((t_last - self.start_time) / self.stride()).floor() as usize;
            // correct rounding at the boundary in either direction
            while k > 0 && self.window_start(k - 1) >= t_last {
                k -= 1;
            }
            while self.window_start(k) < t_last {
                k += 1;
            }
        }
        k
    }
}

/// Ordered, immutable column definition fitted on baseline traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
    baseline_ids: Vec<u32>,
    include_payload: bool,
    payload_columns: Vec<(u32, u8)>,
}

pub fn id_count_name(id: u32) -> String {
    format!("no_{id:04X}")
}

pub fn payload_name(id: u32, byte: u8) -> String {
    format!("payload_p{}_{id:04X}", byte + 1)
}

impl FeatureSchema {
    /// Fits the column list on baseline frames.
    pub fn fit(baseline: &[CanFrame], include_payload: bool) -> Result<Self, WindowingError> {
        if baseline.is_empty() {
            return Err(WindowingError::EmptyCapture);
        }
        let ids: BTreeSet<u32> = baseline.iter().map(|f| f.can_id).collect();
        let mut payload_columns = Vec::new();
        if include_payload {
            let mut widths: BTreeMap<u32, usize> = BTreeMap::new();
            for f in baseline.iter().filter(|f| f.kind == FrameKind::Data) {
                let w = widths.entry(f.can_id).or_default();
                *w = (*w).max(f.payload.len());
            }
            for (&id, &w) in &widths {
                payload_columns.extend((0..w as u8).map(|b| (id, b)));
            }
        }
        Ok(Self::from_parts(
            ids.into_iter().collect(),
            include_payload,
            payload_columns,
        ))
    }

    fn from_parts(baseline_ids: Vec<u32>, include_payload: bool, payload_columns: Vec<(u32, u8)>) -> Self {
        let mut names: Vec<String> = FIXED_FEATURES.iter().map(|s| s.to_string()).collect();
        names.extend(baseline_ids.iter().map(|&id| id_count_name(id)));
        names.extend(payload_columns.iter().map(|&(id, b)| payload_name(id, b)));
        FeatureSchema {
            names,
            baseline_ids,
            include_payload,
            payload_columns,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn baseline_ids(&self) -> &[u32] {
        &self.baseline_ids
    }

    pub fn include_payload(&self) -> bool {
        self.include_payload
    }

    pub fn payload_columns(&self) -> &[(u32, u8)] {
        &self.payload_columns
    }

    /// Column of the per-id count for a baseline id.
    pub fn id_column(&self, id: u32) -> Option<usize> {
        self.baseline_ids
            .binary_search(&id)
            .ok()
            .map(|i| FIXED_FEATURES.len() + i)
    }

    pub fn payload_offset(&self) -> usize {
        FIXED_FEATURES.len() + self.baseline_ids.len()
    }
}

pub fn fit_schema(baseline: &[CanFrame], include_payload: bool) -> Result<FeatureSchema, WindowingError> {
    FeatureSchema::fit(baseline, include_payload)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WindowLabel {
    Normal,
    Attack,
}

impl WindowLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowLabel::Normal => "Normal",
            WindowLabel::Attack => "Attack",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Normal" => Some(WindowLabel::Normal),
            "Attack" => Some(WindowLabel::Attack),
            _ => None,
        }
    }
}

/// Attack iff at least one frame carries an injected label.
pub fn label_window(frames: &[CanFrame]) -> WindowLabel {
    if frames.iter().any(|f| f.label == FrameLabel::Injected) {
        WindowLabel::Attack
    } else {
        WindowLabel::Normal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub window_id: usize,
    pub window_start: f64,
    pub values: Vec<f64>,
    pub window_label: WindowLabel,
    pub contains_frames: usize,
}

/// `(min, max, mean)` with the mean clamped into `[min, max]`; all zero when empty.
fn min_max_mean(values: impl Iterator<Item = f64>) -> [f64; 3] {
    let mut n = 0usize;
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for v in values {
        n += 1;
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
    }
    if n == 0 {
        return [0.0; 3];
    }
    [lo, hi, (sum / n as f64).clamp(lo, hi)]
}

/// Request/response pairs `(request_idx, response_idx)` in request order.
/// Each remote frame is matched with the first later data frame carrying the same id.
fn match_requests(frames: &[CanFrame]) -> (Vec<(usize, usize)>, usize) {
    let mut next_data: HashMap<u32, usize> = HashMap::new();
    let mut pairs = Vec::new();
    let mut lost = 0;
    for (i, f) in frames.iter().enumerate().rev() {
        match f.kind {
            FrameKind::Data => {
                next_data.insert(f.can_id, i);
            }
            FrameKind::Remote => match next_data.get(&f.can_id) {
                Some(&j) => pairs.push((i, j)),
                None => lost += 1,
            },
        }
    }
    pairs.reverse();
    (pairs, lost)
}

/// Feature values for the frames of a single window.
pub fn window_values(frames: &[CanFrame], schema: &FeatureSchema) -> Vec<f64> {
    let mut v = vec![0.0; schema.len()];
    if frames.is_empty() {
        return v;
    }
    v[col::NO_OF_RECORDS] = frames.len() as f64;
    v[col::NO_OF_IDS] = frames.iter().map(|f| f.can_id).collect::<BTreeSet<_>>().len() as f64;
    v[col::NO_OF_DLC] = frames.iter().map(|f| f.dlc).collect::<BTreeSet<_>>().len() as f64;
    let gaps = frames.windows(2).map(|w| w[1].timestamp - w[0].timestamp);
    v[3..6].copy_from_slice(&min_max_mean(gaps));

    let (pairs, lost) = match_requests(frames);
    v[col::NO_OF_REQ_MSGS] = frames.iter().filter(|f| f.is_remote()).count() as f64;
    v[col::NO_OF_RES] = pairs.len() as f64;
    v[col::NO_OF_LOST] = lost as f64;
    v[9..12].copy_from_slice(&min_max_mean(pairs.iter().map(|&(i, j)| (j - i - 1) as f64)));
    v[col::INSTANT_REPLY_COUNT] = pairs.iter().filter(|&&(i, j)| j == i + 1).count() as f64;
    v[13..16].copy_from_slice(&min_max_mean(
        pairs
            .iter()
            .map(|&(i, j)| frames[j].timestamp - frames[i].timestamp),
    ));

    let mut odd = 0usize;
    let mut hp = 0usize;
    for f in frames {
        if f.can_id == HIGH_PRIORITY_ID {
            hp += 1;
        }
        match schema.id_column(f.can_id) {
            Some(c) => v[c] += 1.0,
            None => odd += 1,
        }
    }
    v[col::HIGH_PRIORITY_COUNT] = hp as f64;
    v[col::NO_ODD_IDS] = odd as f64;

    if schema.include_payload {
        let offset = schema.payload_offset();
        for (k, &(id, byte)) in schema.payload_columns.iter().enumerate() {
            let (mut sum, mut n) = (0.0, 0usize);
            for f in frames.iter().filter(|f| f.can_id == id) {
                if let Some(&b) = f.payload.get(byte as usize) {
                    sum += b as f64;
                    n += 1;
                }
            }
            if n > 0 {
                v[offset + k] = sum / n as f64;
            }
        }
    }
    v
}

/// Extracts one vector per window start `< t_last`. Frames must be time-sorted.
///
/// Windows are computed in parallel on the current rayon pool; output order
/// follows window id.
pub fn extract_features(
    frames: &[CanFrame],
    spec: &WindowSpec,
    schema: &FeatureSchema,
) -> Vec<FeatureVector> {
    let Some(last) = frames.last() else {
        return Vec::new();
    };
    debug_assert!(frames.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    let count = spec.window_count(last.timestamp);
    (0..count)
        .into_par_iter()
        .map(|k| {
            let start = spec.window_start(k);
            let end = spec.window_end(k);
            let lo = frames.partition_point(|f| f.timestamp < start);
            let hi = frames.partition_point(|f| f.timestamp < end);
            let slice = &frames[lo..hi];
            FeatureVector {
                window_id: k,
                window_start: start,
                values: window_values(slice, schema),
                window_label: label_window(slice),
                contains_frames: slice.len(),
            }
        })
        .collect()
}

const META_COLUMNS: [&str; 4] = ["window_id", "window_start", "window_label", "contains_frames"];

/// Writes the feature matrix with a header of meta columns followed by the schema names.
/// Reals use shortest round-trip formatting, so reading back is exact.
pub fn write_feature_csv<W: Write>(
    mut out: W,
    schema: &FeatureSchema,
    vectors: &[FeatureVector],
) -> io::Result<()> {
    let header: Vec<&str> = META_COLUMNS
        .iter()
        .copied()
        .chain(schema.names().iter().map(String::as_str))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for fv in vectors {
        write!(
            out,
            "{},{},{},{}",
            fv.window_id,
            fv.window_start,
            fv.window_label.as_str(),
            fv.contains_frames
        )?;
        for x in &fv.values {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn read_feature_csv<R: BufRead>(
    reader: R,
    schema: &FeatureSchema,
) -> Result<Vec<FeatureVector>, WindowingError> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| WindowingError::Csv("missing header".into()))??;
    let expected: Vec<&str> = META_COLUMNS
        .iter()
        .copied()
        .chain(schema.names().iter().map(String::as_str))
        .collect();
    if header.trim().split(',').ne(expected.iter().copied()) {
        return Err(WindowingError::Csv("header does not match schema".into()));
    }
    let bad = |n: usize, what: &str| WindowingError::Csv(format!("row {n}: bad {what}"));
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != expected.len() {
            return Err(bad(n + 1, "field count"));
        }
        let values = fields[4..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad(n + 1, "value"))?;
        out.push(FeatureVector {
            window_id: fields[0].parse().map_err(|_| bad(n + 1, "window_id"))?,
            window_start: fields[1].parse().map_err(|_| bad(n + 1, "window_start"))?,
            window_label: WindowLabel::parse(fields[2]).ok_or_else(|| bad(n + 1, "label"))?,
            contains_frames: fields[3].parse().map_err(|_| bad(n + 1, "contains_frames"))?,
            values,
        });
    }
    Ok(out)
}
