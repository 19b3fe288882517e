//! CAN frame model, benchmark log parsers and synthetic traffic generators.
//!
//! Three on-disk grammars are understood:
//!
//! * OTIDS text: `Timestamp: <f> ID: <hex> <000|100> DLC: <n> <bytes...>`
//! * Car Hacking CSV: `timestamp,id,dlc,byte0,..,byte{dlc-1},<R|T>`
//! * the normalized CSV this crate writes:
//!   `timestamp,id_hex,dlc,kind,label,payload_hex`

mod parse;
mod synth;

pub use parse::{
    format_carhacking_row, format_normalized_row, format_otids_line, parse_carhacking_row,
    parse_normalized_row, parse_otids_line, NORMALIZED_HEADER,
};
pub use synth::{inject_dos, inject_fuzzy, synth_baseline, IdSpace, PeriodicId, SynthConfig};

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest 29-bit extended arbitration identifier.
pub const MAX_CAN_ID: u32 = 0x1FFF_FFFF;

/// Highest-priority identifier, used by DoS floods.
pub const HIGH_PRIORITY_ID: u32 = 0x000;

#[derive(Debug, Error)]
pub enum CanIoError {
    #[error("malformed line {line_no}: {reason}")]
    MalformedLine { line_no: usize, reason: String },
    #[error("{path}: {malformed} of {total} lines malformed (strict mode)")]
    Format {
        path: PathBuf,
        malformed: usize,
        total: usize,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CanIoError {
    pub(crate) fn malformed(reason: impl Into<String>) -> Self {
        CanIoError::MalformedLine {
            line_no: 0,
            reason: reason.into(),
        }
    }

    fn at_line(self, n: usize) -> Self {
        match self {
            CanIoError::MalformedLine { reason, .. } => CanIoError::MalformedLine {
                line_no: n,
                reason,
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameKind {
    Data,
    Remote,
}

/// Ground-truth label carried by a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameLabel {
    Normal,
    Injected,
    Unknown,
}

/// One record of a CAN capture.
///
/// The CRC, ACK and EOF fields of a physical frame never appear in the log
/// formats and are not represented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanFrame {
    /// Seconds since capture start (or absolute epoch seconds, depending on source).
    pub timestamp: f64,
    pub can_id: u32,
    /// Identifier exactly as written in the source file.
    pub id_text: String,
    pub dlc: u8,
    pub payload: Vec<u8>,
    pub kind: FrameKind,
    pub label: FrameLabel,
}

impl CanFrame {
    /// Builds a data frame with `dlc = payload.len()`.
    pub fn data(timestamp: f64, can_id: u32, payload: Vec<u8>, label: FrameLabel) -> Self {
        CanFrame {
            timestamp,
            can_id,
            id_text: format_id(can_id),
            dlc: payload.len() as u8,
            payload,
            kind: FrameKind::Data,
            label,
        }
    }

    /// Builds a remote request frame with an empty payload.
    pub fn remote(timestamp: f64, can_id: u32, dlc: u8, label: FrameLabel) -> Self {
        CanFrame {
            timestamp,
            can_id,
            id_text: format_id(can_id),
            dlc,
            payload: Vec::new(),
            kind: FrameKind::Remote,
            label,
        }
    }

    pub fn is_remote(&self) -> bool {
        self.kind == FrameKind::Remote
    }

    /// Checks the per-frame invariants (DLC range, payload length, id range, timestamp).
    pub fn validate(&self) -> Result<(), String> {
        if self.dlc > 8 {
            return Err(format!("dlc {} out of range", self.dlc));
        }
        if self.can_id > MAX_CAN_ID {
            return Err(format!("id {:#x} exceeds 29 bits", self.can_id));
        }
        if !(self.timestamp.is_finite() && self.timestamp >= 0.0) {
            return Err(format!("bad timestamp {}", self.timestamp));
        }
        match self.kind {
            FrameKind::Data if self.payload.len() != self.dlc as usize => Err(format!(
                "data frame payload has {} bytes, dlc {}",
                self.payload.len(),
                self.dlc
            )),
            FrameKind::Remote if !self.payload.is_empty() => {
                Err("remote frame carries payload".to_string())
            }
            _ => Ok(()),
        }
    }
}

/// Canonical identifier text: at least four lowercase hex digits.
pub fn format_id(can_id: u32) -> String {
    format!("{can_id:04x}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaptureFormat {
    OtidsText,
    CarHackingCsv,
    /// The normalized CSV dump written by [`write_normalized_csv`].
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaptureSource {
    OtidsText,
    CarHackingCsv,
    Synthetic,
}

impl From<CaptureFormat> for CaptureSource {
    fn from(f: CaptureFormat) -> Self {
        match f {
            CaptureFormat::OtidsText => CaptureSource::OtidsText,
            CaptureFormat::CarHackingCsv => CaptureSource::CarHackingCsv,
            CaptureFormat::Normalized => CaptureSource::Synthetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub source: CaptureSource,
    pub frame_count: usize,
    /// `t_last - t_first`, zero for fewer than two frames.
    pub time_span: f64,
    /// Non-blank lines that failed to parse (lenient mode skips them).
    pub malformed_lines: usize,
}

impl CaptureMeta {
    pub fn from_frames(source: CaptureSource, frames: &[CanFrame], malformed_lines: usize) -> Self {
        let time_span = match (frames.first(), frames.last()) {
            (Some(a), Some(b)) => (b.timestamp - a.timestamp).max(0.0),
            _ => 0.0,
        };
        CaptureMeta {
            source,
            frame_count: frames.len(),
            time_span,
            malformed_lines,
        }
    }
}

/// Reading options for [`load_capture`].
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Abort with [`CanIoError::Format`] when more than `max_malformed_fraction`
    /// of the lines are malformed.
    pub strict: bool,
    pub max_malformed_fraction: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            strict: false,
            max_malformed_fraction: 0.01,
        }
    }
}

/// Parses a whole capture file. Frames keep file order unless timestamps
/// go backwards, in which case they are stably sorted.
pub fn load_capture(
    path: &Path,
    format: CaptureFormat,
    opts: LoadOptions,
) -> Result<(Vec<CanFrame>, CaptureMeta), CanIoError> {
    let io_err = |source| CanIoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    read_capture(reader, format, opts).map_err(|e| match e {
        CanIoError::Format {
            malformed, total, ..
        } => CanIoError::Format {
            path: path.to_path_buf(),
            malformed,
            total,
        },
        CanIoError::Io { source, .. } => io_err(source),
        other => other,
    })
}

/// Same as [`load_capture`] over any buffered reader.
pub fn read_capture<R: BufRead>(
    reader: R,
    format: CaptureFormat,
    opts: LoadOptions,
) -> Result<(Vec<CanFrame>, CaptureMeta), CanIoError> {
    let mut frames = Vec::new();
    let mut malformed = 0usize;
    let mut total = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CanIoError::Io {
            path: PathBuf::new(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if format == CaptureFormat::Normalized && idx == 0 && trimmed == NORMALIZED_HEADER {
            continue;
        }
        total += 1;
        let parsed = match format {
            CaptureFormat::OtidsText => parse_otids_line(trimmed),
            CaptureFormat::CarHackingCsv => parse_carhacking_row(trimmed),
            CaptureFormat::Normalized => parse_normalized_row(trimmed),
        };
        match parsed {
            Ok(frame) => frames.push(frame),
            Err(e) => {
                malformed += 1;
                log::debug!("{}", e.at_line(idx + 1));
            }
        }
    }
    if malformed > 0 {
        log::warn!("{malformed} of {total} lines malformed");
        if opts.strict && malformed as f64 > opts.max_malformed_fraction * total as f64 {
            return Err(CanIoError::Format {
                path: PathBuf::new(),
                malformed,
                total,
            });
        }
    }
    if frames.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        log::warn!("timestamps not monotone; sorting capture");
        frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    }
    let meta = CaptureMeta::from_frames(format.into(), &frames, malformed);
    Ok((frames, meta))
}

/// Writes frames in the normalized CSV layout, header included.
pub fn write_normalized_csv<W: Write>(mut out: W, frames: &[CanFrame]) -> io::Result<()> {
    writeln!(out, "{NORMALIZED_HEADER}")?;
    for f in frames {
        writeln!(out, "{}", format_normalized_row(f))?;
    }
    out.flush()
}

pub fn save_normalized_csv(path: &Path, frames: &[CanFrame]) -> Result<(), CanIoError> {
    let io_err = |source| CanIoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_normalized_csv(BufWriter::new(file), frames).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn empty_capture() {
        let (frames, meta) =
            read_capture(Cursor::new(""), CaptureFormat::OtidsText, LoadOptions::default())
                .unwrap();
        assert!(frames.is_empty());
        assert_eq!(meta.frame_count, 0);
        assert_eq!(meta.time_span, 0.0);
    }

    #[test]
    fn three_lines_time_span() {
        let text = "Timestamp: 1.000000 ID: 0316 000 DLC: 2 01 02\n\
                    Timestamp: 1.250000 ID: 0100 100 DLC: 0\n\
                    Timestamp: 1.500000 ID: 0100 000 DLC: 1 ff\n";
        let (frames, meta) =
            read_capture(Cursor::new(text), CaptureFormat::OtidsText, LoadOptions::default())
                .unwrap();
        assert_eq!(frames.len(), 3);
        assert_eq!(meta.frame_count, 3);
        assert_eq!(meta.time_span, 0.5);
        assert_eq!(meta.source, CaptureSource::OtidsText);
    }

    fn ten_rows_one_bad() -> String {
        let mut s = String::new();
        for i in 0..9 {
            s.push_str(&format!("0.{i:03},0316,2,01,02,R\n"));
        }
        s.push_str("0.010,0316,8,01,02,R\n");
        s
    }

    #[test]
    fn strict_mode_rejects_ten_percent_malformed() {
        let opts = LoadOptions {
            strict: true,
            ..LoadOptions::default()
        };
        let err = read_capture(Cursor::new(ten_rows_one_bad()), CaptureFormat::CarHackingCsv, opts)
            .unwrap_err();
        assert!(matches!(
            err,
            CanIoError::Format {
                malformed: 1,
                total: 10,
                ..
            }
        ));
    }

    #[test]
    fn lenient_mode_counts_malformed() {
        let (frames, meta) = read_capture(
            Cursor::new(ten_rows_one_bad()),
            CaptureFormat::CarHackingCsv,
            LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(frames.len(), 9);
        assert_eq!(meta.malformed_lines, 1);
    }

    #[test]
    fn normalized_dump_reloads() {
        let frames = vec![
            CanFrame::remote(0.5, 0x100, 0, FrameLabel::Normal),
            CanFrame::data(0.75, 0x100, vec![1, 2, 3], FrameLabel::Injected),
        ];
        let mut buf = Vec::new();
        write_normalized_csv(&mut buf, &frames).unwrap();
        let (back, meta) =
            read_capture(Cursor::new(buf), CaptureFormat::Normalized, LoadOptions::default())
                .unwrap();
        assert_eq!(back, frames);
        assert_eq!(meta.source, CaptureSource::Synthetic);
    }

    #[test]
    fn out_of_order_capture_is_sorted() {
        let text = "1.0,0001,0,R\n0.5,0002,0,R\n";
        let (frames, _) =
            read_capture(Cursor::new(text), CaptureFormat::CarHackingCsv, LoadOptions::default())
                .unwrap();
        assert_eq!(frames[0].can_id, 2);
    }
}
