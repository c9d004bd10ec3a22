use ndarray::{Array4, Axis};
use serde::{Deserialize, Serialize};

use super::joints::{FULL_JOINTS, REDUCED_JOINTS, RETAINED_JOINTS};
use crate::error::{Error, Result};

/// Frames in a conforming three-second clip.
pub const FRAMES_PER_SAMPLE: usize = 91;
pub const SUBJECTS: usize = 2;
pub const COORDS: usize = 3;
/// Timestamp column plus two subjects of 32 (x, y, z) triples.
pub const CSV_COLUMNS: usize = 1 + SUBJECTS * FULL_JOINTS * COORDS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JointLayout {
    Full32,
    Reduced25,
}

impl JointLayout {
    pub fn joints(self) -> usize {
        match self {
            JointLayout::Full32 => FULL_JOINTS,
            JointLayout::Reduced25 => REDUCED_JOINTS,
        }
    }
}

/// Per-frame camera-relative joint positions (mm) for both subjects.
///
/// `keypoints` has shape `(M, T, V, 3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    timestamps: Vec<i64>,
    keypoints: Array4<f64>,
    layout: JointLayout,
}

impl SkeletonSequence {
    pub fn new(timestamps: Vec<i64>, keypoints: Array4<f64>, layout: JointLayout) -> Result<Self> {
        let (m, t, v, c) = keypoints.dim();
        if m != SUBJECTS || c != COORDS || v != layout.joints() {
            return Err(Error::Contract(format!(
                "keypoints shape ({m}, {t}, {v}, {c}) does not match ({SUBJECTS}, T, {}, {COORDS})",
                layout.joints()
            )));
        }
        if timestamps.len() != t {
            return Err(Error::Contract(format!(
                "{} timestamps for {t} frames",
                timestamps.len()
            )));
        }
        if let Some(i) = first_non_increasing(&timestamps) {
            return Err(Error::Contract(format!(
                "timestamps not strictly increasing at frame {i}"
            )));
        }
        Ok(SkeletonSequence {
            timestamps,
            keypoints,
            layout,
        })
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn keypoints(&self) -> &Array4<f64> {
        &self.keypoints
    }

    pub fn into_keypoints(self) -> Array4<f64> {
        self.keypoints
    }

    pub fn layout(&self) -> JointLayout {
        self.layout
    }

    pub fn frames(&self) -> usize {
        self.timestamps.len()
    }
}

fn first_non_increasing(ts: &[i64]) -> Option<usize> {
    ts.windows(2).position(|w| w[1] <= w[0]).map(|i| i + 1)
}

/// Result of parsing one skeleton CSV.
#[derive(Debug, Clone)]
pub struct ParsedSkeleton {
    pub sequence: SkeletonSequence,
    /// Non-fatal deviations, e.g. a frame count other than 91.
    pub warnings: Vec<String>,
}

/// Parses a headerless 193-column skeleton CSV.
pub fn parse_skeleton_csv(text: &str) -> Result<ParsedSkeleton> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut timestamps = Vec::with_capacity(FRAMES_PER_SAMPLE);
    let mut values: Vec<f64> = Vec::with_capacity(FRAMES_PER_SAMPLE * (CSV_COLUMNS - 1));
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("row {row}: {e}")))?;
        if record.len() != CSV_COLUMNS {
            return Err(Error::Format(format!(
                "row {row}: expected {CSV_COLUMNS} columns, found {}",
                record.len()
            )));
        }
        let ts: f64 = record[0]
            .parse()
            .map_err(|_| Error::Format(format!("row {row}: bad timestamp {:?}", &record[0])))?;
        if !ts.is_finite() || ts.fract() != 0.0 {
            return Err(Error::Format(format!("row {row}: timestamp {ts} is not an integer")));
        }
        timestamps.push(ts as i64);
        for (col, field) in record.iter().enumerate().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("row {row}, column {col}: bad number {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::Format(format!("row {row}, column {col}: non-finite value")));
            }
            values.push(v);
        }
    }

    let frames = timestamps.len();
    if frames == 0 {
        return Err(Error::Format("no rows".into()));
    }
    if let Some(i) = first_non_increasing(&timestamps) {
        return Err(Error::Format(format!("timestamps not strictly increasing at row {i}")));
    }
    let mut warnings = Vec::new();
    if frames != FRAMES_PER_SAMPLE {
        warnings.push(format!("{frames} frames (expected {FRAMES_PER_SAMPLE})"));
    }

    // rows are (T, M, V, C) in memory order
    let by_frame = Array4::from_shape_vec((frames, SUBJECTS, FULL_JOINTS, COORDS), values).expect("row length checked");
    let keypoints = by_frame.permuted_axes([1, 0, 2, 3]).as_standard_layout().to_owned();
    let sequence = SkeletonSequence::new(timestamps, keypoints, JointLayout::Full32)?;
    Ok(ParsedSkeleton { sequence, warnings })
}

/// Serializes a full-layout sequence in the 193-column layout.
///
/// Numbers use the shortest representation that parses back to the same
/// bits, so `parse` then `write` reproduces a file written here byte for byte.
pub fn write_skeleton_csv(seq: &SkeletonSequence) -> Result<String> {
    if seq.layout != JointLayout::Full32 {
        return Err(Error::Contract(
            "only the 32-joint layout is serialized as skeleton CSV".into(),
        ));
    }
    use std::fmt::Write;
    let mut out = String::with_capacity(seq.frames() * CSV_COLUMNS * 9);
    for (t, ts) in seq.timestamps.iter().enumerate() {
        write!(out, "{ts}").unwrap();
        for m in 0..SUBJECTS {
            for v in 0..FULL_JOINTS {
                for c in 0..COORDS {
                    write!(out, ",{}", seq.keypoints[[m, t, v, c]]).unwrap();
                }
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Keeps the 25 retained joints of a full-layout sequence.
pub fn reduce_joints(seq: &SkeletonSequence) -> Result<SkeletonSequence> {
    if seq.layout != JointLayout::Full32 {
        return Err(Error::Contract("joint reduction requires the 32-joint layout".into()));
    }
    let keypoints = seq.keypoints.select(Axis(2), &RETAINED_JOINTS);
    SkeletonSequence::new(seq.timestamps.clone(), keypoints, JointLayout::Reduced25)
}
