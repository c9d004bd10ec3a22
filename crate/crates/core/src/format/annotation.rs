//! Split definitions and the annotation container consumed by training.

use std::collections::{BTreeSet, HashMap};

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use super::joints::REDUCED_JOINTS;
use super::name::{parse_sample_name, LocationCode, SampleName};
use super::skeleton::{JointLayout, SkeletonSequence, COORDS, SUBJECTS};
use crate::error::{Error, Result};
use crate::taxonomy::ActivityLabel;

/// One training sample: name, activity label and `(M, T, V, C)` keypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub frame_dir: String,
    pub label: ActivityLabel,
    pub total_frames: usize,
    pub keypoint: Array4<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub xsub_train: Vec<String>,
    pub xsub_value: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationContainer {
    pub split: Split,
    pub annotation: Vec<SampleRecord>,
}

/// How samples are assigned to the held-out list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    /// Held-out `(location, pair)` combinations.
    CrossSubject { test_pairs: Vec<(LocationCode, u8)> },
    /// Every sample recorded at one location is held out.
    CrossLocation { test_location: LocationCode },
}

impl SplitSpec {
    /// Held-out pairs of the kinesics experiments: `CCII01` and `CMII10`.
    pub fn kinesics_default() -> Self {
        SplitSpec::CrossSubject {
            test_pairs: vec![(LocationCode::CC, 1), (LocationCode::CM, 10)],
        }
    }

    /// Dataset-level cross-subject benchmark split.
    pub fn benchmark_cross_subject() -> Self {
        use LocationCode::*;
        SplitSpec::CrossSubject {
            test_pairs: vec![(CC, 5), (CC, 7), (CL, 1), (CL, 5), (CM, 6), (CM, 9)],
        }
    }

    pub fn benchmark_cross_location() -> Self {
        SplitSpec::CrossLocation {
            test_location: LocationCode::CC,
        }
    }

    pub fn is_test(&self, name: &SampleName) -> bool {
        match self {
            SplitSpec::CrossSubject { test_pairs } => test_pairs.contains(&(name.location, name.pair_index)),
            SplitSpec::CrossLocation { test_location } => name.location == *test_location,
        }
    }

    pub fn apply(&self, names: &[SampleName]) -> (Vec<SampleName>, Vec<SampleName>) {
        names.iter().partition(|n| !self.is_test(n))
    }
}

/// Partitions names by held-out `(location, pair)`. Returns `(train, test)`.
pub fn split_cross_subject(
    names: &[SampleName],
    test_pairs: &[(LocationCode, u8)],
) -> (Vec<SampleName>, Vec<SampleName>) {
    names
        .iter()
        .partition(|n| !test_pairs.contains(&(n.location, n.pair_index)))
}

/// Partitions names by location. Returns `(train, test)`.
pub fn split_cross_location(names: &[SampleName], test_location: LocationCode) -> (Vec<SampleName>, Vec<SampleName>) {
    names.iter().partition(|n| n.location != test_location)
}

/// Builds a container from reduced-layout samples. Labels come from the name.
pub fn build_annotation_container(
    samples: Vec<(SampleName, SkeletonSequence)>,
    split: &SplitSpec,
) -> Result<AnnotationContainer> {
    let mut seen = BTreeSet::new();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut annotation = Vec::with_capacity(samples.len());
    for (name, seq) in samples {
        if !seen.insert(name) {
            return Err(Error::Contract(format!("duplicate sample name {name}")));
        }
        if seq.layout() != JointLayout::Reduced25 {
            return Err(Error::Contract(format!(
                "sample {name} is not in the reduced 25-joint layout"
            )));
        }
        let text = name.to_string();
        if split.is_test(&name) {
            test.push(text.clone());
        } else {
            train.push(text.clone());
        }
        let total_frames = seq.frames();
        annotation.push(SampleRecord {
            frame_dir: text,
            label: name.activity_label(),
            total_frames,
            keypoint: seq.into_keypoints(),
        });
    }
    let container = AnnotationContainer {
        split: Split {
            xsub_train: train,
            xsub_value: test,
        },
        annotation,
    };
    container.check()?;
    Ok(container)
}

impl AnnotationContainer {
    /// Checks the container invariants.
    pub fn check(&self) -> Result<()> {
        let mut index = HashMap::with_capacity(self.annotation.len());
        for (i, r) in self.annotation.iter().enumerate() {
            if index.insert(r.frame_dir.as_str(), i).is_some() {
                return Err(Error::Schema(format!("duplicate annotation {:?}", r.frame_dir)));
            }
            let name = parse_sample_name(&r.frame_dir)?;
            if name.activity_label() != r.label {
                return Err(Error::Schema(format!(
                    "label {} of {:?} disagrees with its activity index",
                    r.label, r.frame_dir
                )));
            }
            let (m, t, v, c) = r.keypoint.dim();
            if m != SUBJECTS || v != REDUCED_JOINTS || c != COORDS {
                return Err(Error::Schema(format!(
                    "keypoint of {:?} has shape ({m}, {t}, {v}, {c}), expected ({SUBJECTS}, T, {REDUCED_JOINTS}, {COORDS})",
                    r.frame_dir
                )));
            }
            if t != r.total_frames {
                return Err(Error::Schema(format!(
                    "total_frames {} of {:?} differs from keypoint length {t}",
                    r.total_frames, r.frame_dir
                )));
            }
        }
        let mut listed = BTreeSet::new();
        for name in self.split.xsub_train.iter().chain(&self.split.xsub_value) {
            if !index.contains_key(name.as_str()) {
                return Err(Error::Schema(format!("split entry {name:?} has no annotation")));
            }
            if !listed.insert(name.as_str()) {
                return Err(Error::Schema(format!("split entry {name:?} listed twice")));
            }
        }
        if listed.len() != self.annotation.len() {
            return Err(Error::Schema(format!(
                "{} annotations are not assigned to a split",
                self.annotation.len() - listed.len()
            )));
        }
        Ok(())
    }

    pub fn record(&self, name: &str) -> Option<&SampleRecord> {
        self.annotation.iter().find(|r| r.frame_dir == name)
    }

    /// Map from sample name to position in `annotation`.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.annotation
            .iter()
            .enumerate()
            .map(|(i, r)| (r.frame_dir.as_str(), i))
            .collect()
    }

    /// Resolves names to records, failing on the first unknown name.
    pub fn records<'a, S: AsRef<str>>(&'a self, names: &[S]) -> Result<Vec<&'a SampleRecord>> {
        let index = self.index();
        names
            .iter()
            .map(|n| {
                index
                    .get(n.as_ref())
                    .map(|&i| &self.annotation[i])
                    .ok_or_else(|| Error::Contract(format!("unknown sample {:?}", n.as_ref())))
            })
            .collect()
    }

    /// Distinct activity labels present, ascending.
    pub fn labels(&self) -> Vec<ActivityLabel> {
        let set: BTreeSet<ActivityLabel> = self.annotation.iter().map(|r| r.label).collect();
        set.into_iter().collect()
    }

    /// Keeps only samples whose label is in `labels`; split lists are filtered alike.
    pub fn filter_labels(&self, labels: &[ActivityLabel]) -> AnnotationContainer {
        let keep: BTreeSet<&str> = self
            .annotation
            .iter()
            .filter(|r| labels.contains(&r.label))
            .map(|r| r.frame_dir.as_str())
            .collect();
        let filter =
            |names: &[String]| -> Vec<String> { names.iter().filter(|n| keep.contains(n.as_str())).cloned().collect() };
        AnnotationContainer {
            split: Split {
                xsub_train: filter(&self.split.xsub_train),
                xsub_value: filter(&self.split.xsub_value),
            },
            annotation: self
                .annotation
                .iter()
                .filter(|r| labels.contains(&r.label))
                .cloned()
                .collect(),
        }
    }

    /// Reassigns the split lists according to `spec`, keeping annotation order.
    pub fn resplit(&mut self, spec: &SplitSpec) -> Result<()> {
        let mut split = Split::default();
        for r in &self.annotation {
            let name = parse_sample_name(&r.frame_dir)?;
            if spec.is_test(&name) {
                split.xsub_value.push(r.frame_dir.clone());
            } else {
                split.xsub_train.push(r.frame_dir.clone());
            }
        }
        self.split = split;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    frame_dir: String,
    label: i64,
    total_frames: i64,
    keypoint: Vec<Vec<Vec<Vec<f64>>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContainer {
    split: Split,
    annotation: Vec<RawRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

fn to_raw(record: &SampleRecord) -> RawRecord {
    let (m, t, v, _) = record.keypoint.dim();
    let keypoint = (0..m)
        .map(|mi| {
            (0..t)
                .map(|ti| {
                    (0..v)
                        .map(|vi| record.keypoint.slice(ndarray::s![mi, ti, vi, ..]).to_vec())
                        .collect()
                })
                .collect()
        })
        .collect();
    RawRecord {
        frame_dir: record.frame_dir.clone(),
        label: record.label.index() as i64,
        total_frames: record.total_frames as i64,
        keypoint,
    }
}

fn from_raw(raw: RawRecord) -> Result<SampleRecord> {
    let what = |msg: String| Error::Schema(format!("annotation {:?}: {msg}", raw.frame_dir));
    let label = usize::try_from(raw.label)
        .ok()
        .and_then(|l| ActivityLabel::new(l).ok())
        .ok_or_else(|| what(format!("label {} outside 0..12", raw.label)))?;
    let total_frames = usize::try_from(raw.total_frames).map_err(|_| what("negative total_frames".into()))?;
    let m = raw.keypoint.len();
    if m != SUBJECTS {
        return Err(what(format!("keypoint M dimension is {m}, expected {SUBJECTS}")));
    }
    let t = raw.keypoint[0].len();
    let mut flat = Vec::with_capacity(m * t * REDUCED_JOINTS * COORDS);
    for (mi, subject) in raw.keypoint.iter().enumerate() {
        if subject.len() != t {
            return Err(what(format!(
                "subject {mi} has {} frames, subject 0 has {t}",
                subject.len()
            )));
        }
        for (ti, frame) in subject.iter().enumerate() {
            if frame.len() != REDUCED_JOINTS {
                return Err(what(format!(
                    "keypoint V dimension is {} at subject {mi} frame {ti}, expected {REDUCED_JOINTS}",
                    frame.len()
                )));
            }
            for joint in frame {
                if joint.len() != COORDS {
                    return Err(what(format!(
                        "keypoint C dimension is {}, expected {COORDS}",
                        joint.len()
                    )));
                }
                flat.extend_from_slice(joint);
            }
        }
    }
    let keypoint = Array4::from_shape_vec((m, t, REDUCED_JOINTS, COORDS), flat).expect("shape checked");
    Ok(SampleRecord {
        frame_dir: raw.frame_dir,
        label,
        total_frames,
        keypoint,
    })
}

/// Serializes the container as a single JSON document.
pub fn serialize_container(container: &AnnotationContainer) -> String {
    serialize_container_with(container, None)
}

/// As [`serialize_container`], attaching an optional provenance object.
pub fn serialize_container_with(container: &AnnotationContainer, provenance: Option<serde_json::Value>) -> String {
    let raw = RawContainer {
        split: container.split.clone(),
        annotation: container.annotation.iter().map(to_raw).collect(),
        provenance,
    };
    serde_json::to_string(&raw).expect("container serializes")
}

pub fn deserialize_container(document: &str) -> Result<AnnotationContainer> {
    let raw: RawContainer = serde_json::from_str(document).map_err(|e| Error::Schema(e.to_string()))?;
    let annotation = raw.annotation.into_iter().map(from_raw).collect::<Result<Vec<_>>>()?;
    let container = AnnotationContainer {
        split: raw.split,
        annotation,
    };
    container.check()?;
    Ok(container)
}
