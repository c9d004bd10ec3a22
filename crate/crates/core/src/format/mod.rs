//! DUET on-disk artifacts: sample names, skeleton CSVs, the modality tree,
//! joint reduction, splits and the annotation container.

pub mod annotation;
pub mod joints;
pub mod name;
pub mod skeleton;
pub mod tree;

pub use annotation::{
    build_annotation_container, deserialize_container, serialize_container, serialize_container_with,
    split_cross_location, split_cross_subject, AnnotationContainer, SampleRecord, Split, SplitSpec,
};
pub use name::{activity_label_of, format_sample_name, parse_sample_name, LocationCode, SampleName};
pub use skeleton::{
    parse_skeleton_csv, reduce_joints, write_skeleton_csv, JointLayout, ParsedSkeleton, SkeletonSequence, COORDS,
    CSV_COLUMNS, FRAMES_PER_SAMPLE, SUBJECTS,
};
pub use tree::{load_joints_tree, validate_dataset_tree, Finding, Modality, Rule, ValidationReport};

/// Locations × activities × pairs × repetitions of the full recording protocol.
pub const FULL_PROTOCOL_SAMPLES: usize = 3 * 12 * 10 * 40;
