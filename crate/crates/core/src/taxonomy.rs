//! The fixed mapping between the twelve dyadic activities and the five
//! kinesic communicative functions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_ACTIVITIES: usize = 12;
pub const NUM_FUNCTIONS: usize = 5;

/// Activity class label in `0..12`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ActivityLabel(u8);

impl ActivityLabel {
    pub fn new(value: usize) -> Result<Self> {
        if value < NUM_ACTIVITIES {
            Ok(ActivityLabel(value as u8))
        } else {
            Err(Error::Domain(format!(
                "activity label {value} outside 0..{NUM_ACTIVITIES}"
            )))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = ActivityLabel> {
        (0..NUM_ACTIVITIES as u8).map(ActivityLabel)
    }

    pub fn info(self) -> &'static ActivityInfo {
        &ACTIVITIES[self.index()]
    }

    pub fn name(self) -> &'static str {
        self.info().name
    }
}

impl TryFrom<u8> for ActivityLabel {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        ActivityLabel::new(value as usize)
    }
}

impl From<ActivityLabel> for u8 {
    fn from(label: ActivityLabel) -> u8 {
        label.0
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Kinesic communicative function. Declaration order is the canonical order
/// used for dense class indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KinesicFunction {
    Emblem,
    Illustrator,
    Regulator,
    Adaptor,
    AffectDisplay,
}

impl KinesicFunction {
    pub const ALL: [KinesicFunction; NUM_FUNCTIONS] = [
        KinesicFunction::Emblem,
        KinesicFunction::Illustrator,
        KinesicFunction::Regulator,
        KinesicFunction::Adaptor,
        KinesicFunction::AffectDisplay,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KinesicFunction::Emblem => "EMBLEM",
            KinesicFunction::Illustrator => "ILLUSTRATOR",
            KinesicFunction::Regulator => "REGULATOR",
            KinesicFunction::Adaptor => "ADAPTOR",
            KinesicFunction::AffectDisplay => "AFFECT_DISPLAY",
        }
    }
}

impl fmt::Display for KinesicFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActivityInfo {
    pub label: u8,
    pub name: &'static str,
    pub function: KinesicFunction,
}

use KinesicFunction::*;

#[rustfmt::skip]
pub static ACTIVITIES: [ActivityInfo; NUM_ACTIVITIES] = [
    ActivityInfo { label: 0, name: "Waving in", function: Emblem },
    ActivityInfo { label: 1, name: "Thumbs up", function: Emblem },
    ActivityInfo { label: 2, name: "Waving", function: Emblem },
    ActivityInfo { label: 3, name: "Pointing", function: Illustrator },
    ActivityInfo { label: 4, name: "Showing measurements", function: Illustrator },
    ActivityInfo { label: 5, name: "Nodding", function: Regulator },
    ActivityInfo { label: 6, name: "Drawing circles in the air", function: Regulator },
    ActivityInfo { label: 7, name: "Holding palms out", function: Regulator },
    ActivityInfo { label: 8, name: "Scratching hair", function: Adaptor },
    ActivityInfo { label: 9, name: "Laughing", function: AffectDisplay },
    ActivityInfo { label: 10, name: "Arm crossing", function: AffectDisplay },
    ActivityInfo { label: 11, name: "Hugging", function: AffectDisplay },
];

pub fn kinesic_function_of(label: ActivityLabel) -> KinesicFunction {
    ACTIVITIES[label.index()].function
}

/// Same as [`kinesic_function_of`] for a raw index; rejects values outside `0..12`.
pub fn kinesic_function_of_index(label: usize) -> Result<KinesicFunction> {
    ActivityLabel::new(label).map(kinesic_function_of)
}

/// Inverse image of [`kinesic_function_of`], in ascending label order.
pub fn labels_for_function(function: KinesicFunction) -> Vec<ActivityLabel> {
    ActivityLabel::all()
        .filter(|&l| kinesic_function_of(l) == function)
        .collect()
}

/// Rank of `function` among `present` in canonical order. `present` need not
/// be sorted or deduplicated.
pub fn function_label_index(function: KinesicFunction, present: &[KinesicFunction]) -> Result<usize> {
    if !present.contains(&function) {
        return Err(Error::Domain(format!(
            "kinesic function {function} not among the present functions"
        )));
    }
    let mut distinct: Vec<KinesicFunction> = present.to_vec();
    distinct.sort();
    distinct.dedup();
    Ok(distinct.iter().position(|&f| f == function).unwrap())
}

/// Distinct functions covered by a set of activity labels, in canonical order.
pub fn functions_present(labels: &[ActivityLabel]) -> Vec<KinesicFunction> {
    let mut fs: Vec<KinesicFunction> = labels.iter().map(|&l| kinesic_function_of(l)).collect();
    fs.sort();
    fs.dedup();
    fs
}
