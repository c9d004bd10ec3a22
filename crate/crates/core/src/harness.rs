//! Two-stage experiments over activity subsets: train the skeleton backbone,
//! freeze it, then train the kinesics head on its features.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{AnnotationContainer, SplitSpec};
use crate::graph::SkeletonGraph;
use crate::head::{function_targets, head_evaluate, head_train, HeadConfig};
use crate::stats::AccuracyPairs;
use crate::stgcn::{train, StgcnConfig};
use crate::taxonomy::{functions_present, ActivityLabel, NUM_ACTIVITIES};

pub const RESULTS_HEADER: &str = "experiment,num_interactions,labels,stgcn_acc,cnn_acc";
const SENTINEL: &str = "NA";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SubsetSpecRaw", into = "SubsetSpecRaw")]
pub struct SubsetSpec {
    experiment_id: u32,
    labels: Vec<ActivityLabel>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubsetSpecRaw {
    experiment_id: u32,
    labels: Vec<usize>,
}

impl TryFrom<SubsetSpecRaw> for SubsetSpec {
    type Error = Error;

    fn try_from(raw: SubsetSpecRaw) -> Result<Self> {
        SubsetSpec::from_indices(raw.experiment_id, &raw.labels)
    }
}

impl From<SubsetSpec> for SubsetSpecRaw {
    fn from(spec: SubsetSpec) -> Self {
        SubsetSpecRaw {
            experiment_id: spec.experiment_id,
            labels: spec.labels.iter().map(|l| l.index()).collect(),
        }
    }
}

impl SubsetSpec {
    /// Labels must be strictly increasing and number between 2 and 12.
    pub fn new(experiment_id: u32, labels: Vec<ActivityLabel>) -> Result<Self> {
        if !(2..=NUM_ACTIVITIES).contains(&labels.len()) {
            return Err(Error::Contract(format!(
                "experiment {experiment_id}: subset needs 2 to {NUM_ACTIVITIES} labels, got {}",
                labels.len()
            )));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Contract(format!(
                "experiment {experiment_id}: labels must be strictly increasing"
            )));
        }
        Ok(SubsetSpec { experiment_id, labels })
    }

    pub fn from_indices(experiment_id: u32, labels: &[usize]) -> Result<Self> {
        let labels = labels
            .iter()
            .map(|&l| ActivityLabel::new(l))
            .collect::<Result<Vec<_>>>()?;
        SubsetSpec::new(experiment_id, labels)
    }

    pub fn experiment_id(&self) -> u32 {
        self.experiment_id
    }

    pub fn labels(&self) -> &[ActivityLabel] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub subsets: Vec<SubsetSpec>,
    pub split: SplitSpec,
    /// Each experiment runs with seed `seed ^ experiment_id`.
    pub seed: u64,
}

impl SuiteManifest {
    pub fn validate(&self) -> Result<()> {
        if self.subsets.is_empty() {
            return Err(Error::Contract("suite manifest has no subsets".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.subsets {
            if !seen.insert(s.experiment_id) {
                return Err(Error::Contract(format!("duplicate experiment id {}", s.experiment_id)));
            }
        }
        Ok(())
    }

    pub fn experiment_seed(&self, experiment_id: u32) -> u64 {
        self.seed ^ u64::from(experiment_id)
    }
}

const TABLE5_SUBSETS: [&[usize]; 30] = [
    &[0, 1, 3, 4, 5, 8, 9, 10],
    &[0, 1, 3, 6, 7, 8, 10],
    &[0, 1, 3, 6, 8, 10],
    &[2, 3, 4, 5, 8, 9, 10, 11],
    &[0, 2, 3, 5, 7, 8, 11],
    &[0, 4, 5, 6, 8, 11],
    &[1, 3, 4, 6, 8, 10, 11],
    &[0, 2, 3, 4, 7, 8, 11],
    &[2, 3, 5, 8, 9],
    &[1, 4, 5, 8, 9, 10],
    &[0, 2, 3, 6, 7, 8, 10, 11],
    &[2, 3, 4, 5, 6, 8, 9],
    &[0, 1, 3, 6, 8, 11],
    &[0, 1, 2, 3, 4, 6, 8, 9, 10, 11],
    &[0, 1, 2, 3, 4, 6, 7, 8, 9, 10, 11],
    &[0, 1, 2, 3, 4, 7, 8, 9, 10, 11],
    &[1, 2, 3, 5, 8, 10, 11],
    &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
    &[1, 3, 5, 8, 10],
    &[1, 4, 6, 8, 10],
    &[0, 1, 2, 4, 5, 6, 7, 8, 9, 10, 11],
    &[0, 4, 7, 8, 9, 11],
    &[0, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
    &[0, 1, 2, 3, 5, 7, 8, 9, 10, 11],
    &[0, 1, 2, 3, 4, 5, 7, 8, 10, 11],
    &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
    &[2, 3, 4, 5, 6, 7, 8, 11],
    &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
    &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
    &[2, 3, 6, 8, 10],
];

/// The thirty published subsets with the kinesics held-out pairs.
pub fn table5_manifest() -> SuiteManifest {
    let subsets = TABLE5_SUBSETS
        .iter()
        .enumerate()
        .map(|(id, labels)| SubsetSpec::from_indices(id as u32, labels).expect("published subsets are valid"))
        .collect();
    SuiteManifest {
        subsets,
        split: SplitSpec::kinesics_default(),
        seed: 0,
    }
}

/// Uniform size in `[min_size, max_size]`, then a uniform combination of that
/// size. Combinations covering a single kinesic function are redrawn at the
/// same size.
pub fn sample_random_subset<R: Rng + ?Sized>(
    rng: &mut R,
    experiment_id: u32,
    min_size: usize,
    max_size: usize,
) -> Result<SubsetSpec> {
    if min_size < 2 || min_size > max_size || max_size > NUM_ACTIVITIES {
        return Err(Error::Contract(format!(
            "subset size bounds must satisfy 2 <= {min_size} <= {max_size} <= {NUM_ACTIVITIES}"
        )));
    }
    let size = rng.gen_range(min_size..=max_size);
    loop {
        let mut picked = index::sample(rng, NUM_ACTIVITIES, size).into_vec();
        picked.sort_unstable();
        let spec = SubsetSpec::from_indices(experiment_id, &picked)?;
        if functions_present(&spec.labels).len() >= 2 {
            return Ok(spec);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfigs {
    pub backbone: StgcnConfig,
    pub head: HeadConfig,
}

/// Paired stage accuracies in percent. `None` marks a failed experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment_id: u32,
    pub labels: Vec<ActivityLabel>,
    pub stgcn_accuracy: Option<f64>,
    pub cnn_accuracy: Option<f64>,
}

impl ExperimentResult {
    pub fn is_sentinel(&self) -> bool {
        self.stgcn_accuracy.is_none() || self.cnn_accuracy.is_none()
    }
}

/// Runs both stages on one subset. Both stages share the same held-out list
/// and the seeds in `configs` are used as given.
pub fn run_experiment(
    spec: &SubsetSpec,
    container: &AnnotationContainer,
    split: &SplitSpec,
    graph: &SkeletonGraph,
    configs: &StageConfigs,
) -> Result<ExperimentResult> {
    let id = spec.experiment_id;
    let context = |e: Error| match e {
        Error::Io { .. } => e,
        other => Error::Contract(format!("experiment {id}: {other}")),
    };
    let mut data = container.filter_labels(&spec.labels);
    let present = data.labels();
    if let Some(missing) = spec.labels.iter().find(|l| !present.contains(l)) {
        return Err(Error::Contract(format!(
            "experiment {id}: no samples carry label {missing}"
        )));
    }
    data.resplit(split).map_err(context)?;

    let backbone = train(&configs.backbone, graph, &data).map_err(context)?;
    let stgcn_accuracy = backbone
        .model
        .evaluate(&data, &data.split.xsub_value)
        .map_err(context)?;

    let names = |list: &[String]| -> Result<(ndarray::Array2<f64>, Vec<ActivityLabel>)> {
        let x = backbone.model.features_for(&data, list)?;
        let labels = data.records(list)?.iter().map(|r| r.label).collect();
        Ok((x, labels))
    };
    let (train_x, train_labels) = names(&data.split.xsub_train).map_err(context)?;
    let (test_x, test_labels) = names(&data.split.xsub_value).map_err(context)?;
    let (functions, _) = function_targets(&spec.labels);
    let targets = |labels: &[ActivityLabel]| -> Vec<usize> {
        labels
            .iter()
            .map(|&l| {
                functions
                    .binary_search(&crate::taxonomy::kinesic_function_of(l))
                    .expect("subset functions cover every label")
            })
            .collect()
    };
    let (train_y, test_y) = (targets(&train_labels), targets(&test_labels));
    let head = head_train(
        &configs.head,
        functions.clone(),
        train_x.view(),
        &train_y,
        test_x.view(),
        &test_y,
    )
    .map_err(context)?;
    let cnn_accuracy = head_evaluate(&head.model, test_x.view(), &test_y).map_err(context)?;
    Ok(ExperimentResult {
        experiment_id: id,
        labels: spec.labels.clone(),
        stgcn_accuracy: Some(100.0 * stgcn_accuracy),
        cnn_accuracy: Some(100.0 * cnn_accuracy),
    })
}

/// Outcome of a suite: results ordered by experiment id and the failures
/// that produced sentinel rows.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub results: Vec<ExperimentResult>,
    pub failures: Vec<(u32, String)>,
}

impl SuiteOutcome {
    /// Accuracy pairs of the non-sentinel rows.
    pub fn accuracy_pairs(&self) -> Result<AccuracyPairs> {
        accuracy_pairs(&self.results)
    }
}

pub fn accuracy_pairs(results: &[ExperimentResult]) -> Result<AccuracyPairs> {
    AccuracyPairs::new(
        results
            .iter()
            .filter_map(|r| Some((r.stgcn_accuracy?, r.cnn_accuracy?)))
            .collect(),
    )
}

/// Runs every experiment with its derived seed. A failing experiment is
/// recorded and the suite continues.
pub fn run_suite(
    manifest: &SuiteManifest,
    container: &AnnotationContainer,
    graph: &SkeletonGraph,
    configs: &StageConfigs,
    mut progress: impl FnMut(&ExperimentResult),
) -> Result<SuiteOutcome> {
    manifest.validate()?;
    let mut specs: Vec<&SubsetSpec> = manifest.subsets.iter().collect();
    specs.sort_by_key(|s| s.experiment_id);
    let mut results = Vec::with_capacity(specs.len());
    let mut failures = Vec::new();
    for spec in specs {
        let seed = manifest.experiment_seed(spec.experiment_id);
        let mut seeded = configs.clone();
        seeded.backbone.seed = seed;
        seeded.head.seed = seed;
        let result = match run_experiment(spec, container, &manifest.split, graph, &seeded) {
            Ok(r) => r,
            Err(e) if e.is_environmental() => return Err(e),
            Err(e) => {
                failures.push((spec.experiment_id, e.to_string()));
                ExperimentResult {
                    experiment_id: spec.experiment_id,
                    labels: spec.labels.clone(),
                    stgcn_accuracy: None,
                    cnn_accuracy: None,
                }
            }
        };
        progress(&result);
        results.push(result);
    }
    Ok(SuiteOutcome { results, failures })
}

fn format_percent(value: Option<f64>) -> String {
    value.map_or_else(|| SENTINEL.to_string(), |v| v.to_string())
}

pub fn results_to_csv(results: &[ExperimentResult]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in results {
        let labels: Vec<String> = r.labels.iter().map(|l| l.index().to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.experiment_id,
            r.labels.len(),
            labels.join(" "),
            format_percent(r.stgcn_accuracy),
            format_percent(r.cnn_accuracy)
        );
    }
    out
}

pub fn results_from_csv(text: &str) -> Result<Vec<ExperimentResult>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(Error::Format(format!(
            "results header {:?} is not {RESULTS_HEADER:?}",
            header.join(",")
        )));
    }
    let mut results = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        let bad = |what: &str| Error::Format(format!("results row {}: bad {what}", row + 1));
        let experiment_id: u32 = record[0].parse().map_err(|_| bad("experiment"))?;
        let count: usize = record[1].parse().map_err(|_| bad("num_interactions"))?;
        let labels = record[2]
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| bad("labels"))
                    .and_then(ActivityLabel::new)
            })
            .collect::<Result<Vec<_>>>()?;
        if labels.len() != count {
            return Err(bad("num_interactions"));
        }
        let percent = |field: &str, what: &str| -> Result<Option<f64>> {
            if field == SENTINEL {
                return Ok(None);
            }
            let v: f64 = field.parse().map_err(|_| bad(what))?;
            if !(0.0..=100.0).contains(&v) {
                return Err(bad(what));
            }
            Ok(Some(v))
        };
        results.push(ExperimentResult {
            experiment_id,
            labels,
            stgcn_accuracy: percent(&record[3], "stgcn_acc")?,
            cnn_accuracy: percent(&record[4], "cnn_acc")?,
        });
    }
    Ok(results)
}
