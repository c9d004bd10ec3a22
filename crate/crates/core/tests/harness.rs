use duet_core::format::{AnnotationContainer, LocationCode, SplitSpec};
use duet_core::graph::build_graph;
use duet_core::harness::{
    results_from_csv, results_to_csv, run_experiment, run_suite, sample_random_subset, table5_manifest,
    ExperimentResult, StageConfigs, SubsetSpec, SuiteManifest, RESULTS_HEADER,
};
use duet_core::head::HeadConfig;
use duet_core::stgcn::StgcnConfig;
use duet_core::synth::{generate_container, SynthConfig};
use duet_core::taxonomy::{functions_present, ActivityLabel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ids(spec: &SubsetSpec) -> Vec<usize> {
    spec.labels().iter().map(|l| l.index()).collect()
}

#[test]
fn published_manifest() {
    let m = table5_manifest();
    m.validate().unwrap();
    assert_eq!(m.subsets.len(), 30);
    assert_eq!(ids(&m.subsets[0]), vec![0, 1, 3, 4, 5, 8, 9, 10]);
    assert_eq!(ids(&m.subsets[19]), vec![1, 4, 6, 8, 10]);
    assert_eq!(ids(&m.subsets[29]), vec![2, 3, 6, 8, 10]);
    for id in [25, 27, 28] {
        assert_eq!(ids(&m.subsets[id]), (0..12).collect::<Vec<_>>());
    }
    let sizes: Vec<usize> = m.subsets.iter().map(|s| s.labels().len()).collect();
    assert_eq!(sizes.iter().min(), Some(&5));
    assert_eq!(sizes.iter().max(), Some(&12));
    assert_eq!(m.split, SplitSpec::kinesics_default());
}

#[test]
fn subset_invariants_are_enforced() {
    assert!(SubsetSpec::from_indices(0, &[3]).is_err());
    assert!(SubsetSpec::from_indices(0, &[3, 3]).is_err());
    assert!(SubsetSpec::from_indices(0, &[4, 3]).is_err());
    assert!(SubsetSpec::from_indices(0, &[3, 12]).is_err());
    let doc = serde_json::to_string(&SubsetSpec::from_indices(4, &[1, 9]).unwrap()).unwrap();
    assert_eq!(doc, r#"{"experiment_id":4,"labels":[1,9]}"#);
    assert!(serde_json::from_str::<SubsetSpec>(r#"{"experiment_id":4,"labels":[9,1]}"#).is_err());
    let dup = SuiteManifest {
        subsets: vec![SubsetSpec::from_indices(1, &[0, 5]).unwrap(); 2],
        split: SplitSpec::kinesics_default(),
        seed: 0,
    };
    assert!(dup.validate().is_err());
}

#[test]
fn random_subsets_cover_labels_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 10_000;
    let mut counts = [0usize; 12];
    for i in 0..draws {
        let s = sample_random_subset(&mut rng, i, 5, 12).unwrap();
        assert!((5..=12).contains(&s.labels().len()));
        for l in s.labels() {
            counts[l.index()] += 1;
        }
    }
    // Every function holds at most three labels, so no draw of five or more
    // is rejected and each label appears with probability E[size] / 12.
    let p = 8.5 / 12.0;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for (label, &c) in counts.iter().enumerate() {
        assert!((c as f64 - mean).abs() < 3.0 * sigma, "label {label}: {c} vs {mean}");
    }
}

#[test]
fn small_subsets_reject_single_function_draws() {
    // Exact inclusion probability under rejection, by enumerating every
    // two- and three-label subset.
    let mut weight = [0.0f64; 12];
    let mut total = 0.0f64;
    for size in 2..=3usize {
        let subsets: Vec<Vec<usize>> = (0u32..1 << 12)
            .filter(|m| m.count_ones() as usize == size)
            .map(|m| (0..12).filter(|i| m >> i & 1 == 1).collect())
            .collect();
        let valid: Vec<&Vec<usize>> = subsets
            .iter()
            .filter(|s| {
                let labels: Vec<ActivityLabel> = s.iter().map(|&l| ActivityLabel::new(l).unwrap()).collect();
                functions_present(&labels).len() >= 2
            })
            .collect();
        // Size is uniform first, then the combination is uniform among
        // accepted ones.
        for s in &valid {
            for &l in s.iter() {
                weight[l] += 0.5 / valid.len() as f64;
            }
        }
        total += 0.5;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws = 10_000;
    let mut counts = [0usize; 12];
    for i in 0..draws {
        let s = sample_random_subset(&mut rng, i, 2, 3).unwrap();
        assert!(functions_present(s.labels()).len() >= 2);
        for l in s.labels() {
            counts[l.index()] += 1;
        }
    }
    assert!((total - 1.0).abs() < 1e-12);
    for l in 0..12 {
        let p = weight[l];
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((counts[l] as f64 - draws as f64 * p).abs() < 3.0 * sigma, "label {l}");
    }
}

#[test]
fn results_csv_round_trip_with_sentinels() {
    let results = vec![
        ExperimentResult {
            experiment_id: 0,
            labels: SubsetSpec::from_indices(0, &[0, 1, 3]).unwrap().labels().to_vec(),
            stgcn_accuracy: Some(62.5),
            cnn_accuracy: Some(100.0 / 3.0),
        },
        ExperimentResult {
            experiment_id: 7,
            labels: SubsetSpec::from_indices(7, &[2, 11]).unwrap().labels().to_vec(),
            stgcn_accuracy: None,
            cnn_accuracy: None,
        },
    ];
    let text = results_to_csv(&results);
    assert!(text.starts_with(RESULTS_HEADER));
    assert!(text.contains("7,2,2 11,NA,NA"));
    assert_eq!(results_from_csv(&text).unwrap(), results);
    assert!(results_from_csv("experiment,labels\n").is_err());
    assert!(results_from_csv(&format!("{RESULTS_HEADER}\n0,2,1 2,101,5\n")).is_err());
    assert!(results_from_csv(&format!("{RESULTS_HEADER}\n0,3,1 2,50,5\n")).is_err());
}

fn tiny_data() -> AnnotationContainer {
    let config = SynthConfig {
        labels: [0, 5, 9].iter().map(|&l| ActivityLabel::new(l).unwrap()).collect(),
        pairs_per_location: 10,
        repetitions: 1,
        locations: vec![LocationCode::CC, LocationCode::CM],
        noise_std: 0.0,
        occlusion_rate: 0.0,
        seed: 21,
        ..SynthConfig::default()
    };
    generate_container(&config, &SplitSpec::kinesics_default()).unwrap()
}

fn tiny_configs() -> StageConfigs {
    StageConfigs {
        backbone: StgcnConfig {
            epochs: 2,
            seed: 3,
            ..StgcnConfig::tiny()
        },
        head: HeadConfig {
            conv_channels: [4, 4],
            dense_width: 16,
            epochs: 3,
            seed: 3,
            ..HeadConfig::default()
        },
    }
}

#[test]
fn experiment_is_deterministic_and_in_range() {
    let data = tiny_data();
    let spec = SubsetSpec::from_indices(3, &[0, 9]).unwrap();
    let graph = build_graph();
    let split = SplitSpec::kinesics_default();
    let a = run_experiment(&spec, &data, &split, &graph, &tiny_configs()).unwrap();
    let b = run_experiment(&spec, &data, &split, &graph, &tiny_configs()).unwrap();
    assert_eq!(a, b);
    for v in [a.stgcn_accuracy.unwrap(), a.cnn_accuracy.unwrap()] {
        assert!((0.0..=100.0).contains(&v));
    }
    assert_eq!(a.experiment_id, 3);
}

#[test]
fn suite_is_keyed_by_id_and_survives_failures() {
    let data = tiny_data();
    let graph = build_graph();
    let subsets = vec![
        SubsetSpec::from_indices(2, &[0, 5]).unwrap(),
        SubsetSpec::from_indices(0, &[5, 9]).unwrap(),
        SubsetSpec::from_indices(1, &[0, 11]).unwrap(),
        SubsetSpec::from_indices(5, &[0, 5, 9]).unwrap(),
    ];
    let manifest = SuiteManifest {
        subsets: subsets.clone(),
        split: SplitSpec::kinesics_default(),
        seed: 77,
    };
    let mut seen = Vec::new();
    let out = run_suite(&manifest, &data, &graph, &tiny_configs(), |r| {
        seen.push(r.experiment_id)
    })
    .unwrap();
    assert_eq!(seen, vec![0, 1, 2, 5]);
    assert_eq!(out.results.len(), 4);
    assert!(out.results[1].is_sentinel());
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.failures[0].0, 1);
    assert_eq!(out.accuracy_pairs().unwrap().n(), 3);

    let reordered = SuiteManifest {
        subsets: vec![
            subsets[3].clone(),
            subsets[1].clone(),
            subsets[2].clone(),
            subsets[0].clone(),
        ],
        ..manifest.clone()
    };
    let again = run_suite(&reordered, &data, &graph, &tiny_configs(), |_| {}).unwrap();
    assert_eq!(again.results, out.results);

    let csv = results_to_csv(&out.results);
    assert_eq!(results_from_csv(&csv).unwrap(), out.results);
}

proptest! {
    #[test]
    fn sampled_subsets_respect_bounds(seed in any::<u64>(), lo in 2usize..=12, span in 0usize..=10) {
        let hi = (lo + span).min(12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sample_random_subset(&mut rng, 0, lo, hi).unwrap();
        prop_assert!((lo..=hi).contains(&s.labels().len()));
        prop_assert!(s.labels().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(functions_present(s.labels()).len() >= 2);
    }
}
