use std::fs;
use std::path::{Path, PathBuf};

use duet_core::format::{
    deserialize_container, format_sample_name, parse_sample_name, parse_skeleton_csv, serialize_container,
    validate_dataset_tree, write_skeleton_csv, LocationCode, Rule, SampleName, SplitSpec,
};
use duet_core::synth::{generate_dataset, generate_sample, Degradation, PairIdentity, SynthConfig};
use duet_core::taxonomy::ActivityLabel;
use proptest::prelude::*;

fn small_tree(root: &Path, placeholders: bool) {
    let config = SynthConfig {
        labels: vec![ActivityLabel::new(2).unwrap(), ActivityLabel::new(9).unwrap()],
        repetitions: 2,
        locations: vec![LocationCode::CL],
        image_placeholders: placeholders,
        seed: 5,
        ..SynthConfig::default()
    };
    generate_dataset(&config, &SplitSpec::kinesics_default(), root).unwrap();
}

fn first_dir(dir: &Path) -> PathBuf {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    entries.into_iter().find(|p| p.is_dir()).unwrap()
}

fn first_window(root: &Path, modality: &str) -> PathBuf {
    first_dir(&first_dir(&root.join(modality)))
}

fn single_error(root: &Path) -> Rule {
    let report = validate_dataset_tree(root).unwrap();
    assert_eq!(report.errors.len(), 1, "{:#?}", report.errors);
    report.errors[0].rule
}

#[test]
fn generated_tree_conforms() {
    let dir = tempfile::tempdir().unwrap();
    small_tree(dir.path(), true);
    let report = validate_dataset_tree(dir.path()).unwrap();
    assert!(report.errors.is_empty(), "{:#?}", report.errors);
    assert!(report.warnings.is_empty(), "{:#?}", report.warnings);
    assert_eq!(report.counts.values().copied().collect::<Vec<_>>(), vec![4, 4, 4, 4]);
}

#[test]
fn joints_only_tree_conforms_with_warnings() {
    let dir = tempfile::tempdir().unwrap();
    small_tree(dir.path(), false);
    let report = validate_dataset_tree(dir.path()).unwrap();
    assert!(report.is_conforming());
    assert!(report.warnings.iter().all(|w| w.rule == Rule::MissingModality));
}

#[test]
fn each_mutation_yields_one_targeted_error() {
    type Mutation = fn(&Path);
    let mutations: [(Mutation, Rule); 7] = [
        (
            |root| {
                let group = first_dir(&root.join("joints"));
                fs::rename(&group, group.with_file_name("XX0101")).unwrap();
            },
            Rule::BadGroupName,
        ),
        (
            |root| {
                let window = first_window(root, "joints");
                fs::rename(&window, window.with_file_name("200_100")).unwrap();
            },
            Rule::BadWindowName,
        ),
        (
            |root| {
                let window = first_window(root, "joints");
                for e in fs::read_dir(&window).unwrap() {
                    fs::remove_file(e.unwrap().path()).unwrap();
                }
            },
            Rule::MissingCsv,
        ),
        (
            |root| {
                let window = first_window(root, "joints");
                for e in fs::read_dir(&window).unwrap() {
                    fs::write(e.unwrap().path(), "not,a,skeleton\n").unwrap();
                }
            },
            Rule::BadCsv,
        ),
        (
            |root| fs::remove_file(first_window(root, "rgb").join("45.jpeg")).unwrap(),
            Rule::MissingFrame,
        ),
        (
            |root| fs::write(root.join("depth").join("CL0101"), b"").unwrap(),
            Rule::NotADirectory,
        ),
        (
            |root| {
                let window = first_window(root, "ir");
                fs::write(window.with_file_name("notes.txt"), b"").unwrap();
            },
            Rule::NotADirectory,
        ),
    ];
    for (mutate, rule) in mutations {
        let dir = tempfile::tempdir().unwrap();
        small_tree(dir.path(), true);
        mutate(dir.path());
        assert_eq!(single_error(dir.path()), rule);
    }
}

#[test]
fn missing_root_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = validate_dataset_tree(&dir.path().join("absent")).unwrap_err();
    assert!(err.is_environmental());
}

#[test]
fn skeleton_csv_round_trips_bit_exact() {
    let seq = generate_sample(
        ActivityLabel::new(10).unwrap(),
        &PairIdentity::sample(3, LocationCode::CM, 4),
        27.0,
        Degradation {
            noise_std: 15.0,
            occluded: true,
        },
        99,
    );
    let text = write_skeleton_csv(&seq).unwrap();
    let parsed = parse_skeleton_csv(&text).unwrap();
    assert!(parsed.warnings.is_empty());
    assert_eq!(parsed.sequence, seq);
    assert_eq!(write_skeleton_csv(&parsed.sequence).unwrap(), text);
    assert_eq!(text.lines().count(), 91);
    assert!(text.lines().all(|l| l.split(',').count() == 193));
}

#[test]
fn container_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        labels: vec![ActivityLabel::new(0).unwrap(), ActivityLabel::new(7).unwrap()],
        repetitions: 1,
        seed: 8,
        ..SynthConfig::default()
    };
    let c = generate_dataset(&config, &SplitSpec::benchmark_cross_location(), dir.path()).unwrap();
    let doc = serialize_container(&c);
    assert_eq!(deserialize_container(&doc).unwrap(), c);
    assert_eq!(c.split.xsub_value.len(), 2);
}

fn arb_name() -> impl Strategy<Value = SampleName> {
    (0usize..3, 1u8..=12, 1u8..=10, 0u64..100_000_000, 1u64..10_000_000)
        .prop_map(|(loc, ii, ss, t, d)| SampleName::new(LocationCode::ALL[loc], ii, ss, t, t + d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sample_names_round_trip(name in arb_name()) {
        let text = format_sample_name(&name);
        prop_assert_eq!(parse_sample_name(&text).unwrap(), name);
        prop_assert_eq!(name.activity_label().index() + 1, name.activity_index as usize);
    }
}
