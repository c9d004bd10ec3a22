use duet_core::format::{AnnotationContainer, LocationCode, SplitSpec};
use duet_core::synth::{generate_container, nearest_centroid_baseline, rotate_vertical, SynthConfig};
use duet_core::taxonomy::ActivityLabel;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn labels(ids: &[usize]) -> Vec<ActivityLabel> {
    ids.iter().map(|&l| ActivityLabel::new(l).unwrap()).collect()
}

fn clean(ids: &[usize], reps: u32, seed: u64) -> SynthConfig {
    SynthConfig {
        labels: labels(ids),
        pairs_per_location: 10,
        repetitions: reps,
        noise_std: 0.0,
        occlusion_rate: 0.0,
        seed,
        ..SynthConfig::default()
    }
}

fn baseline(c: &AnnotationContainer) -> f64 {
    nearest_centroid_baseline(c, &c.split.xsub_train, &c.split.xsub_value).unwrap()
}

#[test]
fn full_protocol_arithmetic() {
    let full = SynthConfig {
        pairs_per_location: 10,
        ..SynthConfig::default()
    };
    assert_eq!(full.sample_count(), 14_400);
    assert_eq!(SynthConfig::default().sample_count(), 1_440);
}

#[test]
fn kinesics_split_holds_out_two_pairs() {
    let c = generate_container(&clean(&[0, 3, 5, 6], 4, 7), &SplitSpec::kinesics_default()).unwrap();
    assert_eq!(c.annotation.len(), 480);
    assert_eq!(c.split.xsub_value.len(), 32);
    assert_eq!(c.split.xsub_train.len(), 448);
    assert!(c
        .split
        .xsub_value
        .iter()
        .all(|n| (n.starts_with("CC") && n[4..6] == *"01") || (n.starts_with("CM") && n[4..6] == *"10")));
}

#[test]
fn clean_data_is_separable_by_class_means() {
    let c = generate_container(&clean(&[0, 3, 5, 6], 4, 7), &SplitSpec::kinesics_default()).unwrap();
    assert_eq!(baseline(&c), 1.0);
}

#[test]
fn shuffled_labels_fall_to_chance() {
    let mut c = generate_container(&clean(&[0, 3, 5, 6], 4, 7), &SplitSpec::kinesics_default()).unwrap();
    let mut shuffled: Vec<ActivityLabel> = c.annotation.iter().map(|r| r.label).collect();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    for (r, l) in c.annotation.iter_mut().zip(shuffled) {
        r.label = l;
    }
    let n = c.split.xsub_value.len() as f64;
    let p = 0.25;
    let band = 2.576 * (p * (1.0 - p) / n).sqrt();
    let acc = baseline(&c);
    assert!((acc - p).abs() <= band, "accuracy {acc} outside {p} ± {band}");
}

#[test]
fn noise_degrades_the_baseline() {
    let noisy = SynthConfig {
        noise_std: 2500.0,
        ..clean(&[0, 3, 5, 6], 4, 7)
    };
    let c = generate_container(&noisy, &SplitSpec::kinesics_default()).unwrap();
    assert!(baseline(&c) < 0.75);
}

fn rotated(c: &AnnotationContainer, degrees: f64) -> AnnotationContainer {
    let mut out = c.clone();
    for r in &mut out.annotation {
        r.keypoint = rotate_vertical(&r.keypoint, degrees);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    // Rotating every clip by the same angle about the vertical axis is an
    // isometry of pelvis-centered trajectories, so class means move with it.
    #[test]
    fn baseline_is_invariant_to_a_common_rotation(step in 1u32..40) {
        let config = SynthConfig {
            noise_std: 400.0,
            locations: vec![LocationCode::CC, LocationCode::CM],
            ..clean(&[1, 2, 8, 11], 2, 3)
        };
        let c = generate_container(&config, &SplitSpec::kinesics_default()).unwrap();
        prop_assert_eq!(baseline(&c), baseline(&rotated(&c, step as f64 * config.rotation_step)));
    }
}
