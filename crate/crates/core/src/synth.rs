//! Procedural dyadic skeleton clips that follow the recording protocol:
//! fixed-length clips of two facing subjects, the dyad turning by a fixed
//! step between repetitions, occasional occlusion of the far subject.
//!
//! Motion is parametric and only loosely human. Activities that share a
//! kinesic function share a motif (which subject moves, which limbs), so a
//! function classifier has structure to find.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, Array4, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::format::joints::{self as j, FULL_JOINTS};
use crate::format::tree::{write_image_placeholders, write_joints_sample};
use crate::format::{
    build_annotation_container, reduce_joints, AnnotationContainer, JointLayout, LocationCode, Modality, SampleName,
    SkeletonSequence, SplitSpec, FRAMES_PER_SAMPLE, SUBJECTS,
};
use crate::taxonomy::ActivityLabel;

/// Clip length in milliseconds.
pub const CLIP_MS: u64 = 3000;
/// Height of the camera above the floor, mm.
const CAMERA_HEIGHT: f64 = 1000.0;
const QUANTUM: f64 = 0.1;

/// Skeleton topology, segment lengths and rest pose of the full layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    /// `(parent, child)` pairs, one per non-root joint.
    pub bones: Vec<(usize, usize)>,
    /// Length of the bone ending at each joint; zero for the root.
    pub segment_lengths: [f64; FULL_JOINTS],
    /// Rest pose in a body frame: x to the subject's right, y up, z forward,
    /// origin on the floor under the pelvis.
    pub base_pose: [[f64; 3]; FULL_JOINTS],
}

#[rustfmt::skip]
const BASE_POSE: [[f64; 3]; FULL_JOINTS] = [
    [0.0, 1000.0, 0.0],     // pelvis
    [0.0, 1200.0, 0.0],     // spine naval
    [0.0, 1400.0, 0.0],     // spine chest
    [0.0, 1550.0, 0.0],     // neck
    [-40.0, 1500.0, 0.0],   // clavicle left
    [-180.0, 1450.0, 0.0],  // shoulder left
    [-190.0, 1170.0, 0.0],  // elbow left
    [-195.0, 920.0, 0.0],   // wrist left
    [-197.0, 840.0, 0.0],   // hand left
    [-199.0, 760.0, 0.0],   // handtip left
    [-170.0, 870.0, 40.0],  // thumb left
    [40.0, 1500.0, 0.0],    // clavicle right
    [180.0, 1450.0, 0.0],   // shoulder right
    [190.0, 1170.0, 0.0],   // elbow right
    [195.0, 920.0, 0.0],    // wrist right
    [197.0, 840.0, 0.0],    // hand right
    [199.0, 760.0, 0.0],    // handtip right
    [170.0, 870.0, 40.0],   // thumb right
    [-100.0, 950.0, 0.0],   // hip left
    [-100.0, 520.0, 0.0],   // knee left
    [-100.0, 90.0, 0.0],    // ankle left
    [-100.0, 20.0, 130.0],  // foot left
    [100.0, 950.0, 0.0],    // hip right
    [100.0, 520.0, 0.0],    // knee right
    [100.0, 90.0, 0.0],     // ankle right
    [100.0, 20.0, 130.0],   // foot right
    [0.0, 1660.0, 0.0],     // head
    [0.0, 1640.0, 95.0],    // nose
    [-35.0, 1675.0, 80.0],  // eye left
    [-75.0, 1655.0, 0.0],   // ear left
    [35.0, 1675.0, 80.0],   // eye right
    [75.0, 1655.0, 0.0],    // ear right
];

impl Rig {
    pub fn standard() -> Self {
        let bones = j::full_bones();
        let mut segment_lengths = [0.0; FULL_JOINTS];
        for &(p, c) in &bones {
            segment_lengths[c] = distance(BASE_POSE[p], BASE_POSE[c]);
        }
        Rig {
            bones,
            segment_lengths,
            base_pose: BASE_POSE,
        }
    }

    /// Checks that the bones form a tree rooted at the pelvis with positive
    /// segment lengths.
    pub fn validate(&self) -> Result<()> {
        let mut parent = [None; FULL_JOINTS];
        for &(p, c) in &self.bones {
            if c == j::PELVIS || parent[c].is_some() {
                return Err(Error::Contract(format!("joint {c} has more than one parent")));
            }
            parent[c] = Some(p);
        }
        for joint in 1..FULL_JOINTS {
            let mut cur = joint;
            for _ in 0..FULL_JOINTS {
                match parent[cur] {
                    Some(p) => cur = p,
                    None => break,
                }
            }
            if cur != j::PELVIS {
                return Err(Error::Contract(format!("joint {joint} is not connected to the pelvis")));
            }
            if !(self.segment_lengths[joint] > 0.0) {
                return Err(Error::Contract(format!(
                    "joint {joint} has a non-positive segment length"
                )));
            }
        }
        Ok(())
    }

    fn length(&self, joint: usize, scale: f64) -> f64 {
        self.segment_lengths[joint] * scale
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Which side of the dyad a pose belongs to. The initiator is subject 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

/// Arm direction angles in degrees. Elevation is measured from hanging
/// straight down; azimuth from straight ahead, positive away from the body
/// midline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmAngles {
    pub elevation: f64,
    pub azimuth: f64,
    pub fore_elevation: f64,
    pub fore_azimuth: f64,
}

const REST_ARM: ArmAngles = ArmAngles {
    elevation: 8.0,
    azimuth: 10.0,
    fore_elevation: 15.0,
    fore_azimuth: 10.0,
};

impl ArmAngles {
    const fn new(elevation: f64, azimuth: f64, fore_elevation: f64, fore_azimuth: f64) -> Self {
        ArmAngles {
            elevation,
            azimuth,
            fore_elevation,
            fore_azimuth,
        }
    }

    /// Moves `weight` of the way from rest towards `self`.
    fn eased_from_rest(self, weight: f64) -> Self {
        let mix = |rest: f64, target: f64| rest + weight * (target - rest);
        ArmAngles {
            elevation: mix(REST_ARM.elevation, self.elevation),
            azimuth: mix(REST_ARM.azimuth, self.azimuth),
            fore_elevation: mix(REST_ARM.fore_elevation, self.fore_elevation),
            fore_azimuth: mix(REST_ARM.fore_azimuth, self.fore_azimuth),
        }
    }
}

/// Pose parameters of one subject at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPose {
    pub right: ArmAngles,
    pub left: ArmAngles,
    /// Forward head tilt, degrees.
    pub head_pitch: f64,
    /// Head turn towards the subject's right, degrees.
    pub head_yaw: f64,
    /// Forward lean of the upper body about the pelvis, degrees.
    pub torso_pitch: f64,
    /// Displacement towards the partner, mm.
    pub advance: f64,
}

impl Default for BodyPose {
    fn default() -> Self {
        BodyPose {
            right: REST_ARM,
            left: REST_ARM,
            head_pitch: 0.0,
            head_yaw: 0.0,
            torso_pitch: 0.0,
            advance: 0.0,
        }
    }
}

fn smoothstep(lo: f64, hi: f64, x: f64) -> f64 {
    let u = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Rise, hold, release over a three-second clip.
fn envelope(t: f64) -> f64 {
    smoothstep(0.2, 0.7, t) * (1.0 - smoothstep(2.4, 2.9, t))
}

fn wave(freq: f64, t: f64) -> f64 {
    (2.0 * PI * freq * t).sin()
}

fn nod(degrees: f64, freq: f64, t: f64) -> f64 {
    degrees * 0.5 * (1.0 - (2.0 * PI * freq * t).cos())
}

/// Parametric motion of one activity for both subjects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotionTemplate {
    pub label: ActivityLabel,
}

impl MotionTemplate {
    pub fn for_label(label: ActivityLabel) -> Self {
        MotionTemplate { label }
    }

    /// Pose at `t` seconds into the clip. `amplitude` scales every excursion
    /// from rest; `gap` is the initial pelvis distance (used by approaches).
    pub fn pose(&self, role: Role, t: f64, amplitude: f64, gap: f64) -> BodyPose {
        let e = envelope(t) * amplitude;
        let mut p = BodyPose::default();
        let initiator = role == Role::Initiator;
        match self.label.index() {
            // Emblems: initiator's right arm carries the sign, responder
            // acknowledges with a slow nod.
            0 => {
                if initiator {
                    p.right = ArmAngles::new(70.0, 45.0, 120.0 + 30.0 * wave(1.6, t), -10.0).eased_from_rest(e);
                } else {
                    p.head_pitch = e * nod(12.0, 1.0, t);
                }
            }
            1 => {
                if initiator {
                    p.right = ArmAngles::new(30.0, 0.0, 125.0 + 8.0 * wave(0.8, t), 0.0).eased_from_rest(e);
                } else {
                    p.head_pitch = e * nod(12.0, 1.0, t);
                }
            }
            2 => {
                if initiator {
                    p.right = ArmAngles::new(130.0, 75.0, 165.0, 75.0 + 35.0 * wave(2.0, t)).eased_from_rest(e);
                } else {
                    p.head_pitch = e * nod(12.0, 1.0, t);
                }
            }
            // Illustrators: initiator presents with both arms, responder
            // turns to look.
            3 => {
                if initiator {
                    p.right = ArmAngles::new(88.0, 10.0, 92.0, 10.0).eased_from_rest(e);
                    p.left = ArmAngles::new(35.0, 0.0, 70.0, 0.0).eased_from_rest(e);
                    p.head_yaw = 15.0 * e;
                } else {
                    p.head_yaw = -25.0 * e;
                    p.head_pitch = 8.0 * e;
                }
            }
            4 => {
                if initiator {
                    let spread = 15.0 + 20.0 * wave(0.8, t);
                    p.right = ArmAngles::new(70.0, spread, 85.0, spread).eased_from_rest(e);
                    p.left = p.right;
                    p.head_pitch = 10.0 * e;
                } else {
                    p.head_pitch = 15.0 * e;
                    p.head_yaw = -10.0 * e;
                }
            }
            // Regulators: both subjects nod quickly.
            5 => {
                p.head_pitch = e * nod(25.0, 1.5, t);
                p.torso_pitch = e * nod(6.0, 1.5, t);
            }
            6 => {
                if initiator {
                    let phase = 2.0 * PI * t;
                    p.right = ArmAngles::new(110.0, 30.0, 140.0 + 30.0 * phase.cos(), 30.0 + 30.0 * phase.sin())
                        .eased_from_rest(e);
                }
                p.head_pitch = e * nod(12.0, 1.5, t);
            }
            7 => {
                if initiator {
                    p.right = ArmAngles::new(65.0 + 5.0 * wave(1.0, t), 10.0, 160.0, 0.0).eased_from_rest(e);
                    p.left = p.right;
                }
                p.head_pitch = e * nod(12.0, 1.5, t);
            }
            // Adaptor: self-touch by the initiator only.
            8 => {
                if initiator {
                    p.right = ArmAngles::new(150.0, 50.0, 110.0, -80.0 + 10.0 * wave(3.0, t)).eased_from_rest(e);
                    p.head_pitch = 10.0 * e;
                    p.head_yaw = -10.0 * e;
                }
            }
            // Affect displays: both bodies move together.
            9 => {
                p.torso_pitch = e * (-8.0 + 8.0 * wave(2.5, t));
                p.head_pitch = -15.0 * e;
                p.right = ArmAngles::new(25.0, -10.0, 80.0, -70.0).eased_from_rest(e);
            }
            10 => {
                let crossed = ArmAngles::new(25.0, 0.0, 90.0, -85.0).eased_from_rest(e);
                p.right = crossed;
                p.left = crossed;
                p.torso_pitch = -6.0 * e;
            }
            11 => {
                let reach = smoothstep(0.3, 2.2, t);
                p.advance = reach * (gap - 350.0).max(0.0) / 2.0;
                let embrace = ArmAngles::new(85.0, 20.0, 90.0, -60.0).eased_from_rest(reach);
                p.right = embrace;
                p.left = embrace;
                p.torso_pitch = 10.0 * reach;
            }
            _ => unreachable!("activity labels are validated"),
        }
        p
    }
}

/// Stable per-pair traits: body proportions, movement style and placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairIdentity {
    pub body_scale: [f64; SUBJECTS],
    pub amplitude: [f64; SUBJECTS],
    pub tempo: f64,
    /// Initial pelvis-to-pelvis distance, mm.
    pub gap: f64,
    /// Dyad center on the floor in camera x and depth, mm.
    pub center: [f64; 2],
    /// +1 or -1: which way the dyad turns between repetitions.
    pub turn_direction: f64,
}

impl PairIdentity {
    pub fn neutral() -> Self {
        PairIdentity {
            body_scale: [1.0, 1.0],
            amplitude: [1.0, 1.0],
            tempo: 1.0,
            gap: 1200.0,
            center: [0.0, 2500.0],
            turn_direction: 1.0,
        }
    }

    pub fn sample(seed: u64, location: LocationCode, pair_index: u8) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("pair/{location}/{pair_index}")));
        PairIdentity {
            body_scale: [rng.gen_range(0.9..1.1), rng.gen_range(0.9..1.1)],
            amplitude: [rng.gen_range(0.85..1.15), rng.gen_range(0.85..1.15)],
            tempo: rng.gen_range(0.9..1.1),
            gap: rng.gen_range(1100.0..1300.0),
            center: [rng.gen_range(-300.0..300.0), rng.gen_range(2200.0..2800.0)],
            turn_direction: if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
        }
    }
}

/// Per-clip degradations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Degradation {
    /// Standard deviation of independent Gaussian jitter per coordinate, mm.
    pub noise_std: f64,
    /// Pull the far subject's hidden joints towards the near subject's depth.
    pub occluded: bool,
}

impl Degradation {
    pub const NONE: Degradation = Degradation {
        noise_std: 0.0,
        occluded: false,
    };
}

/// Seeds a sub-stream from a parent seed and a text tag.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

type Vec3 = [f64; 3];

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scaled(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn normalized(a: Vec3) -> Vec3 {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    if n > 1e-12 {
        scaled(a, 1.0 / n)
    } else {
        [0.0, -1.0, 0.0]
    }
}

/// Rotation about the x axis; positive tips +y towards +z.
fn pitch(v: Vec3, degrees: f64) -> Vec3 {
    let (s, c) = degrees.to_radians().sin_cos();
    [v[0], v[1] * c - v[2] * s, v[1] * s + v[2] * c]
}

/// Rotation about the y axis; positive turns +z towards +x.
fn yaw(v: Vec3, degrees: f64) -> Vec3 {
    let (s, c) = degrees.to_radians().sin_cos();
    [v[0] * c + v[2] * s, v[1], -v[0] * s + v[2] * c]
}

fn arm_direction(elevation: f64, azimuth: f64, side: f64) -> Vec3 {
    let (se, ce) = elevation.to_radians().sin_cos();
    let (sa, ca) = azimuth.to_radians().sin_cos();
    [side * se * sa, -ce, se * ca]
}

const UPPER_BODY: [usize; 15] = [
    j::SPINE_NAVAL,
    j::SPINE_CHEST,
    j::NECK,
    j::CLAVICLE_LEFT,
    j::SHOULDER_LEFT,
    j::CLAVICLE_RIGHT,
    j::SHOULDER_RIGHT,
    j::HEAD,
    j::NOSE,
    j::EYE_LEFT,
    j::EAR_LEFT,
    j::EYE_RIGHT,
    j::EAR_RIGHT,
    // Arms are re-attached to the shoulders below.
    j::ELBOW_LEFT,
    j::ELBOW_RIGHT,
];

const FACE: [usize; 6] = [j::HEAD, j::NOSE, j::EYE_LEFT, j::EAR_LEFT, j::EYE_RIGHT, j::EAR_RIGHT];

/// Body-frame joint positions for one pose.
fn pose_joints(rig: &Rig, pose: &BodyPose, scale: f64) -> [Vec3; FULL_JOINTS] {
    let mut out = [[0.0; 3]; FULL_JOINTS];
    for (o, b) in out.iter_mut().zip(&rig.base_pose) {
        *o = scaled(*b, scale);
    }
    let pelvis = out[j::PELVIS];
    for &k in &UPPER_BODY {
        out[k] = add(pelvis, pitch(sub(out[k], pelvis), pose.torso_pitch));
    }
    let neck = out[j::NECK];
    for &k in &FACE {
        let local = yaw(pitch(sub(out[k], neck), pose.head_pitch), pose.head_yaw);
        out[k] = add(neck, local);
    }
    let arms = [
        (
            -1.0,
            &pose.left,
            [
                j::SHOULDER_LEFT,
                j::ELBOW_LEFT,
                j::WRIST_LEFT,
                j::HAND_LEFT,
                j::HANDTIP_LEFT,
                j::THUMB_LEFT,
            ],
        ),
        (
            1.0,
            &pose.right,
            [
                j::SHOULDER_RIGHT,
                j::ELBOW_RIGHT,
                j::WRIST_RIGHT,
                j::HAND_RIGHT,
                j::HANDTIP_RIGHT,
                j::THUMB_RIGHT,
            ],
        ),
    ];
    for (side, angles, [shoulder, elbow, wrist, hand, tip, thumb]) in arms {
        let upper = arm_direction(angles.elevation, angles.azimuth, side);
        let fore = arm_direction(angles.fore_elevation, angles.fore_azimuth, side);
        out[elbow] = add(out[shoulder], scaled(upper, rig.length(elbow, scale)));
        out[wrist] = add(out[elbow], scaled(fore, rig.length(wrist, scale)));
        out[hand] = add(out[wrist], scaled(fore, rig.length(hand, scale)));
        out[tip] = add(out[hand], scaled(fore, rig.length(tip, scale)));
        let thumb_dir = normalized(add(fore, [-0.5 * side, 0.0, 0.5]));
        out[thumb] = add(out[wrist], scaled(thumb_dir, rig.length(thumb, scale)));
    }
    for v in out.iter_mut() {
        v[2] += pose.advance;
    }
    out
}

fn frame_time(frame: usize) -> f64 {
    frame as f64 * (CLIP_MS as f64 / 1000.0) / (FRAMES_PER_SAMPLE - 1) as f64
}

fn quantize(v: f64) -> f64 {
    (v / QUANTUM).round() * QUANTUM
}

/// One clip in the full 32-joint layout, camera frame (x right, y down,
/// z away from the sensor), millimetres. Timestamps start at zero.
pub fn generate_sample(
    label: ActivityLabel,
    pair: &PairIdentity,
    orientation_deg: f64,
    degradation: Degradation,
    seed: u64,
) -> SkeletonSequence {
    let keypoints = render(label, pair, orientation_deg, degradation, seed);
    let timestamps = (0..FRAMES_PER_SAMPLE)
        .map(|i| (frame_time(i) * 1000.0).round() as i64)
        .collect();
    SkeletonSequence::new(timestamps, keypoints, JointLayout::Full32).expect("generated shapes are valid")
}

fn render(
    label: ActivityLabel,
    pair: &PairIdentity,
    orientation_deg: f64,
    degradation: Degradation,
    seed: u64,
) -> Array4<f64> {
    let rig = Rig::standard();
    let template = MotionTemplate::for_label(label);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tempo = pair.tempo * rng.gen_range(0.95..1.05);
    let offset = rng.gen_range(-0.1..0.1);
    let amp_jitter = rng.gen_range(0.95..1.05);
    let mut k = Array4::<f64>::zeros((SUBJECTS, FRAMES_PER_SAMPLE, FULL_JOINTS, 3));
    for (m, role) in [Role::Initiator, Role::Responder].into_iter().enumerate() {
        // Subjects stand on the dyad's x axis facing each other.
        let (side, facing) = if m == 0 { (-0.5, 90.0) } else { (0.5, -90.0) };
        for f in 0..FRAMES_PER_SAMPLE {
            let t = (frame_time(f) * tempo + offset).max(0.0);
            let pose = template.pose(role, t, pair.amplitude[m] * amp_jitter, pair.gap);
            let joints = pose_joints(&rig, &pose, pair.body_scale[m]);
            for (v, p) in joints.iter().enumerate() {
                let dyad = add(yaw(*p, facing), [side * pair.gap, 0.0, 0.0]);
                let world = yaw(dyad, orientation_deg);
                k[[m, f, v, 0]] = pair.center[0] + world[0];
                k[[m, f, v, 1]] = CAMERA_HEIGHT - world[1];
                k[[m, f, v, 2]] = pair.center[1] + world[2];
            }
        }
    }
    if degradation.occluded {
        occlude(&mut k);
    }
    if degradation.noise_std > 0.0 {
        let normal = Normal::new(0.0, degradation.noise_std).expect("finite std");
        k.mapv_inplace(|v| v + normal.sample(&mut rng));
    }
    k.mapv_inplace(quantize);
    k
}

/// Pulls joints of the farther subject that sit behind the nearer subject's
/// silhouette halfway towards the nearer subject's depth.
fn occlude(k: &mut Array4<f64>) {
    let depth = |m: usize| k.slice(ndarray::s![m, .., j::PELVIS, 2]).mean().unwrap_or(0.0);
    let (near, far) = if depth(0) <= depth(1) { (0, 1) } else { (1, 0) };
    for f in 0..FRAMES_PER_SAMPLE {
        let near_x = k[[near, f, j::PELVIS, 0]];
        let plane = k[[near, f, j::PELVIS, 2]] + 150.0;
        for v in 0..FULL_JOINTS {
            if (k[[far, f, v, 0]] - near_x).abs() < 350.0 && k[[far, f, v, 2]] > plane {
                k[[far, f, v, 2]] += 0.5 * (plane - k[[far, f, v, 2]]);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub labels: Vec<ActivityLabel>,
    /// Pairs `1..=pairs_per_location` are recorded at every location.
    pub pairs_per_location: u8,
    pub repetitions: u32,
    pub locations: Vec<LocationCode>,
    pub noise_std: f64,
    /// Degrees the dyad turns between repetitions.
    pub rotation_step: f64,
    pub occlusion_rate: f64,
    pub seed: u64,
    /// Also emit empty RGB/depth/IR frame files.
    pub image_placeholders: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            labels: ActivityLabel::all().collect(),
            pairs_per_location: 1,
            repetitions: 40,
            locations: LocationCode::ALL.to_vec(),
            noise_std: 15.0,
            rotation_step: 9.0,
            occlusion_rate: 0.1,
            seed: 0,
            image_placeholders: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(format!("synth config: {m}")));
        if self.labels.is_empty() || self.locations.is_empty() {
            return fail("labels and locations must be non-empty".into());
        }
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1".into());
        }
        if self.pairs_per_location == 0 || self.pairs_per_location > crate::format::name::NUM_PAIRS {
            return fail(format!(
                "pairs_per_location must be in 1..=10, got {}",
                self.pairs_per_location
            ));
        }
        if !(0.0..=1.0).contains(&self.occlusion_rate) {
            return fail(format!("occlusion_rate must be in [0, 1], got {}", self.occlusion_rate));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() || !self.rotation_step.is_finite() {
            return fail("noise_std and rotation_step must be finite, noise_std non-negative".into());
        }
        let mut labels = self.labels.clone();
        labels.sort();
        labels.dedup();
        if labels.len() != self.labels.len() {
            return fail("labels must be distinct".into());
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        self.labels.len() * self.pairs_per_location as usize * self.repetitions as usize * self.locations.len()
    }

    /// Dyad orientation of repetition `rep` in `[0, 360)`, before the pair's
    /// turning direction is applied.
    pub fn orientation(&self, rep: u32) -> f64 {
        (rep as f64 * self.rotation_step).rem_euclid(360.0)
    }
}

/// Name of one clip. Repetitions are spaced four seconds apart.
pub fn clip_name(location: LocationCode, label: ActivityLabel, pair: u8, rep: u32) -> SampleName {
    let t_start = 10_000 + rep as u64 * 4_000;
    SampleName::new(location, label.index() as u8 + 1, pair, t_start, t_start + CLIP_MS).expect("valid clip name")
}

/// One planned clip of a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipPlan {
    pub name: SampleName,
    pub orientation_deg: f64,
    pub degradation: Degradation,
    pub seed: u64,
}

/// Every clip of `config`, in location, pair, label, repetition order.
pub fn plan(config: &SynthConfig) -> Result<Vec<(ClipPlan, PairIdentity)>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.sample_count());
    for &location in &config.locations {
        for pair_index in 1..=config.pairs_per_location {
            let pair = PairIdentity::sample(config.seed, location, pair_index);
            for &label in &config.labels {
                for rep in 0..config.repetitions {
                    let name = clip_name(location, label, pair_index, rep);
                    let seed = derive_seed(config.seed, &name.to_string());
                    let occluded =
                        ChaCha8Rng::seed_from_u64(derive_seed(seed, "occlusion")).gen_bool(config.occlusion_rate);
                    out.push((
                        ClipPlan {
                            name,
                            orientation_deg: (pair.turn_direction * config.orientation(rep)).rem_euclid(360.0),
                            degradation: Degradation {
                                noise_std: config.noise_std,
                                occluded,
                            },
                            seed,
                        },
                        pair,
                    ));
                }
            }
        }
    }
    Ok(out)
}

fn clip_with_timestamps(plan: &ClipPlan, pair: &PairIdentity) -> SkeletonSequence {
    let keypoints = render(
        plan.name.activity_label(),
        pair,
        plan.orientation_deg,
        plan.degradation,
        plan.seed,
    );
    let timestamps = (0..FRAMES_PER_SAMPLE)
        .map(|i| plan.name.t_start as i64 + (frame_time(i) * 1000.0).round() as i64)
        .collect();
    SkeletonSequence::new(timestamps, keypoints, JointLayout::Full32).expect("generated shapes are valid")
}

/// Builds the container for `config` without touching the disk.
pub fn generate_container(config: &SynthConfig, split: &SplitSpec) -> Result<AnnotationContainer> {
    let samples = plan(config)?
        .iter()
        .map(|(p, pair)| Ok((p.name, reduce_joints(&clip_with_timestamps(p, pair))?)))
        .collect::<Result<Vec<_>>>()?;
    build_annotation_container(samples, split)
}

/// Writes the joints tree (and image placeholders if configured) under
/// `root` and returns the matching container.
pub fn generate_dataset(config: &SynthConfig, split: &SplitSpec, root: &Path) -> Result<AnnotationContainer> {
    let mut samples = Vec::with_capacity(config.sample_count());
    for (p, pair) in plan(config)? {
        let seq = clip_with_timestamps(&p, &pair);
        write_joints_sample(root, &p.name, &seq)?;
        if config.image_placeholders {
            for modality in [Modality::Rgb, Modality::Depth, Modality::Ir] {
                write_image_placeholders(root, modality, &p.name)?;
            }
        }
        samples.push((p.name, reduce_joints(&seq)?));
    }
    build_annotation_container(samples, split)
}

/// Trajectory relative to the per-frame midpoint of the two pelvises,
/// flattened. Works for either joint layout since the pelvis is joint 0.
pub fn centered_trajectory(keypoints: &Array4<f64>) -> Vec<f64> {
    let (m, t, v, c) = keypoints.dim();
    let mut out = Vec::with_capacity(m * t * v * c);
    for mi in 0..m {
        for ti in 0..t {
            let mid: Vec<f64> = (0..c)
                .map(|ci| (0..m).map(|s| keypoints[[s, ti, j::PELVIS, ci]]).sum::<f64>() / m as f64)
                .collect();
            for vi in 0..v {
                for ci in 0..c {
                    out.push(keypoints[[mi, ti, vi, ci]] - mid[ci]);
                }
            }
        }
    }
    out
}

/// Rotates every joint about the camera's vertical axis through the origin.
pub fn rotate_vertical(keypoints: &Array4<f64>, degrees: f64) -> Array4<f64> {
    let (s, c) = degrees.to_radians().sin_cos();
    let mut out = keypoints.clone();
    for mut joint in out.lanes_mut(Axis(3)) {
        let (x, z) = (joint[0], joint[2]);
        joint[0] = x * c + z * s;
        joint[2] = -x * s + z * c;
    }
    out
}

/// Class means of row vectors.
#[derive(Debug, Clone)]
pub struct NearestCentroid {
    classes: Vec<usize>,
    centroids: Array2<f64>,
}

impl NearestCentroid {
    pub fn fit(x: ArrayView2<f64>, labels: &[usize]) -> Result<Self> {
        if x.nrows() != labels.len() || labels.is_empty() {
            return Err(Error::Contract(format!(
                "{} rows for {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let mut centroids = Array2::<f64>::zeros((classes.len(), x.ncols()));
        let mut counts = vec![0usize; classes.len()];
        for (row, &l) in x.rows().into_iter().zip(labels) {
            let ci = classes.binary_search(&l).expect("label listed");
            let mut c = centroids.row_mut(ci);
            c += &row;
            counts[ci] += 1;
        }
        for (mut c, n) in centroids.rows_mut().into_iter().zip(counts) {
            c /= n as f64;
        }
        Ok(NearestCentroid { classes, centroids })
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut best = (f64::INFINITY, self.classes[0]);
        for (c, &label) in self.centroids.rows().into_iter().zip(&self.classes) {
            let d: f64 = c.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, label);
            }
        }
        best.1
    }

    /// Fraction of rows predicted correctly. Every test label must have been
    /// seen in training.
    pub fn accuracy(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
        if x.nrows() != labels.len() || labels.is_empty() {
            return Err(Error::Contract(format!(
                "{} rows for {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|l| self.classes.binary_search(l).is_err()) {
            return Err(Error::Contract(format!("class {l} has no training samples")));
        }
        let correct = x
            .rows()
            .into_iter()
            .zip(labels)
            .filter(|(row, &l)| self.predict_row(row.as_slice().expect("row-major")) == l)
            .count();
        Ok(correct as f64 / labels.len() as f64)
    }
}

fn trajectory_matrix(container: &AnnotationContainer, names: &[String]) -> Result<(Array2<f64>, Vec<usize>)> {
    let records = container.records(names)?;
    let width = records.first().map_or(0, |r| r.keypoint.len());
    let mut x = Array2::<f64>::zeros((records.len(), width));
    for (mut row, r) in x.rows_mut().into_iter().zip(&records) {
        if r.keypoint.len() != width {
            return Err(Error::Contract(format!("{}: keypoint size differs", r.frame_dir)));
        }
        row.assign(&ndarray::ArrayView1::from(&centered_trajectory(&r.keypoint)));
    }
    Ok((x, records.iter().map(|r| r.label.index()).collect()))
}

/// Classifies each test clip by the nearest class mean of pelvis-centered
/// training trajectories and returns the fraction correct.
pub fn nearest_centroid_baseline(container: &AnnotationContainer, train: &[String], test: &[String]) -> Result<f64> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Contract("baseline needs non-empty train and test lists".into()));
    }
    if let Some(n) = test.iter().find(|n| train.contains(n)) {
        return Err(Error::Contract(format!("{n} is in both train and test lists")));
    }
    let (xtr, ytr) = trajectory_matrix(container, train)?;
    let (xte, yte) = trajectory_matrix(container, test)?;
    NearestCentroid::fit(xtr.view(), &ytr)?.accuracy(xte.view(), &yte)
}
