//! Body-tracking joint layouts.
//!
//! The full layout is the 32-joint body-tracking scheme in sensor index order.
//! The reduced layout keeps the 25 joints that correspond one-to-one with the
//! common 25-joint body model (spine base through hand tips, thumbs, feet and
//! head); clavicles, nose, eyes and ears are dropped.

pub const FULL_JOINTS: usize = 32;
pub const REDUCED_JOINTS: usize = 25;

pub const PELVIS: usize = 0;
pub const SPINE_NAVAL: usize = 1;
pub const SPINE_CHEST: usize = 2;
pub const NECK: usize = 3;
pub const CLAVICLE_LEFT: usize = 4;
pub const SHOULDER_LEFT: usize = 5;
pub const ELBOW_LEFT: usize = 6;
pub const WRIST_LEFT: usize = 7;
pub const HAND_LEFT: usize = 8;
pub const HANDTIP_LEFT: usize = 9;
pub const THUMB_LEFT: usize = 10;
pub const CLAVICLE_RIGHT: usize = 11;
pub const SHOULDER_RIGHT: usize = 12;
pub const ELBOW_RIGHT: usize = 13;
pub const WRIST_RIGHT: usize = 14;
pub const HAND_RIGHT: usize = 15;
pub const HANDTIP_RIGHT: usize = 16;
pub const THUMB_RIGHT: usize = 17;
pub const HIP_LEFT: usize = 18;
pub const KNEE_LEFT: usize = 19;
pub const ANKLE_LEFT: usize = 20;
pub const FOOT_LEFT: usize = 21;
pub const HIP_RIGHT: usize = 22;
pub const KNEE_RIGHT: usize = 23;
pub const ANKLE_RIGHT: usize = 24;
pub const FOOT_RIGHT: usize = 25;
pub const HEAD: usize = 26;
pub const NOSE: usize = 27;
pub const EYE_LEFT: usize = 28;
pub const EAR_LEFT: usize = 29;
pub const EYE_RIGHT: usize = 30;
pub const EAR_RIGHT: usize = 31;

pub const FULL_JOINT_NAMES: [&str; FULL_JOINTS] = [
    "PELVIS",
    "SPINE_NAVAL",
    "SPINE_CHEST",
    "NECK",
    "CLAVICLE_LEFT",
    "SHOULDER_LEFT",
    "ELBOW_LEFT",
    "WRIST_LEFT",
    "HAND_LEFT",
    "HANDTIP_LEFT",
    "THUMB_LEFT",
    "CLAVICLE_RIGHT",
    "SHOULDER_RIGHT",
    "ELBOW_RIGHT",
    "WRIST_RIGHT",
    "HAND_RIGHT",
    "HANDTIP_RIGHT",
    "THUMB_RIGHT",
    "HIP_LEFT",
    "KNEE_LEFT",
    "ANKLE_LEFT",
    "FOOT_LEFT",
    "HIP_RIGHT",
    "KNEE_RIGHT",
    "ANKLE_RIGHT",
    "FOOT_RIGHT",
    "HEAD",
    "NOSE",
    "EYE_LEFT",
    "EAR_LEFT",
    "EYE_RIGHT",
    "EAR_RIGHT",
];

/// Parent of each full-layout joint; `None` for the pelvis root.
pub const FULL_PARENTS: [Option<usize>; FULL_JOINTS] = [
    None,
    Some(PELVIS),
    Some(SPINE_NAVAL),
    Some(SPINE_CHEST),
    Some(SPINE_CHEST),
    Some(CLAVICLE_LEFT),
    Some(SHOULDER_LEFT),
    Some(ELBOW_LEFT),
    Some(WRIST_LEFT),
    Some(HAND_LEFT),
    Some(WRIST_LEFT),
    Some(SPINE_CHEST),
    Some(CLAVICLE_RIGHT),
    Some(SHOULDER_RIGHT),
    Some(ELBOW_RIGHT),
    Some(WRIST_RIGHT),
    Some(HAND_RIGHT),
    Some(WRIST_RIGHT),
    Some(PELVIS),
    Some(HIP_LEFT),
    Some(KNEE_LEFT),
    Some(ANKLE_LEFT),
    Some(PELVIS),
    Some(HIP_RIGHT),
    Some(KNEE_RIGHT),
    Some(ANKLE_RIGHT),
    Some(NECK),
    Some(HEAD),
    Some(HEAD),
    Some(HEAD),
    Some(HEAD),
    Some(HEAD),
];

/// Full-layout indices retained by the 32 → 25 reduction, in output order.
/// This table is the single definition of the reduced layout.
pub const RETAINED_JOINTS: [usize; REDUCED_JOINTS] = [
    PELVIS,
    SPINE_NAVAL,
    SPINE_CHEST,
    NECK,
    SHOULDER_LEFT,
    ELBOW_LEFT,
    WRIST_LEFT,
    HAND_LEFT,
    HANDTIP_LEFT,
    THUMB_LEFT,
    SHOULDER_RIGHT,
    ELBOW_RIGHT,
    WRIST_RIGHT,
    HAND_RIGHT,
    HANDTIP_RIGHT,
    THUMB_RIGHT,
    HIP_LEFT,
    KNEE_LEFT,
    ANKLE_LEFT,
    FOOT_LEFT,
    HIP_RIGHT,
    KNEE_RIGHT,
    ANKLE_RIGHT,
    FOOT_RIGHT,
    HEAD,
];

/// Reduced-layout index of a full-layout joint, if retained.
pub fn reduced_index(full: usize) -> Option<usize> {
    RETAINED_JOINTS.iter().position(|&j| j == full)
}

/// Bones of the reduced layout as (parent, child) pairs in reduced indices.
/// A dropped parent is skipped by walking up to the nearest retained ancestor.
pub fn reduced_bones() -> Vec<(usize, usize)> {
    let mut bones = Vec::with_capacity(REDUCED_JOINTS - 1);
    for (child_r, &child) in RETAINED_JOINTS.iter().enumerate() {
        let mut parent = FULL_PARENTS[child];
        while let Some(p) = parent {
            if let Some(pr) = reduced_index(p) {
                bones.push((pr, child_r));
                break;
            }
            parent = FULL_PARENTS[p];
        }
    }
    bones
}

/// Bones of the full layout as (parent, child) pairs.
pub fn full_bones() -> Vec<(usize, usize)> {
    FULL_PARENTS
        .iter()
        .enumerate()
        .filter_map(|(child, p)| p.map(|p| (p, child)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_drops_face_and_clavicles() {
        let dropped: Vec<usize> = (0..FULL_JOINTS).filter(|j| reduced_index(*j).is_none()).collect();
        assert_eq!(
            dropped,
            vec![
                CLAVICLE_LEFT,
                CLAVICLE_RIGHT,
                NOSE,
                EYE_LEFT,
                EAR_LEFT,
                EYE_RIGHT,
                EAR_RIGHT
            ]
        );
        let mut sorted = RETAINED_JOINTS;
        sorted.sort();
        assert_eq!(sorted, RETAINED_JOINTS, "retained order must follow sensor order");
    }

    #[test]
    fn reduced_bones_form_tree() {
        let bones = reduced_bones();
        assert_eq!(bones.len(), REDUCED_JOINTS - 1);
        assert!(bones.contains(&(
            reduced_index(SPINE_CHEST).unwrap(),
            reduced_index(SHOULDER_LEFT).unwrap()
        )));
        assert!(bones.contains(&(reduced_index(NECK).unwrap(), reduced_index(HEAD).unwrap())));
    }

    #[test]
    fn full_bones_form_tree() {
        assert_eq!(full_bones().len(), FULL_JOINTS - 1);
    }
}
