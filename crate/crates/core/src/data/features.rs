//! Per-frame skeleton features.
//!
//! Motion-capture skeletons have 14 joints:
//!
//! | index | joint | index | joint |
//! |---|---|---|---|
//! | 0 | root (pelvis) | 7 | right wrist |
//! | 1 | spine | 8 | left hip |
//! | 2 | neck | 9 | left knee |
//! | 3 | head | 10 | left ankle |
//! | 4 | left shoulder | 11 | right hip |
//! | 5 | left elbow | 12 | right knee |
//! | 6 | left wrist | 13 | right ankle |
//!
//! The 42 features are the joint positions relative to the root, rotated about
//! the vertical (y) axis so that the left-to-right hip vector points along +x.
//! They do not change under translation or yaw of the whole skeleton.
//!
//! Depth-camera upper-body skeletons have 11 joints:
//!
//! | index | joint | index | joint |
//! |---|---|---|---|
//! | 0 | head | 6 | left hand |
//! | 1 | shoulder centre | 7 | right shoulder |
//! | 2 | spine | 8 | right elbow |
//! | 3 | left shoulder | 9 | right wrist |
//! | 4 | left elbow | 10 | right hand |
//! | 5 | left wrist | | |
//!
//! Bones: head–shoulder centre, shoulder centre–spine, and the two arm chains
//! from the shoulder centre down to each hand. The 84 features are laid out as
//!
//! | range | content |
//! |---|---|
//! | 0..33 | joints relative to the spine, in the torso frame, divided by torso length |
//! | 33..45 | inclination: angle at the middle joint of each of the 12 two-bone chains |
//! | 45..69 | azimuth of each chain's second bone around its first bone, both directions |
//! | 69..79 | bending: angle between each non-spine joint's offset from the spine and the torso's forward normal |
//! | 79..84 | reserved, always 0 |
//!
//! Angles are in radians. Inclination and bending lie in [0, π], azimuth in (−π, π].
//! A straight two-bone chain has azimuth 0.
//! A bone shorter than [`DEGENERATE_LENGTH`] contributes 0 to every angle that
//! uses it and is counted in [`KinectFeatures::degenerate`].

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

pub const MOCAP_JOINTS: usize = 14;
pub const MOCAP_FEATURES: usize = 42;
pub const KINECT_JOINTS: usize = 11;
pub const KINECT_FEATURES: usize = 84;
pub const DEGENERATE_LENGTH: f64 = 1e-9;

const LEFT_HIP: usize = 8;
const RIGHT_HIP: usize = 11;

type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn unit(a: Vec3) -> Option<Vec3> {
    let n = norm(a);
    (n >= DEGENERATE_LENGTH).then(|| scale(a, 1.0 / n))
}

fn check_joints(joints: &[Vec3], expected: usize) -> Result<()> {
    if joints.len() != expected {
        return Err(Error::shape("skeleton joints", expected, joints.len()));
    }
    if joints.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            block: "skeleton joints".into(),
        });
    }
    Ok(())
}

/// Root-relative, yaw-normalized joint positions (42 values).
pub fn mocap_features(joints: &[Vec3]) -> Result<Array1<f64>> {
    check_joints(joints, MOCAP_JOINTS)?;
    let root = joints[0];
    let hips = sub(joints[RIGHT_HIP], joints[LEFT_HIP]);
    let planar = (hips[0] * hips[0] + hips[2] * hips[2]).sqrt();
    // rotation about y taking the horizontal hip direction onto +x
    let (cos, sin) = if planar < DEGENERATE_LENGTH {
        (1.0, 0.0)
    } else {
        (hips[0] / planar, hips[2] / planar)
    };
    let mut out = Array1::zeros(MOCAP_FEATURES);
    for (j, &p) in joints.iter().enumerate() {
        let r = sub(p, root);
        out[3 * j] = r[0] * cos + r[2] * sin;
        out[3 * j + 1] = r[1];
        out[3 * j + 2] = -r[0] * sin + r[2] * cos;
    }
    Ok(out)
}

const SHOULDER_CENTRE: usize = 1;
const SPINE: usize = 2;
const LEFT_SHOULDER: usize = 3;
const RIGHT_SHOULDER: usize = 7;

const BONES: [(usize, usize); 10] = [
    (0, 1),
    (1, 2),
    (1, 3),
    (3, 4),
    (4, 5),
    (5, 6),
    (1, 7),
    (7, 8),
    (8, 9),
    (9, 10),
];

/// Two-bone chains `(a, b, c)` sharing the middle joint `b`, in a fixed order.
pub fn kinect_chains() -> Vec<[usize; 3]> {
    let mut chains = Vec::new();
    for b in 0..KINECT_JOINTS {
        let mut neighbours: Vec<usize> = BONES
            .iter()
            .filter_map(|&(p, q)| match (p == b, q == b) {
                (true, _) => Some(q),
                (_, true) => Some(p),
                _ => None,
            })
            .collect();
        neighbours.sort_unstable();
        for i in 0..neighbours.len() {
            for k in i + 1..neighbours.len() {
                chains.push([neighbours[i], b, neighbours[k]]);
            }
        }
    }
    chains
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinectFeatures {
    pub values: Array1<f64>,
    /// Angle terms that fell back to 0 because a bone or reference axis was degenerate.
    pub degenerate: usize,
}

struct TorsoFrame {
    lateral: Vec3,
    up: Vec3,
    forward: Vec3,
}

fn torso_frame(joints: &[Vec3], degenerate: &mut usize) -> TorsoFrame {
    let up = unit(sub(joints[SHOULDER_CENTRE], joints[SPINE]));
    let across = unit(sub(joints[RIGHT_SHOULDER], joints[LEFT_SHOULDER]));
    let fallback = TorsoFrame {
        lateral: [1.0, 0.0, 0.0],
        up: [0.0, 1.0, 0.0],
        forward: [0.0, 0.0, 1.0],
    };
    let (Some(up), Some(across)) = (up, across) else {
        *degenerate += 1;
        return fallback;
    };
    let Some(forward) = unit(cross(across, up)) else {
        *degenerate += 1;
        return fallback;
    };
    TorsoFrame {
        lateral: cross(up, forward),
        up,
        forward,
    }
}

// atan2 form stays accurate near 0 and π, where acos loses half its digits
fn angle_between(a: Vec3, b: Vec3) -> Option<f64> {
    unit(a)?;
    unit(b)?;
    Some(norm(cross(a, b)).atan2(dot(a, b)))
}

/// Signed angle of `bone` around `axis`, measured from the projection of
/// `reference` (or `fallback` when that projection vanishes) onto the plane
/// normal to `axis`. `None` only for a degenerate bone or axis.
fn azimuth(axis: Vec3, bone: Vec3, reference: Vec3, fallback: Vec3) -> Option<f64> {
    let axis = unit(axis)?;
    unit(bone)?;
    let project = |x: Vec3| sub(x, scale(axis, dot(x, axis)));
    // a bone along the axis (straight limb) has azimuth 0 by convention
    let Some(w) = unit(project(bone)) else {
        return Some(0.0);
    };
    let r = unit(project(reference)).or_else(|| unit(project(fallback)))?;
    let a = dot(cross(r, w), axis).atan2(dot(r, w));
    // atan2 can return −π for a signed zero; keep the range half-open
    Some(if a <= -std::f64::consts::PI { std::f64::consts::PI } else { a })
}

fn take(value: Option<f64>, degenerate: &mut usize) -> f64 {
    value.unwrap_or_else(|| {
        *degenerate += 1;
        0.0
    })
}

/// Upper-body features of one depth-camera skeleton (84 values).
pub fn kinect_upper_body_features(joints: &[Vec3]) -> Result<KinectFeatures> {
    check_joints(joints, KINECT_JOINTS)?;
    let mut degenerate = 0;
    let torso = torso_frame(joints, &mut degenerate);
    let spine = joints[SPINE];
    let torso_length = norm(sub(joints[SHOULDER_CENTRE], spine));
    let inv = if torso_length < DEGENERATE_LENGTH { 1.0 } else { 1.0 / torso_length };

    let mut out = Array1::zeros(KINECT_FEATURES);
    for (j, &p) in joints.iter().enumerate() {
        let r = scale(sub(p, spine), inv);
        out[3 * j] = dot(r, torso.lateral);
        out[3 * j + 1] = dot(r, torso.up);
        out[3 * j + 2] = dot(r, torso.forward);
    }
    let chains = kinect_chains();
    for (i, &[a, b, c]) in chains.iter().enumerate() {
        let pa = joints[a];
        let pb = joints[b];
        let pc = joints[c];
        out[33 + i] = take(angle_between(sub(pa, pb), sub(pc, pb)), &mut degenerate);
        out[45 + 2 * i] = take(
            azimuth(sub(pb, pa), sub(pc, pb), torso.up, torso.forward),
            &mut degenerate,
        );
        out[45 + 2 * i + 1] = take(
            azimuth(sub(pb, pc), sub(pa, pb), torso.up, torso.forward),
            &mut degenerate,
        );
    }
    for (k, j) in (0..KINECT_JOINTS).filter(|&j| j != SPINE).enumerate() {
        out[69 + k] = take(angle_between(sub(joints[j], spine), torso.forward), &mut degenerate);
    }
    if degenerate > 0 {
        log::warn!("{degenerate} degenerate angle terms in a skeleton frame were set to 0");
    }
    Ok(KinectFeatures {
        values: out,
        degenerate,
    })
}

/// Skeleton-to-feature pipelines. Raw skeleton CSV files hold one frame per
/// row with the joints' x, y, z coordinates in the documented joint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeaturePipeline {
    Mocap,
    Kinect,
}

impl FeaturePipeline {
    /// Identifier recorded in dataset manifests.
    pub fn id(self) -> &'static str {
        match self {
            FeaturePipeline::Mocap => "mocap-42",
            FeaturePipeline::Kinect => "kinect-84",
        }
    }

    pub fn joints(self) -> usize {
        match self {
            FeaturePipeline::Mocap => MOCAP_JOINTS,
            FeaturePipeline::Kinect => KINECT_JOINTS,
        }
    }

    pub fn features(self) -> usize {
        match self {
            FeaturePipeline::Mocap => MOCAP_FEATURES,
            FeaturePipeline::Kinect => KINECT_FEATURES,
        }
    }

    /// Converts raw skeleton rows to feature rows. Returns the features and
    /// the total count of degenerate angle terms.
    pub fn apply(self, skeletons: ArrayView2<f64>) -> Result<(Array2<f64>, usize)> {
        let joints = self.joints();
        if skeletons.ncols() != 3 * joints {
            return Err(Error::shape("skeleton row", 3 * joints, skeletons.ncols()));
        }
        let mut out = Array2::zeros((skeletons.nrows(), self.features()));
        let mut degenerate = 0;
        for (row, mut target) in skeletons.rows().into_iter().zip(out.rows_mut()) {
            let pose: Vec<Vec3> = row
                .as_slice()
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| row.to_vec())
                .chunks(3)
                .map(|c| [c[0], c[1], c[2]])
                .collect();
            let values = match self {
                FeaturePipeline::Mocap => mocap_features(&pose)?,
                FeaturePipeline::Kinect => {
                    let f = kinect_upper_body_features(&pose)?;
                    degenerate += f.degenerate;
                    f.values
                }
            };
            target.assign(&values);
        }
        Ok((out, degenerate))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_pose(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect()
    }

    fn yaw(p: Vec3, angle: f64) -> Vec3 {
        let (s, c) = angle.sin_cos();
        [c * p[0] + s * p[2], p[1], -s * p[0] + c * p[2]]
    }

    #[test]
    fn mocap_zero_skeleton_gives_zeros() {
        let f = mocap_features(&[[0.0; 3]; MOCAP_JOINTS]).unwrap();
        assert_eq!(f, Array1::<f64>::zeros(MOCAP_FEATURES));
    }

    #[test]
    fn mocap_features_ignore_translation_and_yaw() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let pose = random_pose(&mut rng, MOCAP_JOINTS);
            let base = mocap_features(&pose).unwrap();
            let shift = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let angle = rng.random_range(-PI..PI);
            let moved: Vec<Vec3> = pose.iter().map(|&p| yaw([p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]], angle)).collect();
            let f = mocap_features(&moved).unwrap();
            let quarter: Vec<Vec3> = pose.iter().map(|&p| yaw(p, FRAC_PI_2)).collect();
            let g = mocap_features(&quarter).unwrap();
            for i in 0..MOCAP_FEATURES {
                assert!((f[i] - base[i]).abs() < 1e-9 && (g[i] - base[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn wrong_joint_count_is_refused() {
        assert!(mocap_features(&[[0.0; 3]; 13]).is_err());
        assert!(kinect_upper_body_features(&[[0.0; 3]; 12]).is_err());
    }

    #[test]
    fn there_are_twelve_chains() {
        let chains = kinect_chains();
        assert_eq!(chains.len(), 12);
        for [a, b, c] in chains {
            let bone = |p: usize, q: usize| BONES.contains(&(p.min(q), p.max(q)));
            assert!(bone(a, b) && bone(b, c));
        }
    }

    /// Arms stretched sideways, torso upright, facing +z.
    fn t_pose() -> Vec<Vec3> {
        vec![
            [0.0, 1.3, 0.0],  // head
            [0.0, 1.0, 0.0],  // shoulder centre
            [0.0, 0.0, 0.0],  // spine
            [-0.2, 1.0, 0.0], // left shoulder
            [-0.5, 1.0, 0.0],
            [-0.8, 1.0, 0.0],
            [-0.9, 1.0, 0.0],
            [0.2, 1.0, 0.0], // right shoulder
            [0.5, 1.0, 0.0],
            [0.8, 1.0, 0.0],
            [0.9, 1.0, 0.0],
        ]
    }

    fn chain_index(chain: [usize; 3]) -> usize {
        kinect_chains().iter().position(|&c| c == chain).unwrap()
    }

    #[test]
    fn straight_and_right_angle_elbows() {
        let mut pose = t_pose();
        let f = kinect_upper_body_features(&pose).unwrap();
        assert_eq!(f.degenerate, 0);
        let elbow = chain_index([7, 8, 9]);
        assert!((f.values[33 + elbow] - PI).abs() < 1e-12);
        // forearm bent forward by 90 degrees
        pose[9] = [0.5, 1.0, 0.3];
        pose[10] = [0.5, 1.0, 0.4];
        let f = kinect_upper_body_features(&pose).unwrap();
        assert!((f.values[33 + elbow] - FRAC_PI_2).abs() < 1e-12);
        for x in &f.values.as_slice().unwrap()[79..] {
            assert_eq!(*x, 0.0);
        }
    }

    #[test]
    fn collinear_bone_is_counted_not_nan() {
        let mut pose = t_pose();
        pose[9] = pose[8];
        let f = kinect_upper_body_features(&pose).unwrap();
        assert!(f.values.iter().all(|x| x.is_finite()));
        assert!(f.degenerate > 0);
        let elbow = chain_index([7, 8, 9]);
        assert_eq!(f.values[33 + elbow], 0.0);
    }

    #[test]
    fn angles_match_an_independent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let pose = random_pose(&mut rng, KINECT_JOINTS);
            let f = kinect_upper_body_features(&pose).unwrap();
            let oracle = |a: Vec3, b: Vec3| (dot(a, b) / (norm(a) * norm(b))).acos();
            for (i, [a, b, c]) in kinect_chains().into_iter().enumerate() {
                let want = oracle(sub(pose[a], pose[b]), sub(pose[c], pose[b]));
                assert!((f.values[33 + i] - want).abs() < 1e-9);
            }
            let up = sub(pose[SHOULDER_CENTRE], pose[SPINE]);
            let across = sub(pose[RIGHT_SHOULDER], pose[LEFT_SHOULDER]);
            let forward = cross(across, up);
            for (k, j) in (0..KINECT_JOINTS).filter(|&j| j != SPINE).enumerate() {
                let want = oracle(sub(pose[j], pose[SPINE]), forward);
                assert!((f.values[69 + k] - want).abs() < 1e-9);
            }
            for i in 0..24 {
                let a = f.values[45 + i];
                assert!(a > -PI && a <= PI);
            }
        }
    }

    #[test]
    fn pipeline_converts_rows() {
        let rows = Array2::from_shape_vec((1, 33), t_pose().concat()).unwrap();
        let (f, degenerate) = FeaturePipeline::Kinect.apply(rows.view()).unwrap();
        assert_eq!(f.dim(), (1, 84));
        assert_eq!(degenerate, 0);
        assert_eq!(f.row(0), kinect_upper_body_features(&t_pose()).unwrap().values);
        assert!(FeaturePipeline::Mocap.apply(rows.view()).is_err());
    }

    #[test]
    fn azimuth_quarter_turns() {
        let axis = [0.0, 0.0, 1.0];
        let up = [0.0, 1.0, 0.0];
        let fwd = [1.0, 0.0, 0.0];
        assert!(azimuth(axis, [0.0, 1.0, 0.0], up, fwd).unwrap().abs() < 1e-12);
        let a = azimuth(axis, [-1.0, 0.0, 0.0], up, fwd).unwrap();
        assert!((a - FRAC_PI_2).abs() < 1e-12, "{a}");
        let a = azimuth(axis, [0.0, -1.0, 0.0], up, fwd).unwrap();
        assert!((a - PI).abs() < 1e-12);
    }
}
