//! Synthetic multi-task motion data.
//!
//! Every frame is a 42-dimensional vector shaped like the mocap features.
//! Sequence `i` is assigned a combination `i mod (actions · styles)` and a
//! source (actor) `⌊i / (actions · styles)⌋ mod sources`, so every actor
//! performs every combination before any combination repeats.
//!
//! - The action picks a periodic trajectory family: a base posture, per-dimension
//!   amplitudes and phases, and a cycle frequency.
//! - The style modulates amplitude, tempo and posture offset on top of it.
//! - The gender of the actor (`actor mod 2`) scales the body template and the
//!   action signal by 1.15 or 0.85.
//! - Each actor adds a small fixed offset, and each frame independent noise.
//!
//! Everything except the frame noise depends only on the seed, the actor and
//! the combination, so with zero noise two takes of the same combination by
//! the same actor are identical.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, FrameSequence, MultimodalSequence, TaskSpec};

pub const SYNTH_DIM: usize = 42;
pub const PRIMARY_MODALITY: &str = "mocap";
pub const SECONDARY_MODALITY: &str = "mocap_noisy";
pub const ACTION_TASK: &str = "AC";
pub const STYLE_TASK: &str = "AF";
pub const GENDER_TASK: &str = "G";
pub const FEATURE_PIPELINE: &str = "synthetic-42";

const ACTION_NAMES: [&str; 4] = ["Walking", "Knocking", "Lifting", "Throwing"];
const STYLE_NAMES: [&str; 4] = ["Neutral", "Happy", "Sad", "Angry"];
const GENDER_NAMES: [&str; 2] = ["Male", "Female"];
const GENDER_SCALE: [f64; 2] = [1.15, 0.85];
/// Frames per cycle at unit tempo and frequency.
const PERIOD: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    /// Standard deviation of the per-frame noise.
    pub noise: f64,
    pub actions: usize,
    pub styles: usize,
    pub sources: usize,
    /// Nominal frames per sequence; each take varies by up to ±5.
    pub frames: usize,
    /// Adds a second modality: the first plus independent noise of this deviation.
    pub second_modality_noise: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 400,
            seed: 7,
            noise: 0.1,
            actions: 4,
            styles: 4,
            sources: 20,
            frames: 40,
            second_modality_noise: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.actions < 2 || self.styles < 2 {
            return bad(format!("need at least 2 actions and 2 styles, got {} and {}", self.actions, self.styles));
        }
        if self.sources < 2 {
            return bad(format!("need at least 2 sources, got {}", self.sources));
        }
        if self.frames < 6 {
            return bad(format!("need at least 6 frames per sequence, got {}", self.frames));
        }
        let noises = [Some(self.noise), self.second_modality_noise];
        if noises.iter().flatten().any(|n| !n.is_finite() || *n < 0.0) {
            return bad("noise must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn tasks(&self) -> Vec<TaskSpec> {
        let names = |fixed: &[&str], n: usize, prefix: &str| -> Vec<String> {
            (0..n)
                .map(|k| fixed.get(k).map_or_else(|| format!("{prefix}{k}"), |s| s.to_string()))
                .collect()
        };
        vec![
            TaskSpec::with_class_names(ACTION_TASK, names(&ACTION_NAMES, self.actions, "action")).expect("valid"),
            TaskSpec::with_class_names(STYLE_TASK, names(&STYLE_NAMES, self.styles, "style")).expect("valid"),
            TaskSpec::with_class_names(GENDER_TASK, GENDER_NAMES).expect("valid"),
        ]
    }
}

/// Distinct, well-mixed stream seeds derived from the user seed.
fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0x6A09_E667_F3BC_C908;
    for &p in parts {
        state = state.wrapping_add(p.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        state = (state ^ (state >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        state = (state ^ (state >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        state ^= state >> 31;
    }
    ChaCha8Rng::seed_from_u64(state)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * normal(rng)).collect()
}

struct Prototypes {
    body: Vec<f64>,
    action_base: Vec<Vec<f64>>,
    action_amp: Vec<Vec<f64>>,
    action_phase: Vec<Vec<f64>>,
    action_freq: Vec<f64>,
    style_posture: Vec<Vec<f64>>,
    style_amp: Vec<f64>,
    style_tempo: Vec<f64>,
}

impl Prototypes {
    fn new(cfg: &SynthConfig) -> Self {
        let mut rng = stream(cfg.seed, &[0]);
        let body = gaussian(&mut rng, SYNTH_DIM, 1.0);
        let action_base = (0..cfg.actions).map(|_| gaussian(&mut rng, SYNTH_DIM, 0.8)).collect();
        let action_amp = (0..cfg.actions)
            .map(|_| (0..SYNTH_DIM).map(|_| 0.3 + 0.7 * rng.random::<f64>()).collect())
            .collect();
        let action_phase = (0..cfg.actions)
            .map(|_| (0..SYNTH_DIM).map(|_| TAU * rng.random::<f64>()).collect())
            .collect();
        let action_freq = (0..cfg.actions).map(|a| 1.0 + 0.5 * a as f64).collect();
        let style_posture = (0..cfg.styles).map(|_| gaussian(&mut rng, SYNTH_DIM, 0.4)).collect();
        let style_amp = (0..cfg.styles).map(|s| 0.7 + 0.25 * s as f64).collect();
        let style_tempo = (0..cfg.styles).map(|s| 0.8 + 0.2 * ((s + 2) % cfg.styles) as f64).collect();
        Prototypes {
            body,
            action_base,
            action_amp,
            action_phase,
            action_freq,
            style_posture,
            style_amp,
            style_tempo,
        }
    }
}

/// Generates the dataset in memory. Use [`super::save_dataset`] to write it out.
pub fn make_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let proto = Prototypes::new(cfg);
    let combos = cfg.actions * cfg.styles;
    let actor_offsets: Vec<Vec<f64>> = (0..cfg.sources)
        .map(|a| gaussian(&mut stream(cfg.seed, &[1, a as u64]), SYNTH_DIM, 0.15))
        .collect();
    let width = (cfg.count.max(1) as f64).log10().floor() as usize + 1;

    let mut sequences = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let combo = i % combos;
        let action = combo % cfg.actions;
        let style = combo / cfg.actions;
        let actor = (i / combos) % cfg.sources;
        let gender = actor % 2;
        let g = GENDER_SCALE[gender];

        let mut take = stream(cfg.seed, &[2, actor as u64, combo as u64]);
        let phase0 = TAU * take.random::<f64>();
        let len = (cfg.frames as i64 + take.random_range(-5..=5)).max(6) as usize;
        let omega = TAU * proto.style_tempo[style] * proto.action_freq[action] / PERIOD;

        let mut noise = stream(cfg.seed, &[3, i as u64]);
        let mut primary = Array2::from_shape_fn((len, SYNTH_DIM), |(t, d)| {
            let wave = (omega * t as f64 + phase0 + proto.action_phase[action][d]).sin();
            let signal = proto.style_amp[style] * proto.action_amp[action][d] * wave;
            g * (proto.body[d] + proto.action_base[action][d] + signal)
                + proto.style_posture[style][d]
                + actor_offsets[actor][d]
        });
        if cfg.noise > 0.0 {
            primary.mapv_inplace(|x| x + cfg.noise * normal(&mut noise));
        }

        let labels: BTreeMap<String, usize> = [
            (ACTION_TASK.to_string(), action),
            (STYLE_TASK.to_string(), style),
            (GENDER_TASK.to_string(), gender),
        ]
        .into();
        let source = format!("actor{actor:02}");
        let mut parts = BTreeMap::new();
        if let Some(sd) = cfg.second_modality_noise {
            let mut second_noise = stream(cfg.seed, &[4, i as u64]);
            let mut secondary = primary.clone();
            if sd > 0.0 {
                secondary.mapv_inplace(|x| x + sd * normal(&mut second_noise));
            }
            parts.insert(
                SECONDARY_MODALITY.to_string(),
                FrameSequence::new(SECONDARY_MODALITY, secondary, labels.clone(), &source)?,
            );
        }
        parts.insert(
            PRIMARY_MODALITY.to_string(),
            FrameSequence::new(PRIMARY_MODALITY, primary, labels.clone(), &source)?,
        );
        sequences.push(MultimodalSequence::new(format!("seq{i:0width$}"), &source, parts, labels)?);
    }
    Dataset::new(cfg.tasks(), sequences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Axis};

    #[test]
    fn zero_count_is_empty() {
        let d = make_synthetic(&SynthConfig {
            count: 0,
            ..Default::default()
        })
        .unwrap();
        assert!(d.is_empty());
        assert_eq!(d.tasks.len(), 3);
    }

    #[test]
    fn noiseless_repeat_takes_are_identical() {
        let cfg = SynthConfig {
            count: 2 * 16 * 3,
            noise: 0.0,
            sources: 3,
            ..Default::default()
        };
        let d = make_synthetic(&cfg).unwrap();
        let (a, b) = (&d.sequences[5], &d.sequences[5 + 16 * 3]);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.source_id, b.source_id);
        assert_eq!(a.parts["mocap"].frames, b.parts["mocap"].frames);
        assert_ne!(d.sequences[5].parts["mocap"].frames, d.sequences[6].parts["mocap"].frames);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            count: 20,
            second_modality_noise: Some(0.2),
            ..Default::default()
        };
        assert_eq!(make_synthetic(&cfg).unwrap(), make_synthetic(&cfg).unwrap());
        let other = make_synthetic(&SynthConfig { seed: 8, ..cfg.clone() }).unwrap();
        assert_ne!(other, make_synthetic(&cfg).unwrap());
    }

    #[test]
    fn labels_cover_every_combination_per_actor() {
        let d = make_synthetic(&SynthConfig::default()).unwrap();
        assert_eq!(d.len(), 400);
        let mut seen = std::collections::BTreeSet::new();
        for s in d.sequences.iter().filter(|s| s.source_id == "actor03") {
            seen.insert((s.labels["AC"], s.labels["AF"]));
            assert_eq!(s.labels["G"], 1);
        }
        assert_eq!(seen.len(), 16);
        let sources: std::collections::BTreeSet<_> = d.sequences.iter().map(|s| &s.source_id).collect();
        assert_eq!(sources.len(), 20);
    }

    #[test]
    fn second_modality_is_first_plus_noise() {
        let d = make_synthetic(&SynthConfig {
            count: 16,
            second_modality_noise: Some(0.3),
            ..Default::default()
        })
        .unwrap();
        let s = &d.sequences[0];
        let diff = &s.parts[SECONDARY_MODALITY].frames - &s.parts[PRIMARY_MODALITY].frames;
        let sd = (diff.mapv(|x| x * x).mean().unwrap()).sqrt();
        assert!((sd - 0.3).abs() < 0.03, "{sd}");
    }

    /// Nearest centroid on the mean frame, centroids from one half of the
    /// sources, scored on the other half.
    #[test]
    fn actions_are_separable_by_mean_frame() {
        let d = make_synthetic(&SynthConfig::default()).unwrap();
        let mean_frame = |s: &MultimodalSequence| s.parts["mocap"].frames.mean_axis(Axis(0)).unwrap();
        let train = |s: &&MultimodalSequence| s.source_id.as_str() < "actor10";
        let mut centroids = vec![(Array1::<f64>::zeros(SYNTH_DIM), 0usize); 4];
        for s in d.sequences.iter().filter(train) {
            let c = &mut centroids[s.labels["AC"]];
            c.0 += &mean_frame(s);
            c.1 += 1;
        }
        let centroids: Vec<Array1<f64>> = centroids.into_iter().map(|(sum, n)| sum / n as f64).collect();
        let test: Vec<_> = d.sequences.iter().filter(|s| !train(s)).collect();
        let correct = test
            .iter()
            .filter(|s| {
                let m = mean_frame(s);
                let best = (0..4)
                    .min_by(|&a, &b| {
                        let da = (&m - &centroids[a]).mapv(|x| x * x).sum();
                        let db = (&m - &centroids[b]).mapv(|x| x * x).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                best == s.labels["AC"]
            })
            .count();
        let accuracy = correct as f64 / test.len() as f64;
        assert!(accuracy >= 0.95, "{accuracy}");
    }
}
