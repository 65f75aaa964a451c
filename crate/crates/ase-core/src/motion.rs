//! Synthetic motion clips, the dataset file format, expert-transition
//! sampling, and feature normalization statistics.
//!
//! Clips store observation-space feature sequences directly (the imitation
//! target is state transitions, not actions). Joint-angle channels carry
//! exact time derivatives in the velocity channels so real transitions cannot
//! be told apart from simulated ones by derivative inconsistencies alone.

use crate::env::{EnvConfig, Observation, FEATURE_NAMES, OBS_DIM};
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DATASET_FPS: u32 = 30;
/// Amplitude of the smooth tie-breaking noise added to every clip.
const NOISE_AMPLITUDE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipKind {
    Walk,
    Run,
    WalkBack,
    Sidestep,
    Turn,
    Idle,
    CrouchWalk,
    SwordSwing,
}

impl ClipKind {
    pub const ALL: [ClipKind; 8] = [
        ClipKind::Walk,
        ClipKind::Run,
        ClipKind::WalkBack,
        ClipKind::Sidestep,
        ClipKind::Turn,
        ClipKind::Idle,
        ClipKind::CrouchWalk,
        ClipKind::SwordSwing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClipKind::Walk => "walk",
            ClipKind::Run => "run",
            ClipKind::WalkBack => "walk-back",
            ClipKind::Sidestep => "sidestep",
            ClipKind::Turn => "turn",
            ClipKind::Idle => "idle",
            ClipKind::CrouchWalk => "crouch-walk",
            ClipKind::SwordSwing => "sword-swing",
        }
    }

    pub fn parse(s: &str) -> Result<ClipKind> {
        ClipKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown clip kind '{s}'")))
    }
}

/// One motion clip: a named sequence of feature frames at a fixed rate.
#[derive(Debug, Clone)]
pub struct MotionClip {
    pub name: String,
    pub fps: u32,
    pub frames: Vec<Observation>,
}

/// Per-feature normalization statistics over a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

pub const STD_FLOOR: f32 = 1e-3;

/// The imitation target: clips plus their feature statistics.
#[derive(Debug, Clone)]
pub struct MotionDataset {
    pub clips: Vec<MotionClip>,
    pub stats: FeatureStats,
}

#[derive(Debug, Clone, Copy)]
pub struct ClipParams {
    pub frames: usize,
}

impl Default for ClipParams {
    fn default() -> Self {
        Self { frames: 90 }
    }
}

/// A smooth sinusoid whose value and exact derivative are both bounded by
/// [`NOISE_AMPLITUDE`]; used to decorrelate otherwise-constant channels.
#[derive(Debug, Clone, Copy)]
struct SmoothNoise {
    freq: f64,
    phase: f64,
}

impl SmoothNoise {
    fn sample<R: Rng>(rng: &mut R) -> Self {
        Self {
            freq: 0.2 + rng.gen::<f64>() * 0.8,
            phase: rng.gen::<f64>() * std::f64::consts::TAU,
        }
    }

    /// Noise applied to a velocity-like channel.
    fn value(&self, t: f64) -> f64 {
        NOISE_AMPLITUDE * (std::f64::consts::TAU * self.freq * t + self.phase).sin()
    }

    /// Exact integral of [`Self::value`]; applied to the matching
    /// position-like channel so derivatives stay consistent.
    fn integral(&self, t: f64) -> f64 {
        let w = std::f64::consts::TAU * self.freq;
        -NOISE_AMPLITUDE / w * (w * t + self.phase).cos()
    }
}

/// Scripted kinematic profile for one clip kind; all channels are exact
/// functions of time, with the arm-angle channels differentiated analytically.
pub fn generate_clip<R: Rng>(kind: ClipKind, params: ClipParams, rng: &mut R) -> MotionClip {
    let env = EnvConfig::default();
    let n = params.frames.max(2);
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    // Base profile.
    let (vx, vy, omega, height): (f64, f64, f64, f64) = match kind {
        ClipKind::Walk => (1.2, 0.0, 0.0, 1.0),
        ClipKind::Run => (3.5, 0.0, 0.0, 1.0),
        ClipKind::WalkBack => (-1.0, 0.0, 0.0, 1.0),
        ClipKind::Sidestep => (0.0, sign * 1.0, 0.0, 1.0),
        ClipKind::Turn => (0.0, 0.0, sign * 1.5, 1.0),
        ClipKind::Idle => (0.0, 0.0, 0.0, 1.0),
        ClipKind::CrouchWalk => (1.0, 0.0, 0.0, 0.5),
        ClipKind::SwordSwing => (0.0, 0.0, 0.0, 1.0),
    };
    // Arm sweep for the sword swing; everything else keeps the arm still.
    let (amp1, freq1, amp2, freq2, phase2) = match kind {
        ClipKind::SwordSwing => (0.9, 0.8, 0.7, 1.2, 0.5),
        _ => (0.0, 0.0, 0.0, 0.0, 0.0),
    };
    let noise: Vec<SmoothNoise> = (0..6).map(|_| SmoothNoise::sample(rng)).collect();
    let mut frames = Vec::with_capacity(n);
    for f in 0..n {
        let t = f as f64 / f64::from(DATASET_FPS);
        let w1 = std::f64::consts::TAU * freq1;
        let w2 = std::f64::consts::TAU * freq2;
        let q1 = amp1 * (w1 * t).sin() + noise[4].integral(t);
        let dq1 = amp1 * w1 * (w1 * t).cos() + noise[4].value(t);
        let q2 = amp2 * (w2 * t + phase2).sin() + noise[5].integral(t);
        let dq2 = amp2 * w2 * (w2 * t + phase2).cos() + noise[5].value(t);
        let tip_x = env.link1 * q1.cos() + env.link2 * (q1 + q2).cos();
        let tip_y = env.link1 * q1.sin() + env.link2 * (q1 + q2).sin();
        let h = (height + noise[3].value(t)).clamp(0.2, 1.0);
        frames.push([
            h as f32,
            1.0,
            (vx + noise[0].value(t)) as f32,
            (vy + noise[1].value(t)) as f32,
            (omega + noise[2].value(t)) as f32,
            q1 as f32,
            q2 as f32,
            dq1 as f32,
            dq2 as f32,
            tip_x as f32,
            tip_y as f32,
        ]);
    }
    MotionClip {
        name: kind.name().to_string(),
        fps: DATASET_FPS,
        frames,
    }
}

/// Per-feature mean and population standard deviation over all frames of all
/// clips, with the standard deviation floored.
pub fn compute_stats(clips: &[MotionClip]) -> Result<FeatureStats> {
    let total: usize = clips.iter().map(|c| c.frames.len()).sum();
    if total == 0 {
        return Err(Error::usage("cannot compute stats of an empty dataset"));
    }
    let mut mean = vec![0.0f64; OBS_DIM];
    for clip in clips {
        for frame in &clip.frames {
            for (m, v) in mean.iter_mut().zip(frame) {
                *m += f64::from(*v);
            }
        }
    }
    for m in &mut mean {
        *m /= total as f64;
    }
    let mut var = vec![0.0f64; OBS_DIM];
    for clip in clips {
        for frame in &clip.frames {
            for ((s, v), m) in var.iter_mut().zip(frame).zip(&mean) {
                let d = f64::from(*v) - m;
                *s += d * d;
            }
        }
    }
    let std: Vec<f32> = var
        .iter()
        .map(|v| ((v / total as f64).sqrt() as f32).max(STD_FLOOR))
        .collect();
    Ok(FeatureStats {
        mean: mean.iter().map(|m| *m as f32).collect(),
        std,
    })
}

impl FeatureStats {
    /// `(s - mean) / std`, element-wise.
    pub fn normalize(&self, s: &Observation) -> Observation {
        let mut out = [0.0f32; OBS_DIM];
        for i in 0..OBS_DIM {
            out[i] = (s[i] - self.mean[i]) / self.std[i];
        }
        out
    }

    pub fn denormalize(&self, s: &Observation) -> Observation {
        let mut out = [0.0f32; OBS_DIM];
        for i in 0..OBS_DIM {
            out[i] = s[i] * self.std[i] + self.mean[i];
        }
        out
    }
}

impl MotionDataset {
    pub fn from_clips(clips: Vec<MotionClip>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::usage("dataset must contain at least one clip"));
        }
        for clip in &clips {
            if clip.frames.len() < 2 {
                return Err(Error::format(format!(
                    "clip '{}' has fewer than 2 frames",
                    clip.name
                )));
            }
        }
        let stats = compute_stats(&clips)?;
        Ok(Self { clips, stats })
    }

    pub fn total_frames(&self) -> usize {
        self.clips.iter().map(|c| c.frames.len()).sum()
    }

    pub fn total_transitions(&self) -> usize {
        self.clips.iter().map(|c| c.frames.len() - 1).sum()
    }

    /// Uniform sample over all consecutive frame pairs across all clips.
    pub fn sample_expert_transitions<R: Rng>(
        &self,
        rng: &mut R,
        count: usize,
    ) -> Result<Vec<(Observation, Observation)>> {
        if count == 0 {
            return Err(Error::usage("transition sample count must be >= 1"));
        }
        let total = self.total_transitions();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut idx = rng.gen_range(0..total);
            for clip in &self.clips {
                let here = clip.frames.len() - 1;
                if idx < here {
                    out.push((clip.frames[idx], clip.frames[idx + 1]));
                    break;
                }
                idx -= here;
            }
        }
        Ok(out)
    }
}

/// Builds the scripted dataset: `clips_per_kind` clips of each requested
/// kind, stats computed over the result.
pub fn build_dataset<R: Rng>(
    kinds: &[ClipKind],
    clips_per_kind: usize,
    params: ClipParams,
    rng: &mut R,
) -> Result<MotionDataset> {
    if kinds.is_empty() || clips_per_kind == 0 {
        return Err(Error::config("dataset needs at least one clip"));
    }
    let mut clips = Vec::with_capacity(kinds.len() * clips_per_kind);
    for kind in kinds {
        for i in 0..clips_per_kind {
            let mut clip = generate_clip(*kind, params, rng);
            if clips_per_kind > 1 {
                clip.name = format!("{}-{}", clip.name, i);
            }
            clips.push(clip);
        }
    }
    MotionDataset::from_clips(clips)
}

/// One clip of every kind.
pub fn build_default_dataset<R: Rng>(rng: &mut R, clips_per_kind: usize) -> Result<MotionDataset> {
    build_dataset(&ClipKind::ALL, clips_per_kind, ClipParams::default(), rng)
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    version: u32,
    fps: u32,
    feature_names: Vec<String>,
    clips: Vec<ClipFile>,
}

#[derive(Serialize, Deserialize)]
struct ClipFile {
    name: String,
    frames: Vec<Vec<f32>>,
}

pub const DATASET_VERSION: u32 = 1;

impl MotionDataset {
    /// Serializes to the UTF-8 JSON dataset format. Stats are never stored;
    /// they are recomputed on load.
    pub fn to_json(&self) -> String {
        let file = DatasetFile {
            version: DATASET_VERSION,
            fps: DATASET_FPS,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            clips: self
                .clips
                .iter()
                .map(|c| ClipFile {
                    name: c.name.clone(),
                    frames: c.frames.iter().map(|f| f.to_vec()).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile =
            serde_json::from_str(text).map_err(|e| Error::format(format!("dataset json: {e}")))?;
        if file.version != DATASET_VERSION {
            return Err(Error::format(format!(
                "unsupported dataset version {}",
                file.version
            )));
        }
        if file.fps != DATASET_FPS {
            return Err(Error::format(format!("unsupported fps {}", file.fps)));
        }
        if file.feature_names != FEATURE_NAMES {
            return Err(Error::format("feature name list mismatch".to_string()));
        }
        let clips = file
            .clips
            .into_iter()
            .map(|c| {
                let mut frames = Vec::with_capacity(c.frames.len());
                for f in &c.frames {
                    let arr: Observation = f
                        .as_slice()
                        .try_into()
                        .map_err(|_| Error::format(format!("clip '{}' frame width", c.name)))?;
                    if arr.iter().any(|v| !v.is_finite()) {
                        return Err(Error::format(format!("clip '{}' non-finite", c.name)));
                    }
                    frames.push(arr);
                }
                Ok(MotionClip {
                    name: c.name,
                    fps: file.fps,
                    frames,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MotionDataset::from_clips(clips)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
