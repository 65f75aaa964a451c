//! The hypersphere skill space: prior sampling, normalization, cosine
//! distance, and per-episode latent schedules.

use crate::error::{Error, Result};
use crate::nn::c;
use rand::Rng;
use rand_distr::StandardNormal;

/// A unit vector on the (d-1)-sphere indexing one skill.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSkill {
    z: Vec<f32>,
}

impl LatentSkill {
    pub fn as_slice(&self) -> &[f32] {
        &self.z
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

/// Scales `raw` onto the unit sphere. Near-zero input is a resample signal:
/// the caller should draw a fresh raw vector.
pub fn normalize(raw: &[f32]) -> Result<LatentSkill> {
    let norm = raw.iter().map(|v| f64::from(*v) * f64::from(*v)).sum::<f64>().sqrt();
    if norm <= 1e-8 {
        return Err(Error::usage("near-zero latent; resample"));
    }
    Ok(LatentSkill {
        z: raw.iter().map(|v| (f64::from(*v) / norm) as f32).collect(),
    })
}

/// Uniform sample from the surface of the (d-1)-sphere, via a normalized
/// standard Gaussian draw.
pub fn sample_prior<R: Rng>(rng: &mut R, d: usize) -> LatentSkill {
    assert!(d >= 2, "latent dimension must be >= 2");
    loop {
        let raw: Vec<f32> = (0..d)
            .map(|_| {
                let n: f64 = rng.sample(StandardNormal);
                n as f32
            })
            .collect();
        if let Ok(z) = normalize(&raw) {
            return z;
        }
    }
}

/// Cosine distance on the sphere: `0.5 (1 - z1·z2)`, in `[0, 1]`.
pub fn latent_distance(z1: &LatentSkill, z2: &LatentSkill) -> f32 {
    debug_assert_eq!(z1.dim(), z2.dim());
    let dot: f64 = z1
        .z
        .iter()
        .zip(&z2.z)
        .map(|(a, b)| f64::from(*a) * f64::from(*b))
        .sum();
    (c::<f64>(0.5) * (1.0 - dot)).clamp(0.0, 1.0) as f32
}

/// A per-episode sequence of skills: each sampled skill is held for a random
/// number of timesteps before the next one is drawn.
#[derive(Debug, Clone)]
pub struct LatentSchedule {
    skills: Vec<LatentSkill>,
    /// One index into `skills` per timestep.
    indices: Vec<usize>,
}

impl LatentSchedule {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn skill_at(&self, t: usize) -> &LatentSkill {
        &self.skills[self.indices[t]]
    }

    pub fn skills(&self) -> &[LatentSkill] {
        &self.skills
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Builds a schedule covering exactly `horizon` steps. Run lengths are drawn
/// uniformly from `[min_hold, max_hold]`; the final run may be truncated.
pub fn make_schedule<R: Rng>(
    rng: &mut R,
    horizon: usize,
    min_hold: usize,
    max_hold: usize,
    d: usize,
) -> Result<LatentSchedule> {
    if min_hold < 1 || min_hold > max_hold || max_hold > horizon {
        return Err(Error::config(format!(
            "hold bounds [{min_hold}, {max_hold}] invalid for horizon {horizon}"
        )));
    }
    let mut skills = Vec::new();
    let mut indices = Vec::with_capacity(horizon);
    let mut t = 0;
    while t < horizon {
        let hold = rng.gen_range(min_hold..=max_hold);
        let run = hold.min(horizon - t);
        skills.push(sample_prior(rng, d));
        let idx = skills.len() - 1;
        indices.extend(std::iter::repeat(idx).take(run));
        t += run;
    }
    Ok(LatentSchedule { skills, indices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn norm(z: &LatentSkill) -> f64 {
        z.as_slice()
            .iter()
            .map(|v| f64::from(*v) * f64::from(*v))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn normalize_three_four() {
        let z = normalize(&[3.0, 4.0]).unwrap();
        assert!((z.as_slice()[0] - 0.6).abs() < 1e-6);
        assert!((z.as_slice()[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn normalize_unit_input_unchanged() {
        let z = normalize(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(z.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn normalize_near_zero_signals_resample() {
        assert!(matches!(normalize(&[0.0, 0.0]), Err(Error::Usage(_))));
        assert!(matches!(normalize(&[1e-9, 0.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn gaussian_draws_normalize_to_unit_norm() {
        let mut rng = stream(1, "latent", 0, 0);
        for _ in 0..10_000 {
            let raw: Vec<f32> = (0..8).map(|_| rng.gen::<f32>() * 2.0 - 1.0).collect();
            if let Ok(z) = normalize(&raw) {
                assert!((norm(&z) - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn prior_samples_have_unit_norm() {
        let mut rng = stream(2, "latent", 0, 0);
        for _ in 0..1000 {
            let z = sample_prior(&mut rng, 8);
            assert!((norm(&z) - 1.0).abs() < 1e-6);
        }
    }

    /// Symmetry: each component's mean over many draws is near zero.
    #[test]
    fn prior_component_means_near_zero() {
        let mut rng = stream(3, "latent", 0, 0);
        let d = 8;
        let mut sums = vec![0.0f64; d];
        let n = 10_000;
        for _ in 0..n {
            let z = sample_prior(&mut rng, d);
            for (s, v) in sums.iter_mut().zip(z.as_slice()) {
                *s += f64::from(*v);
            }
        }
        for s in sums {
            assert!((s / n as f64).abs() < 0.05);
        }
    }

    /// d = 2: angles must be uniform by a chi-square test over 8 bins
    /// (critical value for p = 0.001 with 7 dof).
    #[test]
    fn prior_angles_uniform_chi_square() {
        let mut rng = stream(4, "latent", 0, 0);
        let n = 10_000;
        let bins = 8;
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let z = sample_prior(&mut rng, 2);
            let angle = f64::from(z.as_slice()[1]).atan2(f64::from(z.as_slice()[0]));
            let frac = (angle + std::f64::consts::PI) / std::f64::consts::TAU;
            let bin = ((frac * bins as f64) as usize).min(bins - 1);
            counts[bin] += 1;
        }
        let expected = n as f64 / bins as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&cnt| {
                let d = cnt as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 24.322, "chi-square {chi2} exceeds p=0.001 critical value");
    }

    #[test]
    fn distance_identities() {
        let mut rng = stream(5, "latent", 0, 0);
        let z = sample_prior(&mut rng, 4);
        let neg = LatentSkill {
            z: z.as_slice().iter().map(|v| -v).collect(),
        };
        assert!(latent_distance(&z, &z) < 1e-6);
        assert!((latent_distance(&z, &neg) - 1.0).abs() < 1e-6);
        let e1 = normalize(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let e2 = normalize(&[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((latent_distance(&e1, &e2) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn distance_is_symmetric_and_bounded() {
        let mut rng = stream(6, "latent", 0, 0);
        for _ in 0..200 {
            let a = sample_prior(&mut rng, 5);
            let b = sample_prior(&mut rng, 5);
            let d1 = latent_distance(&a, &b);
            let d2 = latent_distance(&b, &a);
            assert_eq!(d1, d2);
            assert!((0.0..=1.0).contains(&d1));
        }
    }

    #[test]
    fn schedule_single_hold_spans_episode() {
        let mut rng = stream(7, "latent", 0, 0);
        let sched = make_schedule(&mut rng, 10, 10, 10, 4).unwrap();
        assert_eq!(sched.len(), 10);
        assert_eq!(sched.skills().len(), 1);
        assert!(sched.indices().iter().all(|&i| i == 0));
    }

    #[test]
    fn schedule_run_lengths_respect_bounds() {
        let mut rng = stream(8, "latent", 0, 0);
        for _ in 0..50 {
            let sched = make_schedule(&mut rng, 10, 3, 5, 4).unwrap();
            assert_eq!(sched.len(), 10);
            let mut runs = Vec::new();
            let mut cur = (sched.indices()[0], 1usize);
            for &i in &sched.indices()[1..] {
                if i == cur.0 {
                    cur.1 += 1;
                } else {
                    runs.push(cur.1);
                    cur = (i, 1);
                }
            }
            runs.push(cur.1);
            for (k, &run) in runs.iter().enumerate() {
                if k + 1 < runs.len() {
                    assert!((3..=5).contains(&run), "run {run}");
                } else {
                    assert!(run <= 5);
                }
            }
        }
    }

    #[test]
    fn schedule_paper_scale_bounds() {
        let mut rng = stream(9, "latent", 0, 0);
        let sched = make_schedule(&mut rng, 300, 1, 150, 8).unwrap();
        assert_eq!(sched.len(), 300);
        assert!(sched.skills().len() >= 2);
    }

    #[test]
    fn schedule_reproducible_from_seed() {
        let a = make_schedule(&mut stream(10, "latent", 0, 0), 50, 2, 9, 6).unwrap();
        let b = make_schedule(&mut stream(10, "latent", 0, 0), 50, 2, 9, 6).unwrap();
        assert_eq!(a.indices(), b.indices());
        for (x, y) in a.skills().iter().zip(b.skills()) {
            assert_eq!(x.as_slice(), y.as_slice());
        }
    }

    #[test]
    fn schedule_rejects_bad_bounds() {
        let mut rng = stream(11, "latent", 0, 0);
        assert!(make_schedule(&mut rng, 10, 0, 5, 4).is_err());
        assert!(make_schedule(&mut rng, 10, 6, 5, 4).is_err());
        assert!(make_schedule(&mut rng, 10, 2, 11, 4).is_err());
    }
}
