//! Synthetic scenes and measurement corruption.
//!
//! Randomness is drawn from ChaCha8 generators. A trial seed selects the
//! key; each corruption axis reads its own ChaCha stream so that changing
//! one axis (say, the outlier count) leaves the draws of the others intact:
//!
//! | stream | use                      |
//! |--------|--------------------------|
//! | 0      | scene geometry           |
//! | 1      | Gaussian measurement noise |
//! | 2      | outlier positions/values |
//! | 3      | missing-pair selection   |

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::completion::Mask;
use crate::error::{Result, TdoaError};
use crate::matrix::{from_toas, TdoaMatrix, ToaVector};

/// Speed of sound used throughout the synthetic experiments, m/s.
pub const DEFAULT_SPEED: f64 = 343.313;
pub const DEFAULT_OUTLIER_SIGMA: f64 = 1e-4;
pub const DEFAULT_SENSOR_SIDE: f64 = 1.0;
pub const DEFAULT_SOURCE_SIDE: f64 = 2.0;

const MIN_SENSOR_SEPARATION: f64 = 1e-6;
const MAX_SCENE_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Scene = 0,
    Noise = 1,
    Outliers = 2,
    Mask = 3,
}

/// Generator for one randomness axis of one trial.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Mixes a base seed with an index (splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sensor array, source and propagation speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub sensors: Vec<[f64; 3]>,
    pub source: [f64; 3],
    pub c: f64,
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl Scene {
    pub fn new(sensors: Vec<[f64; 3]>, source: [f64; 3], c: f64) -> Result<Self> {
        let scene = Self { sensors, source, c };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensors.len() < 2 {
            return Err(TdoaError::InvalidInput(format!(
                "need at least 2 sensors, got {}",
                self.sensors.len()
            )));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(TdoaError::InvalidInput(format!(
                "invalid propagation speed {}",
                self.c
            )));
        }
        let finite = |p: &[f64; 3]| p.iter().all(|v| v.is_finite());
        if !self.sensors.iter().all(finite) || !finite(&self.source) {
            return Err(TdoaError::InvalidInput("non-finite coordinate".into()));
        }
        for (i, a) in self.sensors.iter().enumerate() {
            for (j, b) in self.sensors.iter().enumerate().skip(i + 1) {
                if dist(a, b) <= MIN_SENSOR_SEPARATION {
                    return Err(TdoaError::Degenerate(format!(
                        "sensors {} and {} coincide",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.sensors.len()
    }

    /// Times of arrival `||r - s_i|| / c`.
    pub fn toas(&self) -> ToaVector {
        let tau = self
            .sensors
            .iter()
            .map(|s| dist(&self.source, s) / self.c)
            .collect();
        ToaVector::new(tau).expect("validated scene has finite TOAs")
    }
}

/// Sensors uniform in a cube of side `sensor_side`, source uniform in a cube
/// of side `source_side`, both centred at the origin.
pub fn random_scene(n: usize, sensor_side: f64, source_side: f64, seed: u64) -> Result<Scene> {
    if n < 2 {
        return Err(TdoaError::InvalidInput(format!(
            "need at least 2 sensors, got {n}"
        )));
    }
    if !(sensor_side > 0.0 && source_side >= 0.0) {
        return Err(TdoaError::InvalidInput(
            "cube sides must be positive".into(),
        ));
    }
    let mut rng = stream_rng(seed, Stream::Scene);
    let mut point =
        |side: f64| -> [f64; 3] { std::array::from_fn(|_| (rng.random::<f64>() - 0.5) * side) };
    for _ in 0..MAX_SCENE_ATTEMPTS {
        let sensors = (0..n).map(|_| point(sensor_side)).collect();
        let source = point(source_side);
        match Scene::new(sensors, source, DEFAULT_SPEED) {
            Ok(scene) => return Ok(scene),
            Err(TdoaError::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(TdoaError::Degenerate(format!(
        "no valid scene after {MAX_SCENE_ATTEMPTS} attempts"
    )))
}

pub fn ground_truth_tdoa(scene: &Scene) -> TdoaMatrix {
    from_toas(&scene.toas())
}

/// Corruption applied to a ground-truth matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Standard deviation of additive Gaussian noise, seconds.
    pub noise_sigma: f64,
    /// Number of upper-triangle entries replaced by outliers.
    pub outlier_count: usize,
    /// Standard deviation of the replacement draws, seconds.
    pub outlier_sigma: f64,
    /// Fraction of pairs marked missing, in `[0, 1)`.
    pub missing_fraction: f64,
    pub rng_seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            outlier_count: 0,
            outlier_sigma: DEFAULT_OUTLIER_SIGMA,
            missing_fraction: 0.0,
            rng_seed: 0,
        }
    }
}

/// Missing pairs for a fraction of `pairs`, rounded up.
///
/// A small slack absorbs representation error so that e.g. `0.2 * 45`
/// counts as exactly 9.
pub fn missing_count(fraction: f64, pairs: usize) -> usize {
    let raw = fraction * pairs as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(pairs)
}

impl CorruptionSpec {
    fn validate(&self, n: usize) -> Result<()> {
        let pairs = n * (n - 1) / 2;
        if !(self.noise_sigma >= 0.0 && self.outlier_sigma >= 0.0) {
            return Err(TdoaError::InvalidInput(
                "standard deviations must be nonnegative".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return Err(TdoaError::InvalidInput(format!(
                "missing fraction {} outside [0, 1)",
                self.missing_fraction
            )));
        }
        let budget = self.outlier_count + missing_count(self.missing_fraction, pairs);
        if budget > pairs {
            return Err(TdoaError::InvalidInput(format!(
                "{} outliers plus missing pairs exceed the {pairs} available pairs",
                self.outlier_count
            )));
        }
        Ok(())
    }
}

/// Corrupted measurements derived from one ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Corruption {
    pub corrupted: TdoaMatrix,
    pub mask: Mask,
    /// Upper-triangle pairs whose value was replaced.
    pub injected_outliers: Vec<(usize, usize)>,
}

/// Adds noise, replaces outliers and masks missing pairs.
///
/// Outlier and missing positions are drawn independently, so a missing pair
/// may also be an outlier.
pub fn corrupt(truth: &TdoaMatrix, spec: &CorruptionSpec) -> Result<Corruption> {
    let n = truth.n();
    if n < 2 {
        return Err(TdoaError::InvalidInput("need at least 2 sensors".into()));
    }
    spec.validate(n)?;
    let pairs: Vec<(usize, usize)> = truth.upper_pairs().map(|(i, j, _)| (i, j)).collect();

    let mut noise = stream_rng(spec.rng_seed, Stream::Noise);
    let mut corrupted = truth.clone();
    for &(i, j) in &pairs {
        let z: f64 = noise.sample(StandardNormal);
        if spec.noise_sigma > 0.0 {
            corrupted.set_pair(i, j, truth.get(i, j) + spec.noise_sigma * z);
        }
    }

    let mut outlier_rng = stream_rng(spec.rng_seed, Stream::Outliers);
    let mut order = pairs.clone();
    order.shuffle(&mut outlier_rng);
    let mut injected: Vec<(usize, usize)> = order[..spec.outlier_count].to_vec();
    for &(i, j) in &injected {
        let z: f64 = outlier_rng.sample(StandardNormal);
        corrupted.set_pair(i, j, spec.outlier_sigma * z);
    }
    injected.sort_unstable();

    let mut mask_rng = stream_rng(spec.rng_seed, Stream::Mask);
    let mut order = pairs.clone();
    order.shuffle(&mut mask_rng);
    let missing = missing_count(spec.missing_fraction, pairs.len());
    let mask = Mask::from_missing_pairs(n, &order[..missing])?;

    Ok(Corruption {
        corrupted,
        mask,
        injected_outliers: injected,
    })
}

/// One synthetic experiment: scene, truth and its corrupted observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub scene: Scene,
    pub ground_truth: TdoaMatrix,
    pub corrupted: TdoaMatrix,
    pub mask: Mask,
    pub injected_outliers: Vec<(usize, usize)>,
    pub seed: u64,
}

impl Trial {
    pub fn new(scene: Scene, spec: &CorruptionSpec) -> Result<Self> {
        let ground_truth = ground_truth_tdoa(&scene);
        let c = corrupt(&ground_truth, spec)?;
        Ok(Self {
            scene,
            ground_truth,
            corrupted: c.corrupted,
            mask: c.mask,
            injected_outliers: c.injected_outliers,
            seed: spec.rng_seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::is_consistent;

    #[test]
    fn ten_sensors_give_45_pairs() {
        let scene = random_scene(10, 1.0, 2.0, 7).unwrap();
        let m = ground_truth_tdoa(&scene);
        assert_eq!(m.upper_pairs().count(), 45);
        for s in &scene.sensors {
            assert!(s.iter().all(|v| v.abs() <= 0.5));
        }
        assert!(scene.source.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn scenes_are_deterministic() {
        assert_eq!(
            random_scene(6, 1.0, 2.0, 3).unwrap(),
            random_scene(6, 1.0, 2.0, 3).unwrap()
        );
        assert_ne!(
            random_scene(6, 1.0, 2.0, 3).unwrap(),
            random_scene(6, 1.0, 2.0, 4).unwrap()
        );
        assert!(random_scene(1, 1.0, 2.0, 0).is_err());
    }

    #[test]
    fn coincident_sensors_rejected() {
        let r = Scene::new(vec![[0.0; 3], [0.0; 3]], [1.0, 0.0, 0.0], DEFAULT_SPEED);
        assert!(matches!(r, Err(TdoaError::Degenerate(_))));
    }

    #[test]
    fn equidistant_source_gives_zero_matrix() {
        let sensors = vec![
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, -1.0],
        ];
        let scene = Scene::new(sensors, [0.0; 3], DEFAULT_SPEED).unwrap();
        assert!(ground_truth_tdoa(&scene).max_abs() < 1e-18);
    }

    #[test]
    fn source_at_first_sensor() {
        let scene = random_scene(5, 1.0, 2.0, 11).unwrap();
        let scene = Scene::new(scene.sensors.clone(), scene.sensors[0], DEFAULT_SPEED).unwrap();
        let m = ground_truth_tdoa(&scene);
        for j in 1..5 {
            let want = -dist(&scene.sensors[j], &scene.sensors[0]) / DEFAULT_SPEED;
            assert!((m.get(0, j) - want).abs() < 1e-18);
        }
        assert!(is_consistent(&m, 1e-10).consistent);
    }

    #[test]
    fn zero_spec_is_identity() {
        let truth = ground_truth_tdoa(&random_scene(8, 1.0, 2.0, 1).unwrap());
        let c = corrupt(&truth, &CorruptionSpec::default()).unwrap();
        assert_eq!(c.corrupted, truth);
        assert!(c.mask.is_full());
        assert!(c.injected_outliers.is_empty());
    }

    #[test]
    fn outliers_replace_exactly_count_entries() {
        let truth = ground_truth_tdoa(&random_scene(10, 1.0, 2.0, 5).unwrap());
        let base = CorruptionSpec {
            noise_sigma: 1e-6,
            rng_seed: 99,
            ..Default::default()
        };
        let noisy = corrupt(&truth, &base).unwrap().corrupted;
        let c = corrupt(
            &truth,
            &CorruptionSpec {
                outlier_count: 3,
                ..base
            },
        )
        .unwrap();
        let differing: Vec<_> = c
            .corrupted
            .upper_pairs()
            .filter(|&(i, j, v)| v != noisy.get(i, j))
            .map(|(i, j, _)| (i, j))
            .collect();
        assert_eq!(differing, c.injected_outliers);
        assert_eq!(differing.len(), 3);
    }

    #[test]
    fn half_missing_rounds_up() {
        assert_eq!(missing_count(0.5, 45), 23);
        assert_eq!(missing_count(0.2, 45), 9);
        assert_eq!(missing_count(0.0, 45), 0);
        let truth = ground_truth_tdoa(&random_scene(10, 1.0, 2.0, 5).unwrap());
        let spec = CorruptionSpec {
            missing_fraction: 0.5,
            rng_seed: 4,
            ..Default::default()
        };
        assert_eq!(
            corrupt(&truth, &spec).unwrap().mask.missing_pairs().len(),
            23
        );
    }

    #[test]
    fn over_budget_rejected() {
        let truth = ground_truth_tdoa(&random_scene(4, 1.0, 2.0, 5).unwrap());
        let spec = CorruptionSpec {
            outlier_count: 4,
            missing_fraction: 0.5,
            ..Default::default()
        };
        assert!(corrupt(&truth, &spec).is_err());
        let spec = CorruptionSpec {
            missing_fraction: 1.0,
            ..Default::default()
        };
        assert!(corrupt(&truth, &spec).is_err());
    }

    #[test]
    fn seed_derivation_spreads() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(42, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
    }
}
