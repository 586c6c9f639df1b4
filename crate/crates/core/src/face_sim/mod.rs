//! Deterministic stand-in for the robot, camera and face tracker.
//!
//! [`FaceSim`] maps servo frames to 55-dimensional feature vectors (52
//! blendshape coefficients plus three head-pose values). Each coefficient is
//! a saturating logistic response to a block-sparse weighted sum of the
//! servos in one region:
//!
//! ```text
//! g_j(f) = base_j + span_j * s_j(sum_k W_jk f_k)
//! s_j(z) = (σ(κ_j (z - c_j)) - σ(κ_j (zmin_j - c_j))) / (σ(κ_j (zmax_j - c_j)) - σ(κ_j (zmin_j - c_j)))
//! ```
//!
//! where `[zmin_j, zmax_j]` is the reachable range of the weighted sum over
//! `[0, 1]^25`, `c_j` its midpoint and `κ_j = 5 / (zmax_j - zmin_j)`.

mod basis;
mod render;

pub use basis::{
    compose_landmarks, flatten as flatten_landmarks, unflatten as unflatten_landmarks, BlendBasis, Landmarks,
    LANDMARK_COUNT, LANDMARK_DIM,
};
pub use render::{render_image, Image, IMAGE_HEIGHT, IMAGE_WIDTH};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed;
use crate::servo_space::{make_default_layout, Region, ServoFrame, SERVO_DIM};

pub const COEFF_DIM: usize = 52;
pub const POSE_DIM: usize = 3;
pub const FEATURE_DIM: usize = COEFF_DIM + POSE_DIM;

/// Default observation noise for generated training data.
pub const TRAINING_NOISE_SIGMA: f64 = 0.005;

/// Blendshape names in coefficient order.
pub const BLENDSHAPE_NAMES: [&str; COEFF_DIM] = [
    "browDownLeft",
    "browDownRight",
    "browInnerUp",
    "browOuterUpLeft",
    "browOuterUpRight",
    "cheekPuff",
    "cheekSquintLeft",
    "cheekSquintRight",
    "eyeBlinkLeft",
    "eyeBlinkRight",
    "eyeLookDownLeft",
    "eyeLookDownRight",
    "eyeLookInLeft",
    "eyeLookInRight",
    "eyeLookOutLeft",
    "eyeLookOutRight",
    "eyeLookUpLeft",
    "eyeLookUpRight",
    "eyeSquintLeft",
    "eyeSquintRight",
    "eyeWideLeft",
    "eyeWideRight",
    "jawForward",
    "jawLeft",
    "jawOpen",
    "jawRight",
    "mouthClose",
    "mouthDimpleLeft",
    "mouthDimpleRight",
    "mouthFrownLeft",
    "mouthFrownRight",
    "mouthFunnel",
    "mouthLeft",
    "mouthLowerDownLeft",
    "mouthLowerDownRight",
    "mouthPressLeft",
    "mouthPressRight",
    "mouthPucker",
    "mouthRight",
    "mouthRollLower",
    "mouthRollUpper",
    "mouthShrugLower",
    "mouthShrugUpper",
    "mouthSmileLeft",
    "mouthSmileRight",
    "mouthStretchLeft",
    "mouthStretchRight",
    "mouthUpperUpLeft",
    "mouthUpperUpRight",
    "noseSneerLeft",
    "noseSneerRight",
    "tongueOut",
];

/// Dominant servos of each blendshape coefficient (servo indices from the
/// canonical layout).
const DOMINANT: [&[usize]; COEFF_DIM] = [
    &[10],
    &[11],
    &[8, 9],
    &[8],
    &[9],
    &[13, 15],
    &[17],
    &[18],
    &[4],
    &[5],
    &[2],
    &[3],
    &[0],
    &[1],
    &[0],
    &[1],
    &[2],
    &[3],
    &[4, 10],
    &[5, 11],
    &[6],
    &[7],
    &[23, 24],
    &[23],
    &[23, 24],
    &[24],
    &[13, 15],
    &[21],
    &[22],
    &[19],
    &[20],
    &[14, 16],
    &[17, 21],
    &[15],
    &[16],
    &[19, 15],
    &[20, 16],
    &[13, 14],
    &[18, 22],
    &[15, 16],
    &[13, 14],
    &[16, 19],
    &[14, 20],
    &[17],
    &[18],
    &[21, 23],
    &[22, 24],
    &[13],
    &[14],
    &[10, 19],
    &[11, 20],
    &[23, 24],
];

/// Mouth-corner coefficients that also follow the jaw through the
/// corner/jaw linkage.
const JAW_LINKED: [usize; 8] = [27, 28, 29, 30, 43, 44, 35, 36];

const JAW_SERVOS: [usize; 2] = [23, 24];

const HEAD_SERVO: usize = 12;

/// 52 blendshape coefficients followed by yaw, pitch and roll, all in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector([f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn new(values: [f64; FEATURE_DIM]) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!("feature {i} value {v} outside [0, 1]")));
        }
        Ok(FeatureVector(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; FEATURE_DIM] = values
            .try_into()
            .map_err(|_| Error::dim(FEATURE_DIM, values.len(), "feature vector"))?;
        Self::new(arr)
    }

    pub fn from_parts(coeffs: &[f64], pose: &[f64]) -> Result<Self> {
        if coeffs.len() != COEFF_DIM {
            return Err(Error::dim(COEFF_DIM, coeffs.len(), "blendshape coefficients"));
        }
        if pose.len() != POSE_DIM {
            return Err(Error::dim(POSE_DIM, pose.len(), "head pose"));
        }
        let mut v = [0.0; FEATURE_DIM];
        v[..COEFF_DIM].copy_from_slice(coeffs);
        v[COEFF_DIM..].copy_from_slice(pose);
        Self::new(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0[..COEFF_DIM]
    }

    pub fn pose(&self) -> &[f64] {
        &self.0[COEFF_DIM..]
    }
}

#[derive(Debug, Clone, PartialEq)]
struct CoeffResponse {
    /// (servo, weight) terms of the weighted sum.
    terms: Vec<(usize, f64)>,
    base: f64,
    span: f64,
    kappa: f64,
    center: f64,
    sig_lo: f64,
    sig_range: f64,
}

impl CoeffResponse {
    fn new(terms: Vec<(usize, f64)>, base: f64, span: f64) -> Self {
        let zmin: f64 = terms.iter().map(|&(_, w)| w.min(0.0)).sum();
        let zmax: f64 = terms.iter().map(|&(_, w)| w.max(0.0)).sum();
        let kappa = 5.0 / (zmax - zmin);
        let center = 0.5 * (zmin + zmax);
        let sig_lo = logistic(kappa * (zmin - center));
        let sig_hi = logistic(kappa * (zmax - center));
        CoeffResponse {
            terms,
            base,
            span,
            kappa,
            center,
            sig_lo,
            sig_range: sig_hi - sig_lo,
        }
    }

    fn eval(&self, servo: &[f64; SERVO_DIM]) -> f64 {
        let z: f64 = self.terms.iter().map(|&(k, w)| w * servo[k]).sum();
        let s = (logistic(self.kappa * (z - self.center)) - self.sig_lo) / self.sig_range;
        (self.base + self.span * s.clamp(0.0, 1.0)).clamp(0.0, 1.0)
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Seeded servo → feature oracle. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceSim {
    seed: u64,
    noise_sigma: f64,
    responses: Vec<CoeffResponse>,
}

impl FaceSim {
    pub fn new(seed: u64, noise_sigma: f64) -> Result<Self> {
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Argument(format!("noise sigma {noise_sigma} must be >= 0")));
        }
        let layout = make_default_layout();
        let region_of = |s: usize| layout.channels()[s].region;
        let mut rng = seed::item_rng(seed, seed::stream::SIM, 0);

        let mut responses = Vec::with_capacity(COEFF_DIM);
        for (j, dominant) in DOMINANT.iter().enumerate() {
            let mut terms: Vec<(usize, f64)> =
                dominant.iter().map(|&s| (s, rng.random_range(0.5..1.5))).collect();
            let region = region_of(dominant[0]);
            let mut candidates: Vec<usize> = (0..SERVO_DIM)
                .filter(|&s| region_of(s) == region && !dominant.contains(&s))
                .filter(|&s| !(JAW_LINKED.contains(&j) && JAW_SERVOS.contains(&s)))
                .collect();
            for _ in 0..2 {
                if candidates.is_empty() {
                    break;
                }
                let pick = candidates.remove(rng.random_range(0..candidates.len()));
                terms.push((pick, rng.random_range(-0.2..0.2)));
            }
            if JAW_LINKED.contains(&j) {
                terms.retain(|&(s, _)| s != 23);
                terms.push((23, rng.random_range(0.1..0.2)));
            }
            let base = rng.random_range(0.0..0.1);
            let span = rng.random_range(0.7..0.9);
            responses.push(CoeffResponse::new(terms, base, span));
        }
        debug_assert!(region_of(HEAD_SERVO) == Region::Head);

        Ok(FaceSim {
            seed,
            noise_sigma,
            responses,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Noise-free feature response to a servo frame.
    pub fn servo_to_features(&self, frame: &ServoFrame) -> FeatureVector {
        let servo = frame.values();
        let mut v = [0.0; FEATURE_DIM];
        for (out, r) in v.iter_mut().zip(&self.responses) {
            *out = r.eval(servo);
        }
        // Head yaw drives pose[0] affinely; pitch and roll stay at rest.
        v[COEFF_DIM] = 0.5 + 0.5 * servo[HEAD_SERVO];
        v[COEFF_DIM + 1] = 0.5;
        v[COEFF_DIM + 2] = 0.5;
        FeatureVector(v)
    }

    /// Features as the tracker would report them for record `index`: the
    /// noise-free response plus this simulator's observation noise.
    pub fn observe(&self, frame: &ServoFrame, noise_seed: u64) -> FeatureVector {
        let clean = self.servo_to_features(frame);
        add_observation_noise(&clean, self.noise_sigma, noise_seed)
            .expect("sigma validated at construction")
    }

    /// Indices of the coefficients whose dominant servos include `servo`.
    pub fn coefficients_driven_by(&self, servo: usize) -> Vec<usize> {
        DOMINANT
            .iter()
            .enumerate()
            .filter(|(_, d)| d.contains(&servo))
            .map(|(j, _)| j)
            .collect()
    }
}

/// Adds seeded zero-mean Gaussian noise and clamps back into [0, 1].
pub fn add_observation_noise(fv: &FeatureVector, sigma: f64, seed: u64) -> Result<FeatureVector> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Argument(format!("noise sigma {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(*fv);
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    let mut rng = seed::rng(seed);
    let mut v = fv.0;
    for x in v.iter_mut() {
        *x = (*x + normal.sample(&mut rng)).clamp(0.0, 1.0);
    }
    Ok(FeatureVector(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert_policy::{sample_expression, PolicyConfig};

    fn sim() -> FaceSim {
        FaceSim::new(11, 0.0).unwrap()
    }

    #[test]
    fn neutral_maps_to_rest() {
        let s = sim();
        let fv = s.servo_to_features(&ServoFrame::NEUTRAL);
        for (j, r) in s.responses.iter().enumerate() {
            let expected = (r.base + r.span * ((logistic(r.kappa * (0.0 - r.center)) - r.sig_lo) / r.sig_range)).clamp(0.0, 1.0);
            assert_eq!(fv.coeffs()[j], expected);
        }
        assert_eq!(fv.pose(), &[0.5, 0.5, 0.5]);
        assert_eq!(s.servo_to_features(&ServoFrame::NEUTRAL), fv);
    }

    #[test]
    fn brow_raise_monotone_in_dominant_coefficient() {
        let s = sim();
        // browOuterUpLeft is dominated by brow_raise_l (servo 8).
        let j = 3;
        let mut prev = f64::NEG_INFINITY;
        for step in 0..100 {
            let mut v = [0.0; SERVO_DIM];
            v[8] = step as f64 * 0.9 / 99.0;
            let c = s.servo_to_features(&ServoFrame::new(v).unwrap()).coeffs()[j];
            assert!(c > prev, "step {step}: {c} <= {prev}");
            prev = c;
        }
    }

    #[test]
    fn jaw_moves_mouth_corners() {
        let s = sim();
        let mut v = [0.0; SERVO_DIM];
        let rest = s.servo_to_features(&ServoFrame::new(v).unwrap());
        v[23] = 0.8;
        v[24] = 0.8;
        let open = s.servo_to_features(&ServoFrame::new(v).unwrap());
        for j in JAW_LINKED {
            assert!(open.coeffs()[j] > rest.coeffs()[j]);
        }
    }

    #[test]
    fn every_servo_has_a_dominant_coefficient() {
        let s = sim();
        for servo in 0..SERVO_DIM {
            if servo == HEAD_SERVO {
                continue;
            }
            assert!(!s.coefficients_driven_by(servo).is_empty(), "servo {servo}");
        }
    }

    #[test]
    fn range_over_random_frames() {
        let s = sim();
        let mut rng = seed::rng(3);
        for _ in 0..10_000 {
            let mut v = [0.0; SERVO_DIM];
            for x in v.iter_mut() {
                *x = rng.random_range(0.0..=1.0);
            }
            let fv = s.servo_to_features(&ServoFrame::new(v).unwrap());
            assert!(fv.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn lipschitz_estimate_below_five() {
        let s = sim();
        let mut rng = seed::rng(5);
        let mut k_max: f64 = 0.0;
        for _ in 0..5_000 {
            let mut a = [0.0; SERVO_DIM];
            for x in a.iter_mut() {
                *x = rng.random_range(0.0..=1.0);
            }
            let mut b = a;
            for x in b.iter_mut() {
                *x = (*x + rng.random_range(-0.01f64..0.01)).clamp(0.0, 1.0);
            }
            let fa = ServoFrame::new(a).unwrap();
            let fb = ServoFrame::new(b).unwrap();
            let dx = fa.max_abs_diff(&fb);
            if dx == 0.0 {
                continue;
            }
            let dy = s
                .servo_to_features(&fa)
                .as_slice()
                .iter()
                .zip(s.servo_to_features(&fb).as_slice())
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            k_max = k_max.max(dy / dx);
        }
        assert!(k_max < 5.0, "estimated Lipschitz constant {k_max}");
    }

    #[test]
    fn distinct_valid_frames_have_distinct_features() {
        let s = sim();
        let layout = make_default_layout();
        let cfg = PolicyConfig::new(21);
        let mut checked = 0;
        let mut i = 0;
        while checked < 1000 {
            let a = sample_expression(&cfg, 2 * i, &layout);
            let b = sample_expression(&cfg, 2 * i + 1, &layout);
            i += 1;
            if a.max_abs_diff(&b) <= 0.1 {
                continue;
            }
            let fa = s.servo_to_features(&a);
            let fb = s.servo_to_features(&b);
            let d = fa.as_slice().iter().zip(fb.as_slice()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(d > 0.0);
            checked += 1;
        }
    }

    #[test]
    fn noise_contract() {
        let s = sim();
        let fv = s.servo_to_features(&ServoFrame::NEUTRAL);
        assert_eq!(add_observation_noise(&fv, 0.0, 9).unwrap(), fv);
        assert!(add_observation_noise(&fv, -0.1, 9).is_err());
        assert_eq!(add_observation_noise(&fv, 0.01, 9).unwrap(), add_observation_noise(&fv, 0.01, 9).unwrap());

        let sigma = 0.01;
        for draw in 0..1000 {
            let noisy = add_observation_noise(&fv, sigma, draw).unwrap();
            let max = noisy.as_slice().iter().zip(fv.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(max <= 5.0 * sigma, "draw {draw}: {max}");
        }
    }

    #[test]
    fn feature_vector_validation() {
        assert!(FeatureVector::from_slice(&[0.5; 54]).is_err());
        assert!(FeatureVector::from_slice(&[1.5; 55]).is_err());
        assert!(FeatureVector::from_parts(&[0.1; 52], &[0.5; 3]).is_ok());
    }
}
