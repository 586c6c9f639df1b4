//! Rule-driven random expression sampler.
//!
//! Every rule of the layout is enforced on every sample. Randomness lives in
//! which mode each mutually exclusive group takes (a rest mode with
//! probability [`PolicyConfig::rest_probability`], otherwise uniform over the
//! actions) and in the magnitudes, drawn uniformly within the channel
//! limits intersected with the region's magnitude range.
//!
//! Sample `i` is a pure function of `(base_seed, i)`; its generator is keyed
//! by `seed::mix(seed::mix(base_seed, EXPRESSION), i)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, DatasetHeader, Record};
use crate::error::{Error, Result};
use crate::face_sim::{compose_landmarks, flatten_landmarks, BlendBasis, FaceSim};
use crate::parallel::Exec;
use crate::seed;
use crate::servo_space::{Region, ServoFrame, ServoLayout, Trajectory, ACTIVE_THRESHOLD, SERVO_DIM};

/// Largest per-frame change of any channel inside a generated trajectory.
pub const RAMP_BOUND: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeRange {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub base_seed: u64,
    pub eye: MagnitudeRange,
    pub eyelid: MagnitudeRange,
    pub brow: MagnitudeRange,
    pub head: MagnitudeRange,
    pub mouth: MagnitudeRange,
    /// Frames held at the peak of a neutral-peak-neutral trajectory.
    pub trajectory_peak_frames: usize,
    pub rest_probability: f64,
    /// Smallest magnitude of a selected (non-rest) action.
    pub min_active: f64,
}

impl PolicyConfig {
    pub fn new(base_seed: u64) -> Self {
        let full = MagnitudeRange { lo: 0.0, hi: 1.0 };
        PolicyConfig {
            base_seed,
            eye: full,
            eyelid: full,
            brow: full,
            head: full,
            mouth: full,
            trajectory_peak_frames: 1,
            rest_probability: 0.25,
            min_active: 0.1,
        }
    }

    pub fn with_seed(&self, base_seed: u64) -> Self {
        PolicyConfig {
            base_seed,
            ..self.clone()
        }
    }

    fn range(&self, region: Region) -> MagnitudeRange {
        match region {
            Region::Eye => self.eye,
            Region::Eyelid => self.eyelid,
            Region::Brow => self.brow,
            Region::Head => self.head,
            Region::Mouth => self.mouth,
        }
    }

    pub fn validate(&self, layout: &ServoLayout) -> Result<()> {
        for region in [Region::Eye, Region::Eyelid, Region::Brow, Region::Head, Region::Mouth] {
            let r = self.range(region);
            if !(0.0 <= r.lo && r.lo <= r.hi && r.hi <= 1.0) {
                return Err(Error::Argument(format!("{region} magnitude range [{}, {}] invalid", r.lo, r.hi)));
            }
            for (i, c) in layout.channels().iter().enumerate().filter(|(_, c)| c.region == region) {
                if r.hi.min(c.hi) <= r.lo.max(c.lo) {
                    return Err(Error::Argument(format!(
                        "{region} magnitude range does not overlap limits of channel {i}"
                    )));
                }
                if r.hi.min(c.hi) <= self.min_active.max(ACTIVE_THRESHOLD) {
                    return Err(Error::Argument(format!("channel {i} cannot reach an active magnitude")));
                }
            }
        }
        if !(0.0..1.0).contains(&self.rest_probability) {
            return Err(Error::Argument("rest probability must lie in [0, 1)".into()));
        }
        if !(self.min_active > ACTIVE_THRESHOLD && self.min_active < 1.0) {
            return Err(Error::Argument(format!("min_active must exceed {ACTIVE_THRESHOLD}")));
        }
        if self.trajectory_peak_frames == 0 {
            return Err(Error::Argument("trajectory_peak_frames must be >= 1".into()));
        }
        Ok(())
    }
}

/// The sampled modes of one expression; used by coverage statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeChoice {
    pub rule: u8,
    /// Index into the rule's exclusive groups, `None` for the rest mode.
    pub group: Option<usize>,
}

struct Sampler<'a> {
    config: &'a PolicyConfig,
    layout: &'a ServoLayout,
    rng: ChaCha8Rng,
    values: [f64; SERVO_DIM],
    assigned: [bool; SERVO_DIM],
}

impl Sampler<'_> {
    fn bounds(&self, channel: usize) -> (f64, f64) {
        let c = &self.layout.channels()[channel];
        let r = self.config.range(c.region);
        (r.lo.max(c.lo), r.hi.min(c.hi))
    }

    fn uniform(&mut self, channel: usize, floor: f64) -> f64 {
        let (lo, hi) = self.bounds(channel);
        let lo = lo.max(floor);
        self.rng.random_range(lo..=hi)
    }

    fn set(&mut self, channels: &[usize], value: f64) {
        for &c in channels {
            self.values[c] = value;
            self.assigned[c] = true;
        }
    }

    fn run(mut self) -> ([f64; SERVO_DIM], Vec<ModeChoice>) {
        let mut modes = Vec::new();
        for rule in self.layout.rules() {
            if !rule.exclusive.is_empty() {
                let pick = if self.rng.random_bool(self.config.rest_probability) {
                    None
                } else {
                    Some(self.rng.random_range(0..rule.exclusive.len()))
                };
                for (g, group) in rule.exclusive.iter().enumerate() {
                    if Some(g) != pick {
                        self.set(group, 0.0);
                        continue;
                    }
                    if rule.independent.contains(group) {
                        for &c in group {
                            let v = self.uniform(c, self.config.min_active);
                            self.set(&[c], v);
                        }
                    } else {
                        let v = self.uniform(group[0], self.config.min_active);
                        self.set(group, v);
                    }
                }
                modes.push(ModeChoice { rule: rule.id, group: pick });
            }
            for group in &rule.sync {
                if group.iter().all(|&c| self.assigned[c]) {
                    continue;
                }
                let v = self.uniform(group[0], 0.0);
                self.set(group, v);
            }
            for &c in &rule.limits {
                if !self.assigned[c] {
                    let v = self.uniform(c, 0.0);
                    self.set(&[c], v);
                }
            }
        }
        for c in 0..SERVO_DIM {
            if !self.assigned[c] {
                let v = self.uniform(c, 0.0);
                self.set(&[c], v);
            }
        }
        (self.values, modes)
    }
}

fn sample_with_modes(config: &PolicyConfig, index: u64, layout: &ServoLayout) -> (ServoFrame, Vec<ModeChoice>) {
    let sampler = Sampler {
        config,
        layout,
        rng: seed::item_rng(config.base_seed, seed::stream::EXPRESSION, index),
        values: [0.0; SERVO_DIM],
        assigned: [false; SERVO_DIM],
    };
    let (values, modes) = sampler.run();
    (ServoFrame::from_array_unchecked(values), modes)
}

/// Samples expression `index` of the stream rooted at `config.base_seed`.
pub fn sample_expression(config: &PolicyConfig, index: u64, layout: &ServoLayout) -> ServoFrame {
    sample_with_modes(config, index, layout).0
}

/// Like [`sample_expression`], also reporting the mode picked for each
/// exclusive rule.
pub fn sample_expression_modes(config: &PolicyConfig, index: u64, layout: &ServoLayout) -> (ServoFrame, Vec<ModeChoice>) {
    sample_with_modes(config, index, layout)
}

/// Policy whose sample `i` is the peak of trajectory `i`.
pub fn trajectory_peak_config(config: &PolicyConfig) -> PolicyConfig {
    config.with_seed(seed::mix(config.base_seed, seed::stream::TRAJECTORY))
}

/// Neutral → peak → neutral. The amplitude ramps linearly up to the peak,
/// holds for `trajectory_peak_frames`, then ramps linearly back down; the
/// first and last frames are exactly neutral. If the ramps are too short to
/// keep every per-frame change within [`RAMP_BOUND`], the peak is scaled
/// down uniformly (this only happens for very short trajectories).
pub fn sample_trajectory(
    config: &PolicyConfig,
    index: u64,
    length: usize,
    layout: &ServoLayout,
) -> Result<Trajectory<ServoFrame>> {
    let hold = config.trajectory_peak_frames.max(1);
    if length < 3 || length < hold + 2 {
        return Err(Error::Argument(format!(
            "trajectory length {length} too short (needs >= max(3, peak frames + 2))"
        )));
    }
    let peak = sample_expression(&trajectory_peak_config(config), index, layout);

    let up = (length - hold) / 2;
    let top_end = up + hold - 1;
    let down = length - 1 - top_end;
    let amplitude = |k: usize| -> f64 {
        if k <= up {
            k as f64 / up as f64
        } else if k <= top_end {
            1.0
        } else {
            (length - 1 - k) as f64 / down as f64
        }
    };
    let max_peak = peak.values().iter().copied().fold(0.0, f64::max);
    let steepest = max_peak / up.min(down) as f64;
    let scale = if steepest > RAMP_BOUND { RAMP_BOUND / steepest } else { 1.0 };

    let frames = (0..length)
        .map(|k| {
            let a = amplitude(k) * scale;
            let mut v = [0.0; SERVO_DIM];
            for (o, p) in v.iter_mut().zip(peak.values()) {
                *o = p * a;
            }
            ServoFrame::from_array_unchecked(v)
        })
        .collect();
    Trajectory::new(frames)
}

/// Options for [`generate_dataset`].
#[derive(Debug, Clone, Copy)]
pub struct GenerateOptions<'a> {
    /// When set, each record also stores landmarks composed from its
    /// observed features.
    pub landmarks: Option<&'a BlendBasis>,
    pub exec: Exec,
}

impl Default for GenerateOptions<'_> {
    fn default() -> Self {
        GenerateOptions {
            landmarks: None,
            exec: Exec::default(),
        }
    }
}

/// Seed of the observation noise applied to record `index`.
pub fn record_noise_seed(base_seed: u64, index: u64) -> u64 {
    seed::mix(seed::mix(base_seed, seed::stream::NOISE), index)
}

/// Builds record `index` on its own; used by [`generate_dataset`].
pub fn generate_record(
    config: &PolicyConfig,
    index: u64,
    sim: &FaceSim,
    layout: &ServoLayout,
    landmarks: Option<&BlendBasis>,
) -> Record {
    let servo = sample_expression(config, index, layout);
    let features = sim.observe(&servo, record_noise_seed(config.base_seed, index));
    let landmarks = landmarks.map(|b| flatten_landmarks(&compose_landmarks(&features, b)));
    Record {
        index,
        servo,
        features,
        landmarks,
    }
}

/// `n` records pairing sampled servo frames with the simulator's observed
/// features. Records are independent, so the result does not depend on the
/// execution strategy.
pub fn generate_dataset(
    config: &PolicyConfig,
    n: usize,
    sim: &FaceSim,
    layout: &ServoLayout,
    options: GenerateOptions<'_>,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Argument("dataset size must be >= 1".into()));
    }
    config.validate(layout)?;
    let records = options
        .exec
        .map(n, |i| generate_record(config, i as u64, sim, layout, options.landmarks));
    let header = DatasetHeader {
        format: crate::dataset::FORMAT_VERSION,
        base_seed: config.base_seed,
        sim_seed: sim.seed(),
        noise_sigma: sim.noise_sigma(),
        count: n,
    };
    Dataset::new(header, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::servo_space::{check_constraints, make_default_layout, GENERATION_TOL};

    #[test]
    fn samples_respect_rules() {
        let layout = make_default_layout();
        let cfg = PolicyConfig::new(99);
        for i in 0..2_000 {
            let f = sample_expression(&cfg, i, &layout);
            assert!(check_constraints(&f, &layout, GENERATION_TOL).is_empty(), "sample {i}: {f:?}");
            assert_eq!(f[4], f[5]);
            let raise = f[8] > ACTIVE_THRESHOLD || f[9] > ACTIVE_THRESHOLD;
            let frown = f[10] > ACTIVE_THRESHOLD || f[11] > ACTIVE_THRESHOLD;
            assert!(!(raise && frown));
            for c in 0..SERVO_DIM {
                let (lo, hi) = layout.limits(c);
                assert!(f[c] >= lo && f[c] <= hi);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_per_index() {
        let layout = make_default_layout();
        let cfg = PolicyConfig::new(5);
        assert_eq!(sample_expression(&cfg, 17, &layout), sample_expression(&cfg, 17, &layout));
        assert_ne!(sample_expression(&cfg, 17, &layout), sample_expression(&cfg, 18, &layout));
        assert_ne!(sample_expression(&cfg, 17, &layout), sample_expression(&cfg.with_seed(6), 17, &layout));
    }

    #[test]
    fn corners_up_may_differ() {
        let layout = make_default_layout();
        let cfg = PolicyConfig::new(1);
        let asym = (0..500)
            .map(|i| sample_expression(&cfg, i, &layout))
            .any(|f| f[21] > ACTIVE_THRESHOLD && f[21] != f[22]);
        assert!(asym);
    }

    #[test]
    fn trajectory_shape() {
        let layout = make_default_layout();
        let cfg = PolicyConfig::new(3);
        for i in 0..50 {
            let t = sample_trajectory(&cfg, i, 30, &layout).unwrap();
            let frames = t.frames();
            assert_eq!(frames.len(), 30);
            assert_eq!(frames[0], ServoFrame::NEUTRAL);
            assert_eq!(frames[29], ServoFrame::NEUTRAL);
            let peak = sample_expression(&trajectory_peak_config(&cfg), i, &layout);
            assert_eq!(frames[14], peak);
            for w in frames.windows(2) {
                assert!(w[0].max_abs_diff(&w[1]) <= RAMP_BOUND + 1e-15);
            }
            for f in frames {
                assert!(check_constraints(f, &layout, GENERATION_TOL).is_empty());
            }
        }
    }

    #[test]
    fn short_trajectories() {
        let layout = make_default_layout();
        let cfg = PolicyConfig::new(3);
        assert!(sample_trajectory(&cfg, 0, 2, &layout).is_err());
        let t = sample_trajectory(&cfg, 0, 3, &layout).unwrap();
        for w in t.frames().windows(2) {
            assert!(w[0].max_abs_diff(&w[1]) <= RAMP_BOUND + 1e-15);
        }
        let mut held = cfg.clone();
        held.trajectory_peak_frames = 4;
        assert!(sample_trajectory(&held, 0, 5, &layout).is_err());
        let t = sample_trajectory(&held, 0, 30, &layout).unwrap();
        assert_eq!(t.frames()[13], t.frames()[16]);
    }

    #[test]
    fn config_validation() {
        let layout = make_default_layout();
        let mut cfg = PolicyConfig::new(0);
        cfg.brow = MagnitudeRange { lo: 0.0, hi: 0.04 };
        assert!(cfg.validate(&layout).is_err());
        let mut cfg = PolicyConfig::new(0);
        cfg.rest_probability = 1.0;
        assert!(cfg.validate(&layout).is_err());
        assert!(PolicyConfig::new(0).validate(&layout).is_ok());
    }

    #[test]
    fn records_are_order_independent() {
        let layout = make_default_layout();
        let cfg = PolicyConfig::new(12);
        let sim = FaceSim::new(4, 0.005).unwrap();
        let ds = generate_dataset(&cfg, 40, &sim, &layout, GenerateOptions::default()).unwrap();
        let lone = generate_record(&cfg, 37, &sim, &layout, None);
        assert_eq!(ds.records()[37], lone);
        let seq = generate_dataset(
            &cfg,
            40,
            &sim,
            &layout,
            GenerateOptions {
                exec: Exec::Sequential,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(seq, ds);
        assert!(generate_dataset(&cfg, 0, &sim, &layout, GenerateOptions::default()).is_err());
    }
}
