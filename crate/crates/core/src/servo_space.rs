//! The 25-channel servo layout, frame types and the expression constraint
//! validator.
//!
//! Channel order (fixed for the default layout):
//!
//! | index | channel                  | region |
//! |-------|--------------------------|--------|
//! | 0–1   | eye horizontal L/R       | eye    |
//! | 2–3   | eye vertical L/R         | eye    |
//! | 4–5   | blink L/R                | eyelid |
//! | 6–7   | eye opening L/R          | eyelid |
//! | 8–9   | brow raise L/R           | brow   |
//! | 10–11 | brow frown L/R           | brow   |
//! | 12    | head yaw                 | head   |
//! | 13–14 | upper lip 1/2            | mouth  |
//! | 15–16 | lower lip 1/2            | mouth  |
//! | 17–18 | smile corner L/R         | mouth  |
//! | 19–20 | sad corner L/R           | mouth  |
//! | 21–22 | corner up L/R            | mouth  |
//! | 23–24 | jaw 1/2 (coupled)        | mouth  |

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SERVO_DIM: usize = 25;

/// A channel is "active" when it sits more than this far above neutral.
pub const ACTIVE_THRESHOLD: f64 = 0.05;

/// Sync tolerance used when validating generated data.
pub const GENERATION_TOL: f64 = 1e-6;

/// Sync tolerance used when validating model outputs.
pub const MODEL_TOL: f64 = 0.02;

/// Frame rate of every trajectory, in frames per second.
pub const FRAME_RATE_HZ: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Eye,
    Eyelid,
    Brow,
    Head,
    Mouth,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Region::Eye => "eye",
            Region::Eyelid => "eyelid",
            Region::Brow => "brow",
            Region::Head => "head",
            Region::Mouth => "mouth",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub region: Region,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymPair {
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coupling {
    pub members: Vec<usize>,
}

/// One validator rule. A rule is violated when any of its checks fails:
/// every `sync` group must hold equal values (within tolerance), at most one
/// `exclusive` group may contain an active channel, and every `limits`
/// channel must lie inside its interval. `independent` lists exclusive
/// groups whose members the sampler may drive with different values; it is
/// not a check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintRule {
    pub id: u8,
    pub name: String,
    #[serde(default)]
    pub sync: Vec<Vec<usize>>,
    #[serde(default)]
    pub exclusive: Vec<Vec<usize>>,
    #[serde(default)]
    pub limits: Vec<usize>,
    #[serde(default)]
    pub independent: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServoLayout {
    #[serde(rename = "channel")]
    channels: Vec<Channel>,
    #[serde(rename = "sym_pair", default)]
    sym_pairs: Vec<SymPair>,
    #[serde(rename = "coupling", default)]
    couplings: Vec<Coupling>,
    #[serde(rename = "rule", default)]
    rules: Vec<ConstraintRule>,
}

fn ch(name: &str, region: Region, hi: f64) -> Channel {
    Channel {
        name: name.to_string(),
        region,
        lo: 0.0,
        hi,
    }
}

fn rule(id: u8, name: &str) -> ConstraintRule {
    ConstraintRule {
        id,
        name: name.to_string(),
        sync: Vec::new(),
        exclusive: Vec::new(),
        limits: Vec::new(),
        independent: Vec::new(),
    }
}

/// The canonical layout. Deterministic; every call returns the same value.
pub fn make_default_layout() -> ServoLayout {
    use Region::*;
    let channels = vec![
        ch("eye_horizontal_l", Eye, 1.0),
        ch("eye_horizontal_r", Eye, 1.0),
        ch("eye_vertical_l", Eye, 1.0),
        ch("eye_vertical_r", Eye, 1.0),
        ch("blink_l", Eyelid, 1.0),
        ch("blink_r", Eyelid, 1.0),
        ch("eye_open_l", Eyelid, 1.0),
        ch("eye_open_r", Eyelid, 1.0),
        ch("brow_raise_l", Brow, 0.9),
        ch("brow_raise_r", Brow, 0.9),
        ch("brow_frown_l", Brow, 0.9),
        ch("brow_frown_r", Brow, 0.9),
        ch("head_yaw", Head, 1.0),
        ch("upper_lip_1", Mouth, 0.8),
        ch("upper_lip_2", Mouth, 0.8),
        ch("lower_lip_1", Mouth, 0.8),
        ch("lower_lip_2", Mouth, 0.8),
        ch("smile_l", Mouth, 1.0),
        ch("smile_r", Mouth, 1.0),
        ch("sad_l", Mouth, 0.9),
        ch("sad_r", Mouth, 0.9),
        ch("corner_up_l", Mouth, 0.8),
        ch("corner_up_r", Mouth, 0.8),
        ch("jaw_1", Mouth, 0.85),
        ch("jaw_2", Mouth, 0.85),
    ];
    let sym_pairs = [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9), (10, 11), (17, 18), (19, 20), (21, 22)]
        .into_iter()
        .map(|(left, right)| SymPair { left, right })
        .collect();
    let couplings = vec![Coupling {
        members: vec![23, 24],
    }];

    let mut rules = Vec::with_capacity(7);
    for (id, name, pair) in [
        (1, "eye_horizontal_sync", [0, 1]),
        (2, "eye_vertical_sync", [2, 3]),
        (3, "blink_sync", [4, 5]),
        (4, "eye_opening_sync", [6, 7]),
    ] {
        let mut r = rule(id, name);
        r.sync.push(pair.to_vec());
        rules.push(r);
    }
    let mut brow = rule(5, "single_brow_action");
    brow.exclusive = vec![vec![8, 9], vec![10, 11]];
    rules.push(brow);
    let mut head = rule(6, "head_within_limits");
    head.limits = vec![12];
    rules.push(head);
    let mut mouth = rule(7, "mouth_actions");
    mouth.exclusive = vec![vec![17, 18], vec![19, 20], vec![21, 22]];
    mouth.sync = vec![vec![17, 18], vec![19, 20], vec![23, 24]];
    mouth.independent = vec![vec![21, 22]];
    rules.push(mouth);

    ServoLayout {
        channels,
        sym_pairs,
        couplings,
        rules,
    }
}

impl ServoLayout {
    /// Builds a layout from parts, validating every structural invariant.
    pub fn new(
        channels: Vec<Channel>,
        sym_pairs: Vec<SymPair>,
        couplings: Vec<Coupling>,
        rules: Vec<ConstraintRule>,
    ) -> Result<Self> {
        let layout = ServoLayout {
            channels,
            sym_pairs,
            couplings,
            rules,
        };
        layout.validate()?;
        Ok(layout)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Argument(format!("layout: {msg}")));
        if self.channels.len() != SERVO_DIM {
            return bad(format!("expected {SERVO_DIM} channels, found {}", self.channels.len()));
        }
        for (i, c) in self.channels.iter().enumerate() {
            if !(c.lo.is_finite() && c.hi.is_finite() && 0.0 <= c.lo && c.lo < c.hi && c.hi <= 1.0) {
                return bad(format!("channel {i} ({}) has invalid limits [{}, {}]", c.name, c.lo, c.hi));
            }
        }
        let count = |r: Region| self.channels.iter().filter(|c| c.region == r).count();
        let upper_face = count(Region::Eye) + count(Region::Eyelid) + count(Region::Brow);
        if count(Region::Mouth) != 12 || count(Region::Head) != 1 || upper_face != 12 {
            return bad("region split must be 12 mouth, 1 head, 12 eye/eyelid/brow".into());
        }

        let mut seen = BTreeSet::new();
        for p in &self.sym_pairs {
            for idx in [p.left, p.right] {
                if idx >= SERVO_DIM {
                    return bad(format!("symmetric pair index {idx} out of range"));
                }
                if !seen.insert(idx) {
                    return bad(format!("channel {idx} appears in more than one symmetric pair"));
                }
            }
            let (a, b) = (&self.channels[p.left], &self.channels[p.right]);
            if a.lo != b.lo || a.hi != b.hi {
                return bad(format!("symmetric pair ({}, {}) has unequal limits", p.left, p.right));
            }
        }
        let mut seen = BTreeSet::new();
        for c in &self.couplings {
            if c.members.len() < 2 {
                return bad("coupling group needs at least two members".into());
            }
            for &idx in &c.members {
                if idx >= SERVO_DIM || !seen.insert(idx) {
                    return bad(format!("coupling index {idx} is out of range or repeated"));
                }
            }
        }

        let mut ids = BTreeSet::new();
        for r in &self.rules {
            if !ids.insert(r.id) {
                return bad(format!("duplicate rule id {}", r.id));
            }
            for groups in [&r.sync, &r.exclusive] {
                let mut within = BTreeSet::new();
                for g in groups.iter() {
                    for &idx in g {
                        if idx >= SERVO_DIM || !within.insert(idx) {
                            return bad(format!("rule {} references index {idx} twice or out of range", r.id));
                        }
                    }
                }
            }
            for g in &r.sync {
                let first = &self.channels[g[0]];
                if g.iter().any(|&i| self.channels[i].lo != first.lo || self.channels[i].hi != first.hi) {
                    return bad(format!("rule {} sync group has unequal limits", r.id));
                }
            }
            if r.limits.iter().any(|&i| i >= SERVO_DIM) {
                return bad(format!("rule {} limit index out of range", r.id));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn sym_pairs(&self) -> &[SymPair] {
        &self.sym_pairs
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn rules(&self) -> &[ConstraintRule] {
        &self.rules
    }

    pub fn limits(&self, index: usize) -> (f64, f64) {
        let c = &self.channels[index];
        (c.lo, c.hi)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    /// Symmetric pairs whose channels belong to one of `regions`.
    pub fn pairs_in(&self, regions: &[Region]) -> Vec<SymPair> {
        self.sym_pairs
            .iter()
            .copied()
            .filter(|p| regions.contains(&self.channels[p.left].region))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("layout is always serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let layout: ServoLayout =
            toml::from_str(text).map_err(|e| Error::Format(format!("layout: {e}")))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, self.to_toml().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// 25 normalized servo commands, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoFrame([f64; SERVO_DIM]);

impl ServoFrame {
    pub const NEUTRAL: ServoFrame = ServoFrame([0.0; SERVO_DIM]);

    pub fn new(values: [f64; SERVO_DIM]) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!("servo {i} value {v} outside [0, 1]")));
        }
        Ok(ServoFrame(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; SERVO_DIM] = values
            .try_into()
            .map_err(|_| Error::dim(SERVO_DIM, values.len(), "servo frame"))?;
        Self::new(arr)
    }

    pub(crate) fn from_array_unchecked(values: [f64; SERVO_DIM]) -> Self {
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        ServoFrame(values)
    }

    pub fn values(&self) -> &[f64; SERVO_DIM] {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs_diff(&self, other: &ServoFrame) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for ServoFrame {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Clamps raw (possibly out-of-range) servo values into each channel's limits.
pub fn clamp_frame(values: &[f64], layout: &ServoLayout) -> Result<ServoFrame> {
    if values.len() != SERVO_DIM {
        return Err(Error::dim(SERVO_DIM, values.len(), "servo frame"));
    }
    let mut out = [0.0; SERVO_DIM];
    for (i, (o, &v)) in out.iter_mut().zip(values).enumerate() {
        let (lo, hi) = layout.limits(i);
        // NaN maps to the lower limit.
        *o = if v.is_nan() { lo } else { v.clamp(lo, hi) };
    }
    Ok(ServoFrame(out))
}

/// Returns the ids of all violated rules, in rule order. Empty means valid.
pub fn check_constraints(frame: &ServoFrame, layout: &ServoLayout, tol: f64) -> Vec<u8> {
    let v = frame.values();
    let active = |group: &Vec<usize>| group.iter().any(|&i| v[i] > ACTIVE_THRESHOLD);
    layout
        .rules
        .iter()
        .filter(|r| {
            let sync_broken = r
                .sync
                .iter()
                .any(|g| g.iter().any(|&i| (v[i] - v[g[0]]).abs() > tol));
            let exclusive_broken = r.exclusive.iter().filter(|g| active(g)).count() > 1;
            let limits_broken = r.limits.iter().any(|&i| {
                let (lo, hi) = layout.limits(i);
                v[i] < lo - tol || v[i] > hi + tol
            });
            sync_broken || exclusive_broken || limits_broken
        })
        .map(|r| r.id)
        .collect()
}

/// A fixed-rate sequence of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    frames: Vec<T>,
}

impl<T> Trajectory<T> {
    pub fn new(frames: Vec<T>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Argument("trajectory must contain at least one frame".into()));
        }
        Ok(Trajectory { frames })
    }

    pub fn frames(&self) -> &[T] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn rate_hz(&self) -> f64 {
        FRAME_RATE_HZ
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Trajectory<U> {
        Trajectory {
            frames: self.frames.iter().map(f).collect(),
        }
    }

    pub fn into_frames(self) -> Vec<T> {
        self.frames
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_shape() {
        let l = make_default_layout();
        assert_eq!(l.channels().len(), 25);
        let mouth = l.channels().iter().filter(|c| c.region == Region::Mouth).count();
        assert_eq!(mouth, 12);
        assert_eq!(l.rules().len(), 7);
        assert_eq!(make_default_layout(), l);
        l.validate().unwrap();
    }

    #[test]
    fn clamp_cases() {
        let l = make_default_layout();
        let mut raw = [0.3; SERVO_DIM];
        let f = clamp_frame(&raw, &l).unwrap();
        assert_eq!(f.values(), &raw);
        raw[0] = 1.5;
        raw[1] = -0.2;
        raw[8] = 1.5;
        let f = clamp_frame(&raw, &l).unwrap();
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], l.limits(1).0);
        assert_eq!(f[8], 0.9);
        assert!(matches!(clamp_frame(&raw[..24], &l), Err(Error::Dimension(_))));
    }

    #[test]
    fn violations_by_construction() {
        let l = make_default_layout();
        assert!(check_constraints(&ServoFrame::NEUTRAL, &l, GENERATION_TOL).is_empty());

        let mut v = [0.0; SERVO_DIM];
        v[0] = 0.2;
        v[1] = 0.8;
        assert_eq!(check_constraints(&ServoFrame::new(v).unwrap(), &l, GENERATION_TOL), vec![1]);

        let mut v = [0.0; SERVO_DIM];
        v[8] = 0.5;
        v[9] = 0.5;
        v[10] = 0.3;
        assert_eq!(check_constraints(&ServoFrame::new(v).unwrap(), &l, GENERATION_TOL), vec![5]);

        let mut v = [0.0; SERVO_DIM];
        v[17] = 0.4;
        v[18] = 0.4;
        v[21] = 0.2;
        assert_eq!(check_constraints(&ServoFrame::new(v).unwrap(), &l, GENERATION_TOL), vec![7]);

        let mut v = [0.0; SERVO_DIM];
        v[23] = 0.4;
        v[24] = 0.1;
        assert_eq!(check_constraints(&ServoFrame::new(v).unwrap(), &l, GENERATION_TOL), vec![7]);

        // corners-up is independent left/right
        let mut v = [0.0; SERVO_DIM];
        v[21] = 0.7;
        v[22] = 0.1;
        assert!(check_constraints(&ServoFrame::new(v).unwrap(), &l, GENERATION_TOL).is_empty());
    }

    #[test]
    fn below_threshold_is_not_active() {
        let l = make_default_layout();
        let mut v = [0.0; SERVO_DIM];
        v[8] = 0.5;
        v[9] = 0.5;
        v[10] = 0.04;
        v[11] = 0.04;
        assert!(check_constraints(&ServoFrame::new(v).unwrap(), &l, GENERATION_TOL).is_empty());
    }

    #[test]
    fn toml_round_trip_and_rejection() {
        let l = make_default_layout();
        let text = l.to_toml();
        assert!(text.contains("name = \"eye_horizontal_l\""));
        assert!(text.contains("region = \"eye\""));
        assert_eq!(ServoLayout::from_toml(&text).unwrap(), l);

        let broken = text.replacen("hi = 1.0", "hi = 1.5", 1);
        assert!(ServoLayout::from_toml(&broken).is_err());
    }

    #[test]
    fn overlapping_pairs_rejected() {
        let l = make_default_layout();
        let mut pairs = l.sym_pairs().to_vec();
        pairs.push(SymPair { left: 0, right: 2 });
        let err = ServoLayout::new(l.channels().to_vec(), pairs, l.couplings().to_vec(), l.rules().to_vec());
        assert!(err.is_err());
    }

    #[test]
    fn frame_range_enforced() {
        let mut v = [0.0; SERVO_DIM];
        v[3] = 1.01;
        assert!(ServoFrame::new(v).is_err());
        assert!(ServoFrame::from_slice(&[0.0; 24]).is_err());
        assert!(Trajectory::<ServoFrame>::new(vec![]).is_err());
    }
}
