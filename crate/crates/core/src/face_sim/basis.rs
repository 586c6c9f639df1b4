//! Blendshape landmark basis and shape composition.
//!
//! The basis is generated procedurally from a fixed 63-point template face
//! and shipped as `data/blend_basis_v1.txt`. Both routes must agree exactly;
//! the shipped file is canonical.
//!
//! File format (UTF-8, one record per line, numbers in shortest round-trip
//! decimal form):
//!
//! ```text
//! blend-basis 1
//! points 63
//! shapes 52
//! neutral
//! <x> <y>            # 63 lines
//! shape <k> <name>   # repeated 52 times, each followed by
//! <dx> <dy>          # 63 lines
//! ```

use std::fmt::Write as _;

use super::{FeatureVector, BLENDSHAPE_NAMES, COEFF_DIM, POSE_DIM};
use crate::error::{Error, Result};

pub const LANDMARK_COUNT: usize = 63;
/// Flattened landmark length (x, y interleaved).
pub const LANDMARK_DIM: usize = 2 * LANDMARK_COUNT;

const FORMAT_VERSION: u32 = 1;
const SHIPPED: &str = include_str!("../../data/blend_basis_v1.txt");

/// Maximum head rotation, reached at pose 0 or 1.
pub const MAX_YAW_DEG: f64 = 15.0;

pub type Landmarks = [[f64; 2]; LANDMARK_COUNT];

#[derive(Debug, Clone, PartialEq)]
pub struct BlendBasis {
    neutral: Landmarks,
    deltas: Vec<Landmarks>,
}

// Landmark index ranges of the template face.
pub(crate) const JAW: std::ops::Range<usize> = 0..12;
pub(crate) const BROW_L: std::ops::Range<usize> = 12..17;
pub(crate) const BROW_R: std::ops::Range<usize> = 17..22;
pub(crate) const NOSE_BRIDGE: std::ops::Range<usize> = 22..26;
pub(crate) const NOSTRILS: std::ops::Range<usize> = 26..31;
pub(crate) const EYE_L: std::ops::Range<usize> = 31..37;
pub(crate) const EYE_R: std::ops::Range<usize> = 37..43;
pub(crate) const MOUTH_OUT: std::ops::Range<usize> = 43..55;
pub(crate) const MOUTH_IN: std::ops::Range<usize> = 55..63;
const NOSE: std::ops::Range<usize> = 22..31;

fn template() -> Landmarks {
    let mut p = [[0.0; 2]; LANDMARK_COUNT];
    let mut i = 0;
    let mut push = |x: f64, y: f64| {
        p[i] = [x, y];
        i += 1;
    };
    // Jaw: lower half ellipse from the left temple to the right temple.
    for k in 0..12 {
        let t = std::f64::consts::PI * (1.0 - k as f64 / 11.0);
        push(0.5 + 0.17 * t.cos(), 0.42 + 0.30 * t.sin());
    }
    for side in [-1.0, 1.0] {
        for k in 0..5 {
            let u = k as f64 / 4.0;
            let x = if side < 0.0 { 0.37 + 0.09 * u } else { 0.54 + 0.09 * u };
            let arch = 0.012 * (std::f64::consts::PI * u).sin();
            push(x, 0.38 - arch);
        }
    }
    for k in 0..4 {
        push(0.5, 0.42 + 0.035 * k as f64);
    }
    for k in 0..5 {
        let u = k as f64 / 4.0;
        push(0.47 + 0.06 * u, 0.55 + 0.006 * (std::f64::consts::PI * u).sin());
    }
    for cx in [0.415, 0.585] {
        for k in 0..6 {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 6.0;
            push(cx + 0.025 * t.cos(), 0.43 - 0.008 * t.sin());
        }
    }
    for k in 0..12 {
        let t = 2.0 * std::f64::consts::PI * k as f64 / 12.0;
        push(0.5 + 0.055 * t.cos(), 0.625 - 0.02 * t.sin());
    }
    for k in 0..8 {
        let t = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
        push(0.5 + 0.035 * t.cos(), 0.625 - 0.008 * t.sin());
    }
    debug_assert_eq!(i, LANDMARK_COUNT);
    p
}

#[derive(Clone, Copy)]
enum Side {
    Both,
    Left,
    Right,
    Upper,
    Lower,
    Inner,
    Outer,
}

#[derive(Clone, Copy)]
enum Motion {
    Translate(f64, f64),
    ScaleX(f64),
    ScaleY(f64),
}

type Component = (std::ops::Range<usize>, Side, Motion);

fn shape_components(k: usize) -> Vec<Component> {
    use Motion::*;
    use Side::*;
    match k {
        0 => vec![(BROW_L, Both, Translate(0.0, 0.012))],
        1 => vec![(BROW_R, Both, Translate(0.0, 0.012))],
        2 => vec![(BROW_L, Inner, Translate(0.0, -0.012)), (BROW_R, Inner, Translate(0.0, -0.012))],
        3 => vec![(BROW_L, Outer, Translate(0.0, -0.012))],
        4 => vec![(BROW_R, Outer, Translate(0.0, -0.012))],
        5 => vec![(MOUTH_OUT, Both, ScaleX(0.12)), (JAW, Both, ScaleX(0.03))],
        6 => vec![(EYE_L, Both, ScaleY(-0.3)), (MOUTH_OUT, Left, Translate(0.0, -0.004))],
        7 => vec![(EYE_R, Both, ScaleY(-0.3)), (MOUTH_OUT, Right, Translate(0.0, -0.004))],
        8 => vec![(EYE_L, Both, ScaleY(-0.9))],
        9 => vec![(EYE_R, Both, ScaleY(-0.9))],
        10 => vec![(EYE_L, Both, Translate(0.0, 0.003))],
        11 => vec![(EYE_R, Both, Translate(0.0, 0.003))],
        12 => vec![(EYE_L, Both, Translate(0.003, 0.0))],
        13 => vec![(EYE_R, Both, Translate(-0.003, 0.0))],
        14 => vec![(EYE_L, Both, Translate(-0.003, 0.0))],
        15 => vec![(EYE_R, Both, Translate(0.003, 0.0))],
        16 => vec![(EYE_L, Both, Translate(0.0, -0.003)), (BROW_L, Both, Translate(0.0, -0.002))],
        17 => vec![(EYE_R, Both, Translate(0.0, -0.003)), (BROW_R, Both, Translate(0.0, -0.002))],
        18 => vec![(EYE_L, Both, ScaleY(-0.4))],
        19 => vec![(EYE_R, Both, ScaleY(-0.4))],
        20 => vec![(EYE_L, Both, ScaleY(0.6)), (BROW_L, Both, Translate(0.0, -0.004))],
        21 => vec![(EYE_R, Both, ScaleY(0.6)), (BROW_R, Both, Translate(0.0, -0.004))],
        22 => vec![(JAW, Lower, Translate(0.0, 0.006))],
        23 => vec![
            (JAW, Lower, Translate(-0.01, 0.0)),
            (MOUTH_OUT, Both, Translate(-0.006, 0.0)),
            (MOUTH_IN, Both, Translate(-0.006, 0.0)),
        ],
        24 => vec![
            (JAW, Lower, Translate(0.0, 0.03)),
            (MOUTH_OUT, Lower, Translate(0.0, 0.025)),
            (MOUTH_IN, Both, ScaleY(2.0)),
        ],
        25 => vec![
            (JAW, Lower, Translate(0.01, 0.0)),
            (MOUTH_OUT, Both, Translate(0.006, 0.0)),
            (MOUTH_IN, Both, Translate(0.006, 0.0)),
        ],
        26 => vec![(MOUTH_IN, Both, ScaleY(-0.8)), (MOUTH_OUT, Both, ScaleY(-0.2))],
        27 => vec![(MOUTH_OUT, Left, Translate(-0.006, 0.0))],
        28 => vec![(MOUTH_OUT, Right, Translate(0.006, 0.0))],
        29 => vec![(MOUTH_OUT, Left, Translate(0.0, 0.01)), (MOUTH_IN, Left, Translate(0.0, 0.006))],
        30 => vec![(MOUTH_OUT, Right, Translate(0.0, 0.01)), (MOUTH_IN, Right, Translate(0.0, 0.006))],
        31 => vec![(MOUTH_OUT, Both, ScaleX(-0.2)), (MOUTH_IN, Both, ScaleY(0.8))],
        32 => vec![(MOUTH_OUT, Both, Translate(-0.01, 0.0)), (MOUTH_IN, Both, Translate(-0.01, 0.0))],
        33 => vec![(MOUTH_OUT, Lower, Translate(0.0, 0.008)), (MOUTH_OUT, Left, Translate(0.0, 0.002))],
        34 => vec![(MOUTH_OUT, Lower, Translate(0.0, 0.008)), (MOUTH_OUT, Right, Translate(0.0, 0.002))],
        35 => vec![(MOUTH_IN, Left, ScaleY(-0.5))],
        36 => vec![(MOUTH_IN, Right, ScaleY(-0.5))],
        37 => vec![(MOUTH_OUT, Both, ScaleX(-0.3)), (MOUTH_IN, Both, ScaleX(-0.3))],
        38 => vec![(MOUTH_OUT, Both, Translate(0.01, 0.0)), (MOUTH_IN, Both, Translate(0.01, 0.0))],
        39 => vec![(MOUTH_OUT, Lower, Translate(0.0, -0.006))],
        40 => vec![(MOUTH_OUT, Upper, Translate(0.0, 0.006))],
        41 => vec![(MOUTH_OUT, Lower, Translate(0.0, -0.008)), (JAW, Lower, Translate(0.0, -0.003))],
        42 => vec![(MOUTH_OUT, Upper, Translate(0.0, -0.006)), (NOSTRILS, Both, Translate(0.0, -0.002))],
        43 => vec![(MOUTH_OUT, Left, Translate(-0.008, -0.01)), (MOUTH_IN, Left, Translate(-0.005, -0.006))],
        44 => vec![(MOUTH_OUT, Right, Translate(0.008, -0.01)), (MOUTH_IN, Right, Translate(0.005, -0.006))],
        45 => vec![(MOUTH_OUT, Left, Translate(-0.012, 0.002))],
        46 => vec![(MOUTH_OUT, Right, Translate(0.012, 0.002))],
        47 => vec![(MOUTH_OUT, Upper, Translate(0.0, -0.006)), (MOUTH_OUT, Left, Translate(0.0, -0.002))],
        48 => vec![(MOUTH_OUT, Upper, Translate(0.0, -0.006)), (MOUTH_OUT, Right, Translate(0.0, -0.002))],
        49 => vec![(NOSE, Left, Translate(0.0, -0.006))],
        50 => vec![(NOSE, Right, Translate(0.0, -0.006))],
        51 => vec![(MOUTH_IN, Lower, Translate(0.0, 0.01))],
        _ => unreachable!("only {COEFF_DIM} shapes"),
    }
}

/// Largest total displacement any point may receive from all shapes
/// combined; keeps every composed and rotated shape inside the unit square.
const MAX_POINT_TRAVEL: f64 = 0.06;

fn region_frame(points: &Landmarks, range: std::ops::Range<usize>) -> ([f64; 2], [f64; 2]) {
    let n = range.len() as f64;
    let cx = range.clone().map(|i| points[i][0]).sum::<f64>() / n;
    let cy = range.clone().map(|i| points[i][1]).sum::<f64>() / n;
    let wx = range.clone().map(|i| (points[i][0] - cx).abs()).fold(0.0, f64::max);
    let wy = range.map(|i| (points[i][1] - cy).abs()).fold(0.0, f64::max);
    ([cx, cy], [wx.max(1e-9), wy.max(1e-9)])
}

fn side_weight(side: Side, p: [f64; 2], c: [f64; 2], w: [f64; 2], range: &std::ops::Range<usize>, t: &Landmarks) -> f64 {
    let unit = |v: f64| v.clamp(0.0, 1.0);
    match side {
        Side::Both => 1.0,
        Side::Left => unit((c[0] - p[0]) / w[0]),
        Side::Right => unit((p[0] - c[0]) / w[0]),
        Side::Upper => unit((c[1] - p[1]) / w[1]),
        Side::Lower => unit((p[1] - c[1]) / w[1]),
        Side::Inner | Side::Outer => {
            let d = |i: usize| (t[i][0] - 0.5).abs();
            let dmin = range.clone().map(d).fold(f64::INFINITY, f64::min);
            let dmax = range.clone().map(d).fold(0.0, f64::max);
            let outer = unit(((p[0] - 0.5).abs() - dmin) / (dmax - dmin).max(1e-9));
            if matches!(side, Side::Outer) {
                outer
            } else {
                1.0 - outer
            }
        }
    }
}

impl BlendBasis {
    /// The canonical basis shipped with the crate.
    pub fn shipped() -> Self {
        Self::parse(SHIPPED).expect("shipped basis file is valid")
    }

    /// Regenerates the basis from the template face.
    pub fn procedural() -> Self {
        let neutral = template();
        let mut deltas = vec![[[0.0; 2]; LANDMARK_COUNT]; COEFF_DIM];
        for (k, delta) in deltas.iter_mut().enumerate() {
            for (range, side, motion) in shape_components(k) {
                let (c, w) = region_frame(&neutral, range.clone());
                for i in range.clone() {
                    let p = neutral[i];
                    let s = side_weight(side, p, c, w, &range, &neutral);
                    let (dx, dy) = match motion {
                        Motion::Translate(dx, dy) => (dx, dy),
                        Motion::ScaleX(f) => (f * (p[0] - c[0]), 0.0),
                        Motion::ScaleY(f) => (0.0, f * (p[1] - c[1])),
                    };
                    delta[i][0] += s * dx;
                    delta[i][1] += s * dy;
                }
            }
        }
        for i in 0..LANDMARK_COUNT {
            let travel: f64 = deltas.iter().map(|d| d[i][0].abs() + d[i][1].abs()).sum();
            if travel > MAX_POINT_TRAVEL {
                let scale = MAX_POINT_TRAVEL / travel;
                for d in deltas.iter_mut() {
                    d[i][0] *= scale;
                    d[i][1] *= scale;
                }
            }
        }
        BlendBasis { neutral, deltas }
    }

    pub fn new(neutral: Landmarks, deltas: Vec<Landmarks>) -> Result<Self> {
        if deltas.len() != COEFF_DIM {
            return Err(Error::dim(COEFF_DIM, deltas.len(), "blend basis shapes"));
        }
        let finite = neutral.iter().chain(deltas.iter().flatten()).flatten().all(|v| v.is_finite());
        if !finite || neutral.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Argument("blend basis neutral shape must lie in [0, 1]^2".into()));
        }
        Ok(BlendBasis { neutral, deltas })
    }

    pub fn neutral(&self) -> &Landmarks {
        &self.neutral
    }

    pub fn deltas(&self) -> &[Landmarks] {
        &self.deltas
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "blend-basis {FORMAT_VERSION}").unwrap();
        writeln!(s, "points {LANDMARK_COUNT}").unwrap();
        writeln!(s, "shapes {COEFF_DIM}").unwrap();
        writeln!(s, "neutral").unwrap();
        for p in &self.neutral {
            writeln!(s, "{:?} {:?}", p[0], p[1]).unwrap();
        }
        for (k, d) in self.deltas.iter().enumerate() {
            writeln!(s, "shape {k} {}", BLENDSHAPE_NAMES[k]).unwrap();
            for p in d {
                writeln!(s, "{:?} {:?}", p[0], p[1]).unwrap();
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("blend basis: unexpected end of file, expected {what}")))
        };
        let expect = |(n, line): (usize, &str), want: &str| {
            if line.trim() == want {
                Ok(())
            } else {
                Err(Error::Format(format!("blend basis line {}: expected `{want}`, found `{line}`", n + 1)))
            }
        };
        let header = next("header")?;
        let version = header
            .1
            .strip_prefix("blend-basis ")
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::Format(format!("blend basis line {}: bad header", header.0 + 1)))?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        expect(next("points")?, &format!("points {LANDMARK_COUNT}"))?;
        expect(next("shapes")?, &format!("shapes {COEFF_DIM}"))?;
        expect(next("neutral")?, "neutral")?;

        let point = |(n, line): (usize, &str)| -> Result<[f64; 2]> {
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => Ok([x, y]),
                _ => Err(Error::Format(format!("blend basis line {}: expected two numbers", n + 1))),
            }
        };
        let mut neutral = [[0.0; 2]; LANDMARK_COUNT];
        for p in neutral.iter_mut() {
            *p = point(next("neutral point")?)?;
        }
        let mut deltas = Vec::with_capacity(COEFF_DIM);
        for k in 0..COEFF_DIM {
            let (n, line) = next("shape header")?;
            if !line.starts_with(&format!("shape {k} ")) {
                return Err(Error::Format(format!("blend basis line {}: expected shape {k}", n + 1)));
            }
            let mut d = [[0.0; 2]; LANDMARK_COUNT];
            for p in d.iter_mut() {
                *p = point(next("delta point")?)?;
            }
            deltas.push(d);
        }
        if let Ok((n, _)) = next("") {
            return Err(Error::Format(format!("blend basis line {}: trailing content", n + 1)));
        }
        BlendBasis::new(neutral, deltas)
    }
}

/// `s0 + Σ w_k S_k`, then rotated about its centroid by the head yaw
/// encoded in `pose[0]` (0.5 is frontal, 0 and 1 are ∓15°).
pub fn compose_landmarks(fv: &FeatureVector, basis: &BlendBasis) -> Landmarks {
    let mut shape = basis.neutral;
    for (w, delta) in fv.coeffs().iter().zip(&basis.deltas) {
        if *w == 0.0 {
            continue;
        }
        for (p, d) in shape.iter_mut().zip(delta) {
            p[0] += w * d[0];
            p[1] += w * d[1];
        }
    }
    debug_assert_eq!(fv.pose().len(), POSE_DIM);
    let yaw = (fv.pose()[0] - 0.5) * 2.0 * MAX_YAW_DEG.to_radians();
    if yaw != 0.0 {
        let n = LANDMARK_COUNT as f64;
        let cx = shape.iter().map(|p| p[0]).sum::<f64>() / n;
        let cy = shape.iter().map(|p| p[1]).sum::<f64>() / n;
        let (sin, cos) = yaw.sin_cos();
        for p in shape.iter_mut() {
            let (dx, dy) = (p[0] - cx, p[1] - cy);
            *p = [cx + cos * dx - sin * dy, cy + sin * dx + cos * dy];
        }
    }
    shape
}

pub fn flatten(points: &Landmarks) -> Vec<f64> {
    points.iter().flatten().copied().collect()
}

pub fn unflatten(values: &[f64]) -> Result<Landmarks> {
    if values.len() != LANDMARK_DIM {
        return Err(Error::dim(LANDMARK_DIM, values.len(), "landmarks"));
    }
    let mut out = [[0.0; 2]; LANDMARK_COUNT];
    for (p, xy) in out.iter_mut().zip(values.chunks_exact(2)) {
        *p = [xy[0], xy[1]];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn fv(coeffs: &[f64], yaw: f64) -> FeatureVector {
        FeatureVector::from_parts(coeffs, &[yaw, 0.5, 0.5]).unwrap()
    }

    #[test]
    fn shipped_file_matches_generator() {
        let generated = BlendBasis::procedural();
        assert_eq!(BlendBasis::shipped(), generated);
        assert_eq!(generated.to_text(), SHIPPED);
    }

    /// Rewrites the shipped file from the generator. Run explicitly after
    /// changing the template: `cargo test -p mimic-core regenerate -- --ignored`.
    #[test]
    #[ignore]
    fn regenerate_shipped_basis() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/blend_basis_v1.txt");
        std::fs::write(path, BlendBasis::procedural().to_text()).unwrap();
    }

    #[test]
    fn zero_weights_give_neutral() {
        let b = BlendBasis::shipped();
        assert_eq!(&compose_landmarks(&fv(&[0.0; COEFF_DIM], 0.5), &b), b.neutral());
    }

    #[test]
    fn one_hot_adds_single_delta() {
        let b = BlendBasis::shipped();
        for k in [0, 24, 51] {
            let mut w = [0.0; COEFF_DIM];
            w[k] = 1.0;
            let got = compose_landmarks(&fv(&w, 0.5), &b);
            for i in 0..LANDMARK_COUNT {
                assert_eq!(got[i][0], b.neutral()[i][0] + b.deltas()[k][i][0]);
                assert_eq!(got[i][1], b.neutral()[i][1] + b.deltas()[k][i][1]);
            }
        }
    }

    #[test]
    fn matches_dot_product_resummation() {
        let b = BlendBasis::shipped();
        let mut rng = seed::rng(8);
        for _ in 0..50 {
            let w: Vec<f64> = (0..COEFF_DIM).map(|_| rng.random_range(0.0..=1.0)).collect();
            let got = compose_landmarks(&fv(&w, 0.5), &b);
            // Per coordinate: neutral + <w, column of deltas>.
            for i in 0..LANDMARK_COUNT {
                for axis in 0..2 {
                    let column: Vec<f64> = b.deltas().iter().map(|d| d[i][axis]).collect();
                    let dot: f64 = w.iter().zip(&column).map(|(a, c)| a * c).sum();
                    assert!((got[i][axis] - (b.neutral()[i][axis] + dot)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn composed_shapes_stay_in_unit_square() {
        let b = BlendBasis::shipped();
        let mut rng = seed::rng(4);
        for trial in 0..2000 {
            let w: Vec<f64> = (0..COEFF_DIM)
                .map(|_| if trial % 2 == 0 { rng.random_range(0.0..=1.0) } else { f64::from(rng.random_range(0..2u8)) })
                .collect();
            let yaw = [0.0, 1.0, rng.random_range(0.0..=1.0)][trial % 3];
            let shape = compose_landmarks(&fv(&w, yaw), &b);
            assert!(shape.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        }
        // Worst-case bound: every point travels at most MAX_POINT_TRAVEL.
        for i in 0..LANDMARK_COUNT {
            let travel: f64 = b.deltas().iter().map(|d| d[i][0].abs() + d[i][1].abs()).sum();
            assert!(travel <= MAX_POINT_TRAVEL + 1e-12);
        }
    }

    #[test]
    fn yaw_rotation_preserves_centroid_distances() {
        let b = BlendBasis::shipped();
        let w = [0.0; COEFF_DIM];
        let a = compose_landmarks(&fv(&w, 0.5), &b);
        let r = compose_landmarks(&fv(&w, 1.0), &b);
        let d = |s: &Landmarks, i: usize, j: usize| ((s[i][0] - s[j][0]).powi(2) + (s[i][1] - s[j][1]).powi(2)).sqrt();
        assert!((d(&a, 0, 40) - d(&r, 0, 40)).abs() < 1e-12);
        assert!(a != r);
    }

    #[test]
    fn parse_rejects_bad_input() {
        let text = BlendBasis::shipped().to_text();
        assert!(matches!(BlendBasis::parse(&text.replacen("blend-basis 1", "blend-basis 2", 1)), Err(Error::Version { .. })));
        let cut: String = text.lines().take(100).collect::<Vec<_>>().join("\n");
        assert!(matches!(BlendBasis::parse(&cut), Err(Error::Format(_))));
    }
}
