//! Evaluation quantities: cumulative error distribution, image and
//! landmark distances, and the sequential indicators Gs, Gt, Gd.
//!
//! Trajectories have `N = L + 1` frames `t_0 .. t_L`; `t_0` is the
//! reference frame and every indicator averages over `k = 1 ..= L`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::face_sim::{Image, Landmarks, LANDMARK_COUNT};
use crate::servo_space::{ServoFrame, SERVO_DIM};

pub const CED_THRESHOLDS: usize = 200;

/// Stabilizers of the image similarity.
pub const ID_C1: f64 = 0.01;
pub const ID_C2: f64 = 0.03;

#[derive(Debug, Clone, PartialEq)]
pub struct CedCurve {
    sorted: Vec<f64>,
    thresholds: Vec<f64>,
    fractions: Vec<f64>,
}

/// `n` uniform thresholds from 0 to `max` inclusive.
pub fn ced_thresholds(max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![max];
    }
    (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect()
}

/// CED on the default grid: 200 thresholds from 0 to the largest error.
pub fn ced_curve(errors: &[f64]) -> Result<CedCurve> {
    let max = errors.iter().copied().fold(0.0f64, f64::max);
    ced_curve_on(errors, &ced_thresholds(max, CED_THRESHOLDS))
}

/// CED evaluated on an explicit threshold grid (for comparing curves).
pub fn ced_curve_on(errors: &[f64], thresholds: &[f64]) -> Result<CedCurve> {
    if errors.is_empty() {
        return Err(Error::Argument("CED needs at least one error".into()));
    }
    if errors.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::Argument("CED errors must be finite and non-negative".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let fractions = thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&e| e <= t) as f64 / n)
        .collect();
    Ok(CedCurve {
        sorted,
        thresholds: thresholds.to_vec(),
        fractions,
    })
}

impl CedCurve {
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn max_error(&self) -> f64 {
        *self.sorted.last().expect("non-empty")
    }

    /// Fraction of errors `<= t`.
    pub fn at(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&e| e <= t) as f64 / self.sorted.len() as f64
    }

    /// Trapezoid area under the curve over its threshold grid.
    pub fn area(&self) -> f64 {
        self.thresholds
            .windows(2)
            .zip(self.fractions.windows(2))
            .map(|(t, f)| (t[1] - t[0]) * (f[0] + f[1]) / 2.0)
            .sum()
    }
}

/// `threshold,<name>...` rows for curves sharing one grid.
pub fn ced_csv(curves: &[(&str, &CedCurve)]) -> Result<String> {
    let grid = curves
        .first()
        .ok_or_else(|| Error::Argument("no curves".into()))?
        .1
        .thresholds();
    if curves.iter().any(|(_, c)| c.thresholds() != grid) {
        return Err(Error::Argument("CED curves use different threshold grids".into()));
    }
    let mut s = String::from("threshold");
    for (name, _) in curves {
        write!(s, ",{name}").unwrap();
    }
    s.push('\n');
    for (i, t) in grid.iter().enumerate() {
        write!(s, "{t:?}").unwrap();
        for (_, c) in curves {
            write!(s, ",{:?}", c.fractions()[i]).unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

/// Line plot of one or more CED curves as a standalone SVG document.
pub fn ced_svg(curves: &[(&str, &CedCurve)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const M: f64 = 56.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let xmax = curves
        .iter()
        .flat_map(|(_, c)| c.thresholds().last().copied())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let px = |t: f64| M + (W - 2.0 * M) * t / xmax;
    let py = |f: f64| H - M - (H - 2.0 * M) * f;
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<path d="M{M} {M} V{} H{}" fill="none" stroke="black"/>"#,
        H - M,
        W - M
    )
    .unwrap();
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let t = xmax * f;
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{f:.2}</text>"#, M - 6.0, py(f) + 4.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{t:.3}</text>"#, px(t), H - M + 16.0).unwrap();
    }
    writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">error threshold</text>"#, W / 2.0, H - 12.0).unwrap();
    writeln!(s, r#"<text x="14" y="{:.1}" font-size="12" transform="rotate(-90 14 {:.1})" text-anchor="middle">fraction of samples</text>"#, H / 2.0, H / 2.0).unwrap();
    for (k, (name, c)) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = c
            .thresholds()
            .iter()
            .zip(c.fractions())
            .map(|(&t, &f)| format!("{:.2},{:.2}", px(t), py(f)))
            .collect();
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" ")).unwrap();
        let ly = M + 16.0 * k as f64;
        writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, W - M - 150.0, W - M - 130.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11">{name}</text>"#, W - M - 124.0, ly + 4.0).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn same_size(x: &Image, y: &Image) -> Result<()> {
    if x.width() != y.width() || x.height() != y.height() {
        return Err(Error::Dimension(format!(
            "image sizes differ: {}x{} vs {}x{}",
            x.width(),
            x.height(),
            y.width(),
            y.height()
        )));
    }
    Ok(())
}

/// Whole-image structural similarity per channel (pixels scaled to
/// [0, 1]), averaged over the three channels. Equal images give exactly 1.
pub fn image_distance(x: &Image, y: &Image) -> Result<f64> {
    same_size(x, y)?;
    let n = (x.width() * x.height()) as f64;
    let mut total = 0.0;
    for ch in 0..3 {
        let xs = x.data().iter().skip(ch).step_by(3).map(|&v| v as f64 / 255.0);
        let ys = y.data().iter().skip(ch).step_by(3).map(|&v| v as f64 / 255.0);
        let (mut sx, mut sy) = (0.0, 0.0);
        for (a, b) in xs.clone().zip(ys.clone()) {
            sx += a;
            sy += b;
        }
        let (mx, my) = (sx / n, sy / n);
        let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
        for (a, b) in xs.zip(ys) {
            vx += (a - mx) * (a - mx);
            vy += (b - my) * (b - my);
            cxy += (a - mx) * (b - my);
        }
        let (vx, vy, cxy) = (vx / n, vy / n, cxy / n);
        let num = (2.0 * mx * my + ID_C1) * (2.0 * cxy + ID_C2);
        let den = (mx * mx + my * my + ID_C1) * (vx + vy + ID_C2);
        total += num / den;
    }
    Ok(total / 3.0)
}

/// Mean absolute pixel difference in [0, 1] units.
pub fn pixel_distance(x: &Image, y: &Image) -> Result<f64> {
    same_size(x, y)?;
    let sum: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs() / 255.0)
        .sum();
    Ok(sum / x.data().len() as f64)
}

/// Mean Euclidean distance between corresponding landmarks.
pub fn landmark_distance(a: &Landmarks, b: &Landmarks) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
        .sum::<f64>()
        / LANDMARK_COUNT as f64
}

/// [`landmark_distance`] on flattened `(x, y)` vectors of any point count.
pub fn landmark_distance_flat(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() % 2 != 0 || a.is_empty() {
        return Err(Error::dim(a.len(), b.len(), "landmark vectors"));
    }
    let n = a.len() / 2;
    Ok(a.chunks_exact(2)
        .zip(b.chunks_exact(2))
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
        .sum::<f64>()
        / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeqParams {
    pub b_s: f64,
    pub b_t: f64,
    pub t_d: f64,
}

impl Default for SeqParams {
    fn default() -> Self {
        SeqParams {
            b_s: 0.01,
            b_t: 0.01,
            t_d: 0.05,
        }
    }
}

impl SeqParams {
    pub fn validate(&self) -> Result<()> {
        if self.b_s > 0.0 && self.b_t > 0.0 && self.t_d > 0.0 {
            Ok(())
        } else {
            Err(Error::Argument(format!("sequence parameters must be positive: {self:?}")))
        }
    }
}

fn fit(x: f64, b: f64) -> f64 {
    (-x * x / b).exp()
}

/// Distance of every landmark from its position in frame 0, per frame.
fn displacements(traj: &[Landmarks]) -> Vec<[f64; LANDMARK_COUNT]> {
    let first = traj[0];
    traj.iter()
        .map(|f| {
            let mut d = [0.0; LANDMARK_COUNT];
            for (i, (p, q)) in f.iter().zip(&first).enumerate() {
                d[i] = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            }
            d
        })
        .collect()
}

fn paired(human: &[Landmarks], robot: &[Landmarks], p: &SeqParams) -> Result<(Vec<[f64; LANDMARK_COUNT]>, Vec<[f64; LANDMARK_COUNT]>)> {
    p.validate()?;
    if human.len() != robot.len() {
        return Err(Error::dim(human.len(), robot.len(), "trajectory length"));
    }
    if human.len() < 2 {
        return Err(Error::Argument("sequential indicators need at least 2 frames".into()));
    }
    Ok((displacements(human), displacements(robot)))
}

/// Gs: agreement of per-landmark displacement from the initial frame.
pub fn space_similarity(human: &[Landmarks], robot: &[Landmarks], p: &SeqParams) -> Result<f64> {
    let (dh, dr) = paired(human, robot, p)?;
    let l = (dh.len() - 1) as f64;
    let mut total = 0.0;
    for i in 0..LANDMARK_COUNT {
        let s: f64 = (1..dh.len()).map(|k| fit(dh[k][i] - dr[k][i], p.b_s)).sum();
        total += s / l;
    }
    Ok(total / LANDMARK_COUNT as f64)
}

/// Gt: agreement of the frame-to-frame displacement increments.
pub fn time_similarity(human: &[Landmarks], robot: &[Landmarks], p: &SeqParams) -> Result<f64> {
    let (dh, dr) = paired(human, robot, p)?;
    let l = (dh.len() - 1) as f64;
    let mut total = 0.0;
    for i in 0..LANDMARK_COUNT {
        let s: f64 = (1..dh.len())
            .map(|k| fit((dh[k][i] - dh[k - 1][i]) - (dr[k][i] - dr[k - 1][i]), p.b_t))
            .sum();
        total += s / l;
    }
    Ok(total / LANDMARK_COUNT as f64)
}

/// Number of hops: frames `k >= 2` and channels whose step grew by more
/// than `t_d` over the previous step.
pub fn count_hops(traj: &[ServoFrame], t_d: f64) -> usize {
    let mut hops = 0;
    for k in 2..traj.len() {
        for j in 0..SERVO_DIM {
            let now = (traj[k][j] - traj[k - 1][j]).abs();
            let before = (traj[k - 1][j] - traj[k - 2][j]).abs();
            if now - before > t_d {
                hops += 1;
            }
        }
    }
    hops
}

/// Gd = 1 − hops / (L·25), with `L` = frames − 1. Frame `t_1` has no
/// second predecessor and never counts as a hop.
pub fn movement_smoothness(traj: &[ServoFrame], p: &SeqParams) -> Result<f64> {
    p.validate()?;
    if traj.len() < 3 {
        return Err(Error::Argument("movement smoothness needs at least 3 frames".into()));
    }
    let l = (traj.len() - 1) as f64;
    Ok(1.0 - count_hops(traj, p.t_d) as f64 / (l * SERVO_DIM as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::face_sim::{render_image, BlendBasis};
    use proptest::prelude::*;

    #[test]
    fn ced_counting() {
        let c = ced_curve(&[0.1, 0.3]).unwrap();
        assert_eq!(c.at(0.2), 0.5);
        assert_eq!(c.at(0.3), 1.0);
        assert_eq!(*c.fractions().last().unwrap(), 1.0);
        assert_eq!(c.thresholds().len(), 200);
        let z = ced_curve(&[0.0; 5]).unwrap();
        assert!(z.fractions().iter().all(|&f| f == 1.0));
        assert!(ced_curve(&[]).is_err());
        assert!(c.fractions().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn ced_area_grows_when_errors_shrink() {
        let e = [0.05, 0.2, 0.11, 0.4];
        let smaller: Vec<f64> = e.iter().map(|v| v * 0.8).collect();
        let grid = ced_thresholds(0.4, 200);
        let a = ced_curve_on(&e, &grid).unwrap().area();
        let b = ced_curve_on(&smaller, &grid).unwrap().area();
        assert!(b > a);
    }

    #[test]
    fn ced_outputs() {
        let grid = ced_thresholds(1.0, 200);
        let a = ced_curve_on(&[0.2, 0.5], &grid).unwrap();
        let b = ced_curve_on(&[0.1, 0.9], &grid).unwrap();
        let csv = ced_csv(&[("trained", &a), ("untrained", &b)]).unwrap();
        assert!(csv.starts_with("threshold,trained,untrained\n"));
        assert_eq!(csv.lines().count(), 201);
        let svg = ced_svg(&[("trained", &a), ("untrained", &b)]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn image_similarity_identities() {
        let basis = BlendBasis::shipped();
        let a = render_image(basis.neutral()).unwrap();
        assert_eq!(image_distance(&a, &a).unwrap(), 1.0);
        let flat = Image::filled(4, 4, [10, 200, 30]);
        assert_eq!(image_distance(&flat, &flat).unwrap(), 1.0);
        let mut pts = *basis.neutral();
        for p in pts.iter_mut().skip(43) {
            p[1] += 0.03;
        }
        let b = render_image(&pts).unwrap();
        let d = image_distance(&a, &b).unwrap();
        assert!(d < 1.0);
        assert!((d - image_distance(&b, &a).unwrap()).abs() < 1e-12);
        assert!(pixel_distance(&a, &b).unwrap() > 0.0);
        assert!(image_distance(&a, &flat).is_err());
    }

    #[test]
    fn landmark_distance_cases() {
        let a = *BlendBasis::shipped().neutral();
        assert_eq!(landmark_distance(&a, &a), 0.0);
        let mut b = a;
        for p in &mut b {
            p[0] += 0.1;
        }
        assert!((landmark_distance(&a, &b) - 0.1).abs() < 1e-12);
        assert!(landmark_distance_flat(&[0.0; 4], &[0.0; 6]).is_err());
    }

    fn ramp(n: usize, slope: f64) -> Vec<ServoFrame> {
        (0..n)
            .map(|k| {
                let mut v = [0.2; SERVO_DIM];
                v[3] = 0.1 + slope * k as f64;
                ServoFrame::new(v).unwrap()
            })
            .collect()
    }

    #[test]
    fn smoothness_cases() {
        let p = SeqParams::default();
        assert_eq!(movement_smoothness(&ramp(31, 0.0), &p).unwrap(), 1.0);
        assert_eq!(movement_smoothness(&ramp(31, 0.02), &p).unwrap(), 1.0);
        let mut t = ramp(31, 0.0);
        let mut v = *t[10].values();
        v[5] += 2.0 * p.t_d;
        t[10] = ServoFrame::new(v).unwrap();
        // Up-step at frame 10 is a hop; the return step at 11 is not.
        assert_eq!(count_hops(&t, p.t_d), 1);
        assert_eq!(movement_smoothness(&t, &p).unwrap(), 1.0 - 1.0 / (30.0 * 25.0));
        assert!(movement_smoothness(&t[..2], &p).is_err());
    }

    fn shifted(base: &Landmarks, n: usize, step: f64) -> Vec<Landmarks> {
        (0..n)
            .map(|k| {
                let mut f = *base;
                for p in &mut f {
                    p[0] += step * k as f64;
                }
                f
            })
            .collect()
    }

    #[test]
    fn sequence_similarity_cases() {
        let p = SeqParams::default();
        let base = *BlendBasis::shipped().neutral();
        let h = shifted(&base, 10, 0.002);
        assert_eq!(space_similarity(&h, &h, &p).unwrap(), 1.0);
        assert_eq!(time_similarity(&h, &h, &p).unwrap(), 1.0);
        // Same motion from a different starting point.
        let mut start = base;
        for q in &mut start {
            q[1] += 0.01;
        }
        let r = shifted(&start, 10, 0.002);
        assert!((space_similarity(&h, &r, &p).unwrap() - 1.0).abs() < 1e-12);
        // Constant gap x in displacement at every frame.
        let r = shifted(&base, 10, 0.003);
        let mut expect = 0.0;
        for k in 1..10 {
            let x = 0.001 * k as f64;
            expect += (-x * x / p.b_s).exp();
        }
        assert!((space_similarity(&h, &r, &p).unwrap() - expect / 9.0).abs() < 1e-12);
        // Accelerating motion: its time reversal decelerates.
        let fwd: Vec<Landmarks> = (0..10)
            .map(|k| {
                let mut f = base;
                for q in &mut f {
                    q[0] += 0.002 * (k * k) as f64;
                }
                f
            })
            .collect();
        let rev: Vec<Landmarks> = fwd.iter().rev().copied().collect();
        assert!(time_similarity(&fwd, &rev, &p).unwrap() < 1.0);
        assert!(time_similarity(&h[..1], &h[..1], &p).is_err());
        assert!(space_similarity(&h, &h[..5], &p).is_err());
    }

    proptest! {
        #[test]
        fn landmark_distance_is_a_metric(
            a in prop::collection::vec(0.0f64..1.0, 126),
            b in prop::collection::vec(0.0f64..1.0, 126),
            c in prop::collection::vec(0.0f64..1.0, 126),
        ) {
            let ab = landmark_distance_flat(&a, &b).unwrap();
            let bc = landmark_distance_flat(&b, &c).unwrap();
            let ac = landmark_distance_flat(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-9);
            prop_assert!((ab - landmark_distance_flat(&b, &a).unwrap()).abs() < 1e-15);
        }
    }
}
