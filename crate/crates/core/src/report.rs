//! Evaluation of a trained model: servo errors, CED against an untrained
//! copy, landmark/image distances of the simulated faces, and sequential
//! indicators on neutral-peak-neutral trajectories.
//!
//! Files written by [`EvalReport::write`]:
//!
//! * `samples.csv`: `index,mae,rmse,ld,id,pixel`
//! * `ced.csv`: `threshold,trained,untrained`
//! * `ced.svg`: both CED curves
//! * `summary.csv`: `metric,value` rows, including `gs`, `gt`, `gd`

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::Record;
use crate::error::{Error, Result};
use crate::expert_policy::{sample_trajectory, PolicyConfig};
use crate::face_sim::{compose_landmarks, flatten_landmarks, render_image, BlendBasis, FaceSim, Landmarks};
use crate::io_util::write_atomic;
use crate::losses::LossConfig;
use crate::metrics::{
    ced_csv, ced_curve_on, ced_svg, ced_thresholds, image_distance, landmark_distance, movement_smoothness,
    pixel_distance, space_similarity, time_similarity, CedCurve, SeqParams, CED_THRESHOLDS,
};
use crate::model::{Model, ModelConfig};
use crate::parallel::Exec;
use crate::seed;
use crate::servo_space::{clamp_frame, ServoFrame, ServoLayout, SERVO_DIM};
use crate::train::{evaluate, Samples};

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub lambda: f64,
    pub seq: SeqParams,
    /// Number of neutral-peak-neutral trajectories for Gs/Gt/Gd.
    pub trajectories: usize,
    /// Frames per trajectory, including the initial reference frame.
    pub trajectory_frames: usize,
    /// Seed of the trajectory policy.
    pub trajectory_seed: u64,
    pub exec: Exec,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            lambda: crate::losses::DEFAULT_LAMBDA,
            seq: SeqParams::default(),
            trajectories: 10,
            trajectory_frames: 31,
            trajectory_seed: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub index: u64,
    pub mae: f64,
    pub rmse: f64,
    pub ld: f64,
    pub id: f64,
    pub pixel: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<SampleRow>,
    pub trained: CedCurve,
    pub untrained: CedCurve,
    /// Ordered (metric, value) pairs.
    pub summary: Vec<(String, f64)>,
}

impl EvalReport {
    pub fn summary_value(&self, name: &str) -> Option<f64> {
        self.summary.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn samples_csv(&self) -> String {
        let mut s = String::from("index,mae,rmse,ld,id,pixel\n");
        for r in &self.rows {
            writeln!(s, "{},{:?},{:?},{:?},{:?},{:?}", r.index, r.mae, r.rmse, r.ld, r.id, r.pixel).unwrap();
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in &self.summary {
            writeln!(s, "{k},{v:?}").unwrap();
        }
        s
    }

    pub fn ced_csv(&self) -> String {
        ced_csv(&[("trained", &self.trained), ("untrained", &self.untrained)]).expect("shared grid")
    }

    pub fn ced_svg(&self) -> String {
        ced_svg(&[("trained", &self.trained), ("untrained", &self.untrained)])
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("samples.csv"), self.samples_csv().as_bytes())?;
        write_atomic(&dir.join("summary.csv"), self.summary_csv().as_bytes())?;
        write_atomic(&dir.join("ced.csv"), self.ced_csv().as_bytes())?;
        write_atomic(&dir.join("ced.svg"), self.ced_svg().as_bytes())?;
        Ok(())
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

/// Model input for a clean servo frame as the simulator would observe it.
fn observe_input(model: &Model, sim: &FaceSim, basis: &BlendBasis, frame: &ServoFrame, noise_seed: u64) -> Vec<f64> {
    let fv = sim.observe(frame, noise_seed);
    if model.kind().uses_landmarks() {
        flatten_landmarks(&compose_landmarks(&fv, basis))
    } else {
        fv.as_slice().to_vec()
    }
}

fn face_of(sim: &FaceSim, basis: &BlendBasis, frame: &ServoFrame) -> Landmarks {
    compose_landmarks(&sim.servo_to_features(frame), basis)
}

/// Gs, Gt, Gd averaged over `opts.trajectories` expert trajectories.
pub fn sequential_indicators(
    model: &Model,
    sim: &FaceSim,
    basis: &BlendBasis,
    layout: &ServoLayout,
    opts: &EvalOptions,
) -> Result<(f64, f64, f64)> {
    if opts.trajectories == 0 {
        return Err(Error::Argument("need at least one trajectory".into()));
    }
    let policy = PolicyConfig::new(opts.trajectory_seed);
    let per = opts.exec.map(opts.trajectories, |i| -> Result<(f64, f64, f64)> {
        let traj = sample_trajectory(&policy, i as u64, opts.trajectory_frames, layout)?;
        let human: Vec<Landmarks> = traj.frames().iter().map(|f| face_of(sim, basis, f)).collect();
        let mut ws = model.workspace();
        let mut robot_servo = Vec::with_capacity(traj.len());
        for (k, f) in traj.frames().iter().enumerate() {
            let stream = seed::mix(seed::mix(opts.trajectory_seed, seed::stream::NOISE), i as u64);
            let noise_seed = seed::mix(stream, k as u64);
            let input = observe_input(model, sim, basis, f, noise_seed);
            let out = model.forward_ws(&input, &mut ws)?;
            robot_servo.push(clamp_frame(out, layout)?);
        }
        let robot: Vec<Landmarks> = robot_servo.iter().map(|f| face_of(sim, basis, f)).collect();
        Ok((
            space_similarity(&human, &robot, &opts.seq)?,
            time_similarity(&human, &robot, &opts.seq)?,
            movement_smoothness(&robot_servo, &opts.seq)?,
        ))
    });
    let per = per.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((
        mean(per.iter().map(|p| p.0)),
        mean(per.iter().map(|p| p.1)),
        mean(per.iter().map(|p| p.2)),
    ))
}

/// Full evaluation of `model` on the `test` records. The untrained
/// reference is a freshly initialised model with the same configuration.
pub fn evaluate_report(
    model: &Model,
    test: &[Record],
    sim: &FaceSim,
    basis: &BlendBasis,
    layout: &ServoLayout,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let samples = Samples::from_records(test, model.kind())?;
    let loss = LossConfig::with_lambda(opts.lambda)?;
    let trained = evaluate(model, &samples, &loss, opts.exec)?;
    let fresh = Model::new(ModelConfig::clone(model.config()))?;
    let untrained = evaluate(&fresh, &samples, &loss, opts.exec)?;

    let faces = opts.exec.map(test.len(), |i| -> Result<(f64, f64, f64)> {
        let pred = clamp_frame(&trained.predictions[i * SERVO_DIM..(i + 1) * SERVO_DIM], layout)?;
        let human = face_of(sim, basis, &test[i].servo);
        let robot = face_of(sim, basis, &pred);
        let (hi, ri) = (render_image(&human)?, render_image(&robot)?);
        Ok((landmark_distance(&human, &robot), image_distance(&hi, &ri)?, pixel_distance(&hi, &ri)?))
    });
    let mut rows = Vec::with_capacity(test.len());
    for (i, f) in faces.into_iter().enumerate() {
        let (ld, id, pixel) = f?;
        rows.push(SampleRow {
            index: test[i].index,
            mae: trained.per_sample_mae[i],
            rmse: trained.per_sample_rmse[i],
            ld,
            id,
            pixel,
        });
    }

    let max = trained
        .per_sample_mae
        .iter()
        .chain(&untrained.per_sample_mae)
        .copied()
        .fold(0.0f64, f64::max);
    let grid = ced_thresholds(max, CED_THRESHOLDS);
    let trained_ced = ced_curve_on(&trained.per_sample_mae, &grid)?;
    let untrained_ced = ced_curve_on(&untrained.per_sample_mae, &grid)?;
    let (gs, gt, gd) = sequential_indicators(model, sim, basis, layout, opts)?;

    let summary = vec![
        ("samples".to_string(), test.len() as f64),
        ("loss".into(), trained.loss),
        ("mse".into(), trained.mse),
        ("mae".into(), trained.mae),
        ("untrained_mae".into(), untrained.mae),
        ("ld".into(), mean(rows.iter().map(|r| r.ld))),
        ("id".into(), mean(rows.iter().map(|r| r.id))),
        ("pixel".into(), mean(rows.iter().map(|r| r.pixel))),
        ("gs".into(), gs),
        ("gt".into(), gt),
        ("gd".into(), gd),
    ];
    Ok(EvalReport {
        rows,
        trained: trained_ced,
        untrained: untrained_ced,
        summary,
    })
}
