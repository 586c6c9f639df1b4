use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;

use mimic_core::dataset::{split_dataset, Dataset, Record};
use mimic_core::expert_policy::{generate_dataset, GenerateOptions, PolicyConfig};
use mimic_core::face_sim::{compose_landmarks, render_image, BlendBasis, FaceSim};
use mimic_core::io_util::{file_sha256, write_atomic};
use mimic_core::metrics::SeqParams;
use mimic_core::model::{load_checkpoint, measure_latency, save_checkpoint, Model, ModelConfig, ModelKind};
use mimic_core::nn::AdamConfig;
use mimic_core::parallel::Exec;
use mimic_core::report::{evaluate_report, EvalOptions};
use mimic_core::servo_space::{check_constraints, clamp_frame, make_default_layout, ServoLayout, GENERATION_TOL};
use mimic_core::train::{history_csv, train as fit, Samples, TrainConfig, TrainOutcome};

use crate::config::{set, FileConfig, SplitSection, TrainingSection};
use crate::error::{CliError, CliResult};
use crate::{AblateArgs, EvalArgs, GenDataArgs, LatencyArgs, SplitArgs, TrainArgs, TrainingArgs};

pub fn layout(file: &FileConfig) -> CliResult<ServoLayout> {
    match &file.layout {
        Some(p) => Ok(ServoLayout::load(p)?),
        None => Ok(make_default_layout()),
    }
}

pub fn basis(file: &FileConfig) -> CliResult<BlendBasis> {
    match &file.basis {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p.display(), e))?;
            Ok(BlendBasis::parse(&text)?)
        }
        None => Ok(BlendBasis::shipped()),
    }
}

fn training_section(file: &FileConfig, a: TrainingArgs) -> TrainingSection {
    let mut t = file.training.clone();
    set(&mut t.kind, a.kind);
    set(&mut t.seed, a.seed);
    set(&mut t.epochs, a.epochs);
    set(&mut t.batch_size, a.batch_size);
    set(&mut t.lr, a.lr);
    set(&mut t.lambda, a.lambda);
    set(&mut t.patience, a.patience);
    set(&mut t.lr_final_fraction, a.lr_final_fraction);
    if a.no_attention {
        t.attention = false;
    }
    t
}

fn split_section(file: &FileConfig, a: SplitArgs) -> SplitSection {
    let mut s = file.split.clone();
    set(&mut s.train_count, a.train_count);
    set(&mut s.test_count, a.test_count);
    set(&mut s.seed, a.split_seed);
    s
}

fn train_config(t: &TrainingSection) -> CliResult<TrainConfig> {
    let cfg = TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        adam: AdamConfig {
            lr: t.lr,
            ..AdamConfig::default()
        },
        lambda: t.lambda,
        patience: t.patience,
        shuffle_seed: t.seed,
        attention: t.attention,
        lr_final_fraction: t.lr_final_fraction,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_input(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Io(format!("{}: no such file", path.display())))
    }
}

fn load_split(path: &Path, split: &SplitSection) -> CliResult<(Dataset, Vec<Record>, Vec<Record>)> {
    let ds = Dataset::load(path)?;
    let (tr, te) = split_dataset(&ds, split.train_count, split.test_count, split.seed)?;
    Ok((ds, tr, te))
}

pub fn gen_data(file: &FileConfig, a: GenDataArgs) -> CliResult {
    let mut d = file.data.clone();
    set(&mut d.count, a.count);
    set(&mut d.seed, a.seed);
    set(&mut d.sim_seed, a.sim_seed.map(Some));
    set(&mut d.noise_sigma, a.noise_sigma);
    if a.no_landmarks {
        d.landmarks = false;
    }
    if d.count == 0 {
        return Err(CliError::Argument("count must be >= 1".into()));
    }
    let layout = layout(file)?;
    let basis = basis(file)?;
    let policy = PolicyConfig::new(d.seed);
    policy.validate(&layout)?;
    let sim = FaceSim::new(d.sim_seed.unwrap_or(d.seed), d.noise_sigma)?;

    let ds = generate_dataset(
        &policy,
        d.count,
        &sim,
        &layout,
        GenerateOptions {
            landmarks: d.landmarks.then_some(&basis),
            exec: Exec::default(),
        },
    )?;
    let violations: usize = ds
        .records()
        .iter()
        .map(|r| check_constraints(&r.servo, &layout, GENERATION_TOL).len())
        .sum();
    ds.save(&a.out)?;
    println!("records: {}", ds.len());
    println!("violations: {violations}");
    println!("sha256: {}", file_sha256(&a.out)?);
    if violations > 0 {
        return Err(CliError::Internal(format!("{violations} constraint violations in generated data")));
    }
    Ok(())
}

fn run_training(
    t: &TrainingSection,
    cfg: &TrainConfig,
    train_recs: &[Record],
    test_recs: &[Record],
) -> CliResult<TrainOutcome> {
    let tr = Samples::from_records(train_recs, t.kind)?;
    let te = Samples::from_records(test_recs, t.kind)?;
    let model = Model::new(ModelConfig::new(t.kind, t.seed))?;
    info!(
        "training {} ({} parameters) on {} samples, testing on {}",
        t.kind,
        model.param_count(),
        tr.len(),
        te.len()
    );
    Ok(fit(model, &tr, &te, cfg, Exec::default(), |log| {
        info!(
            "epoch {:>4}  train {:.6}  test {:.6}  mae {:.5}",
            log.epoch, log.train_loss, log.test_loss, log.test_mae
        );
    })?)
}

fn history_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".history.csv");
    out.with_file_name(name)
}

pub fn train(file: &FileConfig, a: TrainArgs) -> CliResult {
    let t = training_section(file, a.training);
    let split = split_section(file, a.split);
    let cfg = train_config(&t)?;
    ensure_input(&a.data)?;
    let (_, tr, te) = load_split(&a.data, &split)?;

    let out = run_training(&t, &cfg, &tr, &te)?;
    save_checkpoint(&out.model, &out.metadata, &a.out)?;
    let history = a.history.unwrap_or_else(|| history_path(&a.out));
    write_atomic(&history, history_csv(&out.history).as_bytes())?;
    let m = &out.metadata;
    println!("kind: {}", t.kind);
    println!("epochs: {}", m.epochs);
    println!("best_epoch: {}", m.best_epoch);
    println!("test_loss: {:?}", m.test_loss);
    println!("test_mae: {:?}", m.test_mae);
    println!("checkpoint: {}", a.out.display());
    println!("history: {}", history.display());
    Ok(())
}

pub fn eval(file: &FileConfig, a: EvalArgs) -> CliResult {
    let mut e = file.eval.clone();
    set(&mut e.trajectories, a.trajectories);
    set(&mut e.trajectory_frames, a.trajectory_frames);
    set(&mut e.trajectory_seed, a.trajectory_seed);
    set(&mut e.lambda, a.lambda.map(Some));
    set(&mut e.images, a.images);
    let split = split_section(file, a.split);
    if e.trajectories == 0 || e.trajectory_frames < 3 {
        return Err(CliError::Argument("need >= 1 trajectory of >= 3 frames".into()));
    }
    ensure_input(&a.data)?;
    ensure_input(&a.checkpoint)?;
    let layout = layout(file)?;
    let basis = basis(file)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let (ds, _, te) = load_split(&a.data, &split)?;
    let h = ds.header();
    let sim = FaceSim::new(h.sim_seed, h.noise_sigma)?;
    let opts = EvalOptions {
        lambda: e.lambda.unwrap_or(ck.metadata.lambda),
        seq: SeqParams::default(),
        trajectories: e.trajectories,
        trajectory_frames: e.trajectory_frames,
        trajectory_seed: e.trajectory_seed,
        exec: Exec::default(),
    };
    let report = evaluate_report(&ck.model, &te, &sim, &basis, &layout, &opts)?;
    report.write(&a.out)?;

    if e.images > 0 {
        let inputs: Vec<Vec<f64>> = te
            .iter()
            .take(e.images)
            .map(|r| {
                if ck.model.kind().uses_landmarks() {
                    r.landmarks.clone().unwrap_or_default()
                } else {
                    r.features.as_slice().to_vec()
                }
            })
            .collect();
        for (r, x) in te.iter().zip(&inputs) {
            let pred = clamp_frame(ck.model.predict(x)?.as_slice(), &layout)?;
            for (tag, frame) in [("human", &r.servo), ("robot", &pred)] {
                let img = render_image(&compose_landmarks(&sim.servo_to_features(frame), &basis))?;
                img.save_ppm(&a.out.join(format!("{:05}_{tag}.ppm", r.index)))?;
            }
        }
    }
    for (k, v) in &report.summary {
        println!("{k}: {v:?}");
    }
    println!("report: {}", a.out.display());
    Ok(())
}

pub fn ablate(file: &FileConfig, a: AblateArgs) -> CliResult {
    let mut base = training_section(file, a.training);
    base.kind = ModelKind::AttentionKan;
    let split = split_section(file, a.split);
    let lambdas = a.lambdas.unwrap_or_else(|| file.ablate.lambdas.clone());
    if lambdas.is_empty() {
        return Err(CliError::Argument("lambda grid is empty".into()));
    }
    let mut runs = Vec::new();
    for attention in [true, false] {
        for &lambda in &lambdas {
            let t = TrainingSection {
                attention,
                lambda,
                ..base.clone()
            };
            let cfg = train_config(&t)?;
            runs.push((t, cfg));
        }
    }
    ensure_input(&a.data)?;
    let (_, tr, te) = load_split(&a.data, &split)?;

    let mut csv = String::from("backbone,attention,lambda,test_mae,test_loss,best_epoch\n");
    for (t, cfg) in &runs {
        info!("ablation run: attention {} lambda {}", t.attention, t.lambda);
        let out = run_training(t, cfg, &tr, &te)?;
        let m = &out.metadata;
        writeln!(
            csv,
            "{},{},{:?},{:?},{:?},{}",
            t.kind, t.attention, t.lambda, m.test_mae, m.test_loss, m.best_epoch
        )
        .unwrap();
    }
    write_atomic(&a.out, csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

pub fn latency(file: &FileConfig, a: LatencyArgs) -> CliResult {
    let mut l = file.latency.clone();
    set(&mut l.frames, a.frames);
    if l.frames < 100 {
        return Err(CliError::Argument(format!("frames must be >= 100, got {}", l.frames)));
    }
    let model = match &a.checkpoint {
        Some(p) => {
            ensure_input(p)?;
            load_checkpoint(p)?.model
        }
        None => Model::new(ModelConfig::new(a.kind.unwrap_or(file.training.kind), file.training.seed))?,
    };
    let stats = measure_latency(&model, l.frames)?;
    println!("kind: {}", model.kind());
    println!("frames: {}", stats.frames);
    println!("mean_ms: {:.4}", stats.mean_s * 1e3);
    println!("max_ms: {:.4}", stats.max_s * 1e3);
    println!("fps: {:.1}", 1.0 / stats.mean_s);
    Ok(())
}
