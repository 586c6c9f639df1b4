use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mimic_core::expert_policy::{generate_dataset, GenerateOptions, PolicyConfig};
use mimic_core::face_sim::{FaceSim, TRAINING_NOISE_SIGMA};
use mimic_core::losses::LossConfig;
use mimic_core::model::{Model, ModelConfig, ModelKind};
use mimic_core::parallel::Exec;
use mimic_core::servo_space::make_default_layout;
use mimic_core::train::{evaluate, train, Samples, TrainConfig};

const STRATEGIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn generation(c: &mut Criterion) {
    let layout = make_default_layout();
    let sim = FaceSim::new(1, TRAINING_NOISE_SIGMA).unwrap();
    let policy = PolicyConfig::new(1);
    let mut g = c.benchmark_group("generate_1000");
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let opts = GenerateOptions { landmarks: None, exec };
                black_box(generate_dataset(&policy, 1000, &sim, &layout, opts).unwrap())
            })
        });
    }
    g.finish();
}

fn inference(c: &mut Criterion) {
    let layout = make_default_layout();
    let sim = FaceSim::new(2, TRAINING_NOISE_SIGMA).unwrap();
    let ds = generate_dataset(&PolicyConfig::new(2), 256, &sim, &layout, GenerateOptions::default()).unwrap();
    let samples = Samples::from_records(ds.records(), ModelKind::AttentionKan).unwrap();
    let model = Model::new(ModelConfig::new(ModelKind::AttentionKan, 2)).unwrap();
    let inputs: Vec<&[f64]> = (0..samples.len()).map(|i| samples.input(i)).collect();
    let loss = LossConfig::default();

    let mut g = c.benchmark_group("attention_kan_batch_256");
    g.sample_size(20);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::new("predict", name), |b| {
            b.iter(|| black_box(model.predict_batch(&inputs, exec).unwrap()))
        });
        g.bench_function(BenchmarkId::new("evaluate", name), |b| {
            b.iter(|| black_box(evaluate(&model, &samples, &loss, exec).unwrap()))
        });
        let epoch = TrainConfig {
            epochs: 1,
            batch_size: 64,
            ..TrainConfig::default()
        };
        g.bench_function(BenchmarkId::new("train_epoch", name), |b| {
            b.iter(|| black_box(train(model.clone(), &samples, &samples, &epoch, exec, |_| {}).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, generation, inference);
criterion_main!(benches);
