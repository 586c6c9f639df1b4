use proptest::prelude::*;

use mimic_core::dataset::{Dataset, DatasetHeader, Record, FORMAT_VERSION};
use mimic_core::face_sim::{FeatureVector, FEATURE_DIM, LANDMARK_DIM};
use mimic_core::servo_space::{ServoFrame, SERVO_DIM};

fn record(index: u64, values: &[f64], landmarks: bool) -> Record {
    let servo = ServoFrame::from_slice(&values[..SERVO_DIM]).unwrap();
    let features = FeatureVector::from_slice(&values[SERVO_DIM..SERVO_DIM + FEATURE_DIM]).unwrap();
    Record {
        index,
        servo,
        features,
        landmarks: landmarks.then(|| values[SERVO_DIM + FEATURE_DIM..].to_vec()),
    }
}

fn dataset(values: Vec<Vec<f64>>, landmarks: bool, base_seed: u64, noise_sigma: f64) -> Dataset {
    let records: Vec<Record> = values.iter().enumerate().map(|(i, v)| record(i as u64, v, landmarks)).collect();
    let header = DatasetHeader {
        format: FORMAT_VERSION,
        base_seed,
        sim_seed: base_seed ^ 0x55,
        noise_sigma,
        count: records.len(),
    };
    Dataset::new(header, records).unwrap()
}

const WIDTH: usize = SERVO_DIM + FEATURE_DIM + LANDMARK_DIM;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_datasets_round_trip(
        values in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, WIDTH), 10),
        landmarks in any::<bool>(),
        base_seed in any::<u64>(),
        noise_sigma in 0.0f64..0.1,
    ) {
        let ds = dataset(values, landmarks, base_seed, noise_sigma);
        let text = ds.to_jsonl();
        let back = Dataset::from_jsonl(&text).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(back.to_jsonl(), text);
    }
}

#[test]
fn file_round_trip_leaves_bytes_alone() {
    let values = (0..10).map(|r| (0..WIDTH).map(|c| ((r * 31 + c) % 97) as f64 / 97.0).collect()).collect();
    let ds = dataset(values, true, 4, 0.005);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    ds.save(&a).unwrap();
    Dataset::load(&a).unwrap().save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let first = std::fs::read_to_string(&a).unwrap();
    assert!(first.lines().next().unwrap().contains("\"format\":1"));
}
