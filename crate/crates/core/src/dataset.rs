//! Dataset file format and train/test splitting.
//!
//! A dataset is a UTF-8 JSON-Lines file. Line 1 is the header object, every
//! following line one record:
//!
//! ```text
//! {"format":1,"base_seed":7,"sim_seed":7,"noise_sigma":0.005,"count":9000}
//! {"index":0,"servo":[...25],"features":[...55]}
//! {"index":1,"servo":[...25],"features":[...55],"landmarks":[...126]}
//! ```
//!
//! Numbers are written in shortest round-trip decimal form, so a load
//! reproduces every value bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::face_sim::{FeatureVector, FEATURE_DIM, LANDMARK_DIM};
use crate::seed;
use crate::servo_space::{ServoFrame, SERVO_DIM};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: u32,
    pub base_seed: u64,
    pub sim_seed: u64,
    pub noise_sigma: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub index: u64,
    pub servo: ServoFrame,
    pub features: FeatureVector,
    /// Flattened (x, y) landmarks, when stored.
    pub landmarks: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    index: u64,
    servo: Vec<f64>,
    features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    landmarks: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    header: DatasetHeader,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(header: DatasetHeader, records: Vec<Record>) -> Result<Self> {
        if header.format != FORMAT_VERSION {
            return Err(Error::Version {
                found: header.format,
                expected: FORMAT_VERSION,
            });
        }
        if header.count != records.len() {
            return Err(Error::Integrity(format!(
                "header declares {} records, found {}",
                header.count,
                records.len()
            )));
        }
        for (pos, r) in records.iter().enumerate() {
            if r.index != pos as u64 {
                return Err(Error::Integrity(format!("record at position {pos} has index {}", r.index)));
            }
            if let Some(lm) = &r.landmarks {
                if lm.len() != LANDMARK_DIM || lm.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Integrity(format!("record {}: invalid landmarks", r.index)));
                }
            }
        }
        Ok(Dataset { header, records })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_landmarks(&self) -> bool {
        self.records.iter().all(|r| r.landmarks.is_some())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            let line = RecordLine {
                index: r.index,
                servo: r.servo.as_slice().to_vec(),
                features: r.features.as_slice().to_vec(),
                landmarks: r.landmarks.clone(),
            };
            writeln!(out, "{}", serde_json::to_string(&line).expect("record serializes")).unwrap();
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::Format("dataset: empty file".into()))?;
        let header: DatasetHeader =
            serde_json::from_str(first).map_err(|e| Error::Format(format!("dataset line 1: {e}")))?;
        if header.format != FORMAT_VERSION {
            return Err(Error::Version {
                found: header.format,
                expected: FORMAT_VERSION,
            });
        }
        let mut records = Vec::with_capacity(header.count.min(1 << 20));
        for (n, line) in lines {
            let raw: RecordLine =
                serde_json::from_str(line).map_err(|e| Error::Format(format!("dataset line {}: {e}", n + 1)))?;
            let bad = |what: &str, e: Error| Error::Integrity(format!("record {}: {what}: {e}", raw.index));
            if raw.servo.len() != SERVO_DIM || raw.features.len() != FEATURE_DIM {
                return Err(Error::Integrity(format!("record {}: wrong vector length", raw.index)));
            }
            let servo = ServoFrame::from_slice(&raw.servo).map_err(|e| bad("servo", e))?;
            let features = FeatureVector::from_slice(&raw.features).map_err(|e| bad("features", e))?;
            records.push(Record {
                index: raw.index,
                servo,
                features,
                landmarks: raw.landmarks,
            });
        }
        Dataset::new(header, records)
    }

    /// Writes atomically (temporary file, then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }
}

/// Seeded shuffle, then the first `train_n` records form the training set
/// and the next `test_n` the test set.
pub fn split_dataset(ds: &Dataset, train_n: usize, test_n: usize, split_seed: u64) -> Result<(Vec<Record>, Vec<Record>)> {
    if train_n + test_n > ds.len() {
        return Err(Error::Argument(format!(
            "split {train_n} + {test_n} exceeds dataset size {}",
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut seed::rng(seed::mix(split_seed, seed::stream::SPLIT)));
    let pick = |idx: &[usize]| idx.iter().map(|&i| ds.records[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..train_n]), pick(&order[train_n..train_n + test_n])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert_policy::{generate_dataset, GenerateOptions, PolicyConfig};
    use crate::face_sim::{BlendBasis, FaceSim};
    use crate::servo_space::make_default_layout;
    use std::collections::BTreeSet;

    fn small(n: usize, landmarks: bool) -> Dataset {
        let basis = BlendBasis::shipped();
        let opts = GenerateOptions {
            landmarks: landmarks.then_some(&basis),
            ..Default::default()
        };
        generate_dataset(&PolicyConfig::new(3), n, &FaceSim::new(3, 0.005).unwrap(), &make_default_layout(), opts).unwrap()
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        for lm in [false, true] {
            let ds = small(25, lm);
            let text = ds.to_jsonl();
            assert_eq!(Dataset::from_jsonl(&text).unwrap(), ds);
            assert_eq!(Dataset::from_jsonl(&text).unwrap().to_jsonl(), text);
        }
    }

    #[test]
    fn truncated_and_malformed_files() {
        let text = small(10, false).to_jsonl();
        let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(matches!(Dataset::from_jsonl(&cut), Err(Error::Integrity(_))));

        let mut lines: Vec<&str> = text.lines().collect();
        lines[4] = "{\"index\": 3, \"servo\": [";
        let err = Dataset::from_jsonl(&lines.join("\n")).unwrap_err();
        assert!(err.to_string().contains("line 5"), "{err}");

        let bad = text.replacen("\"format\":1", "\"format\":2", 1);
        assert!(matches!(Dataset::from_jsonl(&bad), Err(Error::Version { found: 2, .. })));
    }

    #[test]
    fn out_of_range_value_names_record() {
        let ds = small(5, false);
        let mut text = ds.to_jsonl();
        let target = format!("{{\"index\":2,\"servo\":[{:?}", ds.records()[2].servo[0]);
        text = text.replacen(&target, "{\"index\":2,\"servo\":[1.5", 1);
        let err = Dataset::from_jsonl(&text).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
        assert!(err.to_string().contains("record 2"));
    }

    #[test]
    fn split_partitions() {
        let ds = small(90, false);
        let (train, test) = split_dataset(&ds, 80, 10, 1).unwrap();
        assert_eq!((train.len(), test.len()), (80, 10));
        let a: BTreeSet<u64> = train.iter().map(|r| r.index).collect();
        let b: BTreeSet<u64> = test.iter().map(|r| r.index).collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.union(&b).count(), 90);
        assert_eq!(split_dataset(&ds, 80, 10, 1).unwrap(), (train, test));
        assert!(split_dataset(&ds, 80, 11, 1).is_err());
    }

    #[test]
    fn save_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = small(12, true);
        ds.save(&path).unwrap();
        assert_eq!(Dataset::load(&path).unwrap(), ds);
        assert!(matches!(Dataset::load(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
