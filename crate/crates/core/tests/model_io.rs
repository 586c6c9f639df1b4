use mimic_core::model::{load_checkpoint, save_checkpoint, Checkpoint, Model, ModelConfig, ModelKind, TrainingMeta};
use mimic_core::parallel::Exec;
use mimic_core::Error;

fn inputs(kind: ModelKind, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|k| (0..kind.input_dim()).map(|i| ((i * 13 + k * 5) % 17) as f64 / 16.0).collect())
        .collect()
}

#[test]
fn checkpoint_preserves_the_function() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let model = Model::new(ModelConfig::new(kind, 99)).unwrap();
        let meta = TrainingMeta {
            lambda: 0.0,
            ..TrainingMeta::default()
        };
        let path = dir.path().join(format!("{kind}.ckpt"));
        save_checkpoint(&model, &meta, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.metadata, meta);
        assert_eq!(back.model.config(), model.config());
        for x in inputs(kind, 8) {
            assert_eq!(back.model.predict(&x).unwrap(), model.predict(&x).unwrap());
        }
    }
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let ck = Checkpoint {
        model: Model::new(ModelConfig::new(ModelKind::MlpBlendshape, 1)).unwrap(),
        metadata: TrainingMeta::default(),
    };
    let bytes = ck.to_bytes();

    let mut magic = bytes.clone();
    magic[0] ^= 0xff;
    assert!(matches!(Checkpoint::from_bytes(&magic), Err(Error::Format(_))));

    let mut older = bytes.clone();
    older[8..12].copy_from_slice(&0u32.to_le_bytes());
    assert!(matches!(Checkpoint::from_bytes(&older), Err(Error::Version { found: 0, .. })));

    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));

    let mut flipped = bytes.clone();
    let last = flipped.len() - 1;
    flipped[last] ^= 1;
    assert!(matches!(Checkpoint::from_bytes(&flipped), Err(Error::Integrity(_))));

    let missing = std::path::Path::new("/nonexistent/dir/model.ckpt");
    assert!(matches!(load_checkpoint(missing), Err(Error::Io { .. })));
}

#[test]
fn batch_inference_is_per_item() {
    let kind = ModelKind::AttentionKan;
    let model = Model::new(ModelConfig::new(kind, 3)).unwrap();
    let xs = inputs(kind, 256);
    let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let out = model.predict_batch(&refs, Exec::Parallel).unwrap();
    assert_eq!(out.len(), 256);
    assert_eq!(out, model.predict_batch(&refs, Exec::Sequential).unwrap());
    assert_eq!(model.predict_batch(&refs[..1], Exec::default()).unwrap()[0], model.predict(refs[0]).unwrap());

    let perm: Vec<usize> = (0..256).map(|i| (i * 37) % 256).collect();
    let shuffled: Vec<&[f64]> = perm.iter().map(|&i| refs[i]).collect();
    let out_shuffled = model.predict_batch(&shuffled, Exec::default()).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(out_shuffled[k], out[i]);
    }
    assert!(matches!(model.predict_batch(&[], Exec::default()), Err(Error::Argument(_))));
}
