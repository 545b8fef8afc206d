use dfe_core::autoencoder::{
    load_checkpoint, sample_crops, save_checkpoint, train, Autoencoder, LossConfig, ModelSpec,
    TrainingConfig, TrainingMeta,
};
use dfe_core::matcher::encode_dense;
use dfe_core::synth::texture_corpus;
use dfe_core::{extract_crop, rgb_to_cielab, CropWindow, LabImage};

fn corpus() -> Vec<LabImage> {
    texture_corpus(3, 48, 40, 9).unwrap().iter().map(rgb_to_cielab).collect()
}

#[test]
fn trained_checkpoint_reloads_to_identical_codes() {
    let images = corpus();
    let (crops, origins, skipped) = sample_crops(&images, CropWindow::default(), 40, 3);
    assert!(skipped.is_empty());
    assert_eq!(crops.len(), 120);
    assert!(origins.iter().all(|o| CropWindow::default().is_valid_center(o.center.0, o.center.1, 48, 40)));

    let spec = ModelSpec::width_reduced(2);
    let mut model = Autoencoder::new(spec, 1).unwrap();
    let cfg = TrainingConfig {
        epochs: 2,
        batch_size: 30,
        loss: LossConfig::Weighted { sigma: 5.0 },
        ..TrainingConfig::default()
    };
    let history = train(&mut model, &crops, &cfg).unwrap();
    assert_eq!(history.epoch_losses.len(), 2);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.dfe");
    let meta = TrainingMeta {
        loss: cfg.loss,
        epochs: cfg.epochs,
        final_loss: history.final_loss().unwrap(),
        seed: cfg.seed,
    };
    save_checkpoint(&model, Some(&meta), &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.meta, Some(meta));
    assert_eq!(back.model, model);

    let crop = extract_crop(&images[1], 20, 18, CropWindow::default()).unwrap();
    assert_eq!(back.model.encode(&crop).unwrap(), model.encode(&crop).unwrap());
    let map = encode_dense(&back.model, &images[1], CropWindow::default()).unwrap();
    assert_eq!(map.code(20, 18), model.encode(&crop).unwrap().values());
}

#[test]
fn training_reduces_reconstruction_error() {
    let images = corpus();
    let (crops, _, _) = sample_crops(&images, CropWindow::default(), 64, 5);
    let mut model = Autoencoder::new(ModelSpec::width_reduced(2), 2).unwrap();
    let before: f64 = mse(&model, &crops);
    let cfg = TrainingConfig { epochs: 4, batch_size: 32, ..TrainingConfig::default() };
    train(&mut model, &crops, &cfg).unwrap();
    let after = mse(&model, &crops);
    assert!(after < 0.5 * before, "{before} -> {after}");
}

fn mse(model: &Autoencoder, crops: &[dfe_core::Crop]) -> f64 {
    let rec = model.reconstruct_batch(crops).unwrap();
    let n: usize = crops.iter().map(|c| c.data().len()).sum();
    crops
        .iter()
        .zip(&rec)
        .flat_map(|(c, r)| c.data().iter().zip(r.data()).map(|(a, b)| (a - b).powi(2)))
        .sum::<f64>()
        / n as f64
}
