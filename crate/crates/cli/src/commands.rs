use std::path::{Path, PathBuf};

use dfe_core::autoencoder::{
    load_checkpoint, sample_training_crops, save_checkpoint, train_with_callback, Autoencoder,
    ModelSpec, TrainingConfig, TrainingMeta,
};
use dfe_core::eval::{
    error_report, read_track_csv, track_with_callback, write_report, write_track_csv, ErrorReport,
    GroundTruth, LabelingSigma, TrackPoint,
};
use dfe_core::io::{frame_file_name, keep_every, list_frames, load_rgb, save_png, FrameFile};
use dfe_core::matcher::{encode_dense, export_ssr_landscape, match_feature, ssr_field};
use dfe_core::nn::gradcheck;
use dfe_core::synth::{moving_patch_video, texture_corpus, TextureField, VideoConfig};
use dfe_core::{extract_crop, rgb_to_cielab, CropWindow, LabImage};

use crate::config::{existing, required, RunConfig};
use crate::error::{CliError, CliResult};

fn load_model(cfg: &RunConfig) -> CliResult<Autoencoder> {
    let path = existing(&cfg.checkpoint, "checkpoint")?;
    Ok(load_checkpoint(&path)?.model)
}

/// The configured window, which must be the one the model was built for.
fn model_window(cfg: &RunConfig, spec: &ModelSpec) -> CliResult<CropWindow> {
    let window = cfg.window()?;
    if cfg.window.is_some() && window != spec.input_window {
        return Err(CliError::Config(format!(
            "window {}x{} does not match the model's {}x{}",
            window.w_x(),
            window.w_y(),
            spec.input_window.w_x(),
            spec.input_window.w_y()
        )));
    }
    Ok(spec.input_window)
}

fn load_lab(path: &Path) -> CliResult<LabImage> {
    Ok(rgb_to_cielab(&load_rgb(path)?))
}

pub fn train(cfg: &RunConfig, history_out: Option<&Path>) -> CliResult<()> {
    let images = existing(&cfg.images, "images")?;
    let checkpoint = required(&cfg.checkpoint, "checkpoint")?;
    let seed = cfg
        .seed
        .ok_or_else(|| CliError::Config("`seed` is required for training".into()))?;
    let spec = ModelSpec::default();
    let window = model_window(cfg, &spec)?;
    let defaults = TrainingConfig::default();
    let config = TrainingConfig {
        epochs: cfg.epochs.unwrap_or(defaults.epochs),
        batch_size: cfg.batch_size.unwrap_or(defaults.batch_size),
        loss: cfg.loss.unwrap_or(defaults.loss),
        seed,
        crops_per_image: cfg.crops_per_image.unwrap_or(defaults.crops_per_image),
        learning_rate: cfg.learning_rate.unwrap_or(defaults.learning_rate),
    };
    config.validate()?;
    let set = sample_training_crops(&images, window, config.crops_per_image, seed)?;
    if set.crops.is_empty() {
        return Err(CliError::Config(format!("{}: no usable training images", images.display())));
    }
    log::info!("{} crops from {} images", set.crops.len(), set.images.len() - set.skipped.len());
    let mut model = Autoencoder::new(spec, seed)?;
    let history = train_with_callback(&mut model, &set.crops, &config, |epoch, loss, _| {
        log::info!("epoch {epoch}/{}: loss {loss:.6}", config.epochs);
    })?;
    let final_loss = history.final_loss().unwrap_or(f64::NAN);
    let meta = TrainingMeta {
        loss: config.loss,
        epochs: config.epochs,
        final_loss,
        seed,
    };
    save_checkpoint(&model, Some(&meta), checkpoint)?;
    let history_path = history_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| checkpoint.with_extension("history.csv"));
    history.write_csv(&history_path)?;
    println!("final loss {final_loss}");
    Ok(())
}

/// Frames after subsampling, starting at the reference frame.
fn tracked_frames(cfg: &RunConfig) -> CliResult<Vec<FrameFile>> {
    let dir = existing(&cfg.frames, "frames")?;
    let frames = keep_every(&list_frames(&dir)?, cfg.keep_every.unwrap_or(1));
    let first = frames
        .first()
        .ok_or_else(|| CliError::Config(format!("{}: no frames", dir.display())))?;
    let reference = cfg.reference_frame.unwrap_or(first.number);
    let start = frames.iter().position(|f| f.number == reference).ok_or_else(|| {
        CliError::Config(format!("reference frame {reference} is not among the processed frames"))
    })?;
    Ok(frames[start..].to_vec())
}

fn evaluate(points: &[TrackPoint], gt: &GroundTruth, sigma: &LabelingSigma, dir: &Path) -> CliResult<ErrorReport> {
    let report = error_report(points, gt, sigma)?;
    write_report(&report, dir)?;
    println!(
        "mean error {:.4} px over {} frames; diverged: {}{}",
        report.mean_error,
        report.frames.len(),
        report.diverged,
        report
            .first_exceed_frame
            .map_or(String::new(), |f| format!(" (first exceedance at frame {f})"))
    );
    Ok(report)
}

fn default_report_dir(out: &Path) -> PathBuf {
    out.parent().unwrap_or(Path::new(".")).join("report")
}

pub fn track(cfg: &RunConfig, out: &Path, report_dir: Option<&Path>) -> CliResult<()> {
    let model = load_model(cfg)?;
    let window = model_window(cfg, model.spec())?;
    let point = cfg.reference_point()?;
    let frames = tracked_frames(cfg)?;
    let truth = match &cfg.ground_truth {
        Some(_) => {
            let gt = GroundTruth::read_csv(&existing(&cfg.ground_truth, "ground_truth")?)?;
            let sigma = cfg.sigma()?;
            if let Some(f) = frames.iter().skip(1).find(|f| gt.get(f.number).is_none()) {
                return Err(dfe_core::Error::MissingGroundTruth(f.number).into());
            }
            Some((gt, sigma))
        }
        None => None,
    };
    log::info!("tracking {} frames", frames.len());
    let total = frames.len();
    let images = frames
        .iter()
        .map(|f| load_lab(&f.path).map(|img| (f.number, img)).map_err(|e| match e {
            CliError::Core(c) => c,
            other => dfe_core::Error::InvalidImage(other.to_string()),
        }));
    let mut done = 0;
    let seq = track_with_callback(&model, images, point, window, cfg.mode.unwrap_or_default(), |f| {
        done += 1;
        log::info!("frame {} ({done}/{total}): ({:.3}, {:.3})", f.frame, f.point.x, f.point.y);
    })?;
    write_track_csv(&seq.points(), out)?;
    if let Some((gt, sigma)) = truth {
        let dir = report_dir.map(Path::to_path_buf).unwrap_or_else(|| default_report_dir(out));
        evaluate(&seq.points(), &gt, &sigma, &dir)?;
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig, track_csv: &Path, report_dir: &Path) -> CliResult<()> {
    if !track_csv.exists() {
        return Err(CliError::MissingPath(track_csv.to_path_buf()));
    }
    let points = read_track_csv(track_csv)?;
    let gt = GroundTruth::read_csv(&existing(&cfg.ground_truth, "ground_truth")?)?;
    evaluate(&points, &gt, &cfg.sigma()?, report_dir)?;
    Ok(())
}

pub fn match_pair(cfg: &RunConfig, reference: &Path, target: &Path) -> CliResult<()> {
    let model = load_model(cfg)?;
    let window = model_window(cfg, model.spec())?;
    let (i, j) = cfg.reference_point()?;
    let reference = load_lab(reference)?;
    if !window.is_valid_center(i, j, reference.width(), reference.height()) {
        return Err(dfe_core::Error::InvalidReference { i, j }.into());
    }
    let code = model.encode(&extract_crop(&reference, i, j, window)?)?;
    let result = match_feature(&model, &code, &load_lab(target)?, window)?;
    println!("{}", serde_json::to_string_pretty(&result).expect("match results serialize"));
    Ok(())
}

pub fn landscape(cfg: &RunConfig, frame: u64, out: &Path) -> CliResult<()> {
    let model = load_model(cfg)?;
    let window = model_window(cfg, model.spec())?;
    let (i, j) = cfg.reference_point()?;
    let frames = tracked_frames(cfg)?;
    let target = frames
        .iter()
        .find(|f| f.number == frame)
        .ok_or_else(|| CliError::Config(format!("frame {frame} is not among the processed frames")))?;
    let reference = load_lab(&frames[0].path)?;
    if !window.is_valid_center(i, j, reference.width(), reference.height()) {
        return Err(dfe_core::Error::InvalidReference { i, j }.into());
    }
    let code = model.encode(&extract_crop(&reference, i, j, window)?)?;
    let field = ssr_field(&encode_dense(&model, &load_lab(&target.path)?, window)?, &code)?;
    export_ssr_landscape(&field, out)?;
    println!("wrote {}x{} landscape to {}", field.width(), field.height(), out.display());
    Ok(())
}

pub struct GradcheckOptions {
    pub width_divisor: usize,
    pub batch: usize,
    pub step: f64,
    pub tolerance: f64,
}

pub fn run_gradcheck(cfg: &RunConfig, opts: &GradcheckOptions) -> CliResult<()> {
    let seed = cfg.seed.unwrap_or(0);
    let model = Autoencoder::new(ModelSpec::width_reduced(opts.width_divisor), seed)?;
    let window = model.spec().input_window;
    let side = 2 * window.w_x().max(window.w_y());
    let img = rgb_to_cielab(&TextureField::random(seed, side as f64).render(side, side)?);
    let crops = (0..opts.batch)
        .map(|k| {
            let i = window.half_x() + (7 * k + 3) % (side - window.w_x() + 1);
            let j = window.half_y() + (11 * k + 5) % (side - window.w_y() + 1);
            extract_crop(&img, i, j, window)
        })
        .collect::<dfe_core::Result<Vec<_>>>()?;
    let x = dfe_core::autoencoder::crops_to_tensor(model.spec(), &crops)?;
    let loss_cfg = cfg.loss.unwrap_or_default();
    let loss = loss_cfg.build(&model)?;
    let report = gradcheck(&model.as_network(), &x, &x, &loss, opts.step)?;
    println!(
        "{} loss, {} values: max parameter rel. error {:.3e} (tensor {}), input rel. error {:.3e}, {} kink-refined, {} unresolved",
        loss_cfg.name(),
        report.checked,
        report.max_rel_error,
        report.worst_tensor,
        report.input_rel_error,
        report.kink_refined,
        report.unresolved
    );
    if report.max_rel_error < opts.tolerance && report.input_rel_error < opts.tolerance {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("relative error above {:e}", opts.tolerance)))
    }
}

pub fn synth_textures(out: &Path, count: usize, size: usize, seed: u64) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(|e| dfe_core::Error::io(out, e))?;
    for (k, img) in texture_corpus(count, size, size, seed)?.iter().enumerate() {
        save_png(img, &out.join(format!("texture_{k:04}.png")))?;
    }
    println!("wrote {count} textures to {}", out.display());
    Ok(())
}

pub fn synth_video(out: &Path, config: &VideoConfig) -> CliResult<()> {
    let video = moving_patch_video(config)?;
    let frames = out.join("frames");
    std::fs::create_dir_all(&frames).map_err(|e| dfe_core::Error::io(&frames, e))?;
    for (n, img) in &video.frames {
        save_png(img, &frames.join(frame_file_name(*n)))?;
    }
    GroundTruth::new(video.truth.clone())?.write_csv(&out.join("ground_truth.csv"))?;
    let (x, y) = video.reference_point();
    println!(
        "wrote {} frames to {}; reference point {x},{y}; labeling sigma {}",
        video.frames.len(),
        frames.display(),
        video.label_sigma
    );
    Ok(())
}
