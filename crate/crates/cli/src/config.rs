//! JSON run configuration. Every key is optional in the file; command-line
//! flags override file values.

use std::path::{Path, PathBuf};

use dfe_core::autoencoder::LossConfig;
use dfe_core::eval::{LabelingSigma, ReferenceMode};
use dfe_core::CropWindow;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable consulted for the thread count when the config
/// does not set one.
pub const THREADS_ENV: &str = "DFE_THREADS";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Training image directory.
    pub images: Option<PathBuf>,
    /// Numbered frame directory.
    pub frames: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    /// `[w_x, w_y]`, both odd.
    pub window: Option<[usize; 2]>,
    /// Frame number holding the feature definition; defaults to the first
    /// processed frame.
    pub reference_frame: Option<u64>,
    /// Feature pixel `[x, y]` in the reference frame.
    pub reference_point: Option<[usize; 2]>,
    pub mode: Option<ReferenceMode>,
    pub loss: Option<LossConfig>,
    /// Keep every N-th frame before tracking.
    pub keep_every: Option<usize>,
    pub sigma_x: Option<f64>,
    pub sigma_y: Option<f64>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub crops_per_image: Option<usize>,
    pub learning_rate: Option<f64>,
    pub threads: Option<usize>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($field:ident),* $(,)?) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Values set in `other` replace those of `self`.
    pub fn overlay(mut self, other: &RunConfig) -> Self {
        let s = &mut self;
        overlay!(s, other; images, frames, checkpoint, ground_truth, window, reference_frame,
            reference_point, mode, loss, keep_every, sigma_x, sigma_y, seed, epochs, batch_size,
            crops_per_image, learning_rate, threads);
        self
    }

    pub fn window(&self) -> CliResult<CropWindow> {
        match self.window {
            None => Ok(CropWindow::default()),
            Some([w_x, w_y]) => CropWindow::new(w_x, w_y).map_err(|e| CliError::Config(e.to_string())),
        }
    }

    /// Flag, then config, then the environment; `None` leaves the default.
    pub fn thread_count(&self) -> CliResult<Option<usize>> {
        if let Some(n) = self.threads {
            return Ok(Some(n));
        }
        match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("{THREADS_ENV}={v} is not a thread count"))),
            Err(_) => Ok(None),
        }
    }

    pub fn sigma(&self) -> CliResult<LabelingSigma> {
        match (self.sigma_x, self.sigma_y) {
            (Some(x), Some(y)) => Ok(LabelingSigma::new(x, y)?),
            _ => Err(CliError::Config("sigma_x and sigma_y are required for evaluation".into())),
        }
    }

    pub fn reference_point(&self) -> CliResult<(usize, usize)> {
        self.reference_point
            .map(|[x, y]| (x, y))
            .ok_or_else(|| CliError::Config("reference_point is required".into()))
    }
}

/// A path that must already exist.
pub fn existing(path: &Option<PathBuf>, key: &str) -> CliResult<PathBuf> {
    let p = path
        .clone()
        .ok_or_else(|| CliError::Config(format!("`{key}` is required")))?;
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::MissingPath(p))
    }
}

pub fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Config(format!("`{key}` is required")))
}
