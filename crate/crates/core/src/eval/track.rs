use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{Autoencoder, LatentCode};
use crate::error::{Error, Result};
use crate::image::{CropWindow, LabImage};
use crate::matcher::{encode_dense, match_in_map, MatchResult};

/// How the reference code evolves over a sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// The code extracted once from the first frame.
    #[default]
    Fixed,
    /// The code re-extracted at each frame's pixel-level prediction.
    Updating,
}

/// One row of a track: `frame,x,y,ssr,refined`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackPoint {
    pub frame: u64,
    pub x: f64,
    pub y: f64,
    /// `NaN` when the frame could not be matched.
    pub ssr: f64,
    pub refined: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackedFrame {
    pub frame: u64,
    /// `None` when matching failed and the previous prediction was kept.
    pub result: Option<MatchResult>,
    pub point: TrackPoint,
}

/// Results of every processed frame; the first is the reference frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackSequence {
    pub mode: ReferenceMode,
    pub reference_point: (usize, usize),
    pub frames: Vec<TrackedFrame>,
}

impl TrackSequence {
    pub fn points(&self) -> Vec<TrackPoint> {
        self.frames.iter().map(|f| f.point).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_track_csv(&self.points(), path)
    }
}

pub fn write_track_csv(points: &[TrackPoint], path: &Path) -> Result<()> {
    let mut out = String::from("frame,x,y,ssr,refined\n");
    for p in points {
        out.push_str(&format!("{},{},{},{},{}\n", p.frame, p.x, p.y, p.ssr, p.refined));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_track_csv(path: &Path) -> Result<Vec<TrackPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "frame,x,y,ssr,refined" => {}
        _ => return Err(Error::parse(path, "expected header `frame,x,y,ssr,refined`")),
    }
    let mut points = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::parse(path, format!("line {}: `{line}`", n + 1));
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 5 {
            return Err(bad());
        }
        points.push(TrackPoint {
            frame: cells[0].parse().map_err(|_| bad())?,
            x: cells[1].parse().map_err(|_| bad())?,
            y: cells[2].parse().map_err(|_| bad())?,
            ssr: cells[3].parse().map_err(|_| bad())?,
            refined: cells[4].parse().map_err(|_| bad())?,
        });
    }
    Ok(points)
}

/// Tracks the feature centered at `ref_point` of the first frame through
/// the sequence. Every frame, including the first, is matched by global
/// search. A frame that cannot be matched keeps the previous prediction.
pub fn track<I>(
    model: &Autoencoder,
    frames: I,
    ref_point: (usize, usize),
    window: CropWindow,
    mode: ReferenceMode,
) -> Result<TrackSequence>
where
    I: IntoIterator<Item = Result<(u64, LabImage)>>,
{
    track_with_callback(model, frames, ref_point, window, mode, |_| {})
}

/// As [`track`], calling `on_frame` after each frame.
pub fn track_with_callback<I>(
    model: &Autoencoder,
    frames: I,
    ref_point: (usize, usize),
    window: CropWindow,
    mode: ReferenceMode,
    mut on_frame: impl FnMut(&TrackedFrame),
) -> Result<TrackSequence>
where
    I: IntoIterator<Item = Result<(u64, LabImage)>>,
{
    let mut iter = frames.into_iter();
    let (first_id, first) = iter
        .next()
        .ok_or_else(|| Error::InvalidConfig("no frames to track".into()))??;
    let (i, j) = ref_point;
    if !window.is_valid_center(i, j, first.width(), first.height()) {
        return Err(Error::InvalidReference { i, j });
    }
    let first_map = encode_dense(model, &first, window)?;
    let mut reference = first_map
        .latent(i, j)
        .ok_or(Error::InvalidReference { i, j })?;

    let mut seq = TrackSequence {
        mode,
        reference_point: ref_point,
        frames: Vec::new(),
    };
    let mut last = (i as f64, j as f64);
    let mut process = |id: u64, outcome: Result<(MatchResult, Option<LatentCode>)>,
                       seq: &mut TrackSequence,
                       reference: &mut LatentCode| {
        let tracked = match outcome {
            Ok((m, next_ref)) => {
                last = m.subpixel;
                if let Some(r) = next_ref {
                    *reference = r;
                }
                TrackedFrame {
                    frame: id,
                    result: Some(m),
                    point: TrackPoint {
                        frame: id,
                        x: m.subpixel.0,
                        y: m.subpixel.1,
                        ssr: m.ssr_min,
                        refined: m.refined,
                    },
                }
            }
            Err(e) => {
                log::warn!("frame {id}: {e}; keeping the previous prediction");
                TrackedFrame {
                    frame: id,
                    result: None,
                    point: TrackPoint {
                        frame: id,
                        x: last.0,
                        y: last.1,
                        ssr: f64::NAN,
                        refined: false,
                    },
                }
            }
        };
        on_frame(&tracked);
        seq.frames.push(tracked);
    };

    let outcome = match_in_map(&first_map, &reference).map(|m| (m, None));
    process(first_id, outcome, &mut seq, &mut reference);
    drop(first_map);

    for item in iter {
        let (id, image) = item?;
        let outcome = encode_dense(model, &image, window).and_then(|map| {
            let m = match_in_map(&map, &reference)?;
            let next = match mode {
                ReferenceMode::Fixed => None,
                ReferenceMode::Updating => map.latent(m.pixel.0, m.pixel.1),
            };
            Ok((m, next))
        });
        process(id, outcome, &mut seq, &mut reference);
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let pts = vec![
            TrackPoint { frame: 1, x: 10.25, y: 3.0, ssr: 0.0, refined: true },
            TrackPoint { frame: 26, x: 11.0, y: 4.5, ssr: 1.5e-3, refined: false },
            TrackPoint { frame: 51, x: 11.0, y: 4.5, ssr: f64::NAN, refined: false },
        ];
        write_track_csv(&pts, &p).unwrap();
        let back = read_track_csv(&p).unwrap();
        assert_eq!(back[..2], pts[..2]);
        assert!(back[2].ssr.is_nan());
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("frame,x,y,ssr,refined\n1,10.25,3,0,true\n"));
    }
}
