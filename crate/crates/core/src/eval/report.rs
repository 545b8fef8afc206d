use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chi2::{chi2_inv_cdf, ci_curve};
use super::track::TrackPoint;
use crate::error::{Error, Result};

/// Confidence level of the divergence test.
pub const CI_PROBABILITY: f64 = 0.99;

/// Largest distance between two points of a `width × height` frame.
pub fn max_possible_distance(width: usize, height: usize) -> f64 {
    (width as f64).hypot(height as f64)
}

/// Annotated feature positions by frame number.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    entries: BTreeMap<u64, (f64, f64)>,
}

impl GroundTruth {
    /// Entries must have strictly increasing frame numbers.
    pub fn new(entries: Vec<(u64, (f64, f64))>) -> Result<Self> {
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidConfig(
                "ground-truth frames must be strictly increasing".into(),
            ));
        }
        if entries.iter().any(|(_, (x, y))| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidConfig("ground-truth coordinates must be finite".into()));
        }
        Ok(Self {
            entries: entries.into_iter().collect(),
        })
    }

    pub fn get(&self, frame: u64) -> Option<(f64, f64)> {
        self.entries.get(&frame).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, (f64, f64))> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    /// Checks that every coordinate lies inside a `width × height` frame.
    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        for (frame, (x, y)) in self.iter() {
            if x < 0.0 || y < 0.0 || x > (width - 1) as f64 || y > (height - 1) as f64 {
                return Err(Error::InvalidConfig(format!(
                    "ground truth of frame {frame} at ({x}, {y}) is outside {width}x{height}"
                )));
            }
        }
        Ok(())
    }

    /// Reads `frame,x,y` rows (a header line is optional).
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (n == 0 && line.starts_with("frame")) {
                continue;
            }
            let bad = || Error::parse(path, format!("line {}: `{line}`", n + 1));
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 3 {
                return Err(bad());
            }
            let frame = cells[0].parse().map_err(|_| bad())?;
            let x = cells[1].parse().map_err(|_| bad())?;
            let y = cells[2].parse().map_err(|_| bad())?;
            entries.push((frame, (x, y)));
        }
        Self::new(entries)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("frame,x,y\n");
        for (f, (x, y)) in self.iter() {
            out.push_str(&format!("{f},{x},{y}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Standard deviations of manual relabeling error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelingSigma {
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl LabelingSigma {
    pub fn new(sigma_x: f64, sigma_y: f64) -> Result<Self> {
        let s = Self { sigma_x, sigma_y };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |s: f64| s > 0.0 && s.is_finite();
        if ok(self.sigma_x) && ok(self.sigma_y) {
            Ok(())
        } else {
            Err(Error::DegenerateSigma {
                sigma_x: self.sigma_x,
                sigma_y: self.sigma_y,
            })
        }
    }

    /// `e_x²/σ_x² + e_y²/σ_y²`.
    pub fn standardize(&self, ex: f64, ey: f64) -> f64 {
        ex * ex / (self.sigma_x * self.sigma_x) + ey * ey / (self.sigma_y * self.sigma_y)
    }
}

/// Evaluation of a track against ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub frames: Vec<u64>,
    /// Euclidean distance per evaluated frame.
    pub distances: Vec<f64>,
    pub mean_error: f64,
    pub sorted_errors: Vec<f64>,
    pub standardized: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// 99% χ² threshold with `2t` degrees of freedom for the `t`-th frame.
    pub ci: Vec<f64>,
    pub diverged: bool,
    pub first_exceed_frame: Option<u64>,
}

/// Index of the first entry where `cumulative` exceeds `ci`.
pub fn first_exceedance(cumulative: &[f64], ci: &[f64]) -> Option<usize> {
    cumulative.iter().zip(ci).position(|(c, t)| c > t)
}

/// Scores a track. The first point is the reference frame, where the
/// feature was defined, and is not evaluated.
pub fn error_report(
    track: &[TrackPoint],
    gt: &GroundTruth,
    sigma: &LabelingSigma,
) -> Result<ErrorReport> {
    sigma.validate()?;
    let evaluated = track.get(1..).unwrap_or(&[]);
    let mut frames = Vec::with_capacity(evaluated.len());
    let mut distances = Vec::with_capacity(evaluated.len());
    let mut standardized = Vec::with_capacity(evaluated.len());
    for p in evaluated {
        let (gx, gy) = gt.get(p.frame).ok_or(Error::MissingGroundTruth(p.frame))?;
        let (ex, ey) = (p.x - gx, p.y - gy);
        frames.push(p.frame);
        distances.push(ex.hypot(ey));
        standardized.push(sigma.standardize(ex, ey));
    }
    let cumulative: Vec<f64> = standardized
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    let ci = ci_curve(frames.len(), CI_PROBABILITY)?;
    let mean_error = if distances.is_empty() {
        0.0
    } else {
        distances.iter().sum::<f64>() / distances.len() as f64
    };
    let mut sorted_errors = distances.clone();
    sorted_errors.sort_by(|a, b| b.total_cmp(a));
    let first = first_exceedance(&cumulative, &ci);
    Ok(ErrorReport {
        first_exceed_frame: first.map(|k| frames[k]),
        diverged: first.is_some(),
        frames,
        distances,
        mean_error,
        sorted_errors,
        standardized,
        cumulative,
        ci,
    })
}

/// Frame number where the cumulative standardized error first exceeds the
/// confidence curve.
pub fn divergence_detect(report: &ErrorReport) -> Option<u64> {
    first_exceedance(&report.cumulative, &report.ci).map(|k| report.frames[k])
}

/// Writes `errors.csv` (per frame), `sorted_errors.csv` and `summary.csv`
/// into `dir`.
pub fn write_report(report: &ErrorReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    let mut per_frame = String::from("frame,distance_px,standardized,cumulative,ci99\n");
    for k in 0..report.frames.len() {
        per_frame.push_str(&format!(
            "{},{},{},{},{}\n",
            report.frames[k],
            report.distances[k],
            report.standardized[k],
            report.cumulative[k],
            report.ci[k]
        ));
    }
    write("errors.csv", per_frame)?;
    let mut sorted = String::from("rank,error_px\n");
    for (k, e) in report.sorted_errors.iter().enumerate() {
        sorted.push_str(&format!("{},{e}\n", k + 1));
    }
    write("sorted_errors.csv", sorted)?;
    let first = report
        .first_exceed_frame
        .map_or(String::new(), |f| f.to_string());
    write(
        "summary.csv",
        format!(
            "mean_error_px,diverged,first_exceed_frame\n{},{},{first}\n",
            report.mean_error, report.diverged
        ),
    )
}

/// Result of the relabeling consistency test.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelingTest {
    pub sigma: LabelingSigma,
    /// Number of relabel errors `n` (one per attempt).
    pub samples: usize,
    pub statistic: f64,
    /// `chi2_inv_cdf(0.99, 2n)`.
    pub threshold: f64,
    pub pass: bool,
}

/// Estimates σ from repeated annotations of the same frames and evaluates
/// `χ̂² = Σ (e_x²/σ_x² + e_y²/σ_y²)` against χ² with `2n` degrees of freedom.
///
/// Errors are taken against the per-frame mean of the attempts; σ² per axis
/// is the mean squared error over all attempts.
pub fn labeling_chi_square(relabels: &[Vec<(f64, f64)>]) -> Result<LabelingTest> {
    if relabels.is_empty() {
        return Err(Error::InsufficientSamples("no relabeled frames".into()));
    }
    if let Some(k) = relabels.iter().position(|r| r.len() < 2) {
        return Err(Error::InsufficientSamples(format!(
            "frame {k} has {} relabels, at least 2 are needed",
            relabels[k].len()
        )));
    }
    let mut errors = Vec::new();
    for attempts in relabels {
        let n = attempts.len() as f64;
        let mx = attempts.iter().map(|a| a.0).sum::<f64>() / n;
        let my = attempts.iter().map(|a| a.1).sum::<f64>() / n;
        errors.extend(attempts.iter().map(|&(x, y)| (x - mx, y - my)));
    }
    let n = errors.len();
    let sx = (errors.iter().map(|e| e.0 * e.0).sum::<f64>() / n as f64).sqrt();
    let sy = (errors.iter().map(|e| e.1 * e.1).sum::<f64>() / n as f64).sqrt();
    let sigma = LabelingSigma::new(sx, sy)?;
    let statistic = errors.iter().map(|&(ex, ey)| sigma.standardize(ex, ey)).sum();
    let threshold = chi2_inv_cdf(CI_PROBABILITY, 2 * n as u32)?;
    Ok(LabelingTest {
        sigma,
        samples: n,
        statistic,
        threshold,
        pass: statistic <= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn pts(coords: &[(f64, f64)]) -> Vec<TrackPoint> {
        coords
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| TrackPoint { frame: k as u64 + 1, x, y, ssr: 0.0, refined: true })
            .collect()
    }

    fn gt(n: usize, at: (f64, f64)) -> GroundTruth {
        GroundTruth::new((1..=n as u64).map(|f| (f, at)).collect()).unwrap()
    }

    #[test]
    fn perfect_track() {
        let r = error_report(&pts(&[(5.0, 5.0); 6]), &gt(6, (5.0, 5.0)), &LabelingSigma::new(1.0, 2.0).unwrap()).unwrap();
        assert_eq!(r.frames, vec![2, 3, 4, 5, 6]);
        assert_eq!(r.mean_error, 0.0);
        assert!(r.cumulative.iter().all(|&c| c == 0.0));
        assert!(!r.diverged);
        assert_eq!(divergence_detect(&r), None);
    }

    #[test]
    fn constant_three_four_error() {
        let n = 8;
        let r = error_report(&pts(&vec![(13.0, 24.0); n + 1]), &gt(n + 1, (10.0, 20.0)), &LabelingSigma::new(1.0, 1.0).unwrap()).unwrap();
        assert!(r.distances.iter().all(|&d| d == 5.0));
        assert!(r.standardized.iter().all(|&s| s == 25.0));
        assert_eq!(*r.cumulative.last().unwrap(), 25.0 * n as f64);
        assert_eq!(r.mean_error, 5.0);
        // 25 > 9.21 already at the first evaluated frame
        assert_eq!(r.first_exceed_frame, Some(2));
    }

    #[test]
    fn single_huge_error_is_detected_at_its_frame() {
        let mut coords = vec![(5.0, 5.0); 12];
        coords[7] = (45.0, 5.0);
        let r = error_report(&pts(&coords), &gt(12, (5.0, 5.0)), &LabelingSigma::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(divergence_detect(&r), Some(8));
    }

    #[test]
    fn sorted_is_a_descending_permutation_and_mean_matches() {
        let coords: Vec<(f64, f64)> = (0..30).map(|k| ((k * 7 % 11) as f64 * 0.3, (k % 5) as f64)).collect();
        let r = error_report(&pts(&coords), &gt(30, (1.0, 1.0)), &LabelingSigma::new(0.7, 1.3).unwrap()).unwrap();
        assert!(r.sorted_errors.windows(2).all(|w| w[0] >= w[1]));
        let mut a = r.sorted_errors.clone();
        let mut b = r.distances.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        let mean = r.distances.iter().sum::<f64>() / r.distances.len() as f64;
        assert_abs_diff_eq!(r.mean_error, mean, epsilon = 1e-12);
        assert!(r.cumulative.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn sigma_scaling() {
        let s1 = LabelingSigma::new(0.5, 2.0).unwrap();
        let s2 = LabelingSigma::new(1.0, 4.0).unwrap();
        for (ex, ey) in [(1.0, 2.0), (-0.25, 3.5), (7.0, 0.0)] {
            assert_eq!(s2.standardize(ex, ey), s1.standardize(ex, ey) / 4.0);
        }
    }

    #[test]
    fn missing_ground_truth() {
        let g = GroundTruth::new(vec![(1, (0.0, 0.0)), (2, (0.0, 0.0))]).unwrap();
        let err = error_report(&pts(&[(0.0, 0.0); 3]), &g, &LabelingSigma::new(1.0, 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::MissingGroundTruth(3)));
    }

    #[test]
    fn ground_truth_validation_and_csv() {
        assert!(GroundTruth::new(vec![(2, (0.0, 0.0)), (2, (1.0, 1.0))]).is_err());
        let g = GroundTruth::new(vec![(1, (3.5, 4.0)), (26, (400.0, 10.0))]).unwrap();
        assert!(g.check_bounds(420, 300).is_ok());
        assert!(g.check_bounds(300, 300).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.csv");
        g.write_csv(&p).unwrap();
        assert_eq!(GroundTruth::read_csv(&p).unwrap(), g);
    }

    #[test]
    fn max_distance_of_420_by_300_frame() {
        assert_abs_diff_eq!(max_possible_distance(420, 300), 516.14, epsilon = 0.01);
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut coords = vec![(5.0, 5.0); 5];
        coords[3] = (25.0, 5.0);
        let r = error_report(&pts(&coords), &gt(5, (5.0, 5.0)), &LabelingSigma::new(1.0, 1.0).unwrap()).unwrap();
        write_report(&r, dir.path()).unwrap();
        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary, "mean_error_px,diverged,first_exceed_frame\n5,true,4\n");
        let sorted = std::fs::read_to_string(dir.path().join("sorted_errors.csv")).unwrap();
        assert!(sorted.starts_with("rank,error_px\n1,20\n2,0\n"));
    }

    #[test]
    fn labeling_identity_and_degenerate() {
        let relabels: Vec<Vec<(f64, f64)>> = (0..10)
            .map(|k| vec![(k as f64, 1.0), (k as f64 + 0.5, 1.2), (k as f64 - 0.2, 0.7)])
            .collect();
        let t = labeling_chi_square(&relabels).unwrap();
        assert_eq!(t.samples, 30);
        assert_abs_diff_eq!(t.statistic, 60.0, epsilon = 1e-9);
        assert!(t.pass);
        let same = vec![vec![(1.0, 1.0); 3]; 4];
        assert!(matches!(labeling_chi_square(&same), Err(Error::DegenerateSigma { .. })));
        assert!(matches!(labeling_chi_square(&[vec![(1.0, 1.0)]]), Err(Error::InsufficientSamples(_))));
        assert!(matches!(labeling_chi_square(&[]), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn labeling_recovers_sigma() {
        // 18 frames × 5 relabels = 90 samples; the error against the mean of
        // k attempts has standard deviation σ·√((k−1)/k)
        let (sx, sy, k) = (0.8, 1.5, 5usize);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let nx = Normal::new(0.0, sx).unwrap();
        let ny = Normal::new(0.0, sy).unwrap();
        let relabels: Vec<Vec<(f64, f64)>> = (0..18)
            .map(|f| {
                (0..k)
                    .map(|_| (100.0 + f as f64 + nx.sample(&mut rng), 50.0 + ny.sample(&mut rng)))
                    .collect()
            })
            .collect();
        let t = labeling_chi_square(&relabels).unwrap();
        assert_eq!(t.samples, 90);
        let shrink = ((k - 1) as f64 / k as f64).sqrt();
        assert!((t.sigma.sigma_x / (sx * shrink) - 1.0).abs() < 0.15, "{t:?}");
        assert!((t.sigma.sigma_y / (sy * shrink) - 1.0).abs() < 0.15, "{t:?}");
    }
}
