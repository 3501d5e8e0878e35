//! Trajectory error metrics and best-of-K aggregation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::HEADING_EPSILON;
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("trajectory lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("trajectory needs at least {0} points")]
    TooShort(usize),
    #[error("empty trajectory")]
    EmptyTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MhdMode {
    /// Max of the two directed mean-of-min distances.
    #[default]
    Dubuisson,
    /// Max of the two directed max-of-min distances.
    Hausdorff,
}

impl std::str::FromStr for MhdMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dubuisson" => Ok(MhdMode::Dubuisson),
            "hausdorff" => Ok(MhdMode::Hausdorff),
            _ => Err(format!("unknown MHD mode `{s}` (dubuisson|hausdorff)")),
        }
    }
}

fn check_pair(pred: &[Vec2], gt: &[Vec2], min_len: usize) -> Result<(), MetricError> {
    if pred.len() != gt.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gt.len()));
    }
    if pred.len() < min_len {
        return Err(MetricError::TooShort(min_len));
    }
    Ok(())
}

pub fn ade(pred: &[Vec2], gt: &[Vec2]) -> Result<f64, MetricError> {
    check_pair(pred, gt, 1)?;
    Ok(pred.iter().zip(gt).map(|(p, g)| p.distance(*g)).sum::<f64>() / pred.len() as f64)
}

pub fn fde(pred: &[Vec2], gt: &[Vec2]) -> Result<f64, MetricError> {
    check_pair(pred, gt, 1)?;
    Ok(pred[pred.len() - 1].distance(gt[gt.len() - 1]))
}

fn directed<'a>(a: &'a [Vec2], b: &'a [Vec2]) -> impl Iterator<Item = f64> + 'a {
    a.iter()
        .map(move |p| b.iter().map(|q| p.distance(*q)).fold(f64::INFINITY, f64::min))
}

pub fn mhd(pred: &[Vec2], gt: &[Vec2], mode: MhdMode) -> Result<f64, MetricError> {
    if pred.is_empty() || gt.is_empty() {
        return Err(MetricError::EmptyTrajectory);
    }
    let one_way = |a: &[Vec2], b: &[Vec2]| match mode {
        MhdMode::Dubuisson => directed(a, b).sum::<f64>() / a.len() as f64,
        MhdMode::Hausdorff => directed(a, b).fold(0.0, f64::max),
    };
    Ok(one_way(pred, gt).max(one_way(gt, pred)))
}

fn steps(track: &[Vec2]) -> impl Iterator<Item = Vec2> + '_ {
    track.windows(2).map(|w| w[1] - w[0])
}

/// RMSE between per-interval speeds.
pub fn speed_error(pred: &[Vec2], gt: &[Vec2], dt: f64) -> Result<f64, MetricError> {
    check_pair(pred, gt, 2)?;
    let sq: f64 = steps(pred)
        .zip(steps(gt))
        .map(|(p, g)| ((p.norm() - g.norm()) / dt).powi(2))
        .sum();
    Ok((sq / (pred.len() - 1) as f64).sqrt())
}

/// Signed difference `a - b` in degrees, wrapped to (-180, 180].
pub fn wrap_degrees(d: f64) -> f64 {
    let mut w = d % 360.0;
    if w <= -180.0 {
        w += 360.0;
    } else if w > 180.0 {
        w -= 360.0;
    }
    w
}

/// RMSE of heading differences (degrees) over intervals where the
/// ground-truth speed reaches the heading epsilon; `None` if none does.
pub fn heading_error(pred: &[Vec2], gt: &[Vec2], dt: f64) -> Result<Option<f64>, MetricError> {
    check_pair(pred, gt, 2)?;
    let mut sq = 0.0;
    let mut n = 0usize;
    for (p, g) in steps(pred).zip(steps(gt)) {
        if g.norm() / dt < HEADING_EPSILON {
            continue;
        }
        let d = wrap_degrees(p.y.atan2(p.x).to_degrees() - g.y.atan2(g.x).to_degrees());
        sq += d * d;
        n += 1;
    }
    Ok((n > 0).then(|| (sq / n as f64).sqrt()))
}

/// The five metrics for one trajectory; `he` is `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub ade: f64,
    pub fde: f64,
    pub mhd: f64,
    pub se: f64,
    pub he: Option<f64>,
}

pub fn evaluate(pred: &[Vec2], gt: &[Vec2], dt: f64, mode: MhdMode) -> Result<MetricSet, MetricError> {
    let (se, he) = if pred.len() >= 2 {
        (speed_error(pred, gt, dt)?, heading_error(pred, gt, dt)?)
    } else {
        (0.0, None)
    };
    Ok(MetricSet {
        ade: ade(pred, gt)?,
        fde: fde(pred, gt)?,
        mhd: mhd(pred, gt, mode)?,
        se,
        he,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BestOf {
    /// Each metric minimized over samples independently.
    #[default]
    PerMetric,
    /// The sample with the lowest ADE supplies every metric.
    JointByAde,
}

/// Best-of-K over `samples`, each compared with `gt`.
pub fn best_of_k(
    samples: &[Vec<Vec2>],
    gt: &[Vec2],
    dt: f64,
    mode: MhdMode,
    best: BestOf,
) -> Result<MetricSet, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::EmptyTrajectory);
    }
    let sets = samples
        .iter()
        .map(|s| evaluate(s, gt, dt, mode))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match best {
        BestOf::PerMetric => min_per_metric(&sets),
        BestOf::JointByAde => *sets.iter().min_by(|a, b| a.ade.total_cmp(&b.ade)).expect("non-empty"),
    })
}

pub fn min_per_metric(sets: &[MetricSet]) -> MetricSet {
    let min = |f: fn(&MetricSet) -> f64| sets.iter().map(f).fold(f64::INFINITY, f64::min);
    let he = sets.iter().filter_map(|s| s.he).reduce(f64::min);
    MetricSet {
        ade: min(|s| s.ade),
        fde: min(|s| s.fde),
        mhd: min(|s| s.mhd),
        se: min(|s| s.se),
        he,
    }
}

/// Running means over (pedestrian, window) pairs. Heading error is averaged
/// over the pairs where it is defined.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricAccumulator {
    sum: [f64; 4],
    he_sum: f64,
    n: usize,
    he_n: usize,
}

impl MetricAccumulator {
    pub fn push(&mut self, m: &MetricSet) {
        self.sum[0] += m.ade;
        self.sum[1] += m.fde;
        self.sum[2] += m.mhd;
        self.sum[3] += m.se;
        self.n += 1;
        if let Some(he) = m.he {
            self.he_sum += he;
            self.he_n += 1;
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> MetricMeans {
        let d = self.n.max(1) as f64;
        MetricMeans {
            ade: self.sum[0] / d,
            fde: self.sum[1] / d,
            mhd: self.sum[2] / d,
            se: self.sum[3] / d,
            he: (self.he_n > 0).then(|| self.he_sum / self.he_n as f64),
            count: self.n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub ade: f64,
    pub fde: f64,
    pub mhd: f64,
    pub se: f64,
    pub he: Option<f64>,
    /// Number of (pedestrian, window) pairs averaged.
    pub count: usize,
}

/// Evaluation report written as JSON and mirrored as CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResults {
    pub model: String,
    pub variant: String,
    pub dataset: String,
    pub k: usize,
    pub metrics: MetricMeans,
    pub mhd_mode: MhdMode,
    pub best_of: BestOf,
    pub oracle_vehicles: bool,
    pub seed: u64,
}

impl EvalResults {
    pub fn save_json(&self, path: &Path) -> std::io::Result<()> {
        let mut s = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        s.push('\n');
        std::fs::write(path, s)
    }

    pub fn save_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "model",
            "variant",
            "dataset",
            "k",
            "ade",
            "fde",
            "mhd",
            "se",
            "he",
            "count",
            "mhd_mode",
            "best_of",
            "oracle_vehicles",
            "seed",
        ])?;
        let m = &self.metrics;
        let mode = serde_json::to_value(self.mhd_mode).map_err(std::io::Error::other)?;
        let best = serde_json::to_value(self.best_of).map_err(std::io::Error::other)?;
        w.write_record([
            self.model.clone(),
            self.variant.clone(),
            self.dataset.clone(),
            self.k.to_string(),
            m.ade.to_string(),
            m.fde.to_string(),
            m.mhd.to_string(),
            m.se.to_string(),
            m.he.map_or(String::new(), |v| v.to_string()),
            m.count.to_string(),
            mode.as_str().unwrap_or_default().to_string(),
            best.as_str().unwrap_or_default().to_string(),
            self.oracle_vehicles.to_string(),
            self.seed.to_string(),
        ])?;
        w.flush()
    }
}
