//! Tire-track extraction for axle counting.
//!
//! The tire observations of one vehicle are projected onto their principal
//! spatial axis, the projection is normalized to `[0, 1]` and passed through
//! `1 / (1 + c z)`, and tracks are then grown greedily frame by frame in the
//! resulting `(t, z)` plane. Each accepted track is one axle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TirePoint {
    pub x: f64,
    pub y: f64,
    pub t: u64,
}

impl TirePoint {
    pub fn new(x: f64, y: f64, t: u64) -> Self {
        TirePoint { x, y, t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub t: u64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxleTrack {
    pub points: Vec<ProjectedPoint>,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraxParams {
    /// Scale of the inverse transform `1 / (1 + c z)`.
    pub c: f64,
    /// Candidate window half-width as a fraction of the rescaled spread.
    pub match_window: f64,
    /// Missing frames a track may bridge.
    pub max_gap: u32,
    /// Tracks shorter than this are kept but not counted.
    pub min_track_len: usize,
}

impl Default for TraxParams {
    fn default() -> Self {
        TraxParams {
            c: 1.0,
            match_window: 0.05,
            max_gap: 10,
            min_track_len: 5,
        }
    }
}

impl TraxParams {
    pub fn validate(&self) -> Result<(), TraxError> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(TraxError::Params(format!("c must be > 0, got {}", self.c)));
        }
        if !(self.match_window.is_finite() && self.match_window > 0.0) {
            return Err(TraxError::Params(format!(
                "match_window must be > 0, got {}",
                self.match_window
            )));
        }
        if self.min_track_len < 2 {
            return Err(TraxError::Params(format!(
                "min_track_len must be >= 2, got {}",
                self.min_track_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TraxError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("all points coincide; no motion direction")]
    Coincident,
    #[error("1 + c*z = {0} is not positive")]
    NonPositiveDenominator(f64),
    #[error("need at least 2 distinct frames to estimate a slope")]
    TooFewFrames,
    #[error("mode of an empty count sequence")]
    EmptyCounts,
    #[error("invalid parameters: {0}")]
    Params(String),
}

/// Principal-axis projection of the spatial coordinates. The axis is
/// oriented so that `z` does not decrease with `t` on average.
pub fn project(points: &[TirePoint]) -> Result<(Vec<ProjectedPoint>, Point2), TraxError> {
    if points.len() < 2 {
        return Err(TraxError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mt = points.iter().map(|p| p.t as f64).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    let mut reach: f64 = 0.0;
    for p in points {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
        reach = reach.max(dx.abs()).max(dy.abs());
    }
    if reach <= 1e-9 * (1.0 + mx.abs().max(my.abs())) {
        return Err(TraxError::Coincident);
    }
    // Major-axis angle of the 2x2 covariance.
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let mut axis = Point2::new(angle.cos(), angle.sin());
    let mut z: Vec<f64> = points
        .iter()
        .map(|p| axis.dot(Point2::new(p.x - mx, p.y - my)))
        .collect();
    let cov_zt: f64 = z
        .iter()
        .zip(points)
        .map(|(z, p)| z * (p.t as f64 - mt))
        .sum();
    if cov_zt < 0.0 {
        axis = axis * -1.0;
        z.iter_mut().for_each(|v| *v = -*v);
    }
    let projected = points
        .iter()
        .zip(z)
        .map(|(p, z)| ProjectedPoint { t: p.t, z })
        .collect();
    Ok((projected, axis))
}

/// Inverse transform `1 / (1 + c z)`.
pub fn rescale(z: f64, c: f64) -> Result<f64, TraxError> {
    let denom = 1.0 + c * z;
    if denom.is_nan() || denom <= 0.0 {
        return Err(TraxError::NonPositiveDenominator(denom));
    }
    Ok(1.0 / denom)
}

/// Shifts and scales `z` onto `[0, 1]` and applies [`rescale`]. A set with
/// no spread maps to 1 everywhere.
pub fn normalize_and_rescale(
    points: &[ProjectedPoint],
    c: f64,
) -> Result<Vec<ProjectedPoint>, TraxError> {
    let (lo, hi) = z_range(points);
    let spread = hi - lo;
    points
        .iter()
        .map(|p| {
            let zn = if spread > 0.0 {
                (p.z - lo) / spread
            } else {
                0.0
            };
            Ok(ProjectedPoint {
                t: p.t,
                z: rescale(zn, c)?,
            })
        })
        .collect()
}

fn z_range(points: &[ProjectedPoint]) -> (f64, f64) {
    points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.z), hi.max(p.z))
        })
}

fn by_frame(points: &[ProjectedPoint]) -> BTreeMap<u64, Vec<f64>> {
    let mut frames: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for p in points {
        frames.entry(p.t).or_default().push(p.z);
    }
    for zs in frames.values_mut() {
        zs.sort_by(f64::total_cmp);
    }
    frames
}

fn nearest(sorted: &[f64], target: f64) -> Option<f64> {
    let i = sorted.partition_point(|&z| z < target);
    let below = i.checked_sub(1).map(|j| sorted[j]);
    let above = sorted.get(i).copied();
    match (below, above) {
        (Some(b), Some(a)) => Some(if target - b <= a - target { b } else { a }),
        (b, a) => b.or(a),
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    })
}

/// Median per-frame change in `z`, taken between each point and its nearest
/// neighbour in the following frame. When no two frames are adjacent, the
/// next present frame is used and the change is divided by the frame gap.
pub fn estimate_slope(points: &[ProjectedPoint]) -> Result<f64, TraxError> {
    let frames = by_frame(points);
    if frames.len() < 2 {
        return Err(TraxError::TooFewFrames);
    }
    let pairs: Vec<_> = frames.iter().zip(frames.iter().skip(1)).collect();
    let mut diffs = Vec::new();
    for ((t0, z0), (t1, z1)) in &pairs {
        if **t1 == **t0 + 1 {
            diffs.extend(z0.iter().filter_map(|&z| nearest(z1, z).map(|n| n - z)));
        }
    }
    if diffs.is_empty() {
        for ((t0, z0), (t1, z1)) in &pairs {
            let dt = (**t1 - **t0) as f64;
            diffs.extend(
                z0.iter()
                    .filter_map(|&z| nearest(z1, z).map(|n| (n - z) / dt)),
            );
        }
    }
    Ok(median(&mut diffs).expect("at least one frame pair"))
}

/// Greedy track growth. Seeds are taken in `(t, z)` order; a track is
/// extended by the point closest to `z + slope * dt` within the window at
/// the earliest frame `t + dt`, `1 <= dt <= max_gap + 1`, that has one.
/// Every input point ends up in exactly one returned track.
pub fn extract_tracks(
    points: &[ProjectedPoint],
    slope: f64,
    params: &TraxParams,
) -> Vec<AxleTrack> {
    let (lo, hi) = z_range(points);
    let window = if points.is_empty() {
        0.0
    } else {
        params.match_window * (hi - lo)
    };
    let mut pool = by_frame(points);
    let mut tracks = Vec::new();
    while let Some((&t0, zs)) = pool.first_key_value() {
        let z0 = zs[0];
        take(&mut pool, t0, 0);
        let mut track = vec![ProjectedPoint { t: t0, z: z0 }];
        let (mut t, mut z) = (t0, z0);
        'grow: loop {
            for dt in 1..=(params.max_gap as u64 + 1) {
                let Some(cands) = pool.get(&(t + dt)) else {
                    continue;
                };
                let target = z + slope * dt as f64;
                let best = cands
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (i, (c - target).abs()))
                    .filter(|&(_, d)| d <= window)
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                if let Some((i, _)) = best {
                    t += dt;
                    z = take(&mut pool, t, i);
                    track.push(ProjectedPoint { t, z });
                    continue 'grow;
                }
            }
            break;
        }
        let accepted = track.len() >= params.min_track_len;
        tracks.push(AxleTrack {
            points: track,
            accepted,
        });
    }
    tracks
}

fn take(pool: &mut BTreeMap<u64, Vec<f64>>, t: u64, i: usize) -> f64 {
    let zs = pool.get_mut(&t).expect("frame present");
    let z = zs.remove(i);
    if zs.is_empty() {
        pool.remove(&t);
    }
    z
}

/// Everything one run produces for a vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraxOutcome {
    pub axis: Option<Point2>,
    pub slope: f64,
    pub tracks: Vec<AxleTrack>,
}

impl TraxOutcome {
    pub fn axle_count(&self) -> u32 {
        self.tracks.iter().filter(|t| t.accepted).count() as u32
    }
}

/// Projection and rescaling as used by [`run`]: the points in the space
/// where tracks are extracted, plus the motion axis when there is one.
///
/// Degenerate inputs do not fail: a single point or a spatially coincident
/// set is projected to `z = 0`.
pub fn prepare(
    points: &[TirePoint],
    c: f64,
) -> Result<(Vec<ProjectedPoint>, Option<Point2>), TraxError> {
    if points.is_empty() {
        return Ok((Vec::new(), None));
    }
    let (projected, axis) = match project(points) {
        Ok((p, a)) => (p, Some(a)),
        Err(TraxError::TooFewPoints(_) | TraxError::Coincident) => (
            points
                .iter()
                .map(|p| ProjectedPoint { t: p.t, z: 0.0 })
                .collect(),
            None,
        ),
        Err(e) => return Err(e),
    };
    Ok((normalize_and_rescale(&projected, c)?, axis))
}

/// Full chain: project, rescale, estimate the slope, extract tracks. Too few
/// frames for a slope estimate give a zero slope.
pub fn run(points: &[TirePoint], params: &TraxParams) -> Result<TraxOutcome, TraxError> {
    params.validate()?;
    let (rescaled, axis) = prepare(points, params.c)?;
    let slope = match estimate_slope(&rescaled) {
        Ok(s) => s,
        Err(TraxError::TooFewFrames) => 0.0,
        Err(e) => return Err(e),
    };
    let tracks = extract_tracks(&rescaled, slope, params);
    Ok(TraxOutcome {
        axis,
        slope,
        tracks,
    })
}

pub fn count_axles(points: &[TirePoint], params: &TraxParams) -> Result<u32, TraxError> {
    Ok(run(points, params)?.axle_count())
}

/// Most frequent per-frame count; ties go to the larger count.
pub fn mode_baseline(per_frame_counts: &[u32]) -> Result<u32, TraxError> {
    let mut freq: BTreeMap<u32, usize> = BTreeMap::new();
    for &c in per_frame_counts {
        *freq.entry(c).or_default() += 1;
    }
    // Iterating ascending with >= lets the larger count win ties.
    freq.into_iter()
        .fold(None, |best: Option<(u32, usize)>, (c, n)| match best {
            Some((_, bn)) if bn > n => best,
            _ => Some((c, n)),
        })
        .map(|(c, _)| c)
        .ok_or(TraxError::EmptyCounts)
}
