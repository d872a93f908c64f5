//! Greedy IoU tracking-by-detection for vehicle boxes.
//!
//! Tracks move through `Tentative -> Confirmed -> Terminated`. Prediction is
//! constant velocity on the box center with the shape held from the last
//! match.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detections::{FrameDetections, VehicleClass, VehicleDetection};
use crate::geometry::{obb_iou, OrientedBox};

pub type TrackId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Minimum predicted-box IoU for a match.
    pub iou_gate: f64,
    /// Consecutive matches needed to confirm a track.
    pub min_hits: u32,
    /// A track is terminated once it has missed more than this many frames.
    pub max_age: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            iou_gate: 0.3,
            min_hits: 3,
            max_age: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackState {
    Tentative,
    Confirmed,
    Terminated,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("frame {frame} presented after frame {previous}")]
    OutOfOrder { frame: u64, previous: u64 },
    #[error("invalid tracker config: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct VehicleTrack {
    pub track_id: TrackId,
    pub class: VehicleClass,
    pub history: Vec<(u64, OrientedBox)>,
    pub state: TrackState,
    pub misses: u32,
    hits: u32,
    confirmed: bool,
    class_votes: BTreeMap<VehicleClass, u32>,
}

impl VehicleTrack {
    fn new(track_id: TrackId, frame: u64, det: &VehicleDetection) -> Self {
        let mut class_votes = BTreeMap::new();
        class_votes.insert(det.class, 1);
        VehicleTrack {
            track_id,
            class: det.class,
            history: vec![(frame, det.bbox)],
            state: TrackState::Tentative,
            misses: 0,
            hits: 1,
            confirmed: false,
            class_votes,
        }
    }

    pub fn last(&self) -> (u64, OrientedBox) {
        *self
            .history
            .last()
            .expect("tracks are created with one observation")
    }

    /// Box extrapolated to `frame` from the last two observations.
    pub fn predict(&self, frame: u64) -> OrientedBox {
        let (f1, b1) = self.last();
        if self.history.len() < 2 {
            return b1;
        }
        let (f0, b0) = self.history[self.history.len() - 2];
        let span = (f1 - f0) as f64;
        let ahead = frame.saturating_sub(f1) as f64;
        let vx = (b1.cx - b0.cx) / span;
        let vy = (b1.cy - b0.cy) / span;
        b1.translated(vx * ahead, vy * ahead)
    }

    /// Whether the track reached `Confirmed` at some point, including tracks
    /// that have since terminated.
    pub fn was_confirmed(&self) -> bool {
        self.confirmed
    }

    fn confirm(&mut self) {
        self.state = TrackState::Confirmed;
        self.confirmed = true;
    }

    /// Whether the track was matched on `frame`.
    pub fn seen_at(&self, frame: u64) -> bool {
        self.history.last().is_some_and(|(f, _)| *f == frame)
    }

    fn record(&mut self, frame: u64, det: &VehicleDetection, min_hits: u32) {
        self.history.push((frame, det.bbox));
        self.misses = 0;
        self.hits += 1;
        *self.class_votes.entry(det.class).or_default() += 1;
        // Majority class; BTreeMap order makes ties deterministic.
        let mut best = (self.class, 0);
        for (&c, &n) in &self.class_votes {
            if n > best.1 {
                best = (c, n);
            }
        }
        self.class = best.0;
        if self.state == TrackState::Tentative && self.hits >= min_hits {
            self.confirm();
        }
    }
}

/// Candidate pairs `(iou, track position, detection index)` sorted for greedy
/// assignment: descending IoU, then lower track id, then lower detection index.
pub fn greedy_match(ious: &[(f64, usize, usize)], track_ids: &[TrackId]) -> Vec<(usize, usize)> {
    let mut pairs = ious.to_vec();
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(track_ids[a.1].cmp(&track_ids[b.1]))
            .then(a.2.cmp(&b.2))
    });
    let mut track_used = vec![false; track_ids.len()];
    let mut det_used = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (_, t, d) in pairs {
        if track_used[t] || det_used.contains(&d) {
            continue;
        }
        track_used[t] = true;
        det_used.insert(d);
        out.push((t, d));
    }
    out
}

#[derive(Debug, Clone)]
pub struct VehicleTracker {
    config: TrackerConfig,
    next_id: TrackId,
    live: Vec<VehicleTrack>,
    finished: Vec<VehicleTrack>,
    last_frame: Option<u64>,
}

impl VehicleTracker {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackerError> {
        if !(0.0..=1.0).contains(&config.iou_gate) {
            return Err(TrackerError::Config(format!(
                "iou_gate {} outside [0, 1]",
                config.iou_gate
            )));
        }
        if config.min_hits < 1 {
            return Err(TrackerError::Config("min_hits must be >= 1".into()));
        }
        Ok(VehicleTracker {
            config,
            next_id: 1,
            live: Vec::new(),
            finished: Vec::new(),
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Tracks not yet terminated, in creation order.
    pub fn live(&self) -> &[VehicleTrack] {
        &self.live
    }

    pub fn track(&self, id: TrackId) -> Option<&VehicleTrack> {
        self.live.iter().find(|t| t.track_id == id)
    }

    /// Matches one frame of detections. Returns every detection with the id
    /// of the track it now belongs to, in detection order.
    pub fn update(
        &mut self,
        frame: &FrameDetections,
    ) -> Result<Vec<(TrackId, VehicleDetection)>, TrackerError> {
        let f = frame.frame_index;
        if let Some(prev) = self.last_frame {
            if f <= prev {
                return Err(TrackerError::OutOfOrder {
                    frame: f,
                    previous: prev,
                });
            }
        }
        self.last_frame = Some(f);

        let predicted: Vec<OrientedBox> = self.live.iter().map(|t| t.predict(f)).collect();
        let mut candidates = Vec::new();
        for (ti, pred) in predicted.iter().enumerate() {
            for (di, det) in frame.vehicles.iter().enumerate() {
                let v = obb_iou(pred, &det.bbox);
                if v > 0.0 && v >= self.config.iou_gate {
                    candidates.push((v, ti, di));
                }
            }
        }
        let ids: Vec<TrackId> = self.live.iter().map(|t| t.track_id).collect();
        let matches = greedy_match(&candidates, &ids);

        let mut assigned: Vec<Option<TrackId>> = vec![None; frame.vehicles.len()];
        let mut matched = vec![false; self.live.len()];
        for (ti, di) in matches {
            let track = &mut self.live[ti];
            track.record(f, &frame.vehicles[di], self.config.min_hits);
            assigned[di] = Some(track.track_id);
            matched[ti] = true;
        }

        for (track, hit) in self.live.iter_mut().zip(&matched) {
            if !hit {
                // Frames since the last match, so skipped frame indices count too.
                track.misses = (f - track.last().0) as u32;
                track.hits = 0;
                if track.misses > self.config.max_age {
                    track.state = TrackState::Terminated;
                }
            }
        }
        let (done, live): (Vec<_>, Vec<_>) = std::mem::take(&mut self.live)
            .into_iter()
            .partition(|t| t.state == TrackState::Terminated);
        self.live = live;
        self.finished.extend(done);

        for (di, slot) in assigned.iter_mut().enumerate() {
            if slot.is_none() {
                let id = self.next_id;
                self.next_id += 1;
                let mut track = VehicleTrack::new(id, f, &frame.vehicles[di]);
                if self.config.min_hits <= 1 {
                    track.confirm();
                }
                self.live.push(track);
                *slot = Some(id);
            }
        }

        Ok(assigned
            .into_iter()
            .zip(&frame.vehicles)
            .map(|(id, det)| (id.expect("all assigned"), *det))
            .collect())
    }

    /// Tracks terminated since the last call.
    pub fn drain_terminated(&mut self) -> Vec<VehicleTrack> {
        std::mem::take(&mut self.finished)
    }

    /// Ends the stream: every remaining track is terminated and returned.
    pub fn finish(&mut self) -> Vec<VehicleTrack> {
        let mut out = self.drain_terminated();
        for mut t in self.live.drain(..) {
            t.state = TrackState::Terminated;
            out.push(t);
        }
        out
    }
}
