//! Stream orchestration: vehicle tracking, tire and trailer association, and
//! axle counting when a track closes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{
    associate_tires, associate_trailer, combine_axle_counts, AssociationConfig, LinkRegistry,
};
use crate::detections::{FrameDetections, VehicleClass};
use crate::geometry::OrientedBox;
use crate::par::{self, Execution};
use crate::simulator::{self, Difficulty, GroundTruth, NoiseProfile, Scenario, SimError};
use crate::tracker::{
    TrackId, TrackState, TrackerConfig, TrackerError, VehicleTrack, VehicleTracker,
};
use crate::trax::{self, AxleTrack, TirePoint, TraxError, TraxParams};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tracker: TrackerConfig,
    pub association: AssociationConfig,
    pub trax: TraxParams,
}

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("frame {frame}: {source}")]
    Tracker { frame: u64, source: TrackerError },
    #[error("track {track}: {source}")]
    Trax { track: TrackId, source: TraxError },
    #[error("invalid config: {0}")]
    Config(String),
}

/// Counts for one physical vehicle. A carrier's linked trailers are nested
/// in `trailers` and never reported on their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleResult {
    pub track_id: TrackId,
    pub class: VehicleClass,
    pub first_frame: u64,
    pub last_frame: u64,
    pub trax_axles: u32,
    pub mode_axles: u32,
    pub trailer_axles: Option<u32>,
    pub trailer_mode_axles: Option<u32>,
    pub combined_axles: u32,
    pub combined_mode_axles: u32,
    pub tracks: Vec<AxleTrack>,
    /// Tire centers fed to the axle counter.
    pub points: Vec<TirePoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trailers: Vec<VehicleResult>,
}

impl VehicleResult {
    /// This result or one of its trailers.
    pub fn find(&self, track_id: TrackId) -> Option<&VehicleResult> {
        if self.track_id == track_id {
            return Some(self);
        }
        self.trailers.iter().find_map(|t| t.find(track_id))
    }
}

#[derive(Debug, Default)]
struct Accumulator {
    points: Vec<TirePoint>,
    /// Associated tires on each frame the track was matched.
    counts: Vec<u32>,
}

#[derive(Debug)]
pub struct Pipeline {
    config: PipelineConfig,
    tracker: VehicleTracker,
    links: LinkRegistry,
    open: BTreeMap<TrackId, Accumulator>,
    /// Closed tracks waiting for linked partners to close.
    closed: BTreeMap<TrackId, VehicleResult>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config
            .trax
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let a = &config.association;
        if !(0.0..=1.0).contains(&a.tire_iou_threshold) {
            return Err(PipelineError::Config(format!(
                "tire_iou_threshold {} outside [0, 1]",
                a.tire_iou_threshold
            )));
        }
        if a.motion_window < 2 {
            return Err(PipelineError::Config("motion_window must be >= 2".into()));
        }
        if !(a.frame_width > 0.0 && a.frame_height > 0.0) {
            return Err(PipelineError::Config("frame size must be positive".into()));
        }
        let tracker = VehicleTracker::new(config.tracker)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Pipeline {
            config,
            tracker,
            links: LinkRegistry::new(),
            open: BTreeMap::new(),
            closed: BTreeMap::new(),
        })
    }

    pub fn links(&self) -> &LinkRegistry {
        &self.links
    }

    /// Consumes one frame and returns the vehicles completed by it, ordered
    /// by track id.
    pub fn push_frame(
        &mut self,
        frame: &FrameDetections,
    ) -> Result<Vec<VehicleResult>, PipelineError> {
        let f = frame.frame_index;
        let assigned = self
            .tracker
            .update(frame)
            .map_err(|source| PipelineError::Tracker { frame: f, source })?;

        let boxes: Vec<(TrackId, OrientedBox)> =
            assigned.iter().map(|(id, d)| (*id, d.bbox)).collect();
        let mut counts: BTreeMap<TrackId, u32> = boxes.iter().map(|(id, _)| (*id, 0)).collect();
        let tires = associate_tires(
            &frame.tires,
            &boxes,
            self.config.association.tire_iou_threshold,
        );
        for a in &tires {
            let c = frame.tires[a.tire].bbox.center();
            self.open
                .entry(a.target)
                .or_default()
                .points
                .push(TirePoint::new(c.x, c.y, f));
            *counts.entry(a.target).or_default() += 1;
        }
        for (id, n) in counts {
            self.open.entry(id).or_default().counts.push(n);
        }

        self.link_trailers(f);
        let done = self.tracker.drain_terminated();
        self.close(done)?;
        Ok(self.emit_ready())
    }

    /// Ends the stream and returns every remaining vehicle.
    pub fn finish(mut self) -> Result<Vec<VehicleResult>, PipelineError> {
        let done = self.tracker.finish();
        self.close(done)?;
        Ok(self.emit_ready())
    }

    fn link_trailers(&mut self, frame: u64) {
        let active = |t: &&VehicleTrack| t.state == TrackState::Confirmed && t.seen_at(frame);
        let live: Vec<&VehicleTrack> = self.tracker.live().iter().filter(active).collect();
        for trailer in live.iter().filter(|t| t.class.is_trailer()) {
            if self.links.contains(trailer.track_id) {
                continue;
            }
            if let Some(link) = associate_trailer(trailer, &live, &self.config.association) {
                self.links.insert(link);
            }
        }
    }

    fn close(&mut self, tracks: Vec<VehicleTrack>) -> Result<(), PipelineError> {
        for track in tracks {
            let acc = self.open.remove(&track.track_id).unwrap_or_default();
            if !track.was_confirmed() {
                continue;
            }
            let outcome = trax::run(&acc.points, &self.config.trax).map_err(|source| {
                PipelineError::Trax {
                    track: track.track_id,
                    source,
                }
            })?;
            let trax_axles = outcome.axle_count();
            let mode_axles = trax::mode_baseline(&acc.counts).unwrap_or(0);
            self.closed.insert(
                track.track_id,
                VehicleResult {
                    track_id: track.track_id,
                    class: track.class,
                    first_frame: track.history[0].0,
                    last_frame: track.last().0,
                    trax_axles,
                    mode_axles,
                    trailer_axles: None,
                    trailer_mode_axles: None,
                    combined_axles: trax_axles,
                    combined_mode_axles: mode_axles,
                    tracks: outcome.tracks,
                    points: acc.points,
                    trailers: Vec::new(),
                },
            );
        }
        Ok(())
    }

    /// Emits closed vehicles whose linked trailers have also closed.
    fn emit_ready(&mut self) -> Vec<VehicleResult> {
        let pending =
            |id: TrackId| self.closed.contains_key(&id) || self.tracker.track(id).is_some();
        let ready: Vec<TrackId> = self
            .closed
            .keys()
            .copied()
            .filter(|&id| match self.links.get(id) {
                // Folded into the carrier, unless the carrier was dropped unconfirmed.
                Some(link) => !pending(link.carrier),
                None => self
                    .links
                    .trailers_of(id)
                    .all(|l| self.tracker.track(l.trailer).is_none()),
            })
            .collect();
        let mut out = Vec::with_capacity(ready.len());
        for id in ready {
            let Some(mut result) = self.closed.remove(&id) else {
                continue;
            };
            if self.links.remove(id).is_none() {
                let trailer_ids: Vec<TrackId> =
                    self.links.trailers_of(id).map(|l| l.trailer).collect();
                for t in trailer_ids {
                    self.links.remove(t);
                    result.trailers.extend(self.closed.remove(&t));
                }
                fold_trailers(&mut result);
            }
            out.push(result);
        }
        out
    }
}

fn fold_trailers(result: &mut VehicleResult) {
    if result.trailers.is_empty() {
        return;
    }
    let axles: u32 = result.trailers.iter().map(|t| t.trax_axles).sum();
    let mode: u32 = result.trailers.iter().map(|t| t.mode_axles).sum();
    result.trailer_axles = Some(axles);
    result.trailer_mode_axles = Some(mode);
    result.combined_axles = combine_axle_counts(result.trax_axles, axles);
    result.combined_mode_axles = combine_axle_counts(result.mode_axles, mode);
}

/// Processes a whole stream; results are in emission order.
pub fn run(
    frames: &[FrameDetections],
    config: &PipelineConfig,
) -> Result<Vec<VehicleResult>, PipelineError> {
    let mut p = Pipeline::new(*config)?;
    let mut out = Vec::new();
    for frame in frames {
        out.extend(p.push_frame(frame)?);
    }
    out.extend(p.finish()?);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flag {
    /// A true vehicle no result overlaps.
    Unmatched { truth_id: usize },
    /// A result that overlaps no remaining true vehicle.
    Extra { track_id: TrackId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub vehicles: usize,
    pub trax_correct: usize,
    pub mode_correct: usize,
}

impl Tally {
    pub fn accuracy_trax(&self) -> f64 {
        ratio(self.trax_correct, self.vehicles)
    }

    pub fn accuracy_mode(&self) -> f64 {
        ratio(self.mode_correct, self.vehicles)
    }

    fn add(&mut self, other: &Tally) {
        self.vehicles += other.vehicles;
        self.trax_correct += other.trax_correct;
        self.mode_correct += other.mode_correct;
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub difficulty: Difficulty,
    pub tally: Tally,
    pub accuracy_trax: f64,
    pub accuracy_mode: f64,
    /// `(truth id, track id)` for every matched vehicle.
    pub matches: Vec<(usize, TrackId)>,
    pub flags: Vec<Flag>,
}

/// Pairs results with true vehicles by largest frame-interval overlap and
/// scores both counters. Unmatched vehicles count as wrong.
pub fn evaluate(results: &[VehicleResult], truth: &GroundTruth) -> Metrics {
    let mut pairs = Vec::new();
    for (ti, tv) in truth.vehicles.iter().enumerate() {
        for (ri, r) in results.iter().enumerate() {
            let lo = tv.spawn_frame.max(r.first_frame);
            let hi = tv.despawn_frame.min(r.last_frame);
            if hi >= lo {
                pairs.push((hi - lo + 1, ti, ri));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut truth_used = vec![None; truth.vehicles.len()];
    let mut result_used = vec![false; results.len()];
    for (_, ti, ri) in pairs {
        if truth_used[ti].is_none() && !result_used[ri] {
            truth_used[ti] = Some(ri);
            result_used[ri] = true;
        }
    }

    let mut tally = Tally {
        vehicles: truth.vehicles.len(),
        ..Tally::default()
    };
    let mut matches = Vec::new();
    let mut flags = Vec::new();
    for (ti, slot) in truth_used.iter().enumerate() {
        match slot {
            Some(ri) => {
                let r = &results[*ri];
                let want = truth.vehicles[ti].axles;
                tally.trax_correct += usize::from(r.combined_axles == want);
                tally.mode_correct += usize::from(r.combined_mode_axles == want);
                matches.push((truth.vehicles[ti].id, r.track_id));
            }
            None => flags.push(Flag::Unmatched {
                truth_id: truth.vehicles[ti].id,
            }),
        }
    }
    for (ri, used) in result_used.iter().enumerate() {
        if !used {
            flags.push(Flag::Extra {
                track_id: results[ri].track_id,
            });
        }
    }
    Metrics {
        difficulty: truth.difficulty,
        accuracy_trax: tally.accuracy_trax(),
        accuracy_mode: tally.accuracy_mode(),
        tally,
        matches,
        flags,
    }
}

/// Accuracy per tier over many evaluated streams.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub tiers: BTreeMap<Difficulty, Tally>,
    pub flagged: usize,
}

impl Summary {
    pub fn from_metrics<'a>(metrics: impl IntoIterator<Item = &'a Metrics>) -> Summary {
        let mut s = Summary::default();
        for m in metrics {
            s.tiers.entry(m.difficulty).or_default().add(&m.tally);
            s.flagged += m.flags.len();
        }
        s
    }

    pub fn total(&self) -> Tally {
        let mut t = Tally::default();
        for v in self.tiers.values() {
            t.add(v);
        }
        t
    }
}

/// One simulated scenario pushed through the whole chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub frames: usize,
    pub results: Vec<VehicleResult>,
    pub truth: GroundTruth,
    pub metrics: Metrics,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

pub fn run_scenario(s: &Scenario, config: &PipelineConfig) -> Result<ScenarioRun, SuiteError> {
    let (frames, truth) = simulator::generate(s)?;
    let results = run(&frames, config)?;
    let metrics = evaluate(&results, &truth);
    Ok(ScenarioRun {
        frames: frames.len(),
        results,
        truth,
        metrics,
    })
}

/// Builds a tier suite, applies `noise` and evaluates every scenario.
pub fn run_suite(
    difficulty: Difficulty,
    n: usize,
    master_seed: u64,
    noise: &NoiseProfile,
    config: &PipelineConfig,
    mode: Execution,
) -> Result<Vec<ScenarioRun>, SuiteError> {
    let suite = simulator::build_suite(difficulty, n, master_seed);
    par::map(mode, &suite, |s| {
        run_scenario(&simulator::apply_noise(s, noise), config)
    })
    .into_iter()
    .collect()
}
