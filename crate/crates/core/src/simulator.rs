//! Deterministic side-view traffic simulator with ground truth.
//!
//! Vehicles travel along their heading through a fixed camera. Only the part
//! of a vehicle inside the visibility band is reported as a box, and a tire
//! is reported while its ground-contact point lies inside the band. All
//! randomness comes from `ChaCha8Rng` seeded with the scenario seed, so a
//! scenario always renders to the same stream.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detections::{
    round_angle, FrameDetections, TireDetection, VehicleClass, VehicleDetection,
};
use crate::geometry::{AlignedBox, OrientedBox, Point2};

/// Tire boxes are squares with this fraction of the vehicle length as side.
pub const TIRE_FRACTION: f64 = 0.06;
/// Bumper-to-bumper distance between a carrier and its towed trailer.
pub const HITCH_GAP: f64 = 24.0;
/// Visible slivers shorter than this are not reported.
pub const MIN_VISIBLE: f64 = 10.0;
pub const VEHICLE_CONFIDENCE: f64 = 0.9;
pub const TIRE_CONFIDENCE: f64 = 0.8;
pub const SPURIOUS_CONFIDENCE: f64 = 0.5;
/// Empty frames rendered after the last vehicle leaves.
pub const TAIL_FRAMES: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Difficulty::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown difficulty {s:?} (expected easy, medium or hard)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub image_width: f64,
    pub image_height: f64,
    pub fps: f64,
    /// `[x0, x1]` interval in which detections are emitted.
    pub visibility_band: [f64; 2],
}

impl CameraSpec {
    pub fn band_width(&self) -> f64 {
        self.visibility_band[1] - self.visibility_band[0]
    }

    fn in_band(&self, x: f64) -> bool {
        x >= self.visibility_band[0] && x <= self.visibility_band[1]
    }
}

impl Default for CameraSpec {
    fn default() -> Self {
        CameraSpec {
            image_width: 1280.0,
            image_height: 720.0,
            fps: 30.0,
            visibility_band: [80.0, 1200.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub class: VehicleClass,
    pub length: f64,
    pub height: f64,
    /// Axle positions measured back from the front bumper.
    pub axle_offsets: Vec<f64>,
    /// Pixels per frame along `heading`.
    pub speed: f64,
    pub heading: f64,
    /// Frame at which the front bumper reaches the entry edge of the band.
    pub spawn_frame: u64,
    /// Image row of the ground line at the front bumper.
    pub lane_y: f64,
    /// A towed trailer follows [`HITCH_GAP`] behind and takes its motion from
    /// the carrier; its own `speed`, `heading`, `spawn_frame` and `lane_y` are
    /// ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub towed_trailer: Option<Box<VehicleSpec>>,
}

impl VehicleSpec {
    pub fn axle_count(&self) -> u32 {
        self.axle_offsets.len() as u32 + self.towed_trailer.as_ref().map_or(0, |t| t.axle_count())
    }

    pub fn axle_span(&self) -> f64 {
        match (self.axle_offsets.first(), self.axle_offsets.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Distance from the first to the last axle of the coupled unit.
    pub fn unit_axle_span(&self) -> f64 {
        match &self.towed_trailer {
            Some(t) if !t.axle_offsets.is_empty() => {
                let first = self.axle_offsets.first().copied().unwrap_or(self.length);
                self.length + HITCH_GAP + t.axle_offsets.last().copied().unwrap_or(0.0) - first
            }
            _ => self.axle_span(),
        }
    }

    /// Bumper-to-bumper length including a towed trailer.
    pub fn unit_length(&self) -> f64 {
        self.length
            + self
                .towed_trailer
                .as_ref()
                .map_or(0.0, |t| HITCH_GAP + t.length)
    }

    fn validate(&self, towed: bool) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if !(self.length > 0.0 && self.height > 0.0) {
            return bad(format!("{} has non-positive size", self.class));
        }
        if !towed && !(self.speed > 0.0 && self.speed.is_finite()) {
            return bad(format!("{} speed must be > 0", self.class));
        }
        if !towed && self.heading.cos().abs() < 0.5 {
            return bad(format!(
                "{} heading {} is too steep for a side view",
                self.class, self.heading
            ));
        }
        if self.axle_offsets.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!(
                "{} axle offsets are not strictly increasing",
                self.class
            ));
        }
        if self
            .axle_offsets
            .iter()
            .any(|&a| !(0.0..=self.length).contains(&a))
        {
            return bad(format!("{} axle offset outside the body", self.class));
        }
        if let Some(t) = &self.towed_trailer {
            if towed {
                return bad("multi-trailer chains are not supported".into());
            }
            if t.class != VehicleClass::Trailer {
                return bad(format!("towed unit must be a Trailer, got {}", t.class));
            }
            t.validate(true)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccluderEvent {
    /// Half-open frame interval `[start, end)`.
    pub frames: [u64; 2],
    pub x_range: [f64; 2],
}

impl OccluderEvent {
    fn hides(&self, frame: u64, x: f64) -> bool {
        frame >= self.frames[0]
            && frame < self.frames[1]
            && x >= self.x_range[0]
            && x <= self.x_range[1]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub pos_sigma: f64,
    pub dropout_prob: f64,
    /// Expected spurious tires per frame.
    pub false_positive_rate: f64,
    #[serde(default)]
    pub occluder_events: Vec<OccluderEvent>,
}

impl NoiseSpec {
    fn validate(&self) -> Result<(), SimError> {
        if !(self.pos_sigma >= 0.0 && self.pos_sigma.is_finite()) {
            return Err(SimError::InvalidSpec(format!(
                "pos_sigma {} must be >= 0",
                self.pos_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(SimError::InvalidSpec(format!(
                "dropout_prob {} outside [0, 1]",
                self.dropout_prob
            )));
        }
        if !(self.false_positive_rate >= 0.0 && self.false_positive_rate.is_finite()) {
            return Err(SimError::InvalidSpec(format!(
                "false_positive_rate {} must be >= 0",
                self.false_positive_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub camera: CameraSpec,
    pub vehicles: Vec<VehicleSpec>,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub difficulty: Difficulty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTrailer {
    pub class: VehicleClass,
    pub axles: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthVehicle {
    pub id: usize,
    pub class: VehicleClass,
    /// Axles of the whole unit, towed trailer included.
    pub axles: u32,
    pub spawn_frame: u64,
    pub despawn_frame: u64,
    pub trailer: Option<TruthTrailer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub difficulty: Difficulty,
    pub seed: u64,
    pub vehicles: Vec<TruthVehicle>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("scenario does not match its `{tag}` tag: {reason}")]
    Inconsistent { tag: Difficulty, reason: String },
}

/// Motion of one rigid body (carrier or trailer) through the scene.
struct Body<'a> {
    spec: &'a VehicleSpec,
    forward: Point2,
    up: Point2,
    /// Front bumper at ground level when `frame == spawn`.
    origin: Point2,
    speed: f64,
    spawn: u64,
}

impl Body<'_> {
    fn front(&self, frame: u64) -> Point2 {
        let travelled = self.speed * (frame as f64 - self.spawn as f64);
        self.origin + self.forward * travelled
    }

    /// Point `back` pixels behind the front bumper, `lift` pixels above ground.
    fn at(&self, frame: u64, back: f64, lift: f64) -> Point2 {
        self.front(frame) - self.forward * back + self.up * lift
    }

    /// Interval of `back` whose centerline lies inside the band.
    fn visible(&self, frame: u64, camera: &CameraSpec) -> Option<(f64, f64)> {
        let fx = self.front(frame).x;
        let [b0, b1] = camera.visibility_band;
        let s0 = (fx - b0) / self.forward.x;
        let s1 = (fx - b1) / self.forward.x;
        let lo = s0.min(s1).max(0.0);
        let hi = s0.max(s1).min(self.spec.length);
        (hi - lo >= MIN_VISIBLE).then_some((lo, hi))
    }

    fn oriented_box(&self, frame: u64, (lo, hi): (f64, f64)) -> OrientedBox {
        let c = self.at(frame, (lo + hi) / 2.0, self.spec.height / 2.0);
        let theta = self.forward.y.atan2(self.forward.x);
        let b = OrientedBox::new(c.x, c.y, hi - lo, self.spec.height, theta).canonical();
        OrientedBox {
            theta: round_angle(b.theta),
            ..b
        }
    }
}

fn bodies<'a>(spec: &'a VehicleSpec, camera: &CameraSpec) -> Vec<(VehicleClass, Body<'a>, bool)> {
    let forward = Point2::new(spec.heading.cos(), spec.heading.sin());
    let up = if forward.x >= 0.0 {
        Point2::new(forward.y, -forward.x)
    } else {
        Point2::new(-forward.y, forward.x)
    };
    let entry_x = if forward.x > 0.0 {
        camera.visibility_band[0]
    } else {
        camera.visibility_band[1]
    };
    let origin = Point2::new(entry_x, spec.lane_y);
    let carrier = Body {
        spec,
        forward,
        up,
        origin,
        speed: spec.speed,
        spawn: spec.spawn_frame,
    };
    let mut out = vec![(spec.class, carrier, false)];
    if let Some(t) = &spec.towed_trailer {
        let origin = origin - forward * (spec.length + HITCH_GAP);
        out.push((
            t.class,
            Body {
                spec: t,
                forward,
                up,
                origin,
                speed: spec.speed,
                spawn: spec.spawn_frame,
            },
            true,
        ));
    }
    out
}

/// Last frame on which any part of the unit is inside the band.
fn despawn_frame(spec: &VehicleSpec, camera: &CameraSpec) -> u64 {
    let along = spec.speed * spec.heading.cos().abs();
    let travel = camera.band_width() + spec.unit_length();
    spec.spawn_frame + (travel / along).ceil() as u64
}

/// Checks the scenario against the definition of its difficulty tier.
pub fn check_difficulty(s: &Scenario) -> Result<(), SimError> {
    let tag = s.difficulty;
    let fail = |reason: String| Err(SimError::Inconsistent { tag, reason });
    let band = s.camera.band_width();
    match tag {
        Difficulty::Easy => {
            const EASY: [VehicleClass; 4] = [
                VehicleClass::Sedan,
                VehicleClass::Suv,
                VehicleClass::Van,
                VehicleClass::Hatchback,
            ];
            for v in &s.vehicles {
                if !EASY.contains(&v.class) || v.axle_count() != 2 || v.towed_trailer.is_some() {
                    return fail(format!(
                        "{} with {} axles is not a 2-axle car",
                        v.class,
                        v.axle_count()
                    ));
                }
            }
        }
        Difficulty::Medium => {
            if !s.vehicles.iter().any(|v| v.axle_count() >= 2) {
                return fail("no vehicle with 2 or more axles".into());
            }
            if let Some(v) = s.vehicles.iter().find(|v| v.unit_axle_span() >= band) {
                return fail(format!(
                    "{} spans {:.0} px of axles, band is {band:.0} px",
                    v.class,
                    v.unit_axle_span()
                ));
            }
        }
        Difficulty::Hard => {
            if !s
                .vehicles
                .iter()
                .any(|v| v.axle_count() >= 2 && v.axle_span() > band)
            {
                return fail(format!(
                    "no vehicle has an axle span longer than the {band:.0} px band"
                ));
            }
        }
    }
    Ok(())
}

fn validate(s: &Scenario) -> Result<(), SimError> {
    let [b0, b1] = s.camera.visibility_band;
    if !(b0 >= 0.0 && b1 <= s.camera.image_width && b0 < b1) {
        return Err(SimError::InvalidSpec(format!(
            "band [{b0}, {b1}] not inside [0, {}]",
            s.camera.image_width
        )));
    }
    if s.camera.fps.is_nan() || s.camera.fps <= 0.0 {
        return Err(SimError::InvalidSpec("fps must be > 0".into()));
    }
    s.noise.validate()?;
    for v in &s.vehicles {
        v.validate(false)?;
    }
    check_difficulty(s)
}

pub fn ground_truth(s: &Scenario) -> GroundTruth {
    GroundTruth {
        difficulty: s.difficulty,
        seed: s.seed,
        vehicles: s
            .vehicles
            .iter()
            .enumerate()
            .map(|(id, v)| TruthVehicle {
                id,
                class: v.class,
                axles: v.axle_count(),
                spawn_frame: v.spawn_frame,
                despawn_frame: despawn_frame(v, &s.camera),
                trailer: v.towed_trailer.as_ref().map(|t| TruthTrailer {
                    class: t.class,
                    axles: t.axle_offsets.len() as u32,
                }),
            })
            .collect(),
    }
}

/// Renders the scenario into a detection stream plus its ground truth.
pub fn generate(s: &Scenario) -> Result<(Vec<FrameDetections>, GroundTruth), SimError> {
    validate(s)?;
    let truth = ground_truth(s);
    let last = truth
        .vehicles
        .iter()
        .map(|v| v.despawn_frame)
        .max()
        .map_or(0, |f| f + TAIL_FRAMES);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let jitter =
        Normal::new(0.0, s.noise.pos_sigma).map_err(|e| SimError::InvalidSpec(e.to_string()))?;
    let spurious = (s.noise.false_positive_rate > 0.0)
        .then(|| Poisson::new(s.noise.false_positive_rate))
        .transpose()
        .map_err(|e| SimError::InvalidSpec(e.to_string()))?;
    let units: Vec<_> = s.vehicles.iter().map(|v| bodies(v, &s.camera)).collect();

    let mut frames = Vec::with_capacity(last as usize + 1);
    for f in 0..=last {
        let mut frame = FrameDetections {
            frame_index: f,
            timestamp: f as f64 / s.camera.fps,
            ..Default::default()
        };
        let mut visible_spans = Vec::new();
        for unit in &units {
            for (class, body, _) in unit {
                let Some(span) = body.visible(f, &s.camera) else {
                    continue;
                };
                frame.vehicles.push(VehicleDetection {
                    bbox: body.oriented_box(f, span),
                    class: *class,
                    confidence: VEHICLE_CONFIDENCE,
                });
                visible_spans.push((body, span));
                let size = TIRE_FRACTION * body.spec.length;
                for &offset in &body.spec.axle_offsets {
                    let contact = body.at(f, offset, 0.0);
                    if !s.camera.in_band(contact.x) {
                        continue;
                    }
                    let mut center = body.at(f, offset, size / 2.0);
                    if s.noise.pos_sigma > 0.0 {
                        center =
                            center + Point2::new(jitter.sample(&mut rng), jitter.sample(&mut rng));
                    }
                    if s.noise.dropout_prob > 0.0 && rng.random_bool(s.noise.dropout_prob) {
                        continue;
                    }
                    if s.noise
                        .occluder_events
                        .iter()
                        .any(|o| o.hides(f, contact.x))
                    {
                        continue;
                    }
                    frame.tires.push(TireDetection {
                        bbox: AlignedBox::from_center(center, size, size),
                        confidence: TIRE_CONFIDENCE,
                    });
                }
            }
        }
        if let Some(poisson) = &spurious {
            let n = poisson.sample(&mut rng) as usize;
            for _ in 0..n {
                frame
                    .tires
                    .push(spurious_tire(&mut rng, f, &visible_spans, &s.camera));
            }
        }
        frames.push(frame);
    }
    Ok((frames, truth))
}

fn spurious_tire(
    rng: &mut ChaCha8Rng,
    frame: u64,
    spans: &[(&Body<'_>, (f64, f64))],
    camera: &CameraSpec,
) -> TireDetection {
    if spans.is_empty() {
        let [b0, b1] = camera.visibility_band;
        let c = Point2::new(
            rng.random_range(b0..=b1),
            rng.random_range(0.0..=camera.image_height),
        );
        return TireDetection {
            bbox: AlignedBox::from_center(c, 20.0, 20.0),
            confidence: SPURIOUS_CONFIDENCE,
        };
    }
    let (body, (lo, hi)) = spans[rng.random_range(0..spans.len())];
    let size = TIRE_FRACTION * body.spec.length;
    let back = rng.random_range(lo..=hi);
    let c = body.at(frame, back, size / 2.0);
    TireDetection {
        bbox: AlignedBox::from_center(c, size, size),
        confidence: SPURIOUS_CONFIDENCE,
    }
}

/// Detector noise applied on top of a clean suite scenario.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseProfile {
    pub pos_sigma: f64,
    pub dropout_prob: f64,
    pub false_positive_rate: f64,
    pub occluders: usize,
}

/// Occluder width range (px) and duration range (frames) used by [`apply_noise`].
pub const OCCLUDER_WIDTH: (f64, f64) = (40.0, 120.0);
pub const OCCLUDER_FRAMES: (u64, u64) = (3, 8);

/// Returns a copy of `s` with the profile's noise. Occluders are placed
/// inside the band while some vehicle is passing, drawn from a generator
/// derived from the scenario seed.
pub fn apply_noise(s: &Scenario, profile: &NoiseProfile) -> Scenario {
    let mut out = s.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x6f63_636c_7564_6572);
    let truth = ground_truth(s);
    let mut events = Vec::with_capacity(profile.occluders);
    if !truth.vehicles.is_empty() {
        let [b0, b1] = s.camera.visibility_band;
        for _ in 0..profile.occluders {
            let v = &truth.vehicles[rng.random_range(0..truth.vehicles.len())];
            let start = rng.random_range(v.spawn_frame..=v.despawn_frame);
            let len = rng.random_range(OCCLUDER_FRAMES.0..=OCCLUDER_FRAMES.1);
            let width = rng
                .random_range(OCCLUDER_WIDTH.0..=OCCLUDER_WIDTH.1)
                .min(b1 - b0);
            let x0 = rng.random_range(b0..=b1 - width);
            events.push(OccluderEvent {
                frames: [start, start + len],
                x_range: [x0, x0 + width],
            });
        }
    }
    out.noise = NoiseSpec {
        pos_sigma: profile.pos_sigma,
        dropout_prob: profile.dropout_prob,
        false_positive_rate: profile.false_positive_rate,
        occluder_events: events,
    };
    out
}

/// `n` clean scenarios of one tier. Scenario `i` depends only on
/// `master_seed` and `i`.
pub fn build_suite(difficulty: Difficulty, n: usize, master_seed: u64) -> Vec<Scenario> {
    let mut master = ChaCha8Rng::seed_from_u64(master_seed);
    master.set_stream(difficulty as u64 + 1);
    let seeds: Vec<u64> = (0..n).map(|_| master.random()).collect();
    seeds
        .into_iter()
        .map(|seed| build_scenario(difficulty, seed))
        .collect()
}

/// One clean scenario of the given tier, fully determined by `seed`.
pub fn build_scenario(difficulty: Difficulty, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut camera = CameraSpec::default();
    if difficulty == Difficulty::Hard {
        let width = rng.random_range(640.0..=900.0_f64).round();
        let x0 = ((camera.image_width - width) / 2.0).round();
        camera.visibility_band = [x0, x0 + width];
    }
    let band = camera.band_width();
    let leftward = rng.random_bool(0.5);
    let heading =
        rng.random_range(-0.03..=0.03) + if leftward { std::f64::consts::PI } else { 0.0 };
    let lane_y = rng.random_range(560.0..=660.0_f64).round();
    let mut speed = rng.random_range(5.0..=12.0_f64);

    let mut specs: Vec<VehicleSpec> = Vec::new();
    match difficulty {
        Difficulty::Easy => {
            let k = rng.random_range(1..=3);
            for _ in 0..k {
                specs.push(car(&mut rng));
            }
        }
        Difficulty::Medium => {
            let mut long = long_vehicle(&mut rng, band * 0.35, band * 0.8, 2..=5);
            if matches!(
                long.class,
                VehicleClass::Truck | VehicleClass::SemiTruck | VehicleClass::PickupTruck
            ) && rng.random_bool(0.4)
            {
                let room = band * 0.85 - long.unit_axle_span();
                if room > 250.0 {
                    long.towed_trailer = Some(Box::new(trailer(&mut rng, room.min(700.0))));
                    if long.unit_axle_span() >= band * 0.9 {
                        long.towed_trailer = None;
                    }
                }
            }
            specs.push(long);
            if rng.random_bool(0.5) {
                let companion = car(&mut rng);
                if rng.random_bool(0.5) {
                    specs.insert(0, companion);
                } else {
                    specs.push(companion);
                }
            }
        }
        Difficulty::Hard => {
            let mut long = long_vehicle(&mut rng, band + 60.0, band + 500.0, 3..=6);
            if long.class != VehicleClass::Bus && rng.random_bool(0.3) {
                long.towed_trailer = Some(Box::new(trailer(&mut rng, 700.0)));
            }
            specs.push(long);
        }
    }

    let mut spawn = 5u64;
    for spec in specs.iter_mut() {
        spec.speed = speed;
        spec.heading = heading;
        spec.lane_y = lane_y;
        spec.spawn_frame = spawn;
        let gap = rng.random_range(80.0..=400.0);
        spawn += ((spec.unit_length() + gap) / (speed * heading.cos().abs())).ceil() as u64;
        // Followers are never faster, so gaps never close.
        speed *= rng.random_range(0.85..=1.0);
    }
    Scenario {
        camera,
        vehicles: specs,
        noise: NoiseSpec::default(),
        seed,
        difficulty,
    }
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

fn car(rng: &mut ChaCha8Rng) -> VehicleSpec {
    const CLASSES: [VehicleClass; 4] = [
        VehicleClass::Sedan,
        VehicleClass::Suv,
        VehicleClass::Van,
        VehicleClass::Hatchback,
    ];
    let class = CLASSES[rng.random_range(0..CLASSES.len())];
    let length = round1(rng.random_range(260.0..=420.0));
    let front = round1(length * rng.random_range(0.15..=0.22));
    let rear = round1(length * rng.random_range(0.15..=0.25));
    VehicleSpec {
        class,
        length,
        height: round1(length * rng.random_range(0.32..=0.45)),
        axle_offsets: vec![front, length - rear],
        speed: 0.0,
        heading: 0.0,
        spawn_frame: 0,
        lane_y: 0.0,
        towed_trailer: None,
    }
}

/// Axle offsets: a front axle, then the rest spread over `span` with gaps of
/// at least `min_gap`.
fn axle_layout(rng: &mut ChaCha8Rng, front: f64, span: f64, n: usize, min_gap: f64) -> Vec<f64> {
    let mut offsets = vec![front];
    if n == 1 {
        return offsets;
    }
    // Slack beyond the minimum spacing is distributed by random weights.
    let slack = (span - min_gap * (n - 1) as f64).max(0.0);
    let weights: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.2..=1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut pos = front;
    for w in &weights {
        pos += min_gap + slack * w / total;
        offsets.push(round1(pos));
    }
    let last = offsets.len() - 1;
    offsets[last] = round1(front + span);
    offsets
}

fn long_vehicle(
    rng: &mut ChaCha8Rng,
    min_span: f64,
    max_span: f64,
    axles: std::ops::RangeInclusive<usize>,
) -> VehicleSpec {
    const CLASSES: [VehicleClass; 4] = [
        VehicleClass::PickupTruck,
        VehicleClass::Truck,
        VehicleClass::SemiTruck,
        VehicleClass::Bus,
    ];
    let class = CLASSES[rng.random_range(0..CLASSES.len())];
    let n = if class == VehicleClass::PickupTruck {
        2
    } else {
        rng.random_range(axles)
    };
    let span = round1(rng.random_range(min_span..=max_span));
    let front_frac = rng.random_range(0.08..=0.15);
    let rear_frac = rng.random_range(0.06..=0.12);
    let length = round1(span / (1.0 - front_frac - rear_frac));
    let front = round1(length * front_frac);
    let min_gap = (2.5 * TIRE_FRACTION * length).min(span / (n - 1) as f64);
    VehicleSpec {
        class,
        length,
        height: round1(length * rng.random_range(0.16..=0.24)),
        axle_offsets: axle_layout(rng, front, span, n, min_gap),
        speed: 0.0,
        heading: 0.0,
        spawn_frame: 0,
        lane_y: 0.0,
        towed_trailer: None,
    }
}

fn trailer(rng: &mut ChaCha8Rng, max_length: f64) -> VehicleSpec {
    let length = round1(rng.random_range(300.0..=max_length.max(320.0)));
    let n = rng.random_range(1..=3);
    let front = round1(length * rng.random_range(0.1..=0.3));
    let span = round1(length * 0.9 - front);
    let min_gap = (2.5 * TIRE_FRACTION * length).min(span / n.max(2) as f64);
    let axle_offsets = if n == 1 {
        vec![round1(length * 0.8)]
    } else {
        axle_layout(rng, front, span, n, min_gap)
    };
    VehicleSpec {
        class: VehicleClass::Trailer,
        length,
        height: round1(length * rng.random_range(0.25..=0.4)),
        axle_offsets,
        speed: 0.0,
        heading: 0.0,
        spawn_frame: 0,
        lane_y: 0.0,
        towed_trailer: None,
    }
}

/// Largest number of tires of vehicle `unit` (carrier and trailer together)
/// that are inside the band on any single frame, without noise.
pub fn max_visible_tires(s: &Scenario, unit: usize) -> u32 {
    let spec = &s.vehicles[unit];
    let bodies = bodies(spec, &s.camera);
    let end = despawn_frame(spec, &s.camera);
    (spec.spawn_frame..=end)
        .map(|f| {
            bodies
                .iter()
                .map(|(_, b, _)| {
                    b.spec
                        .axle_offsets
                        .iter()
                        .filter(|&&a| s.camera.in_band(b.at(f, a, 0.0).x))
                        .count() as u32
                })
                .sum::<u32>()
        })
        .max()
        .unwrap_or(0)
}
