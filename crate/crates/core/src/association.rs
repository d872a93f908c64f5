//! Tire-to-vehicle and trailer-to-carrier association.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detections::TireDetection;
use crate::geometry::{iou, ray_box_distance, ray_exit_distance, OrientedBox, Point2, Ray};
use crate::tracker::{TrackId, VehicleTrack};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationConfig {
    /// A tire is assigned only when its best IoU exceeds this.
    pub tire_iou_threshold: f64,
    /// History entries used to estimate a trailer's heading.
    pub motion_window: usize,
    /// Displacement (px) below which a trailer counts as stationary.
    pub min_motion: f64,
    pub frame_width: f64,
    pub frame_height: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        AssociationConfig {
            tire_iou_threshold: 0.001,
            motion_window: 5,
            min_motion: 1.0,
            frame_width: 1280.0,
            frame_height: 720.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireAssignment {
    pub tire: usize,
    pub target: TrackId,
    pub iou: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrailerLink {
    pub trailer: TrackId,
    pub carrier: TrackId,
    pub hit_distance: f64,
}

/// Maps each tire to the vehicle box it overlaps most, if that overlap
/// exceeds `threshold`. Ties go to the earlier vehicle in `vehicles`.
pub fn associate_tires(
    tires: &[TireDetection],
    vehicles: &[(TrackId, OrientedBox)],
    threshold: f64,
) -> Vec<TireAssignment> {
    tires
        .iter()
        .enumerate()
        .filter_map(|(ti, tire)| {
            let mut best: Option<(TrackId, f64)> = None;
            for (id, bx) in vehicles {
                let v = iou(&tire.bbox, bx);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((*id, v));
                }
            }
            best.filter(|&(_, v)| v > threshold)
                .map(|(target, iou)| TireAssignment {
                    tire: ti,
                    target,
                    iou,
                })
        })
        .collect()
}

/// Unit displacement between the oldest and newest centers of the last
/// `window` history entries.
pub fn motion_direction(track: &VehicleTrack, window: usize, min_motion: f64) -> Option<Point2> {
    let window = window.max(2);
    let h = &track.history;
    if h.len() < 2 {
        return None;
    }
    let start = h.len().saturating_sub(window);
    let first = h[start].1.center();
    let last = h[h.len() - 1].1.center();
    let d = last - first;
    let n = d.norm();
    if n < min_motion || n == 0.0 {
        return None;
    }
    Some(d * (1.0 / n))
}

/// Casts a ray from the trailer's current center along its motion and links
/// the nearest non-trailer box hit before the ray leaves the frame.
pub fn associate_trailer(
    trailer: &VehicleTrack,
    vehicles: &[&VehicleTrack],
    config: &AssociationConfig,
) -> Option<TrailerLink> {
    let dir = motion_direction(trailer, config.motion_window, config.min_motion)?;
    let (_, tbox) = trailer.last();
    let ray = Ray::new(tbox.center(), dir)?;
    let limit = ray_exit_distance(&ray, config.frame_width, config.frame_height)?;
    let mut best: Option<TrailerLink> = None;
    for v in vehicles {
        if v.class.is_trailer() || v.track_id == trailer.track_id {
            continue;
        }
        let (_, vbox) = v.last();
        if let Some(d) = ray_box_distance(&ray, &vbox) {
            if d <= limit && best.is_none_or(|b| d < b.hit_distance) {
                best = Some(TrailerLink {
                    trailer: trailer.track_id,
                    carrier: v.track_id,
                    hit_distance: d,
                });
            }
        }
    }
    best
}

/// Vehicle and towed-trailer axle counts combine additively.
pub fn combine_axle_counts(vehicle_axles: u32, trailer_axles: u32) -> u32 {
    vehicle_axles + trailer_axles
}

/// Trailer links for one stream. A link, once made, is never replaced.
#[derive(Debug, Clone, Default)]
pub struct LinkRegistry {
    links: BTreeMap<TrackId, TrailerLink>,
}

impl LinkRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, trailer: TrackId) -> Option<&TrailerLink> {
        self.links.get(&trailer)
    }

    pub fn contains(&self, trailer: TrackId) -> bool {
        self.links.contains_key(&trailer)
    }

    /// Records `link` unless the trailer is already linked; returns whether
    /// it was inserted.
    pub fn insert(&mut self, link: TrailerLink) -> bool {
        if self.links.contains_key(&link.trailer) {
            return false;
        }
        self.links.insert(link.trailer, link);
        true
    }

    pub fn trailers_of(&self, carrier: TrackId) -> impl Iterator<Item = &TrailerLink> {
        self.links.values().filter(move |l| l.carrier == carrier)
    }

    pub fn remove(&mut self, trailer: TrackId) -> Option<TrailerLink> {
        self.links.remove(&trailer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detections::{FrameDetections, VehicleClass, VehicleDetection};
    use crate::geometry::AlignedBox;
    use crate::tracker::{TrackerConfig, VehicleTracker};
    use approx::assert_abs_diff_eq;

    fn tire(x: f64, y: f64, w: f64, h: f64) -> TireDetection {
        TireDetection {
            bbox: AlignedBox::new(x, y, w, h),
            confidence: 0.9,
        }
    }

    #[test]
    fn tire_inside_one_vehicle() {
        let vehicles = [
            (1, OrientedBox::new(50.0, 50.0, 100.0, 40.0, 0.0)),
            (2, OrientedBox::new(500.0, 50.0, 100.0, 40.0, 0.0)),
        ];
        let out = associate_tires(&[tire(10.0, 60.0, 10.0, 10.0)], &vehicles, 0.001);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].target, 1);
        assert!(out[0].iou > 0.0);
    }

    #[test]
    fn tire_goes_to_maximum_iou() {
        let t = tire(0.0, 0.0, 1.0, 1.0);
        // IoU = 1 / 5 = 0.20 : box [0,5]x[0,1].
        let a = OrientedBox::new(2.5, 0.5, 5.0, 1.0, 0.0);
        // IoU = 1 / 20 = 0.05 : box [0,20]x[0,1].
        let b = OrientedBox::new(10.0, 0.5, 20.0, 1.0, 0.0);
        assert_abs_diff_eq!(iou(&t.bbox, &a), 0.20, epsilon = 1e-12);
        assert_abs_diff_eq!(iou(&t.bbox, &b), 0.05, epsilon = 1e-12);
        let out = associate_tires(&[t], &[(9, b), (4, a)], 0.1);
        assert_eq!(
            out,
            vec![TireAssignment {
                tire: 0,
                target: 4,
                iou: out[0].iou
            }]
        );
        assert_abs_diff_eq!(out[0].iou, 0.20, epsilon = 1e-12);
    }

    #[test]
    fn best_below_threshold_is_unassigned() {
        let t = tire(0.0, 0.0, 1.0, 1.0);
        let b = OrientedBox::new(10.0, 0.5, 20.0, 1.0, 0.0);
        assert!(associate_tires(&[t], &[(1, b)], 0.1).is_empty());
    }

    fn track_through(centers: &[(f64, f64)], class: VehicleClass) -> VehicleTrack {
        let mut tr = VehicleTracker::new(TrackerConfig {
            iou_gate: 0.0,
            min_hits: 1,
            max_age: 100,
        })
        .unwrap();
        for (i, &(x, y)) in centers.iter().enumerate() {
            let det = VehicleDetection {
                bbox: OrientedBox::new(x, y, 200.0, 80.0, 0.0),
                class,
                confidence: 1.0,
            };
            tr.update(&FrameDetections {
                frame_index: i as u64,
                timestamp: 0.0,
                vehicles: vec![det],
                tires: vec![],
            })
            .unwrap();
        }
        tr.live()[0].clone()
    }

    #[test]
    fn motion_direction_examples() {
        let t = track_through(
            &[(0.0, 0.0), (5.0, 0.0), (10.0, 0.0)],
            VehicleClass::Trailer,
        );
        let d = motion_direction(&t, 5, 1.0).unwrap();
        assert_abs_diff_eq!(d.x, 1.0);
        assert_abs_diff_eq!(d.y, 0.0);

        let t = track_through(&[(0.0, 0.0), (0.0, -5.0)], VehicleClass::Trailer);
        let d = motion_direction(&t, 5, 1.0).unwrap();
        assert_abs_diff_eq!(d.x, 0.0);
        assert_abs_diff_eq!(d.y, -1.0);

        let t = track_through(
            &[(0.0, 0.0), (0.05, 0.0), (0.1, 0.0)],
            VehicleClass::Trailer,
        );
        assert!(motion_direction(&t, 5, 1.0).is_none());
    }

    #[test]
    fn motion_direction_uses_window() {
        let t = track_through(
            &[(0.0, 0.0), (0.0, 10.0), (10.0, 10.0)],
            VehicleClass::Trailer,
        );
        let d = motion_direction(&t, 2, 1.0).unwrap();
        assert_abs_diff_eq!(d.x, 1.0);
        assert_abs_diff_eq!(d.y, 0.0);
    }

    fn static_track(id: TrackId, bx: OrientedBox, class: VehicleClass) -> VehicleTrack {
        let mut t = track_through(&[(bx.cx, bx.cy)], class);
        t.track_id = id;
        t.history = vec![(0, bx)];
        t
    }

    fn moving_trailer(id: TrackId, from: Point2, to: Point2) -> VehicleTrack {
        let mut t = track_through(&[(from.x, from.y), (to.x, to.y)], VehicleClass::Trailer);
        t.track_id = id;
        t
    }

    #[test]
    fn trailer_links_to_truck_ahead() {
        let cfg = AssociationConfig::default();
        // Trailer 200 px long centered at x=300 moving right; truck rear 50 px beyond trailer front.
        let trailer = moving_trailer(1, Point2::new(290.0, 300.0), Point2::new(300.0, 300.0));
        let truck = static_track(
            2,
            OrientedBox::new(600.0, 300.0, 300.0, 100.0, 0.0),
            VehicleClass::Truck,
        );
        let link = associate_trailer(&trailer, &[&trailer, &truck], &cfg).unwrap();
        assert_eq!((link.trailer, link.carrier), (1, 2));
        // Distance from trailer center (300) to truck rear (450).
        assert_abs_diff_eq!(link.hit_distance, 150.0, epsilon = 1e-9);
    }

    #[test]
    fn trailer_links_to_nearest_hit() {
        let cfg = AssociationConfig::default();
        let trailer = moving_trailer(1, Point2::new(95.0, 300.0), Point2::new(100.0, 300.0));
        let near = static_track(
            3,
            OrientedBox::new(150.0, 300.0, 20.0, 20.0, 0.0),
            VehicleClass::Truck,
        );
        let far = static_track(
            2,
            OrientedBox::new(200.0, 300.0, 20.0, 20.0, 0.0),
            VehicleClass::Sedan,
        );
        let link = associate_trailer(&trailer, &[&far, &near], &cfg).unwrap();
        assert_eq!(link.carrier, 3);
        assert_abs_diff_eq!(link.hit_distance, 40.0, epsilon = 1e-9);
    }

    #[test]
    fn ray_leaving_frame_gives_no_link() {
        let cfg = AssociationConfig {
            frame_width: 500.0,
            ..Default::default()
        };
        let trailer = moving_trailer(1, Point2::new(290.0, 300.0), Point2::new(300.0, 300.0));
        let truck = static_track(
            2,
            OrientedBox::new(700.0, 300.0, 300.0, 100.0, 0.0),
            VehicleClass::Truck,
        );
        assert!(associate_trailer(&trailer, &[&truck], &cfg).is_none());
    }

    #[test]
    fn stationary_trailer_gives_no_link() {
        let cfg = AssociationConfig::default();
        let trailer = moving_trailer(1, Point2::new(300.0, 300.0), Point2::new(300.2, 300.0));
        let truck = static_track(
            2,
            OrientedBox::new(600.0, 300.0, 300.0, 100.0, 0.0),
            VehicleClass::Truck,
        );
        assert!(associate_trailer(&trailer, &[&truck], &cfg).is_none());
    }

    #[test]
    fn other_trailers_are_skipped() {
        let cfg = AssociationConfig::default();
        let trailer = moving_trailer(1, Point2::new(290.0, 300.0), Point2::new(300.0, 300.0));
        let other = static_track(
            2,
            OrientedBox::new(500.0, 300.0, 100.0, 100.0, 0.0),
            VehicleClass::Trailer,
        );
        let truck = static_track(
            3,
            OrientedBox::new(800.0, 300.0, 300.0, 100.0, 0.0),
            VehicleClass::Truck,
        );
        assert_eq!(
            associate_trailer(&trailer, &[&other, &truck], &cfg)
                .unwrap()
                .carrier,
            3
        );
    }

    #[test]
    fn combine_is_sum() {
        assert_eq!(combine_axle_counts(3, 2), 5);
        assert_eq!(combine_axle_counts(2, 0), 2);
        assert_eq!(combine_axle_counts(0, 0), 0);
    }

    #[test]
    fn registry_keeps_first_link() {
        let mut r = LinkRegistry::new();
        assert!(r.insert(TrailerLink {
            trailer: 1,
            carrier: 2,
            hit_distance: 5.0
        }));
        assert!(!r.insert(TrailerLink {
            trailer: 1,
            carrier: 3,
            hit_distance: 1.0
        }));
        assert_eq!(r.get(1).unwrap().carrier, 2);
        assert_eq!(r.trailers_of(2).count(), 1);
    }
}
