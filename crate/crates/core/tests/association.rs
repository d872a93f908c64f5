use std::collections::BTreeSet;

use axlecount::association::{associate_tires, associate_trailer, AssociationConfig};
use axlecount::detections::{FrameDetections, TireDetection, VehicleClass, VehicleDetection};
use axlecount::geometry::{iou, AlignedBox, OrientedBox};
use axlecount::tracker::{TrackerConfig, VehicleTrack, VehicleTracker};
use proptest::prelude::*;

fn tires() -> impl Strategy<Value = Vec<TireDetection>> {
    prop::collection::vec(
        (0.0..400.0f64, 0.0..300.0f64, 5.0..60.0f64).prop_map(|(x, y, s)| TireDetection {
            bbox: AlignedBox::new(x, y, s, s),
            confidence: 0.8,
        }),
        0..12,
    )
}

fn vehicles() -> impl Strategy<Value = Vec<(u64, OrientedBox)>> {
    prop::collection::vec(
        (
            0.0..400.0f64,
            0.0..300.0f64,
            20.0..200.0f64,
            10.0..80.0f64,
            -1.5..1.5f64,
        )
            .prop_map(|(x, y, w, h, t)| OrientedBox::new(x, y, w, h, t)),
        0..5,
    )
    .prop_map(|boxes| {
        boxes
            .into_iter()
            .enumerate()
            .map(|(i, b)| (i as u64 + 1, b))
            .collect()
    })
}

/// Tracks for boxes moving at constant velocity, one body per entry.
fn moving(bodies: &[(VehicleClass, OrientedBox, f64, f64)], frames: u64) -> Vec<VehicleTrack> {
    let mut tracker = VehicleTracker::new(TrackerConfig::default()).unwrap();
    for f in 0..frames {
        let vehicles = bodies
            .iter()
            .map(|&(class, b, vx, vy)| VehicleDetection {
                bbox: b.translated(vx * f as f64, vy * f as f64),
                class,
                confidence: 0.9,
            })
            .collect();
        tracker
            .update(&FrameDetections {
                frame_index: f,
                timestamp: f as f64 / 30.0,
                vehicles,
                tires: Vec::new(),
            })
            .unwrap();
    }
    let mut live = tracker.live().to_vec();
    live.sort_by_key(|t| t.track_id);
    live
}

fn big_frame() -> AssociationConfig {
    AssociationConfig {
        frame_width: 1e5,
        frame_height: 1e5,
        ..Default::default()
    }
}

fn truck_and_trailer(dx: f64, dy: f64) -> Vec<(VehicleClass, OrientedBox, f64, f64)> {
    vec![
        (
            VehicleClass::Truck,
            OrientedBox::new(500.0 + dx, 300.0 + dy, 200.0, 80.0, 0.0),
            6.0,
            0.0,
        ),
        (
            VehicleClass::Trailer,
            OrientedBox::new(330.0 + dx, 300.0 + dy, 120.0, 70.0, 0.0),
            6.0,
            0.0,
        ),
    ]
}

proptest! {
    #[test]
    fn tires_map_to_at_most_one_best_vehicle(tires in tires(), vehicles in vehicles(), threshold in 0.0..0.5f64) {
        let out = associate_tires(&tires, &vehicles, threshold);
        let seen: BTreeSet<usize> = out.iter().map(|a| a.tire).collect();
        prop_assert_eq!(seen.len(), out.len());
        for a in &out {
            let tire = &tires[a.tire].bbox;
            prop_assert!(a.iou > threshold);
            let best = vehicles.iter().map(|(_, b)| iou(tire, b)).fold(0.0, f64::max);
            prop_assert_eq!(a.iou, best);
            let (_, target) = vehicles.iter().find(|(id, _)| *id == a.target).unwrap();
            prop_assert_eq!(iou(tire, target), a.iou);
        }
        for (i, t) in tires.iter().enumerate() {
            if !seen.contains(&i) {
                prop_assert!(vehicles.iter().all(|(_, b)| iou(&t.bbox, b) <= threshold));
            }
        }
    }

    #[test]
    fn raising_the_threshold_only_drops_assignments(
        tires in tires(), vehicles in vehicles(), lo in 0.0..0.5f64, extra in 0.0..0.5f64,
    ) {
        let low = associate_tires(&tires, &vehicles, lo);
        let high = associate_tires(&tires, &vehicles, lo + extra);
        prop_assert!(high.len() <= low.len());
        for a in &high {
            prop_assert!(low.contains(a));
        }
    }

    #[test]
    fn trailer_link_survives_translation(dx in -20_000.0..20_000.0f64, dy in -20_000.0..20_000.0f64) {
        let config = big_frame();
        let base = moving(&truck_and_trailer(30_000.0, 30_000.0), 8);
        let shifted = moving(&truck_and_trailer(30_000.0 + dx, 30_000.0 + dy), 8);
        let a = associate_trailer(&base[1], &[&base[0], &base[1]], &config).unwrap();
        let b = associate_trailer(&shifted[1], &[&shifted[0], &shifted[1]], &config).unwrap();
        prop_assert_eq!((a.trailer, a.carrier), (b.trailer, b.carrier));
        prop_assert!((a.hit_distance - b.hit_distance).abs() < 1e-6);
    }
}

#[test]
fn trailer_links_to_the_vehicle_ahead() {
    let tracks = moving(&truck_and_trailer(0.0, 0.0), 8);
    let link = associate_trailer(
        &tracks[1],
        &[&tracks[0], &tracks[1]],
        &AssociationConfig::default(),
    )
    .unwrap();
    assert_eq!(
        (link.trailer, link.carrier),
        (tracks[1].track_id, tracks[0].track_id)
    );
    // Trailer center at x = 330 + 42, truck rear edge at 400 + 42.
    assert!((link.hit_distance - 70.0).abs() < 1e-9);
}

#[test]
fn stationary_trailer_is_not_linked() {
    let mut bodies = truck_and_trailer(0.0, 0.0);
    for b in &mut bodies {
        b.2 = 0.0;
    }
    let tracks = moving(&bodies, 8);
    assert_eq!(
        associate_trailer(
            &tracks[1],
            &[&tracks[0], &tracks[1]],
            &AssociationConfig::default()
        ),
        None
    );
}

#[test]
fn nearest_box_on_the_ray_wins() {
    let mut bodies = truck_and_trailer(0.0, 0.0);
    bodies.push((
        VehicleClass::Sedan,
        OrientedBox::new(800.0, 300.0, 150.0, 60.0, 0.0),
        6.0,
        0.0,
    ));
    let tracks = moving(&bodies, 8);
    let all: Vec<&VehicleTrack> = tracks.iter().collect();
    let link = associate_trailer(&tracks[1], &all, &AssociationConfig::default()).unwrap();
    assert_eq!(link.carrier, tracks[0].track_id);
}

#[test]
fn other_trailers_and_boxes_off_the_ray_are_skipped() {
    let bodies = vec![
        (
            VehicleClass::Trailer,
            OrientedBox::new(500.0, 300.0, 200.0, 80.0, 0.0),
            6.0,
            0.0,
        ),
        (
            VehicleClass::Trailer,
            OrientedBox::new(330.0, 300.0, 120.0, 70.0, 0.0),
            6.0,
            0.0,
        ),
        (
            VehicleClass::Sedan,
            OrientedBox::new(900.0, 600.0, 150.0, 60.0, 0.0),
            6.0,
            0.0,
        ),
    ];
    let tracks = moving(&bodies, 8);
    let all: Vec<&VehicleTrack> = tracks.iter().collect();
    assert_eq!(
        associate_trailer(&tracks[1], &all, &AssociationConfig::default()),
        None
    );
}

#[test]
fn carrier_past_the_frame_edge_is_ignored() {
    let tracks = moving(&truck_and_trailer(0.0, 0.0), 8);
    let narrow = AssociationConfig {
        frame_width: 420.0,
        ..Default::default()
    };
    assert_eq!(
        associate_trailer(&tracks[1], &[&tracks[0], &tracks[1]], &narrow),
        None
    );
}
