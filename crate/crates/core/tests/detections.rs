use axlecount::detections::{
    parse_str, round_angle, to_string, FrameDetections, StreamError, TireDetection, VehicleClass,
    VehicleDetection,
};
use axlecount::geometry::{AlignedBox, OrientedBox};
use axlecount::simulator::{self, Difficulty, NoiseProfile};
use proptest::prelude::*;

/// Angles kept clear of the half-turn boundary, where rounding could wrap.
const EDGE: f64 = std::f64::consts::FRAC_PI_2 - 1e-7;

fn vehicle() -> impl Strategy<Value = VehicleDetection> {
    (
        -2000.0..2000.0f64,
        -2000.0..2000.0f64,
        0.1..900.0f64,
        0.1..900.0f64,
        -EDGE..EDGE,
        0..VehicleClass::ALL.len(),
        0.0..=1.0f64,
    )
        .prop_map(|(cx, cy, w, h, theta, c, conf)| VehicleDetection {
            bbox: OrientedBox::new(cx, cy, w, h, round_angle(theta)),
            class: VehicleClass::ALL[c],
            confidence: conf,
        })
}

fn tire() -> impl Strategy<Value = TireDetection> {
    (
        -2000.0..2000.0f64,
        -2000.0..2000.0f64,
        0.1..200.0f64,
        0.1..200.0f64,
        0.0..=1.0f64,
    )
        .prop_map(|(x, y, w, h, conf)| TireDetection {
            bbox: AlignedBox::new(x, y, w, h),
            confidence: conf,
        })
}

fn stream() -> impl Strategy<Value = Vec<FrameDetections>> {
    prop::collection::vec(
        (
            1u64..5,
            0.0..0.5f64,
            prop::collection::vec(vehicle(), 0..4),
            prop::collection::vec(tire(), 0..6),
        ),
        0..12,
    )
    .prop_map(|frames| {
        let (mut index, mut ts) = (0u64, 0.0f64);
        frames
            .into_iter()
            .map(|(step, dt, vehicles, tires)| {
                index += step;
                ts += dt;
                FrameDetections {
                    frame_index: index,
                    timestamp: ts,
                    vehicles,
                    tires,
                }
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn write_then_parse_is_identity(frames in stream()) {
        let text = to_string(&frames);
        prop_assert_eq!(text.lines().count(), frames.len());
        prop_assert_eq!(parse_str(&text).unwrap(), frames);
    }

    #[test]
    fn rounding_is_idempotent(theta in -EDGE..EDGE) {
        let r = round_angle(theta);
        prop_assert_eq!(round_angle(r), r);
        prop_assert!((r - theta).abs() <= 1e-8);
    }
}

#[test]
fn empty_input_parses_to_nothing() {
    assert!(parse_str("").unwrap().is_empty());
    assert_eq!(to_string(&[]), "");
}

#[test]
fn one_line_with_one_vehicle_and_two_tires() {
    let line = r#"{"frame":3,"ts":0.1,"vehicles":[{"cx":10,"cy":20,"w":30,"h":10,"theta":0.1,"class":"Pickup_Truck","conf":0.9}],"tires":[{"x":1,"y":2,"w":3,"h":3,"conf":0.5},{"x":5,"y":2,"w":3,"h":3,"conf":0.7}]}"#;
    let frames = parse_str(line).unwrap();
    assert_eq!(frames.len(), 1);
    assert_eq!((frames[0].vehicles.len(), frames[0].tires.len()), (1, 2));
    assert_eq!(frames[0].vehicles[0].class, VehicleClass::PickupTruck);
}

#[test]
fn out_of_range_confidence_names_the_field() {
    let line = r#"{"frame":0,"ts":0,"vehicles":[],"tires":[{"x":1,"y":2,"w":3,"h":3,"conf":1.5}]}"#;
    let err = parse_str(line).unwrap_err();
    assert_eq!(err.line(), Some(1));
    let msg = err.to_string();
    assert!(msg.contains("confidence"), "{msg}");
    assert!(msg.contains("tires[0].conf"), "{msg}");
}

#[test]
fn decreasing_frame_index_is_rejected() {
    let text = "{\"frame\":5,\"ts\":0,\"vehicles\":[],\"tires\":[]}\n{\"frame\":4,\"ts\":1,\"vehicles\":[],\"tires\":[]}\n";
    assert!(matches!(
        parse_str(text),
        Err(StreamError::FrameOrder { line: 2, .. })
    ));
}

#[test]
fn every_invalid_field_is_diagnosed() {
    let good = r#"{"cx":1,"cy":1,"w":2,"h":1,"theta":0,"class":"Van","conf":0.5}"#;
    let cases = [
        (good.replace(r#""w":2"#, r#""w":-2"#), "vehicles[0].w"),
        (
            good.replace(r#""class":"Van""#, r#""class":"Boat""#),
            "vehicles[0].class",
        ),
        (
            good.replace(r#""theta":0"#, r#""theta":2"#),
            "vehicles[0].theta",
        ),
        (good.replace(r#","conf":0.5"#, ""), "vehicles[0].conf"),
        (good.replace(r#""cx":1"#, r#""cx":"1""#), "vehicles[0].cx"),
        (good.replace('}', r#","extra":1}"#), "vehicles[0].extra"),
    ];
    for (vehicle, field) in cases {
        let line = format!(r#"{{"frame":0,"ts":0,"vehicles":[{vehicle}],"tires":[]}}"#);
        let err = parse_str(&line).unwrap_err().to_string();
        assert!(err.contains(field), "{err} should mention {field}");
    }
    for (line, field) in [
        (r#"{"ts":0,"vehicles":[],"tires":[]}"#, "frame"),
        (r#"{"frame":-1,"ts":0,"vehicles":[],"tires":[]}"#, "frame"),
        (r#"{"frame":0,"ts":0,"vehicles":{},"tires":[]}"#, "vehicles"),
    ] {
        let err = parse_str(line).unwrap_err().to_string();
        assert!(err.contains(field), "{err}");
    }
}

#[test]
fn error_reports_the_offending_line() {
    let mut text = String::new();
    for i in 0..20 {
        if i == 16 {
            text.push_str("{not json\n");
        } else {
            text.push_str(&format!(
                "{{\"frame\":{i},\"ts\":{i},\"vehicles\":[],\"tires\":[]}}\n"
            ));
        }
    }
    assert_eq!(parse_str(&text).unwrap_err().line(), Some(17));
}

#[test]
fn simulator_streams_are_byte_stable() {
    let s = simulator::build_suite(Difficulty::Hard, 1, 3).remove(0);
    let noise = NoiseProfile {
        pos_sigma: 2.0,
        dropout_prob: 0.1,
        false_positive_rate: 0.3,
        occluders: 2,
    };
    let s = simulator::apply_noise(&s, &noise);
    let (frames, _) = simulator::generate(&s).unwrap();
    let mut frames = frames;
    while frames.len() < 1000 {
        let more = simulator::generate(&s).unwrap().0;
        let offset = frames.last().unwrap().frame_index + 1;
        frames.extend(more.into_iter().map(|mut f| {
            f.frame_index += offset;
            f.timestamp += offset as f64 / 30.0;
            f
        }));
    }
    frames.truncate(1000);
    let a = to_string(&frames);
    assert_eq!(a, to_string(&frames));
    assert_eq!(a, to_string(&parse_str(&a).unwrap()));
}
