//! Per-frame detections and the newline-delimited stream format.
//!
//! One frame per line:
//!
//! ```text
//! {"frame":0,"ts":0.0,"vehicles":[{"cx":..,"cy":..,"w":..,"h":..,"theta":..,"class":"Sedan","conf":0.9}],"tires":[{"x":..,"y":..,"w":..,"h":..,"conf":0.8}]}
//! ```
//!
//! `theta` is written rounded to 9 significant digits; every other number is
//! written in shortest round-trip form.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::geometry::{AlignedBox, OrientedBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VehicleClass {
    #[serde(rename = "SUV")]
    Suv,
    Sedan,
    #[serde(rename = "Pickup_Truck")]
    PickupTruck,
    Truck,
    #[serde(rename = "Semi_truck")]
    SemiTruck,
    Van,
    Trailer,
    Hatchback,
    Bus,
}

impl VehicleClass {
    pub const ALL: [VehicleClass; 9] = [
        VehicleClass::Suv,
        VehicleClass::Sedan,
        VehicleClass::PickupTruck,
        VehicleClass::Truck,
        VehicleClass::SemiTruck,
        VehicleClass::Van,
        VehicleClass::Trailer,
        VehicleClass::Hatchback,
        VehicleClass::Bus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Suv => "SUV",
            VehicleClass::Sedan => "Sedan",
            VehicleClass::PickupTruck => "Pickup_Truck",
            VehicleClass::Truck => "Truck",
            VehicleClass::SemiTruck => "Semi_truck",
            VehicleClass::Van => "Van",
            VehicleClass::Trailer => "Trailer",
            VehicleClass::Hatchback => "Hatchback",
            VehicleClass::Bus => "Bus",
        }
    }

    pub fn is_trailer(self) -> bool {
        self == VehicleClass::Trailer
    }
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VehicleClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VehicleClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown vehicle class {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleDetection {
    pub bbox: OrientedBox,
    pub class: VehicleClass,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireDetection {
    pub bbox: AlignedBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameDetections {
    pub frame_index: u64,
    pub timestamp: f64,
    pub vehicles: Vec<VehicleDetection>,
    pub tires: Vec<TireDetection>,
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    Field {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: frame {frame} does not follow frame {previous}")]
    FrameOrder {
        line: usize,
        frame: u64,
        previous: u64,
    },
    #[error("line {line}: timestamp {ts} precedes {previous}")]
    TimestampOrder { line: usize, ts: f64, previous: f64 },
    #[error("read error: {0}")]
    Io(#[from] io::Error),
}

impl StreamError {
    /// 1-based line the error refers to, when there is one.
    pub fn line(&self) -> Option<usize> {
        match self {
            StreamError::Malformed { line, .. }
            | StreamError::Field { line, .. }
            | StreamError::FrameOrder { line, .. }
            | StreamError::TimestampOrder { line, .. } => Some(*line),
            StreamError::Io(_) => None,
        }
    }
}

/// Rounds to 9 significant decimal digits, the precision angles are stored at.
pub fn round_angle(theta: f64) -> f64 {
    format!("{theta:.8e}").parse().unwrap_or(theta)
}

struct Fields<'a> {
    obj: &'a Map<String, Value>,
    path: String,
    line: usize,
}

impl<'a> Fields<'a> {
    fn new(value: &'a Value, path: &str, line: usize) -> Result<Self, StreamError> {
        match value.as_object() {
            Some(obj) => Ok(Fields {
                obj,
                path: path.to_string(),
                line,
            }),
            None => Err(StreamError::Field {
                line,
                field: if path.is_empty() {
                    "<record>".into()
                } else {
                    path.into()
                },
                message: "expected an object".into(),
            }),
        }
    }

    fn name(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn err(&self, key: &str, message: impl Into<String>) -> StreamError {
        StreamError::Field {
            line: self.line,
            field: self.name(key),
            message: message.into(),
        }
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<(), StreamError> {
        match self.obj.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(self.err(k, "unknown field")),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Result<&'a Value, StreamError> {
        self.obj.get(key).ok_or_else(|| self.err(key, "missing"))
    }

    fn number(&self, key: &str) -> Result<f64, StreamError> {
        let v = self
            .get(key)?
            .as_f64()
            .ok_or_else(|| self.err(key, "expected a number"))?;
        if !v.is_finite() {
            return Err(self.err(key, "not finite"));
        }
        Ok(v)
    }

    fn positive(&self, key: &str) -> Result<f64, StreamError> {
        let v = self.number(key)?;
        if v <= 0.0 {
            return Err(self.err(key, format!("must be > 0, got {v}")));
        }
        Ok(v)
    }

    fn confidence(&self, key: &str) -> Result<f64, StreamError> {
        let v = self.number(key)?;
        if !(0.0..=1.0).contains(&v) {
            return Err(self.err(key, format!("confidence {v} outside [0, 1]")));
        }
        Ok(v)
    }

    fn array(&self, key: &str) -> Result<&'a Vec<Value>, StreamError> {
        self.get(key)?
            .as_array()
            .ok_or_else(|| self.err(key, "expected a list"))
    }
}

fn parse_vehicle(value: &Value, path: &str, line: usize) -> Result<VehicleDetection, StreamError> {
    let f = Fields::new(value, path, line)?;
    f.reject_unknown(&["cx", "cy", "w", "h", "theta", "class", "conf"])?;
    let theta = f.number("theta")?;
    // Slack covers the 9-digit rounding applied on write.
    if theta.abs() > std::f64::consts::FRAC_PI_2 + 1e-8 {
        return Err(f.err("theta", format!("{theta} outside [-pi/2, pi/2]")));
    }
    let class = f
        .get("class")?
        .as_str()
        .ok_or_else(|| f.err("class", "expected a string"))?
        .parse::<VehicleClass>()
        .map_err(|m| f.err("class", m))?;
    Ok(VehicleDetection {
        bbox: OrientedBox::new(
            f.number("cx")?,
            f.number("cy")?,
            f.positive("w")?,
            f.positive("h")?,
            theta,
        ),
        class,
        confidence: f.confidence("conf")?,
    })
}

fn parse_tire(value: &Value, path: &str, line: usize) -> Result<TireDetection, StreamError> {
    let f = Fields::new(value, path, line)?;
    f.reject_unknown(&["x", "y", "w", "h", "conf"])?;
    Ok(TireDetection {
        bbox: AlignedBox::new(
            f.number("x")?,
            f.number("y")?,
            f.positive("w")?,
            f.positive("h")?,
        ),
        confidence: f.confidence("conf")?,
    })
}

/// Parses one record. `line` is only used for diagnostics.
pub fn parse_record(text: &str, line: usize) -> Result<FrameDetections, StreamError> {
    let value: Value = serde_json::from_str(text).map_err(|e| StreamError::Malformed {
        line,
        message: e.to_string(),
    })?;
    let f = Fields::new(&value, "", line)?;
    f.reject_unknown(&["frame", "ts", "vehicles", "tires"])?;
    let frame_index = f
        .get("frame")?
        .as_u64()
        .ok_or_else(|| f.err("frame", "expected a non-negative integer"))?;
    let timestamp = f.number("ts")?;
    let vehicles = f
        .array("vehicles")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_vehicle(v, &format!("vehicles[{i}]"), line))
        .collect::<Result<Vec<_>, _>>()?;
    let tires = f
        .array("tires")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_tire(v, &format!("tires[{i}]"), line))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FrameDetections {
        frame_index,
        timestamp,
        vehicles,
        tires,
    })
}

/// Streaming reader that validates records and their ordering line by line.
pub struct StreamReader<R> {
    lines: io::Lines<R>,
    line: usize,
    last: Option<(u64, f64)>,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(reader: R) -> Self {
        StreamReader {
            lines: reader.lines(),
            line: 0,
            last: None,
        }
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<FrameDetections, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            let line = self.line;
            let frame = match parse_record(&text, line) {
                Ok(f) => f,
                Err(e) => return Some(Err(e)),
            };
            if let Some((prev_frame, prev_ts)) = self.last {
                if frame.frame_index <= prev_frame {
                    return Some(Err(StreamError::FrameOrder {
                        line,
                        frame: frame.frame_index,
                        previous: prev_frame,
                    }));
                }
                if frame.timestamp < prev_ts {
                    return Some(Err(StreamError::TimestampOrder {
                        line,
                        ts: frame.timestamp,
                        previous: prev_ts,
                    }));
                }
            }
            self.last = Some((frame.frame_index, frame.timestamp));
            return Some(Ok(frame));
        }
    }
}

pub fn parse_stream<R: BufRead>(reader: R) -> Result<Vec<FrameDetections>, StreamError> {
    StreamReader::new(reader).collect()
}

pub fn parse_str(text: &str) -> Result<Vec<FrameDetections>, StreamError> {
    parse_stream(text.as_bytes())
}

#[derive(Serialize)]
struct VehicleOut {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    theta: f64,
    class: VehicleClass,
    conf: f64,
}

#[derive(Serialize)]
struct TireOut {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    conf: f64,
}

#[derive(Serialize)]
struct FrameOut {
    frame: u64,
    ts: f64,
    vehicles: Vec<VehicleOut>,
    tires: Vec<TireOut>,
}

impl From<&FrameDetections> for FrameOut {
    fn from(f: &FrameDetections) -> Self {
        FrameOut {
            frame: f.frame_index,
            ts: f.timestamp,
            vehicles: f
                .vehicles
                .iter()
                .map(|v| VehicleOut {
                    cx: v.bbox.cx,
                    cy: v.bbox.cy,
                    w: v.bbox.w,
                    h: v.bbox.h,
                    theta: round_angle(v.bbox.theta),
                    class: v.class,
                    conf: v.confidence,
                })
                .collect(),
            tires: f
                .tires
                .iter()
                .map(|t| TireOut {
                    x: t.bbox.x,
                    y: t.bbox.y,
                    w: t.bbox.w,
                    h: t.bbox.h,
                    conf: t.confidence,
                })
                .collect(),
        }
    }
}

pub fn write_record<W: Write>(mut out: W, frame: &FrameDetections) -> io::Result<()> {
    serde_json::to_writer(&mut out, &FrameOut::from(frame))?;
    out.write_all(b"\n")
}

pub fn write_stream<W: Write>(mut out: W, frames: &[FrameDetections]) -> io::Result<()> {
    for f in frames {
        write_record(&mut out, f)?;
    }
    Ok(())
}

pub fn to_string(frames: &[FrameDetections]) -> String {
    let mut buf = Vec::new();
    write_stream(&mut buf, frames).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
