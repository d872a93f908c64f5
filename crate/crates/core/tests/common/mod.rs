//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use axlecount::geometry::{AlignedBox, OrientedBox};
use axlecount::pipeline::VehicleResult;
use axlecount::trax::{self, AxleTrack, TirePoint};

pub fn in_aabb(b: &AlignedBox, x: f64, y: f64) -> bool {
    x >= b.x && x <= b.x + b.w && y >= b.y && y <= b.y + b.h
}

/// Membership by rotating the point into the box frame.
pub fn in_obb(b: &OrientedBox, x: f64, y: f64) -> bool {
    let (s, c) = b.theta.sin_cos();
    let (dx, dy) = (x - b.cx, y - b.cy);
    let u = dx * c + dy * s;
    let v = -dx * s + dy * c;
    u.abs() <= b.w / 2.0 && v.abs() <= b.h / 2.0
}

/// IoU by counting `n * n` cell centers over the union's bounding box.
pub fn grid_iou(tire: &AlignedBox, veh: &OrientedBox, n: usize) -> f64 {
    let (s, c) = veh.theta.sin_cos();
    let ex = (veh.w / 2.0 * c).abs() + (veh.h / 2.0 * s).abs();
    let ey = (veh.w / 2.0 * s).abs() + (veh.h / 2.0 * c).abs();
    let x0 = tire.x.min(veh.cx - ex);
    let x1 = (tire.x + tire.w).max(veh.cx + ex);
    let y0 = tire.y.min(veh.cy - ey);
    let y1 = (tire.y + tire.h).max(veh.cy + ey);
    let (dx, dy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
    let (mut inter, mut union) = (0u64, 0u64);
    for i in 0..n {
        let x = x0 + (i as f64 + 0.5) * dx;
        for j in 0..n {
            let y = y0 + (j as f64 + 0.5) * dy;
            let a = in_aabb(tire, x, y);
            let b = in_obb(veh, x, y);
            inter += u64::from(a && b);
            union += u64::from(a || b);
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn multiset(points: impl Iterator<Item = (u64, f64)>) -> Vec<(u64, u64)> {
    let mut v: Vec<(u64, u64)> = points.map(|(t, z)| (t, z.to_bits())).collect();
    v.sort_unstable();
    v
}

/// Checks that `tracks` hold exactly the prepared input points, each once.
pub fn check_partition(points: &[TirePoint], tracks: &[AxleTrack], c: f64) -> Result<(), String> {
    let (prepared, _) = trax::prepare(points, c).map_err(|e| e.to_string())?;
    let want = multiset(prepared.iter().map(|p| (p.t, p.z)));
    let got = multiset(
        tracks
            .iter()
            .flat_map(|t| t.points.iter().map(|p| (p.t, p.z))),
    );
    if want != got {
        return Err(format!(
            "{} input points, {} in tracks",
            want.len(),
            got.len()
        ));
    }
    Ok(())
}

/// Partition check for a result and every trailer folded into it.
pub fn check_result_partition(r: &VehicleResult, c: f64) -> Result<usize, String> {
    let mut runs = 1;
    check_partition(&r.points, &r.tracks, c).map_err(|e| format!("track {}: {e}", r.track_id))?;
    for t in &r.trailers {
        runs += check_result_partition(t, c)?;
    }
    Ok(runs)
}

/// Rotates `points` by `angle` about `(cx, cy)`.
pub fn rotate(points: &[TirePoint], angle: f64, cx: f64, cy: f64) -> Vec<TirePoint> {
    let (s, c) = angle.sin_cos();
    points
        .iter()
        .map(|p| {
            let (dx, dy) = (p.x - cx, p.y - cy);
            TirePoint::new(cx + dx * c - dy * s, cy + dx * s + dy * c, p.t)
        })
        .collect()
}
