//! Rectangle algebra for vehicle and tire boxes.
//!
//! Image coordinates throughout: origin top-left, `y` grows downward. Polygon
//! orientation is reported with the usual shoelace sign, so "counter-clockwise"
//! means a positive signed area under `x` right / `y` down.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Collinearity / degeneracy floor, in pixels (or pixels² for areas).
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z component of the 2-D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Axis-aligned box given by its top-left corner and size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignedBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl AlignedBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(center: Point2, w: f64, h: f64) -> Self {
        Self::new(center.x - w / 2.0, center.y - h / 2.0, w, h)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn corners(&self) -> [Point2; 4] {
        let (x0, y0, x1, y1) = (self.x, self.y, self.x + self.w, self.y + self.h);
        [
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ]
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x && p.x <= self.x + self.w && p.y >= self.y && p.y <= self.y + self.h
    }
}

/// Rotated rectangle. `w` runs along `(cos theta, sin theta)`, `h` along the
/// perpendicular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

impl OrientedBox {
    pub const fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Self {
        Self {
            cx,
            cy,
            w,
            h,
            theta,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.cx, self.cy, self.w, self.h, self.theta]
            .iter()
            .all(|v| v.is_finite())
            && self.w > 0.0
            && self.h > 0.0
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Same point set with `w >= h` and `theta` in `(-pi/2, pi/2]`.
    pub fn canonical(&self) -> OrientedBox {
        let (mut w, mut h, mut theta) = (self.w, self.h, self.theta);
        if w < h {
            std::mem::swap(&mut w, &mut h);
            theta += FRAC_PI_2;
        }
        OrientedBox::new(self.cx, self.cy, w, h, wrap_half_turn(theta))
    }

    /// Unit vectors along the `w` and `h` sides.
    pub fn axes(&self) -> (Point2, Point2) {
        let (s, c) = self.theta.sin_cos();
        (Point2::new(c, s), Point2::new(-s, c))
    }

    /// Vertices in counter-clockwise order, starting from the `(-w, -h)` corner.
    pub fn corners(&self) -> [Point2; 4] {
        let (u, v) = self.axes();
        let c = self.center();
        let a = u * (self.w / 2.0);
        let b = v * (self.h / 2.0);
        [c - a - b, c + a - b, c + a + b, c - a + b]
    }

    pub fn contains(&self, p: Point2) -> bool {
        let (u, v) = self.axes();
        let d = p - self.center();
        d.dot(u).abs() <= self.w / 2.0 && d.dot(v).abs() <= self.h / 2.0
    }

    pub fn translated(&self, dx: f64, dy: f64) -> OrientedBox {
        OrientedBox::new(self.cx + dx, self.cy + dy, self.w, self.h, self.theta)
    }
}

/// Wraps an angle into `(-pi/2, pi/2]`.
pub fn wrap_half_turn(theta: f64) -> f64 {
    let mut t = theta % PI;
    if t <= -FRAC_PI_2 {
        t += PI;
    } else if t > FRAC_PI_2 {
        t -= PI;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point2,
    direction: Point2,
}

impl Ray {
    /// Normalizes `direction`; `None` for a zero or non-finite direction.
    pub fn new(origin: Point2, direction: Point2) -> Option<Ray> {
        let n = direction.norm();
        if !n.is_finite() || n <= EPS || !origin.is_finite() {
            return None;
        }
        Some(Ray {
            origin,
            direction: direction * (1.0 / n),
        })
    }

    pub fn direction(&self) -> Point2 {
        self.direction
    }

    pub fn at(&self, t: f64) -> Point2 {
        self.origin + self.direction * t
    }
}

/// Shoelace signed area; positive for counter-clockwise vertex order.
pub fn signed_area(poly: &[Point2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (i, p) in poly.iter().enumerate() {
        let q = poly[(i + 1) % poly.len()];
        acc += p.cross(q);
    }
    acc / 2.0
}

fn ccw(poly: &[Point2]) -> Vec<Point2> {
    let mut out = poly.to_vec();
    if signed_area(&out) < 0.0 {
        out.reverse();
    }
    out
}

/// Clips the convex `subject` against each edge of the convex `clip` polygon.
/// Both must be counter-clockwise.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut output = subject.to_vec();
    for (i, &e0) in clip.iter().enumerate() {
        if output.is_empty() {
            break;
        }
        let e1 = clip[(i + 1) % clip.len()];
        let edge = e1 - e0;
        let input = std::mem::take(&mut output);
        let side = |p: Point2| edge.cross(p - e0);
        for (j, &cur) in input.iter().enumerate() {
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            let cur_in = sc >= -EPS;
            let prev_in = sp >= -EPS;
            if cur_in != prev_in {
                let denom = sp - sc;
                if denom.abs() > EPS * EPS {
                    let t = sp / denom;
                    output.push(prev + (cur - prev) * t);
                }
            }
            if cur_in {
                output.push(cur);
            }
        }
    }
    output
}

/// Area of the intersection of two convex polygons. Either vertex order is
/// accepted; a degenerate operand yields 0.
pub fn intersection_area(a: &[Point2], b: &[Point2]) -> f64 {
    let a = ccw(a);
    let b = ccw(b);
    if signed_area(&a) <= EPS || signed_area(&b) <= EPS {
        return 0.0;
    }
    let clipped = clip_convex(&a, &b);
    signed_area(&clipped).max(0.0)
}

fn ratio(inter: f64, area_a: f64, area_b: f64) -> f64 {
    let union = area_a + area_b - inter;
    if union <= EPS {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection over union of a tire box and a vehicle box.
pub fn iou(tire: &AlignedBox, vehicle: &OrientedBox) -> f64 {
    let inter = intersection_area(&tire.corners(), &vehicle.corners());
    ratio(inter, tire.area(), vehicle.area())
}

/// Intersection over union of two oriented boxes.
pub fn obb_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let inter = intersection_area(&a.corners(), &b.corners());
    ratio(inter, a.area(), b.area())
}

/// Smallest `t >= 0` with `ray.at(t)` inside `bx`; zero when the origin is
/// already inside.
pub fn ray_box_distance(ray: &Ray, bx: &OrientedBox) -> Option<f64> {
    let (u, v) = bx.axes();
    let rel = ray.origin - bx.center();
    let dir = ray.direction();
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for (axis, half) in [(u, bx.w / 2.0), (v, bx.h / 2.0)] {
        let o = rel.dot(axis);
        let d = dir.dot(axis);
        if d.abs() <= EPS {
            if o.abs() > half {
                return None;
            }
            continue;
        }
        let t0 = (-half - o) / d;
        let t1 = (half - o) / d;
        let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
        t_enter = t_enter.max(lo);
        t_exit = t_exit.min(hi);
    }
    if t_exit < t_enter.max(0.0) {
        return None;
    }
    Some(t_enter.max(0.0))
}

/// Parameter at which the ray leaves the rectangle `[0, width] x [0, height]`,
/// or `None` if the origin is outside it.
pub fn ray_exit_distance(ray: &Ray, width: f64, height: f64) -> Option<f64> {
    let o = ray.origin;
    if o.x < 0.0 || o.y < 0.0 || o.x > width || o.y > height {
        return None;
    }
    let d = ray.direction();
    let mut t = f64::INFINITY;
    for (pos, dir, limit) in [(o.x, d.x, width), (o.y, d.y, height)] {
        if dir > EPS {
            t = t.min((limit - pos) / dir);
        } else if dir < -EPS {
            t = t.min(-pos / dir);
        }
    }
    Some(t)
}
