//! Planar primitives shared by every stage of the pipeline. Units are meters.

use serde::{Deserialize, Serialize};

/// A point on the ground plane. Serialized as `[x, y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Self) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist_sq(self, other: Self) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned rectangle, inclusive of its boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub const fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// True if the closed disk lies inside the rectangle.
    pub fn contains_disk(&self, center: Point2, radius: f64) -> bool {
        center.x - radius >= self.min.x
            && center.x + radius <= self.max.x
            && center.y - radius >= self.min.y
            && center.y + radius <= self.max.y
    }

    pub fn inflate(&self, margin: f64) -> Rect {
        Rect {
            min: Point2::new(self.min.x - margin, self.min.y - margin),
            max: Point2::new(self.max.x + margin, self.max.y + margin),
        }
    }
}

/// Closed ring `r_inner <= |p - center| <= r_outer`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Annulus {
    pub center: Point2,
    pub r_inner: f64,
    pub r_outer: f64,
}

impl Annulus {
    pub fn new(center: Point2, r_inner: f64, r_outer: f64) -> Self {
        debug_assert!(0.0 <= r_inner && r_inner < r_outer);
        Self {
            center,
            r_inner,
            r_outer,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        let d2 = self.center.dist_sq(p);
        d2 >= self.r_inner * self.r_inner && d2 <= self.r_outer * self.r_outer
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * (self.r_outer * self.r_outer - self.r_inner * self.r_inner)
    }
}
