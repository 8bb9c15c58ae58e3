use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A position in the plane, in meters.
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

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Self::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn distance_sq(self, other: Point2) -> f64 {
        (self - other).norm_sq()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// `u * end + (1 - u) * self`.
    pub fn lerp(self, end: Point2, u: f64) -> Point2 {
        Point2::new(u * end.x + (1.0 - u) * self.x, u * end.y + (1.0 - u) * self.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
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
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Axis-aligned rectangular arena.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub min: Point2,
    pub max: Point2,
}

impl Arena {
    pub fn new(min: Point2, max: Point2) -> Result<Self> {
        let arena = Self { min, max };
        arena.validate()?;
        Ok(arena)
    }

    pub fn square(side: f64) -> Result<Self> {
        Self::new(Point2::new(0.0, 0.0), Point2::new(side, side))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::config("arena", "bounds must be finite"));
        }
        if !(self.max.x > self.min.x && self.max.y > self.min.y) {
            return Err(Error::config("arena", "max must exceed min on both axes"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point2 {
        self.min.lerp(self.max, 0.5)
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn clamp(&self, p: Point2) -> Point2 {
        Point2::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    /// Cell-centered `n x n` grid, row-major in x then y.
    pub fn grid(&self, n: usize) -> Vec<Point2> {
        let (dx, dy) = (self.width() / n as f64, self.height() / n as f64);
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                pts.push(Point2::new(
                    self.min.x + (i as f64 + 0.5) * dx,
                    self.min.y + (j as f64 + 0.5) * dy,
                ));
            }
        }
        pts
    }

    /// Grid including the boundary: `n` equally spaced nodes per axis from min to max.
    pub fn lattice(&self, n: usize) -> Vec<Point2> {
        let step = |lo: f64, hi: f64, i: usize| {
            if n == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        };
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                pts.push(Point2::new(
                    step(self.min.x, self.max.x, i),
                    step(self.min.y, self.max.y, j),
                ));
            }
        }
        pts
    }
}

/// Shortest distance from `p` to the segment `a`-`b`.
pub fn segment_distance(a: Point2, b: Point2, p: Point2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return a.distance(p);
    }
    let ap = p - a;
    let u = ((ap.x * ab.x + ap.y * ab.y) / len_sq).clamp(0.0, 1.0);
    a.lerp(b, u).distance(p)
}

/// Smallest `u` in `[0, 1]` such that `a + u (b - a)` lies within `radius` of
/// `center`, if any.
pub fn first_entry(a: Point2, b: Point2, center: Point2, radius: f64) -> Option<f64> {
    let d = b - a;
    let f = a - center;
    let c = f.norm_sq() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let qa = d.norm_sq();
    if qa == 0.0 {
        return None;
    }
    let qb = 2.0 * (f.x * d.x + f.y * d.y);
    let disc = qb * qb - 4.0 * qa * c;
    if disc < 0.0 {
        return None;
    }
    // c > 0 so both roots share a sign; the entry root is the smaller one.
    let u = (-qb - disc.sqrt()) / (2.0 * qa);
    (0.0..=1.0).contains(&u).then_some(u)
}
