//! Points, axis-aligned cells and the distance primitives.
//!
//! All comparisons downstream rely on exact float ordering, so every
//! function here is written so that the same inputs always produce the same
//! bits. Rectangle distances reduce to the point versions when a rectangle
//! collapses to a point.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Closed axis-aligned rectangle. Point cells are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub min: Point,
    pub max: Point,
}

impl Cell {
    pub fn new(min: Point, max: Point) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() {
            return invalid("cell corners must be finite");
        }
        if min.x > max.x || min.y > max.y {
            return invalid("cell min corner exceeds max corner");
        }
        Ok(Cell { min, max })
    }

    /// Build without validation. Callers guarantee `min <= max`.
    pub const fn from_bounds(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Cell { min: Point::new(x0, y0), max: Point::new(x1, y1) }
    }

    pub fn point(p: Point) -> Self {
        Cell { min: p, max: p }
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

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point {
        Point::new((self.min.x + self.max.x) * 0.5, (self.min.y + self.max.y) * 0.5)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_cell(&self, other: &Cell) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    /// Grow to include `p`.
    pub fn extend(&mut self, p: Point) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    /// Smallest cell holding every point, or `None` for an empty iterator.
    pub fn bounding<I: IntoIterator<Item = Point>>(points: I) -> Option<Cell> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut c = Cell::point(first);
        for p in it {
            c.extend(p);
        }
        Some(c)
    }
}

#[inline]
fn norm(dx: f64, dy: f64) -> f64 {
    (dx * dx + dy * dy).sqrt()
}

/// Euclidean distance.
#[inline]
pub fn dist(p: Point, q: Point) -> f64 {
    norm(p.x - q.x, p.y - q.y)
}

#[inline]
fn gap(lo_a: f64, hi_a: f64, lo_b: f64, hi_b: f64) -> f64 {
    (lo_b - hi_a).max(lo_a - hi_b).max(0.0)
}

#[inline]
fn span(lo_a: f64, hi_a: f64, lo_b: f64, hi_b: f64) -> f64 {
    (hi_b - lo_a).abs().max((hi_a - lo_b).abs())
}

/// Distance from `p` to the nearest point of `c` (0 when inside).
#[inline]
pub fn min_dist(p: Point, c: &Cell) -> f64 {
    norm(gap(p.x, p.x, c.min.x, c.max.x), gap(p.y, p.y, c.min.y, c.max.y))
}

/// Distance from `p` to the farthest corner of `c`.
#[inline]
pub fn max_dist(p: Point, c: &Cell) -> f64 {
    norm(span(p.x, p.x, c.min.x, c.max.x), span(p.y, p.y, c.min.y, c.max.y))
}

/// Smallest distance between any point of `a` and any point of `b`.
#[inline]
pub fn min_dist_rect(a: &Cell, b: &Cell) -> f64 {
    norm(gap(a.min.x, a.max.x, b.min.x, b.max.x), gap(a.min.y, a.max.y, b.min.y, b.max.y))
}

/// Largest distance between any point of `a` and any point of `b`.
#[inline]
pub fn max_dist_rect(a: &Cell, b: &Cell) -> f64 {
    norm(span(a.min.x, a.max.x, b.min.x, b.max.x), span(a.min.y, a.max.y, b.min.y, b.max.y))
}

/// Immutable set of objects with dense ids `0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSet {
    points: Vec<Point>,
}

impl ObjectSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return invalid("object set must hold at least one object");
        }
        if points.len() > u32::MAX as usize - 2 {
            return invalid("too many objects");
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return invalid(format!("object {i} has a non-finite coordinate"));
        }
        Ok(ObjectSet { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn get(&self, id: u32) -> Point {
        self.points[id as usize]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, Point)> + '_ {
        self.points.iter().enumerate().map(|(i, p)| (i as u32, *p))
    }

    pub fn bounding_box(&self) -> Cell {
        Cell::bounding(self.points.iter().copied()).expect("non-empty")
    }
}
