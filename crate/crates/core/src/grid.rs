//! Uniform bucket grid over the object locations.
//!
//! Serves three consumers: candidate gathering during partitioning, range
//! queries in the exact engine, and the coverage bounds of the approximate
//! engine. Bucket membership uses one monotone float mapping, so a coordinate
//! interval always maps to a contiguous bucket interval that contains every
//! object inside it.

use crate::geometry::{dist, min_dist_rect, Cell, ObjectSet, Point};

#[derive(Debug, Clone)]
pub struct ObjectGrid {
    bounds: Cell,
    nx: usize,
    ny: usize,
    inv_w: f64,
    inv_h: f64,
    offsets: Vec<u32>,
    ids: Vec<u32>,
    mbrs: Vec<Cell>,
    bucket_of: Vec<u32>,
}

impl ObjectGrid {
    /// Grid with roughly `per_bucket` objects per bucket on uniform data.
    pub fn build(objects: &ObjectSet, per_bucket: usize) -> Self {
        let n = objects.len();
        let bounds = objects.bounding_box();
        let target = (n as f64 / per_bucket.max(1) as f64).max(1.0);
        let (w, h) = (bounds.width(), bounds.height());
        let (nx, ny) = if w > 0.0 && h > 0.0 {
            let nx = (target * w / h).sqrt().ceil().max(1.0);
            let ny = (target * h / w).sqrt().ceil().max(1.0);
            (nx.min(4096.0) as usize, ny.min(4096.0) as usize)
        } else if w > 0.0 {
            ((target.ceil() as usize).min(1 << 20), 1)
        } else if h > 0.0 {
            (1, (target.ceil() as usize).min(1 << 20))
        } else {
            (1, 1)
        };
        let inv_w = if w > 0.0 { nx as f64 / w } else { 0.0 };
        let inv_h = if h > 0.0 { ny as f64 / h } else { 0.0 };

        let mut grid = ObjectGrid {
            bounds,
            nx,
            ny,
            inv_w,
            inv_h,
            offsets: Vec::new(),
            ids: Vec::new(),
            mbrs: Vec::new(),
            bucket_of: Vec::with_capacity(n),
        };
        let buckets = nx * ny;
        let mut counts = vec![0u32; buckets + 1];
        for (_, p) in objects.iter() {
            let b = grid.bucket_at(p);
            grid.bucket_of.push(b as u32);
            counts[b + 1] += 1;
        }
        for i in 0..buckets {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut ids = vec![0u32; n];
        for (id, &b) in grid.bucket_of.iter().enumerate() {
            ids[fill[b as usize] as usize] = id as u32;
            fill[b as usize] += 1;
        }
        let mut mbrs = Vec::with_capacity(buckets);
        for b in 0..buckets {
            let members = &ids[counts[b] as usize..counts[b + 1] as usize];
            let mbr = Cell::bounding(members.iter().map(|&i| objects.get(i)))
                .unwrap_or_else(|| grid.bucket_rect(b));
            mbrs.push(mbr);
        }
        grid.offsets = counts;
        grid.ids = ids;
        grid.mbrs = mbrs;
        grid
    }

    #[inline]
    fn ix(&self, x: f64) -> usize {
        let t = ((x - self.bounds.min.x) * self.inv_w).floor();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.nx - 1)
        }
    }

    #[inline]
    fn iy(&self, y: f64) -> usize {
        let t = ((y - self.bounds.min.y) * self.inv_h).floor();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.ny - 1)
        }
    }

    #[inline]
    fn bucket_at(&self, p: Point) -> usize {
        self.iy(p.y) * self.nx + self.ix(p.x)
    }

    /// Nominal rectangle of bucket `b` (used only for empty buckets).
    fn bucket_rect(&self, b: usize) -> Cell {
        let (bx, by) = ((b % self.nx) as f64, (b / self.nx) as f64);
        let w = self.bounds.width() / self.nx as f64;
        let h = self.bounds.height() / self.ny as f64;
        let x0 = self.bounds.min.x + bx * w;
        let y0 = self.bounds.min.y + by * h;
        Cell::from_bounds(x0, y0, x0 + w, y0 + h)
    }

    pub fn bucket_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    #[inline]
    pub fn members(&self, b: usize) -> &[u32] {
        &self.ids[self.offsets[b] as usize..self.offsets[b + 1] as usize]
    }

    /// MBR of the bucket's members. Only meaningful for non-empty buckets.
    #[inline]
    pub fn mbr(&self, b: usize) -> &Cell {
        &self.mbrs[b]
    }

    #[inline]
    pub fn bucket_of(&self, id: u32) -> usize {
        self.bucket_of[id as usize] as usize
    }

    /// Calls `f` for every non-empty bucket whose MBR lies within `reach` of
    /// `rect`.
    pub fn for_each_bucket_near(&self, rect: &Cell, reach: f64, mut f: impl FnMut(usize)) {
        // One spare bucket per side absorbs rounding in the subtraction.
        let x0 = self.ix(rect.min.x - reach).saturating_sub(1);
        let x1 = (self.ix(rect.max.x + reach) + 1).min(self.nx - 1);
        let y0 = self.iy(rect.min.y - reach).saturating_sub(1);
        let y1 = (self.iy(rect.max.y + reach) + 1).min(self.ny - 1);
        for by in y0..=y1 {
            let row = by * self.nx;
            for bx in x0..=x1 {
                let b = row + bx;
                if self.offsets[b] != self.offsets[b + 1] && min_dist_rect(&self.mbrs[b], rect) <= reach {
                    f(b);
                }
            }
        }
    }

    /// Ids of all objects within distance `r` of `center` (unordered).
    pub fn range(&self, objects: &ObjectSet, center: Point, r: f64, out: &mut Vec<u32>) {
        out.clear();
        let c = Cell::point(center);
        self.for_each_bucket_near(&c, r, |b| {
            for &id in self.members(b) {
                if dist(objects.get(id), center) <= r {
                    out.push(id);
                }
            }
        });
    }
}
