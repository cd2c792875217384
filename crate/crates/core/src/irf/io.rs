//! Little-endian binary index format.
//!
//! ```text
//! "IRF1" | version u32 | N u64 | epsilon f64 | B u32 | leaf count u64
//! max_depth u32 | root cell 4*f64
//! N * (x f64, y f64)
//! per leaf, depth-first: depth u8 | capped u8 | cell 4*f64 | entry count u32
//!                        | count * (id u32, lower_rank u32, min_distance f64)
//! CRC32 of everything above
//! ```
//! Entry count is 0 for leaves whose list was not built at save time.

use std::path::Path;
use std::sync::Arc;

use super::{IrfIndex, RankEntry, RankList, DEFAULT_LIST_BUDGET};
use crate::error::{Error, Result};
use crate::geometry::{Cell, ObjectSet, Point};
use crate::partition::{PartitionConfig, Quadtree};

const MAGIC: &[u8; 4] = b"IRF1";
pub const FORMAT_VERSION: u32 = 1;

fn put_cell(out: &mut Vec<u8>, c: &Cell) {
    for v in [c.min.x, c.min.y, c.max.x, c.max.y] {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(super) fn encode(index: &IrfIndex) -> Vec<u8> {
    let n = index.n();
    let tree = index.tree();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&index.config.epsilon.to_le_bytes());
    out.extend_from_slice(&(index.config.block_size as u32).to_le_bytes());
    out.extend_from_slice(&(tree.leaf_count() as u64).to_le_bytes());
    out.extend_from_slice(&tree.max_depth().to_le_bytes());
    put_cell(&mut out, &tree.root_cell());
    for p in index.objects.points() {
        out.extend_from_slice(&p.x.to_le_bytes());
        out.extend_from_slice(&p.y.to_le_bytes());
    }
    for (leaf, node) in tree.leaves() {
        out.push(node.depth as u8);
        out.push(u8::from(node.capped));
        put_cell(&mut out, &node.cell);
        match index.cached(leaf) {
            Some(list) => {
                out.extend_from_slice(&(list.len() as u32).to_le_bytes());
                for e in list.entries() {
                    out.extend_from_slice(&e.object_id.to_le_bytes());
                    out.extend_from_slice(&e.lower_rank.to_le_bytes());
                    out.extend_from_slice(&e.min_distance.to_le_bytes());
                }
            }
            None => out.extend_from_slice(&0u32.to_le_bytes()),
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub(super) fn save(index: &IrfIndex, path: &Path) -> Result<()> {
    std::fs::write(path, encode(index))?;
    Ok(())
}

pub(super) fn load(path: &Path) -> Result<IrfIndex> {
    decode(&std::fs::read(path)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(k).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Corrupt("unexpected end of data".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn cell(&mut self) -> Result<Cell> {
        let (a, b, c, d) = (self.f64()?, self.f64()?, self.f64()?, self.f64()?);
        Cell::new(Point::new(a, b), Point::new(c, d)).map_err(|e| Error::Corrupt(e.to_string()))
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<IrfIndex> {
    if bytes.len() < 8 {
        return Err(Error::Corrupt("file too short".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if bytes.len() < 12 {
        return Err(Error::Corrupt("file too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, at: 8 };
    let n = r.u64()? as usize;
    let epsilon = r.f64()?;
    let block_size = r.u32()? as usize;
    let leaf_count = r.u64()? as usize;
    let max_depth = r.u32()?;
    let root = r.cell()?;
    let config = PartitionConfig { epsilon, max_depth, block_size, dataspace: None };
    config.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
    if n == 0 || n > body.len() / 16 {
        return Err(Error::Corrupt("object count does not fit the file".into()));
    }
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        points.push(Point::new(r.f64()?, r.f64()?));
    }
    let objects = Arc::new(ObjectSet::new(points).map_err(|e| Error::Corrupt(e.to_string()))?);
    if leaf_count > body.len() / 38 {
        return Err(Error::Corrupt("leaf count does not fit the file".into()));
    }
    let mut shape = Vec::with_capacity(leaf_count);
    let mut lists = Vec::new();
    for leaf in 0..leaf_count {
        let depth = r.u8()? as u32;
        let capped = r.u8()? != 0;
        let cell = r.cell()?;
        let count = r.u32()? as usize;
        shape.push((depth, capped, cell));
        if count == 0 {
            continue;
        }
        if count != n {
            return Err(Error::Corrupt(format!("leaf {leaf} list holds {count} entries, expected {n}")));
        }
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let (object_id, lower_rank, min_distance) = (r.u32()?, r.u32()?, r.f64()?);
            if object_id as usize >= n {
                return Err(Error::Corrupt(format!("object id {object_id} out of range")));
            }
            entries.push(RankEntry { object_id, lower_rank, min_distance });
        }
        lists.push((leaf as u32, RankList::from_entries(&objects, cell, entries, block_size)));
    }
    if r.at != body.len() {
        return Err(Error::Corrupt("trailing bytes".into()));
    }
    let seq: Vec<(u32, bool)> = shape.iter().map(|&(d, c, _)| (d, c)).collect();
    let tree = Quadtree::from_leaf_sequence(root, max_depth, &seq)?;
    for (leaf, node) in tree.leaves() {
        if node.cell != shape[leaf as usize].2 {
            return Err(Error::Corrupt(format!("leaf {leaf} cell does not match the tree")));
        }
    }
    let index = IrfIndex::from_parts(objects, tree, config, DEFAULT_LIST_BUDGET.max(lists.len() * n));
    for (leaf, list) in lists {
        index.insert(leaf, Arc::new(list));
    }
    Ok(index)
}
