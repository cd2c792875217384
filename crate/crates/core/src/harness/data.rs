//! Object and query files, plus synthetic object sets.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ObjectSet, Point};
use crate::window::RangeQuery;

/// Objects read from a file. Object `i` of the set has file id `ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub objects: ObjectSet,
    pub ids: Vec<u64>,
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

fn open_csv(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_err(path, 1, format!("{other:?}")),
    })?;
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(parse_err(path, 1, format!("expected header `{}`, found `{}`", expected.join(","), got.join(","))));
    }
    Ok(rdr)
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| parse_err(path, line, format!("missing field `{name}`")))?;
    raw.parse().map_err(|_| parse_err(path, line, format!("bad {name} `{raw}`")))
}

/// Read a CSV with header `id,x,y`.
pub fn load_objects(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = open_csv(path, &["id", "x", "y"])?;
    let mut ids = Vec::new();
    let mut points = Vec::new();
    let mut seen = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        if rec.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 fields, found {}", rec.len())));
        }
        let id: u64 = field(path, line, &rec, 0, "id")?;
        let x: f64 = field(path, line, &rec, 1, "x")?;
        let y: f64 = field(path, line, &rec, 2, "y")?;
        if !x.is_finite() || !y.is_finite() {
            return Err(parse_err(path, line, "non-finite coordinate"));
        }
        if seen.insert(id, line).is_some() {
            return Err(Error::DuplicateId(id));
        }
        ids.push(id);
        points.push(Point::new(x, y));
    }
    if points.is_empty() {
        return Err(parse_err(path, 1, "no objects"));
    }
    Ok(Dataset { objects: ObjectSet::new(points)?, ids })
}

/// Write objects as `id,x,y` with ids `0..N`.
pub fn write_objects(path: impl AsRef<Path>, objects: &ObjectSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "id,x,y")?;
    for (id, p) in objects.iter() {
        writeln!(w, "{id},{},{}", p.x, p.y)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a query CSV with header `x,y,radius,seq`.
pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<RangeQuery>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path, &["x", "y", "radius", "seq"])?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        let x: f64 = field(path, line, &rec, 0, "x")?;
        let y: f64 = field(path, line, &rec, 1, "y")?;
        let r: f64 = field(path, line, &rec, 2, "radius")?;
        let seq: u64 = field(path, line, &rec, 3, "seq")?;
        let q = RangeQuery::new(Point::new(x, y), r, seq).map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(q);
    }
    Ok(out)
}

/// Spatial layout of a synthetic object set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution2d {
    #[default]
    Uniform,
    /// Gaussian clusters around random centres, like properties in towns.
    Clustered,
}

impl std::str::FromStr for Distribution2d {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Distribution2d::Uniform),
            "clustered" => Ok(Distribution2d::Clustered),
            _ => Err(Error::Invalid(format!("unknown distribution `{s}`"))),
        }
    }
}

/// Side of the square synthetic objects are drawn in.
pub const SYNTHETIC_EXTENT: f64 = 10_000.0;

pub fn synthetic_objects(n: usize, dist: Distribution2d, seed: u64) -> Result<ObjectSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = SYNTHETIC_EXTENT;
    let points = match dist {
        Distribution2d::Uniform => (0..n).map(|_| Point::new(rng.random_range(0.0..e), rng.random_range(0.0..e))).collect(),
        Distribution2d::Clustered => {
            let k = (n / 500).clamp(1, 200);
            let centres: Vec<(Point, f64)> = (0..k)
                .map(|_| (Point::new(rng.random_range(0.0..e), rng.random_range(0.0..e)), rng.random_range(0.005..0.05) * e))
                .collect();
            (0..n)
                .map(|_| {
                    let (c, sd) = centres[rng.random_range(0..k)];
                    let normal = Normal::new(0.0, sd).expect("positive sd");
                    let x = (c.x + normal.sample(&mut rng)).clamp(0.0, e);
                    let y = (c.y + normal.sample(&mut rng)).clamp(0.0, e);
                    Point::new(x, y)
                })
                .collect()
        }
    };
    ObjectSet::new(points)
}

/// Where a workload's objects come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectSource {
    File(PathBuf),
    Synthetic { n: usize, distribution: Distribution2d, seed: u64 },
}

impl ObjectSource {
    pub fn load(&self) -> Result<ObjectSet> {
        match self {
            ObjectSource::File(p) => Ok(load_objects(p)?.objects),
            ObjectSource::Synthetic { n, distribution, seed } => synthetic_objects(*n, *distribution, *seed),
        }
    }
}
