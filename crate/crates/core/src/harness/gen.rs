//! Seeded query-stream generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{dist, Cell, Point};
use crate::window::RangeQuery;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Anchor points drawn uniformly with replacement.
    #[default]
    Uniform,
    /// Anchor points drawn by Zipf rank.
    Skewed,
    /// One query site per synthetic user, at the centroid of its check-ins.
    Centroid,
}

impl std::str::FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Generator::Uniform),
            "skewed" => Ok(Generator::Skewed),
            "centroid" => Ok(Generator::Centroid),
            _ => Err(Error::Invalid(format!("unknown generator `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub generator: Generator,
    /// Query radius as a percentage of the dataspace diagonal.
    pub radius_pct: f64,
    pub seed: u64,
    /// Anchor points, or users for the centroid generator.
    pub sites: usize,
    pub zipf_s: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig { generator: Generator::Uniform, radius_pct: 4.0, seed: 1, sites: 987, zipf_s: 1.0 }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_pct > 0.0 && self.radius_pct <= 100.0) {
            return invalid(format!("radius_pct must be in (0, 100], got {}", self.radius_pct));
        }
        if self.sites == 0 {
            return invalid("need at least one anchor site");
        }
        if !(self.zipf_s.is_finite() && self.zipf_s >= 0.0) {
            return invalid(format!("zipf exponent must be finite and non-negative, got {}", self.zipf_s));
        }
        Ok(())
    }
}

/// A query site: location plus its own radius when the generator sets one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub location: Point,
    pub radius: Option<f64>,
}

enum Picker {
    Uniform,
    Zipf(Zipf<f64>),
}

/// Endless seeded stream of range queries over `space`.
pub struct QueryStream {
    rng: ChaCha8Rng,
    sites: Vec<Site>,
    picker: Picker,
    radius: f64,
    seq: u64,
}

fn uniform_in(rng: &mut ChaCha8Rng, c: &Cell) -> Point {
    let x = if c.width() > 0.0 { rng.random_range(c.min.x..=c.max.x) } else { c.min.x };
    let y = if c.height() > 0.0 { rng.random_range(c.min.y..=c.max.y) } else { c.min.y };
    Point::new(x, y)
}

fn clamp_to(p: Point, c: &Cell) -> Point {
    Point::new(p.x.clamp(c.min.x, c.max.x), p.y.clamp(c.min.y, c.max.y))
}

/// Synthetic users with scattered check-ins. Users whose check-ins give no
/// spread borrow the radius of a random user that has one.
fn centroid_sites(rng: &mut ChaCha8Rng, space: &Cell, users: usize, fallback: f64) -> Vec<Site> {
    let spread = Normal::new(0.0, 0.015 * space.diagonal()).expect("finite sd");
    let mut sites: Vec<Site> = (0..users)
        .map(|_| {
            let home = uniform_in(rng, space);
            let k = if rng.random_bool(0.15) { 1 } else { rng.random_range(2..=12) };
            let checkins: Vec<Point> = (0..k)
                .map(|_| clamp_to(Point::new(home.x + spread.sample(rng), home.y + spread.sample(rng)), space))
                .collect();
            let c = Point::new(
                checkins.iter().map(|p| p.x).sum::<f64>() / k as f64,
                checkins.iter().map(|p| p.y).sum::<f64>() / k as f64,
            );
            let c = clamp_to(c, space);
            let r = checkins.iter().map(|p| dist(*p, c)).fold(0.0, f64::max);
            Site { location: c, radius: (r > 0.0).then_some(r) }
        })
        .collect();
    let donors: Vec<f64> = sites.iter().filter_map(|s| s.radius).collect();
    for s in &mut sites {
        if s.radius.is_none() {
            s.radius = Some(if donors.is_empty() { fallback } else { donors[rng.random_range(0..donors.len())] });
        }
    }
    sites
}

impl QueryStream {
    /// `space` bounds every query location; radii scale with its diagonal.
    pub fn new(config: &StreamConfig, space: Cell) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let radius = config.radius_pct / 100.0 * space.diagonal();
        if !(radius > 0.0) {
            return invalid("dataspace diagonal is zero");
        }
        let (sites, picker) = match config.generator {
            Generator::Uniform | Generator::Skewed => {
                let sites = (0..config.sites).map(|_| Site { location: uniform_in(&mut rng, &space), radius: None }).collect();
                let picker = if config.generator == Generator::Skewed {
                    Picker::Zipf(Zipf::new(config.sites as f64, config.zipf_s).map_err(|e| Error::Invalid(e.to_string()))?)
                } else {
                    Picker::Uniform
                };
                (sites, picker)
            }
            Generator::Centroid => (centroid_sites(&mut rng, &space, config.sites, radius), Picker::Uniform),
        };
        Ok(QueryStream { rng, sites, picker, radius, seq: 0 })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn locations(&self) -> impl Iterator<Item = Point> + '_ {
        self.sites.iter().map(|s| s.location)
    }

    /// Next query with the index of the site it came from.
    pub fn next_indexed(&mut self) -> (usize, RangeQuery) {
        let i = match &self.picker {
            Picker::Uniform => self.rng.random_range(0..self.sites.len()),
            Picker::Zipf(z) => (z.sample(&mut self.rng) as usize).clamp(1, self.sites.len()) - 1,
        };
        self.seq += 1;
        let s = self.sites[i];
        let q = RangeQuery::new(s.location, s.radius.unwrap_or(self.radius), self.seq).expect("positive finite radius");
        (i, q)
    }
}

impl Iterator for QueryStream {
    type Item = RangeQuery;

    fn next(&mut self) -> Option<RangeQuery> {
        Some(self.next_indexed().1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPACE: Cell = Cell::from_bounds(0.0, 0.0, 100.0, 50.0);

    fn cfg(generator: Generator, seed: u64) -> StreamConfig {
        StreamConfig { generator, seed, ..StreamConfig::default() }
    }

    #[test]
    fn seeded_streams_repeat() {
        for g in [Generator::Uniform, Generator::Skewed, Generator::Centroid] {
            let a: Vec<RangeQuery> = QueryStream::new(&cfg(g, 5), SPACE).unwrap().take(200).collect();
            let b: Vec<RangeQuery> = QueryStream::new(&cfg(g, 5), SPACE).unwrap().take(200).collect();
            assert_eq!(a, b);
            assert!(a.iter().all(|q| SPACE.contains(q.location) && q.radius > 0.0));
            assert_eq!(a.iter().map(|q| q.seq).collect::<Vec<_>>(), (1..=200).collect::<Vec<_>>());
        }
    }

    #[test]
    fn uniform_radius_follows_diagonal() {
        let q = QueryStream::new(&cfg(Generator::Uniform, 1), SPACE).unwrap().next().unwrap();
        assert!((q.radius - 0.04 * SPACE.diagonal()).abs() < 1e-12);
    }

    #[test]
    fn uniform_anchor_frequencies() {
        let config = StreamConfig { sites: 50, ..cfg(Generator::Uniform, 8) };
        let mut s = QueryStream::new(&config, SPACE).unwrap();
        let draws = 100_000;
        let mut counts = vec![0u32; 50];
        for _ in 0..draws {
            counts[s.next_indexed().0] += 1;
        }
        let p = 1.0 / 50.0;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!(counts.iter().all(|&c| (c as f64 - mean).abs() <= 4.0 * sd), "{counts:?}");
        // Chi-square with 49 degrees of freedom stays well below its 3σ mark.
        let chi: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum();
        assert!(chi < 49.0 + 3.0 * (2.0 * 49.0f64).sqrt(), "chi2 = {chi}");
    }

    #[test]
    fn skewed_prefers_low_ranks() {
        let config = StreamConfig { sites: 100, ..cfg(Generator::Skewed, 3) };
        let mut s = QueryStream::new(&config, SPACE).unwrap();
        let mut counts = vec![0u32; 100];
        for _ in 0..20_000 {
            counts[s.next_indexed().0] += 1;
        }
        assert!(counts[0] > 5 * counts[50]);
        assert!(counts[0] > counts[1] && counts[1] > counts[9]);
    }

    #[test]
    fn single_checkin_users_borrow_a_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sites = centroid_sites(&mut rng, &SPACE, 300, 99.0);
        assert!(sites.iter().all(|s| s.radius.is_some_and(|r| r > 0.0)));
        let radii: Vec<f64> = sites.iter().map(|s| s.radius.unwrap()).collect();
        // Borrowed radii come from other users, never from the fallback.
        assert!(radii.iter().all(|&r| r != 99.0));
        let dup = radii.iter().filter(|&&r| radii.iter().filter(|&&o| o == r).count() > 1).count();
        assert!(dup > 0, "expected some single check-in users");
    }

    #[test]
    fn validation() {
        let bad = StreamConfig { radius_pct: 0.0, ..StreamConfig::default() };
        assert!(QueryStream::new(&bad, SPACE).is_err());
        let bad = StreamConfig { radius_pct: 101.0, ..StreamConfig::default() };
        assert!(bad.validate().is_err());
        let bad = StreamConfig { sites: 0, ..StreamConfig::default() };
        assert!(bad.validate().is_err());
        assert!("zipf".parse::<Generator>().is_err());
        assert_eq!("centroid".parse::<Generator>().unwrap(), Generator::Centroid);
    }
}
