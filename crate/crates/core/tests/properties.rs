//! Property tests over geometry, partitioning, rank lists and both engines.

use std::sync::Arc;

use proptest::prelude::*;
use srm_core::approx::Scale;
use srm_core::exact::rank_in_query;
use srm_core::irf::locate_object;
use srm_core::partition::{needs_split, rank_bounds};
use srm_core::*;

fn point() -> impl Strategy<Value = Point> {
    (0.0..100.0f64, 0.0..100.0f64).prop_map(|(x, y)| Point::new(x, y))
}

/// Points on a small grid, so coincident objects and distance ties are common.
fn grid_point() -> impl Strategy<Value = Point> {
    (0..8u8, 0..8u8).prop_map(|(x, y)| Point::new(x as f64 * 10.0, y as f64 * 10.0))
}

fn objects(max: usize) -> impl Strategy<Value = Arc<ObjectSet>> {
    prop_oneof![
        prop::collection::vec(point(), 1..max),
        prop::collection::vec(grid_point(), 1..max),
    ]
    .prop_map(|pts| Arc::new(ObjectSet::new(pts).unwrap()))
}

fn cell() -> impl Strategy<Value = Cell> {
    (point(), 0.01..30.0f64, 0.01..30.0f64)
        .prop_map(|(p, w, h)| Cell::new(p, Point::new(p.x + w, p.y + h)).unwrap())
}

fn queries(len: usize) -> impl Strategy<Value = Vec<(Point, f64)>> {
    prop::collection::vec((point(), 1.0..60.0f64), 1..len)
}

fn to_query((p, r): (Point, f64), seq: u64) -> RangeQuery {
    RangeQuery::new(p, r, seq).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cell_distances_bracket_every_inner_point(p in point(), c in cell(), u in 0.0..=1.0f64, v in 0.0..=1.0f64) {
        let inner = Point::new(c.min.x + u * c.width(), c.min.y + v * c.height());
        let d = dist(p, inner);
        prop_assert!(min_dist(p, &c) <= d + 1e-9);
        prop_assert!(d <= max_dist(p, &c) + 1e-9);
    }

    #[test]
    fn rank_bounds_bracket_true_rank(
        pts in prop::collection::vec(point(), 1..60),
        c in cell(),
        u in 0.0..=1.0f64,
        v in 0.0..=1.0f64,
    ) {
        let objects = ObjectSet::new(pts).unwrap();
        let q = RangeQuery::new(Point::new(c.min.x + u * c.width(), c.min.y + v * c.height()), 1e6, 1).unwrap();
        for (o, _) in objects.iter() {
            let b = rank_bounds(o, &c, &objects);
            let r = rank_in_query(o, &q, &objects).unwrap();
            prop_assert!(b.lower <= r && r <= b.upper, "o {} bounds {:?} rank {}", o, b, r);
        }
    }

    #[test]
    fn leaves_tile_the_root_and_meet_the_split_rule(objs in objects(40), eps in 0.5..5.0f64, probes in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..20)) {
        let config = PartitionConfig { epsilon: eps, max_depth: 7, ..PartitionConfig::default() };
        let tree = build_quadtree(&objs, &config).unwrap();
        let root = tree.root_cell();
        for (u, v) in probes {
            let p = Point::new(root.min.x + u * root.width(), root.min.y + v * root.height());
            let leaf = tree.locate_leaf(p).unwrap();
            prop_assert!(tree.leaf_cell(leaf).contains(p));
        }
        for (leaf, node) in tree.leaves() {
            if !node.capped {
                let c = tree.leaf_cell(leaf);
                for (o, _) in objs.iter() {
                    prop_assert!(!needs_split(rank_bounds(o, &c, &objs), eps));
                }
            }
        }
    }

    #[test]
    fn rank_lists_are_ordered_and_locatable(objs in objects(80), c in cell(), block_size in 1usize..20) {
        let list = RankList::build(&objs, c, block_size);
        prop_assert_eq!(list.len(), objs.len());
        for w in list.entries().windows(2) {
            let (a, b) = (&w[0], &w[1]);
            prop_assert!((a.lower_rank, a.min_distance, a.object_id) < (b.lower_rank, b.min_distance, b.object_id));
            if a.lower_rank <= b.lower_rank {
                prop_assert!(a.min_distance <= b.min_distance);
            }
        }
        let covered: u32 = list.blocks().iter().map(|b| b.len).sum();
        prop_assert_eq!(covered as usize, list.len());
        for (o, p) in objs.iter() {
            let found = locate_object(&list, o, p);
            prop_assert_eq!(found.entry.object_id, o);
            prop_assert_eq!(found.entry.lower_rank, rank_bounds(o, &c, &objs).lower);
        }
    }

    #[test]
    fn exact_engine_matches_brute_force(objs in objects(60), qs in queries(40), w in 1usize..8, m in 1usize..5) {
        let m = m.min(objs.len());
        let n = objs.len();
        let mut engine = ExactEngine::new(objs.clone(), w, m).unwrap();
        let all: Vec<RangeQuery> = qs.into_iter().enumerate().map(|(i, q)| to_query(q, i as u64)).collect();
        for (i, q) in all.iter().enumerate() {
            engine.step(*q);
            let window = &all[(i + 1).saturating_sub(w)..=i];
            let mass: Vec<i64> = (0..n as u32)
                .map(|o| window.iter().filter_map(|q| rank_in_query(o, q, &objs)).map(|r| n as i64 - r as i64 + 1).sum())
                .collect();
            let mut want: Vec<(u32, i64)> = mass.iter().enumerate().map(|(o, &x)| (o as u32, x)).collect();
            want.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            want.truncate(m);
            prop_assert_eq!(engine.top(m), want);
        }
    }

    #[test]
    fn approx_engine_matches_oracle(
        objs in objects(60),
        qs in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64, 0.02..0.6f64, 0..4usize), 1..60),
        w in 1usize..10,
        m in 1usize..6,
        eps in prop::sample::select(vec![0.5, 1.0, 3.0]),
        block_size in 1usize..10,
    ) {
        let n = objs.len();
        let m = m.min(n);
        let config = PartitionConfig { epsilon: eps, max_depth: 6, block_size, dataspace: None };
        let index = Arc::new(IrfIndex::build(objs.clone(), config).unwrap());
        let scale = Scale::new(eps, n).unwrap();
        let root = index.tree().root_cell();
        let mut engine = ApproxEngine::new(index.clone(), ApproxConfig::new(w, m)).unwrap();
        let mut all: Vec<RangeQuery> = Vec::new();
        for (i, (u, v, r, repeat)) in qs.into_iter().enumerate() {
            // Repeat an earlier query now and then so identical shifts occur.
            let q = match all.len().checked_sub(repeat + 1) {
                Some(j) if repeat > 0 => RangeQuery::new(all[j].location, all[j].radius, i as u64).unwrap(),
                _ => RangeQuery::new(
                    Point::new(root.min.x + u * root.width(), root.min.y + v * root.height()),
                    r * root.diagonal(),
                    i as u64,
                ).unwrap(),
            };
            all.push(q);
            let step = engine.step(q).unwrap();
            let window = &all[all.len().saturating_sub(w)..];
            let mut mass = vec![0 as Mass; n];
            for q in window {
                let list = index.list(index.locate_leaf(q.location).unwrap());
                for e in list.entries() {
                    if dist(objs.get(e.object_id), q.location) <= q.radius {
                        mass[e.object_id as usize] += scale.zeta(e.lower_rank);
                    }
                }
            }
            let mut want: Vec<(u32, Mass)> = mass.iter().enumerate().map(|(o, &x)| (o as u32, x)).collect();
            want.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            want.truncate(m);
            prop_assert_eq!(engine.results_with_mass(), want);
            if matches!(step.stats.tier, Tier::BsrSafe | Tier::OsrSafe) {
                prop_assert_eq!(step.stats.promoted, 0);
            }
        }
    }

    #[test]
    fn index_round_trips(objs in objects(50), eps in 0.5..5.0f64, probes in prop::collection::vec(point(), 0..5)) {
        let config = PartitionConfig { epsilon: eps, max_depth: 6, ..PartitionConfig::default() };
        let index = IrfIndex::build(objs, config).unwrap();
        let root = index.tree().root_cell();
        index.warm(probes.into_iter().filter(|p| root.contains(*p)));
        let back = IrfIndex::from_bytes(&index.to_bytes()).unwrap();
        prop_assert!(back == index);
    }
}
