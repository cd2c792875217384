use super::*;
use crate::geometry::dist;
use crate::partition::{lower_rank_bound, rank_bounds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Eight objects around the unit cell c1, laid out so that o4 (id 3) has
/// exactly one object surely closer and three that may be closer.
pub(crate) fn eight_objects() -> (Arc<ObjectSet>, Cell) {
    let pts = vec![
        Point::new(0.5, 0.5),
        Point::new(0.5, 2.2),
        Point::new(-1.5, 0.5),
        Point::new(3.0, 0.5),
        Point::new(6.0, 6.0),
        Point::new(7.0, 1.0),
        Point::new(8.0, 8.0),
        Point::new(9.0, -3.0),
    ];
    (Arc::new(ObjectSet::new(pts).unwrap()), Cell::from_bounds(0.0, 0.0, 1.0, 1.0))
}

fn random_objects(n: usize, seed: u64) -> Arc<ObjectSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Arc::new(ObjectSet::new((0..n).map(|_| Point::new(rng.random::<f64>() * 100.0, rng.random::<f64>() * 100.0)).collect()).unwrap())
}

fn check_list(list: &RankList, objects: &ObjectSet, b: usize) {
    let n = objects.len();
    assert_eq!(list.len(), n);
    let mut seen = vec![false; n];
    for e in list.entries() {
        assert!(!seen[e.object_id as usize]);
        seen[e.object_id as usize] = true;
        assert!(e.lower_rank >= 1);
    }
    for w in list.entries().windows(2) {
        let (a, c) = (w[0], w[1]);
        assert!((a.lower_rank, a.min_distance, a.object_id) < (c.lower_rank, c.min_distance, c.object_id));
        if a.lower_rank <= c.lower_rank {
            assert!(a.min_distance <= c.min_distance, "rank order must imply distance order");
        }
    }
    for (k, blk) in list.blocks().iter().enumerate() {
        assert!(blk.len >= 1);
        if k + 1 < list.blocks().len() {
            assert_eq!(blk.len as usize, b);
        }
        let es = list.block_entries(k);
        assert_eq!(blk.block_min_dist, es[0].min_distance);
        for e in es {
            assert!(blk.mbr.contains(objects.get(e.object_id)));
        }
    }
    for w in list.blocks().windows(2) {
        assert!(w[0].block_min_dist <= w[1].block_min_dist);
    }
}

#[test]
fn eight_object_layout_entry_ranks() {
    let (objs, c1) = eight_objects();
    let list = RankList::build(&objs, c1, 2);
    check_list(&list, &objs, 2);
    let e = list.entries().iter().find(|e| e.object_id == 3).unwrap();
    assert_eq!(e.lower_rank, 2);
    assert_eq!(list.entries()[0].object_id, 0);
    assert_eq!(list.entries()[0].lower_rank, 1);
}

#[test]
fn single_object_index() {
    let objs = Arc::new(ObjectSet::new(vec![Point::new(2.0, 3.0)]).unwrap());
    let index = IrfIndex::build(objs, PartitionConfig::default()).unwrap();
    assert_eq!(index.tree().leaf_count(), 1);
    let list = index.list(0);
    assert_eq!(list.blocks().len(), 1);
    assert_eq!(list.entries(), &[RankEntry { object_id: 0, lower_rank: 1, min_distance: 0.0 }]);
}

#[test]
fn random_lists_satisfy_invariants_and_match_bounds() {
    let objs = random_objects(50, 11);
    let index = IrfIndex::build(objs.clone(), PartitionConfig { block_size: 8, ..Default::default() }).unwrap();
    for leaf in 0..index.tree().leaf_count() as u32 {
        let list = index.list(leaf);
        check_list(&list, &objs, 8);
        for e in list.entries().iter().step_by(7) {
            assert_eq!(e.lower_rank, lower_rank_bound(e.object_id, &list.cell, &objs));
        }
    }
}

#[test]
fn locate_agrees_with_linear_scan() {
    let objs = random_objects(200, 12);
    let index = IrfIndex::build(objs.clone(), PartitionConfig { block_size: 16, ..Default::default() }).unwrap();
    for leaf in (0..index.tree().leaf_count() as u32).step_by(5) {
        let list = index.list(leaf);
        for id in 0..200u32 {
            let got = locate_object(&list, id, objs.get(id));
            let pos = list.entries().iter().position(|e| e.object_id == id).unwrap();
            assert_eq!(got.position, pos);
            assert_eq!(got.block, pos / 16);
            assert_eq!(got.entry, list.entries()[pos]);
        }
    }
}

#[test]
fn locate_smallest_distance_is_first() {
    let (objs, c1) = eight_objects();
    let list = RankList::build(&objs, c1, 2);
    let l = locate_object(&list, 0, objs.get(0));
    assert_eq!((l.block, l.position), (0, 0));
    let one = RankList::build(&objs, c1, 64);
    assert_eq!(locate_object(&one, 5, objs.get(5)).block, 0);
}

#[test]
fn block_upper_rank_hand_example() {
    // Block <o4, o5> with an MBR whose far corner is 14 from the point cell c2.
    let pts = vec![
        Point::new(3.0, 0.0),
        Point::new(5.0, 0.0),
        Point::new(9.0, 0.0),
        Point::new(14.0, 0.0),
        Point::new(10.0, 0.0),
        Point::new(18.0, 0.0),
        Point::new(22.0, 0.0),
        Point::new(19.0, 0.0),
    ];
    let objs = ObjectSet::new(pts).unwrap();
    let c1 = Cell::from_bounds(10.0, 0.0, 14.0, 0.0);
    let b_list = RankList::from_entries(
        &objs,
        c1,
        vec![
            RankEntry { object_id: 3, lower_rank: 2, min_distance: 0.0 },
            RankEntry { object_id: 4, lower_rank: 4, min_distance: 0.0 },
        ],
        2,
    );
    let c2 = Cell::point(Point::new(0.0, 0.0));
    let entries = [(0, 1, 3.0), (1, 2, 5.0), (2, 3, 9.0), (3, 4, 14.0), (5, 6, 18.0), (7, 6, 19.0), (4, 7, 20.0), (6, 8, 22.0)]
        .iter()
        .map(|&(o, r, d)| RankEntry { object_id: o, lower_rank: r, min_distance: d })
        .collect();
    let other = RankList::from_entries(&objs, c2, entries, 2);
    assert_eq!(max_dist_rect(&b_list.blocks()[0].mbr, &c2), 14.0);
    assert_eq!(block_upper_rank(&b_list.blocks()[0], &other), 6);

    // A block farther than every block start falls back to N+1.
    let far = RankBlock { start: 0, len: 1, mbr: Cell::point(Point::new(100.0, 0.0)), block_min_dist: 0.0, block_max_dist: 0.0 };
    assert_eq!(block_upper_rank(&far, &other), 9);
}

#[test]
fn block_upper_rank_bounds_true_ranks() {
    let objs = random_objects(300, 13);
    let index = IrfIndex::build(objs.clone(), PartitionConfig { block_size: 16, ..Default::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let leaves = index.tree().leaf_count() as u32;
    for _ in 0..40 {
        let a = index.list(rng.random_range(0..leaves));
        let b = index.list(rng.random_range(0..leaves));
        for (k, blk) in a.blocks().iter().enumerate() {
            let bound = block_upper_rank(blk, &b);
            for _ in 0..3 {
                let q = Point::new(
                    rng.random_range(b.cell.min.x..=b.cell.max.x),
                    rng.random_range(b.cell.min.y..=b.cell.max.y),
                );
                for e in a.block_entries(k) {
                    let d = dist(objs.get(e.object_id), q);
                    let rank = 1 + objs
                        .iter()
                        .filter(|&(id, p)| {
                            let dp = dist(p, q);
                            dp < d || (dp == d && id < e.object_id)
                        })
                        .count() as u32;
                    let lower = b.entries().iter().find(|x| x.object_id == e.object_id).unwrap().lower_rank;
                    // The bound caps the lower rank in the other list, which is
                    // what approximate ranks are built from.
                    assert!(lower <= bound);
                    assert!(lower <= rank);
                    assert!(rank <= rank_bounds(e.object_id, &b.cell, &objs).upper);
                }
            }
        }
    }
}

#[test]
fn save_load_round_trip_and_corruption() {
    let objs = random_objects(120, 15);
    let index = IrfIndex::build(objs, PartitionConfig { block_size: 4, ..Default::default() }).unwrap();
    let bytes = index.to_bytes();
    let back = IrfIndex::from_bytes(&bytes).unwrap();
    assert!(index == back);
    assert_eq!(back.materialized_leaves().len(), index.tree().leaf_count());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.irf");
    index.save(&path).unwrap();
    assert!(IrfIndex::load(&path).unwrap() == index);

    assert!(matches!(IrfIndex::from_bytes(&bytes[..bytes.len() / 2]), Err(crate::Error::Corrupt(_))));
    let mut bad = bytes.clone();
    bad[bytes.len() / 3] ^= 0x40;
    assert!(matches!(IrfIndex::from_bytes(&bad), Err(crate::Error::Corrupt(_))));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(IrfIndex::from_bytes(&magic), Err(crate::Error::BadMagic)));
    let mut ver = bytes;
    ver[4] = 9;
    assert!(matches!(IrfIndex::from_bytes(&ver), Err(crate::Error::UnsupportedVersion(9))));
}

#[test]
fn budget_makes_lists_lazy_and_evicts() {
    let objs = random_objects(200, 16);
    let index = IrfIndex::build_with_budget(objs, PartitionConfig::default(), 200 * 3).unwrap();
    assert!(index.materialized_leaves().is_empty());
    for leaf in 0..6 {
        index.list(leaf);
    }
    assert_eq!(index.materialized_leaves().len(), 3);
    let again = index.list(0);
    assert_eq!(*again, RankList::build(index.objects(), index.tree().leaf_cell(0), 128));
}
