use growformer_core::expansion::{expand_in, stack_order, MappingFn};
use growformer_core::Matrix;
use proptest::prelude::*;

fn mapping(src: usize, tail: Vec<usize>) -> MappingFn {
    let map = (0..src).chain(tail.into_iter().map(|t| t % src)).collect();
    MappingFn::from_map(src, map).unwrap()
}

proptest! {
    #[test]
    fn in_expansion_preserves_column_sums(
        rows in 1usize..8,
        cols in 1usize..6,
        tail in prop::collection::vec(0usize..64, 0..10),
        seed in 0u64..1000,
    ) {
        let w = Matrix::from_fn(rows, cols, |i, j| ((i * 31 + j * 7 + seed as usize) % 17) as f32 - 8.0);
        let g = mapping(rows, tail);
        let e = expand_in(&w, &g).unwrap();
        for j in 0..cols {
            let before: f32 = (0..rows).map(|i| w.get(i, j)).sum();
            let after: f32 = (0..e.rows()).map(|i| e.get(i, j)).sum();
            prop_assert!((before - after).abs() <= 1e-4 * (1.0 + before.abs()));
        }
    }

    #[test]
    fn mapping_counts_cover_every_source(src in 1usize..10, tail in prop::collection::vec(0usize..64, 0..20)) {
        let g = mapping(src, tail);
        prop_assert_eq!(g.counts().iter().sum::<usize>(), g.len());
        prop_assert!(g.counts().iter().all(|&c| c >= 1));
        prop_assert_eq!(&g.map()[..src], &(0..src).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn stacking_uses_whole_copies_then_the_top(ls in 1usize..7, extra in 0usize..15) {
        let lt = ls + extra;
        let order = stack_order(ls, lt).unwrap();
        prop_assert_eq!(order.len(), lt);
        let k = lt / ls;
        for (i, &s) in order.iter().enumerate().take(k * ls) {
            prop_assert_eq!(s, i % ls);
        }
        let rem = &order[k * ls..];
        prop_assert_eq!(rem, &(ls - rem.len()..ls).collect::<Vec<_>>()[..]);
    }
}
