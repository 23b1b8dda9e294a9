use proptest::prelude::*;
use spal_core::distance::js_distance;
use spal_core::merge::{
    adaptive_merge_detailed, build_region_graph, merge_with_stats, region_stats, Exploration, MergeConfig,
    MergeCriterion, RegionStats,
};
use spal_core::raster::{ProbMap, Segmentation};
use spal_core::superpixel::grid_segmentation;
use spal_core::synth::clustered_prob_map;

fn instance(seed: u64, cell: u32) -> (Segmentation, ProbMap) {
    let seg = grid_segmentation(16, 16, cell).unwrap();
    let probs = clustered_prob_map(&seg, 4, 3, 0.05, seed);
    (seg, probs)
}

fn cfg(epsilon: f64, merge_fraction: f64, criterion: MergeCriterion) -> MergeConfig {
    MergeConfig { epsilon, merge_fraction, criterion }
}

fn criterion() -> impl Strategy<Value = MergeCriterion> {
    prop_oneof![Just(MergeCriterion::JensenShannon), Just(MergeCriterion::Euclidean)]
}

proptest! {
    #[test]
    fn bfs_and_dfs_agree(seed in any::<u64>(), cell in 1u32..5, eps in 0.0f64..0.6, rho in 0.05f64..=1.0, crit in criterion()) {
        let (seg, probs) = instance(seed, cell);
        let c = cfg(eps, rho, crit);
        let bfs = adaptive_merge_detailed(&seg, &probs, &c, Exploration::BreadthFirst).unwrap();
        let dfs = adaptive_merge_detailed(&seg, &probs, &c, Exploration::DepthFirst).unwrap();
        prop_assert_eq!(bfs.segmentation, dfs.segmentation);
        prop_assert_eq!(bfs.assignment, dfs.assignment);
    }

    #[test]
    fn merged_regions_tile_and_respect_epsilon(seed in any::<u64>(), cell in 1u32..5, eps in 0.0f64..0.6, rho in 0.05f64..=1.0) {
        let (seg, probs) = instance(seed, cell);
        let out = adaptive_merge_detailed(&seg, &probs, &cfg(eps, rho, MergeCriterion::JensenShannon), Exploration::BreadthFirst).unwrap();
        let merged = &out.segmentation;
        prop_assert!(merged.num_regions() <= seg.num_regions());
        prop_assert_eq!(merged.num_regions() as usize + out.events.len(), seg.num_regions() as usize);
        prop_assert_eq!(merged.region_sizes().iter().sum::<u32>() as usize, seg.len());
        // each base region maps to exactly one merged region
        for (p, &b) in seg.region_ids().iter().enumerate() {
            prop_assert_eq!(merged.region_ids()[p], out.assignment[b as usize]);
        }
        let stats = region_stats(&seg, &probs).unwrap();
        for e in &out.events {
            let d = js_distance(&stats[e.root as usize].mean_prob, &stats[e.absorbed as usize].mean_prob).unwrap();
            prop_assert!(d < eps);
        }
    }

    #[test]
    fn zero_epsilon_is_identity(seed in any::<u64>(), cell in 1u32..5, rho in 0.05f64..=1.0, crit in criterion()) {
        let (seg, probs) = instance(seed, cell);
        let out = adaptive_merge_detailed(&seg, &probs, &cfg(0.0, rho, crit), Exploration::BreadthFirst).unwrap();
        prop_assert_eq!(out.segmentation, seg);
        prop_assert!(out.events.is_empty());
    }
}

fn stats_from(dists: &[[f64; 3]], uncertainty: &[f64]) -> Vec<RegionStats> {
    dists
        .iter()
        .zip(uncertainty)
        .enumerate()
        .map(|(i, (d, &u))| RegionStats {
            region_id: i as u32,
            pixel_count: 1,
            mean_prob: d.to_vec(),
            uncertainty: u,
            predicted_dominant: 0,
        })
        .collect()
}

/// A larger threshold can yield more regions: with a fixed root order, a root
/// that grabs a bridging region under the larger threshold can cut later
/// roots off from regions they would otherwise have absorbed through it.
#[test]
fn region_count_is_not_monotone_in_epsilon() {
    // Z Y Z
    // A X Z
    // Z W Z     (Z regions carry a third class and never merge)
    let seg = Segmentation::from_sparse(3, 3, &[4, 2, 5, 0, 1, 5, 6, 3, 7]).unwrap();
    let graph = build_region_graph(&seg);
    // dense ids by first appearance: Z=0 Y=1 Z'=2 A=3 X=4 Z''=5 W=6 Z'''=7
    let dists = [
        [0.0, 0.0, 1.0],
        [0.4, 0.6, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0],
        [0.7, 0.3, 0.0],
        [0.0, 0.0, 1.0],
        [0.45, 0.55, 0.0],
        [0.0, 0.0, 1.0],
    ];
    let uncertainty = [0.0, 0.8, 0.0, 0.9, 0.1, 0.0, 0.05, 0.0];
    let stats = stats_from(&dists, &uncertainty);
    let run = |eps| {
        merge_with_stats(&seg, &graph, &stats, &cfg(eps, 1.0, MergeCriterion::JensenShannon), Exploration::BreadthFirst)
            .unwrap()
            .segmentation
            .num_regions()
    };
    let small = run(0.3);
    let large = run(0.4);
    // the two touching Z regions on the right merge with each other
    assert_eq!(small, 5);
    assert_eq!(large, 6);
}
