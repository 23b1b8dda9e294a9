//! Region adjacency graphs, per-region prediction statistics, and adaptive
//! merging of base superpixels under a distribution-distance threshold.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::distance::{euclidean_unchecked, js_divergence_unchecked};
use crate::error::{Error, Result};
use crate::raster::{neighbors, ProbMap, Segmentation};

/// Undirected adjacency between the regions of a segmentation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionGraph {
    adjacency: Vec<Vec<u32>>,
}

impl RegionGraph {
    pub fn num_regions(&self) -> u32 {
        self.adjacency.len() as u32
    }

    /// Sorted neighbor ids of `region`.
    pub fn neighbors(&self, region: u32) -> &[u32] {
        &self.adjacency[region as usize]
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(s, adj)| {
            adj.iter()
                .filter(move |&&n| n > s as u32)
                .map(move |&n| (s as u32, n))
        })
    }
}

/// Two regions are adjacent when some pair of their pixels are raster neighbors.
pub fn build_region_graph(seg: &Segmentation) -> RegionGraph {
    let mut adjacency = vec![Vec::new(); seg.num_regions() as usize];
    let ids = seg.region_ids();
    for p in 0..seg.len() {
        let a = ids[p];
        for q in neighbors(p, seg.width(), seg.height()) {
            let b = ids[q];
            if a != b {
                adjacency[a as usize].push(b);
            }
        }
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
        adj.dedup();
    }
    RegionGraph { adjacency }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub region_id: u32,
    pub pixel_count: u32,
    /// Arithmetic mean of the pixel distributions.
    pub mean_prob: Vec<f64>,
    /// Mean of per-pixel best-versus-second-best ratios.
    pub uncertainty: f64,
    /// Most frequent per-pixel argmax label. Vote ties go to the class with
    /// the higher mean probability, then to the lowest class id.
    pub predicted_dominant: u16,
}

/// Ratio of the second-highest to the highest class probability.
pub fn pixel_uncertainty(p: &[f64]) -> Result<f64> {
    if p.len() < 2 {
        return Err(Error::InvalidArgument(
            "uncertainty needs at least two classes".into(),
        ));
    }
    Ok(uncertainty_unchecked(p))
}

#[inline]
pub(crate) fn uncertainty_unchecked(p: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in p {
        if v > best {
            second = best;
            best = v;
        } else if v > second {
            second = v;
        }
    }
    if best <= 0.0 {
        return 1.0;
    }
    (second / best).clamp(0.0, 1.0)
}

/// Statistics for every region of `seg` under the predictions in `probs`.
pub fn region_stats(seg: &Segmentation, probs: &ProbMap) -> Result<Vec<RegionStats>> {
    seg.same_dims(probs.width(), probs.height())?;
    let c = probs.num_classes() as usize;
    if c < 2 {
        return Err(Error::InvalidArgument(
            "region statistics need at least two classes".into(),
        ));
    }
    let r = seg.num_regions() as usize;
    let mut sums = vec![0f64; r * c];
    let mut votes = vec![0u32; r * c];
    let mut unc = vec![0f64; r];
    let mut counts = vec![0u32; r];
    let mut buf = vec![0f64; c];
    for (p, &id) in seg.region_ids().iter().enumerate() {
        let id = id as usize;
        probs.pixel_into(p, &mut buf);
        for (s, &v) in sums[id * c..(id + 1) * c].iter_mut().zip(&buf) {
            *s += v;
        }
        unc[id] += uncertainty_unchecked(&buf);
        votes[id * c + probs.argmax(p) as usize] += 1;
        counts[id] += 1;
    }
    (0..r)
        .map(|id| {
            let n = counts[id];
            if n == 0 {
                return Err(Error::EmptyRegion(id as u32));
            }
            let mean_prob = sums[id * c..(id + 1) * c]
                .iter()
                .map(|s| s / n as f64)
                .collect();
            let region_votes = &votes[id * c..(id + 1) * c];
            let region_sums = &sums[id * c..(id + 1) * c];
            let mut dominant = 0usize;
            for k in 1..c {
                let (v, best) = (region_votes[k], region_votes[dominant]);
                if v > best || (v == best && region_sums[k] > region_sums[dominant]) {
                    dominant = k;
                }
            }
            Ok(RegionStats {
                region_id: id as u32,
                pixel_count: n,
                mean_prob,
                uncertainty: unc[id] / n as f64,
                predicted_dominant: dominant as u16,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeCriterion {
    /// Jensen-Shannon distance between mean predictions.
    #[default]
    JensenShannon,
    /// Euclidean distance between mean predictions.
    Euclidean,
}

impl MergeCriterion {
    /// Whether `d(p, q) < epsilon`.
    #[inline]
    fn accepts(self, p: &[f64], q: &[f64], epsilon: f64) -> bool {
        match self {
            MergeCriterion::JensenShannon => js_divergence_unchecked(p, q).sqrt() < epsilon,
            MergeCriterion::Euclidean => euclidean_unchecked(p, q) < epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    /// Absorb a neighbor when its distance to the root is strictly below this.
    pub epsilon: f64,
    /// Fraction of regions, by descending uncertainty, eligible as roots.
    pub merge_fraction: f64,
    #[serde(default)]
    pub criterion: MergeCriterion,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            merge_fraction: 1.0,
            criterion: MergeCriterion::JensenShannon,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.merge_fraction > 0.0 && self.merge_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "merge_fraction must be in (0, 1], got {}",
                self.merge_fraction
            )));
        }
        Ok(())
    }
}

/// Order in which a root's growth frontier is expanded. Both orders yield the
/// same merged set because every candidate is compared to the root itself.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exploration {
    #[default]
    BreadthFirst,
    DepthFirst,
}

/// One base region absorbed into a root's merged region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub root: u32,
    pub absorbed: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeOutcome {
    pub segmentation: Segmentation,
    /// Merged region id for each input region.
    pub assignment: Vec<u32>,
    pub events: Vec<MergeEvent>,
}

/// Root visiting order: descending uncertainty, ties by ascending region id.
pub fn root_order(stats: &[RegionStats]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..stats.len() as u32).collect();
    order.sort_by(|&a, &b| {
        stats[b as usize]
            .uncertainty
            .total_cmp(&stats[a as usize].uncertainty)
            .then(a.cmp(&b))
    });
    order
}

/// Groups regions given precomputed graph and statistics. Returns, for each
/// region, the root it was merged into, plus the absorption events.
pub fn merge_groups(
    graph: &RegionGraph,
    stats: &[RegionStats],
    cfg: &MergeConfig,
    exploration: Exploration,
) -> Result<(Vec<u32>, Vec<MergeEvent>)> {
    merge_groups_locked(graph, stats, cfg, exploration, None)
}

/// Like [`merge_groups`], but regions flagged in `locked` never act as roots
/// and are never absorbed; they pass through unchanged and block merging
/// across them.
pub fn merge_groups_locked(
    graph: &RegionGraph,
    stats: &[RegionStats],
    cfg: &MergeConfig,
    exploration: Exploration,
    locked: Option<&[bool]>,
) -> Result<(Vec<u32>, Vec<MergeEvent>)> {
    cfg.validate()?;
    let r = graph.num_regions() as usize;
    if stats.len() != r {
        return Err(Error::LengthMismatch(r, stats.len()));
    }
    if let Some(l) = locked {
        if l.len() != r {
            return Err(Error::LengthMismatch(r, l.len()));
        }
    }
    const UNEXPLORED: u32 = u32::MAX;
    let mut owner = vec![UNEXPLORED; r];
    if let Some(l) = locked {
        for (id, _) in l.iter().enumerate().filter(|(_, &x)| x) {
            owner[id] = id as u32;
        }
    }
    let mut events = Vec::new();
    let eligible = ((cfg.merge_fraction * r as f64).ceil() as usize).clamp(1, r.max(1));
    let mut frontier = VecDeque::new();

    for &root in root_order(stats).iter().take(eligible) {
        if owner[root as usize] != UNEXPLORED {
            continue;
        }
        owner[root as usize] = root;
        let f = &stats[root as usize].mean_prob;
        frontier.push_back(root);
        loop {
            let current = match exploration {
                Exploration::BreadthFirst => frontier.pop_front(),
                Exploration::DepthFirst => frontier.pop_back(),
            };
            let Some(current) = current else { break };
            for &n in graph.neighbors(current) {
                if owner[n as usize] == UNEXPLORED
                    && cfg
                        .criterion
                        .accepts(f, &stats[n as usize].mean_prob, cfg.epsilon)
                {
                    owner[n as usize] = root;
                    events.push(MergeEvent { root, absorbed: n });
                    frontier.push_back(n);
                }
            }
        }
    }
    // regions never reached pass through as their own group
    for (id, o) in owner.iter_mut().enumerate() {
        if *o == UNEXPLORED {
            *o = id as u32;
        }
    }
    Ok((owner, events))
}

/// Relabels groups densely, ordered by the smallest member region id, so
/// that an input with no merges maps to itself.
fn relabel_groups(seg: &Segmentation, owner: &[u32]) -> (Segmentation, Vec<u32>) {
    let r = owner.len();
    let mut group_min = vec![u32::MAX; r];
    for (id, &o) in owner.iter().enumerate() {
        group_min[o as usize] = group_min[o as usize].min(id as u32);
    }
    let mut dense = vec![u32::MAX; r];
    let mut next = 0u32;
    let mut assignment = vec![0u32; r];
    for id in 0..r {
        let key = group_min[owner[id] as usize] as usize;
        if dense[key] == u32::MAX {
            dense[key] = next;
            next += 1;
        }
        assignment[id] = dense[key];
    }
    let ids = seg
        .region_ids()
        .iter()
        .map(|&id| assignment[id as usize])
        .collect();
    (
        Segmentation::from_dense_unchecked(seg.width(), seg.height(), ids, next),
        assignment,
    )
}

/// Merges base regions of `seg` under the predictions `probs`.
pub fn adaptive_merge(seg: &Segmentation, probs: &ProbMap, cfg: &MergeConfig) -> Result<Segmentation> {
    Ok(adaptive_merge_detailed(seg, probs, cfg, Exploration::BreadthFirst)?.segmentation)
}

/// Merges with the base regions flagged in `locked` held out of merging.
pub fn adaptive_merge_locked(
    seg: &Segmentation,
    probs: &ProbMap,
    cfg: &MergeConfig,
    locked: &[bool],
) -> Result<Segmentation> {
    let stats = region_stats(seg, probs)?;
    let graph = build_region_graph(seg);
    Ok(merge_with_stats_locked(seg, &graph, &stats, cfg, Exploration::BreadthFirst, Some(locked))?.segmentation)
}

pub fn adaptive_merge_detailed(
    seg: &Segmentation,
    probs: &ProbMap,
    cfg: &MergeConfig,
    exploration: Exploration,
) -> Result<MergeOutcome> {
    let stats = region_stats(seg, probs)?;
    let graph = build_region_graph(seg);
    merge_with_stats(seg, &graph, &stats, cfg, exploration)
}

pub fn merge_with_stats(
    seg: &Segmentation,
    graph: &RegionGraph,
    stats: &[RegionStats],
    cfg: &MergeConfig,
    exploration: Exploration,
) -> Result<MergeOutcome> {
    merge_with_stats_locked(seg, graph, stats, cfg, exploration, None)
}

pub fn merge_with_stats_locked(
    seg: &Segmentation,
    graph: &RegionGraph,
    stats: &[RegionStats],
    cfg: &MergeConfig,
    exploration: Exploration,
    locked: Option<&[bool]>,
) -> Result<MergeOutcome> {
    let (owner, events) = merge_groups_locked(graph, stats, cfg, exploration, locked)?;
    let (segmentation, assignment) = relabel_groups(seg, &owner);
    Ok(MergeOutcome {
        segmentation,
        assignment,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn seg(w: u32, h: u32, ids: &[u32]) -> Segmentation {
        Segmentation::new(w, h, ids.to_vec()).unwrap()
    }

    #[test]
    fn graph_examples() {
        let g = build_region_graph(&seg(2, 1, &[0, 1]));
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);

        let g = build_region_graph(&seg(2, 2, &[0, 0, 0, 0]));
        assert_eq!(g.num_edges(), 0);

        let g = build_region_graph(&seg(2, 2, &[0, 1, 2, 3]));
        assert_eq!(
            g.edges().collect::<Vec<_>>(),
            vec![(0, 1), (0, 2), (1, 3), (2, 3)]
        );
    }

    #[test]
    fn uncertainty_examples() {
        assert_eq!(pixel_uncertainty(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(pixel_uncertainty(&[1.0 / 3.0; 3]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            pixel_uncertainty(&[0.7, 0.2, 0.1]).unwrap(),
            0.2 / 0.7,
            epsilon = 1e-12
        );
        assert!(pixel_uncertainty(&[1.0]).is_err());
    }

    #[test]
    fn stats_examples() {
        let probs = ProbMap::from_pixels(2, 1, 2, &[vec![0.6, 0.4], vec![0.2, 0.8]]).unwrap();
        let st = region_stats(&seg(2, 1, &[0, 0]), &probs).unwrap();
        assert_abs_diff_eq!(st[0].mean_prob[0], 0.4, epsilon = 1e-7);
        assert_abs_diff_eq!(st[0].mean_prob[1], 0.6, epsilon = 1e-7);
        // one vote each; the tie goes to the larger mean probability
        assert_eq!(st[0].predicted_dominant, 1);
        assert_eq!(st[0].pixel_count, 2);

        let probs = ProbMap::from_pixels(1, 1, 2, &[vec![1.0, 0.0]]).unwrap();
        let st = region_stats(&seg(1, 1, &[0]), &probs).unwrap();
        assert_eq!(st[0].uncertainty, 0.0);
        assert_eq!(st[0].predicted_dominant, 0);

        let probs = ProbMap::from_pixels(
            3,
            1,
            2,
            &[vec![0.9, 0.1], vec![0.6, 0.4], vec![0.1, 0.9]],
        )
        .unwrap();
        let st = region_stats(&seg(3, 1, &[0, 0, 0]), &probs).unwrap();
        assert_eq!(st[0].predicted_dominant, 0);

        let probs = ProbMap::from_pixels(2, 1, 3, &[vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0]])
            .unwrap();
        let st = region_stats(&seg(2, 1, &[0, 0]), &probs).unwrap();
        assert_eq!(st[0].predicted_dominant, 0);
    }

    #[test]
    fn three_region_chain() {
        // A, B, C with A the most uncertain so it is visited first
        let probs = ProbMap::from_pixels(
            3,
            1,
            2,
            &[vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0]],
        )
        .unwrap();
        let stats = vec![
            RegionStats {
                region_id: 0,
                pixel_count: 1,
                mean_prob: vec![1.0, 0.0],
                uncertainty: 0.9,
                predicted_dominant: 0,
            },
            RegionStats {
                region_id: 1,
                pixel_count: 1,
                mean_prob: vec![0.9, 0.1],
                uncertainty: 0.5,
                predicted_dominant: 0,
            },
            RegionStats {
                region_id: 2,
                pixel_count: 1,
                mean_prob: vec![0.0, 1.0],
                uncertainty: 0.1,
                predicted_dominant: 1,
            },
        ];
        let s = seg(3, 1, &[0, 1, 2]);
        let cfg = MergeConfig {
            epsilon: 0.3,
            ..Default::default()
        };
        let out = merge_with_stats(
            &s,
            &build_region_graph(&s),
            &stats,
            &cfg,
            Exploration::BreadthFirst,
        )
        .unwrap();
        assert_eq!(out.segmentation.num_regions(), 2);
        assert_eq!(out.segmentation.region_ids(), &[0, 0, 1]);
        assert_eq!(out.events, vec![MergeEvent { root: 0, absorbed: 1 }]);
        // the same probabilities through the public entry point
        let merged = adaptive_merge(&s, &probs, &cfg).unwrap();
        assert_eq!(merged.num_regions(), 2);
    }

    #[test]
    fn epsilon_zero_is_identity() {
        let s = seg(3, 1, &[0, 1, 2]);
        let probs = ProbMap::uniform(3, 1, 3);
        let cfg = MergeConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert_eq!(adaptive_merge(&s, &probs, &cfg).unwrap(), s);
    }

    #[test]
    fn large_epsilon_merges_everything() {
        let s = seg(2, 2, &[0, 1, 2, 3]);
        let probs = ProbMap::from_pixels(
            2,
            2,
            2,
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.3, 0.7], vec![0.5, 0.5]],
        )
        .unwrap();
        let cfg = MergeConfig {
            epsilon: 0.9,
            ..Default::default()
        };
        assert_eq!(adaptive_merge(&s, &probs, &cfg).unwrap().num_regions(), 1);
    }

    #[test]
    fn partial_fraction_limits_roots() {
        // four singleton regions in a row, all within epsilon of each other
        // only in pairs: merging rooted at the most uncertain only
        let s = seg(4, 1, &[0, 1, 2, 3]);
        let probs = ProbMap::from_pixels(
            4,
            1,
            2,
            &[vec![0.5, 0.5], vec![0.5, 0.5], vec![1.0, 0.0], vec![1.0, 0.0]],
        )
        .unwrap();
        let cfg = MergeConfig {
            epsilon: 0.1,
            merge_fraction: 0.25,
            ..Default::default()
        };
        let out = adaptive_merge(&s, &probs, &cfg).unwrap();
        // root 0 absorbs 1; regions 2 and 3 are never roots and stay apart
        assert_eq!(out.region_ids(), &[0, 0, 1, 2]);

        let full = MergeConfig {
            merge_fraction: 1.0,
            ..cfg
        };
        assert_eq!(adaptive_merge(&s, &probs, &full).unwrap().region_ids(), &[0, 0, 1, 1]);
    }

    #[test]
    fn config_validation() {
        let bad = MergeConfig {
            epsilon: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MergeConfig {
            merge_fraction: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let s = seg(2, 1, &[0, 1]);
        let probs = ProbMap::uniform(1, 2, 2);
        assert!(matches!(
            adaptive_merge(&s, &probs, &MergeConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
