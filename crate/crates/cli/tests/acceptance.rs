//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spal_core::config::{BaseSegmentation, LoopSettings, Strategy};
use spal_core::dataset::{shapes_samples, ImageSample};
use spal_core::distance::{euclidean_distance, js_distance};
use spal_core::learner::ActiveLearner;
use spal_core::merge::{
    adaptive_merge, adaptive_merge_detailed, merge_with_stats, region_stats, build_region_graph, Exploration,
    MergeConfig, MergeCriterion,
};
use spal_core::metrics::{achievable_metrics, merge_correctness_counts, pearson_correlation};
use spal_core::model::{loss_and_gradient, predict, softmax, train, FeatureSpec, TrainConfig};
use spal_core::oracle::{answer_query, oracle_superpixels};
use spal_core::query::{QueryRecord, QueryStatus};
use spal_core::raster::{LabelMap, ProbMap, RgbImage, Segmentation};
use spal_core::sieve::{build_sieved_dataset, kneedle, sieve_superpixel, SieveConfig, SievedDataset, SievedRecord, Threshold};
use spal_core::superpixel::{grid_segmentation, slic, SlicConfig};
use spal_core::synth::{clustered_prob_map, ShapesConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn all_pass(checks: &[(bool, String)]) -> Outcome {
    let failed: Vec<&str> = checks.iter().filter(|c| !c.0).map(|c| c.1.as_str()).collect();
    if failed.is_empty() {
        let all: Vec<&str> = checks.iter().map(|c| c.1.as_str()).collect();
        outcome(true, all.join("; "))
    } else {
        outcome(false, format!("failed: {}", failed.join("; ")))
    }
}

fn random_sparse_seg(rng: &mut ChaCha8Rng, w: u32, h: u32, max_regions: u32) -> Segmentation {
    let ids: Vec<u32> = (0..w * h).map(|_| rng.random_range(0..max_regions)).collect();
    Segmentation::from_sparse(w, h, &ids).unwrap()
}

fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    let data: Vec<u8> = (0..w * h * 3).map(|_| rng.random()).collect();
    RgbImage::new(w, h, data).unwrap()
}

fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0f64).powi(2)).collect();
    let sum: f64 = raw.iter().sum::<f64>().max(1e-300);
    raw.iter().map(|v| v / sum).collect()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let s = if k % 2 == 0 {
            let (w, h) = (rng.random_range(4..40), rng.random_range(4..40));
            let regions = rng.random_range(1..30);
            random_sparse_seg(&mut rng, w, h, regions)
        } else {
            slic(&random_image(&mut rng, 32, 32), &SlicConfig { target_region_size: 16, ..Default::default() }).unwrap()
        };
        let m = achievable_metrics(&s, &s, None).unwrap();
        for v in m.values() {
            worst = worst.max((v - 1.0).abs());
        }
    }
    outcome(worst <= 1e-12, format!("50 segmentations, max |metric - 1| = {worst:.1e}"))
}

/// Best match by a double loop over region pairs, counting pixels each time.
fn naive_direction(a: &Segmentation, b: &Segmentation) -> [f64; 4] {
    let (ia, ib) = (a.region_ids(), b.region_ids());
    let size = |ids: &[u32], r: u32| ids.iter().filter(|&&x| x == r).count() as f64;
    let (mut ov, mut px, mut p, mut r, mut f) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for s in 0..a.num_regions() {
        let mut best = (0u32, 0usize);
        for g in 0..b.num_regions() {
            let n = (0..ia.len()).filter(|&i| ia[i] == s && ib[i] == g).count();
            if n > best.1 {
                best = (g, n);
            }
        }
        let (ss, gs, o) = (size(ia, s), size(ib, best.0), best.1 as f64);
        ov += o;
        px += ss;
        p += o / ss;
        r += o / gs;
        f += 2.0 * o / (ss + gs);
    }
    let n = a.num_regions() as f64;
    [ov / px, p / n, r / n, f / n]
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (rs, rg) = (rng.random_range(1..20), rng.random_range(1..20));
        let s = random_sparse_seg(&mut rng, 8, 8, rs);
        let g = random_sparse_seg(&mut rng, 8, 8, rg);
        let m = achievable_metrics(&s, &g, None).unwrap();
        let fwd = naive_direction(&s, &g);
        let bwd = naive_direction(&g, &s);
        let expected = [fwd[0], fwd[1], fwd[2], fwd[3], bwd[0], bwd[1], bwd[2], bwd[3]];
        for (v, e) in m.values().iter().zip(expected) {
            worst = worst.max((v - e).abs());
        }
    }
    outcome(worst <= 1e-12, format!("200 random 8x8 pairs, max deviation {worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut asym, mut self_d, mut disjoint_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut triangle_violations = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(2..9);
        let (p, q, r) = (random_dist(&mut rng, n), random_dist(&mut rng, n), random_dist(&mut rng, n));
        let pq = js_distance(&p, &q).unwrap();
        asym = asym.max((pq - js_distance(&q, &p).unwrap()).abs());
        self_d = self_d.max(js_distance(&p, &p).unwrap());
        let pr = js_distance(&p, &r).unwrap();
        let qr = js_distance(&q, &r).unwrap();
        if pr > pq + qr + 1e-12 {
            triangle_violations += 1;
        }
    }
    for _ in 0..1000 {
        let n = rng.random_range(2..9);
        let split = rng.random_range(1..n);
        let mut p = random_dist(&mut rng, split);
        p.resize(n, 0.0);
        let mut q = vec![0.0; split];
        q.extend(random_dist(&mut rng, n - split));
        disjoint_err = disjoint_err.max((js_distance(&p, &q).unwrap() - 2f64.ln().sqrt()).abs());
    }
    all_pass(&[
        (asym <= 1e-12, format!("symmetry {asym:.1e}")),
        (self_d <= 1e-12, format!("d(p,p) {self_d:.1e}")),
        (disjoint_err <= 1e-9, format!("disjoint vs sqrt(ln 2) {disjoint_err:.1e}")),
        (triangle_violations == 0, format!("{triangle_violations} triangle violations in 10000 triples")),
    ])
}

/// Whether two segmentations induce the same partition of pixels.
fn same_partition(a: &Segmentation, b: &Segmentation) -> bool {
    if a.num_regions() != b.num_regions() {
        return false;
    }
    let mut map: HashMap<u32, u32> = HashMap::new();
    a.region_ids()
        .iter()
        .zip(b.region_ids())
        .all(|(&x, &y)| *map.entry(x).or_insert(y) == y)
}

fn distance(c: MergeCriterion, p: &[f64], q: &[f64]) -> f64 {
    match c {
        MergeCriterion::JensenShannon => js_distance(p, q).unwrap(),
        MergeCriterion::Euclidean => euclidean_distance(p, q).unwrap(),
    }
}

fn merge_instance(rng: &mut ChaCha8Rng, size: u32) -> (Segmentation, ProbMap) {
    let seg = if rng.random_bool(0.5) {
        grid_segmentation(size, size, rng.random_range(1..5)).unwrap()
    } else {
        slic(&random_image(rng, size, size), &SlicConfig { target_region_size: 8, ..Default::default() }).unwrap()
    };
    let probs = clustered_prob_map(&seg, 4, rng.random_range(1..5), rng.random_range(0.01..0.3), rng.random());
    (seg, probs)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shapes = shapes_samples(&ShapesConfig::default(), 44, 0, 5);

    let mut identity_ok = true;
    for _ in 0..50 {
        let (seg, probs) = merge_instance(&mut rng, 16);
        let cfg = MergeConfig { epsilon: 0.0, ..Default::default() };
        identity_ok &= same_partition(&adaptive_merge(&seg, &probs, &cfg).unwrap(), &seg);
    }

    let mut single_ok = true;
    for (k, s) in shapes.iter().enumerate() {
        let seg = slic(&s.image, &SlicConfig::default()).unwrap();
        let probs = clustered_prob_map(&seg, 4, 4, 0.2, k as u64);
        let cfg = MergeConfig { epsilon: 0.9, merge_fraction: 1.0, criterion: MergeCriterion::JensenShannon };
        single_ok &= adaptive_merge(&seg, &probs, &cfg).unwrap().num_regions() == 1;
    }

    let (mut root_viol, mut pair_viol, mut events) = (0usize, 0usize, 0usize);
    for k in 0..200 {
        let (seg, probs) = merge_instance(&mut rng, 16);
        let criterion = if k % 2 == 0 { MergeCriterion::JensenShannon } else { MergeCriterion::Euclidean };
        let cfg = MergeConfig {
            epsilon: [0.05, 0.1, 0.2, 0.3][k % 4],
            merge_fraction: rng.random_range(0.2..=1.0),
            criterion,
        };
        let stats = region_stats(&seg, &probs).unwrap();
        let graph = build_region_graph(&seg);
        let out = merge_with_stats(&seg, &graph, &stats, &cfg, Exploration::BreadthFirst).unwrap();
        for e in &out.events {
            events += 1;
            let d = distance(criterion, &stats[e.root as usize].mean_prob, &stats[e.absorbed as usize].mean_prob);
            root_viol += usize::from(d >= cfg.epsilon);
        }
        let mut groups: HashMap<u32, Vec<usize>> = HashMap::new();
        for (r, &g) in out.assignment.iter().enumerate() {
            groups.entry(g).or_default().push(r);
        }
        for members in groups.values() {
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    let d = distance(criterion, &stats[a].mean_prob, &stats[b].mean_prob);
                    pair_viol += usize::from(d > 2.0 * cfg.epsilon + 1e-12);
                }
            }
        }
    }

    let mut order_ok = true;
    for k in 0..100 {
        let (seg, probs) = merge_instance(&mut rng, 16);
        let cfg = MergeConfig {
            epsilon: rng.random_range(0.0..0.5),
            merge_fraction: rng.random_range(0.1..=1.0),
            criterion: if k % 2 == 0 { MergeCriterion::JensenShannon } else { MergeCriterion::Euclidean },
        };
        let bfs = adaptive_merge_detailed(&seg, &probs, &cfg, Exploration::BreadthFirst).unwrap();
        let dfs = adaptive_merge_detailed(&seg, &probs, &cfg, Exploration::DepthFirst).unwrap();
        order_ok &= bfs.assignment == dfs.assignment && bfs.segmentation == dfs.segmentation;
    }

    all_pass(&[
        (identity_ok, "(a) eps=0 identity on 50 instances".into()),
        (single_ok, "(b) eps=0.9 gives one region on 5 shapes images".into()),
        (
            root_viol == 0 && pair_viol == 0,
            format!("(c) {events} merge events, {root_viol} root and {pair_viol} pair violations"),
        ),
        (order_ok, "(d) BFS and DFS agree on 100 instances".into()),
    ])
}

fn loop_settings(seed: u64, strategy: Strategy, rounds: u32) -> LoopSettings {
    LoopSettings {
        strategy,
        seed,
        rounds,
        budget: 40,
        base: BaseSegmentation::Slic(SlicConfig::default()),
        ..Default::default()
    }
}

fn criterion_5() -> Outcome {
    let eps = [0.05, 0.10, 0.15];
    let criteria = [MergeCriterion::JensenShannon, MergeCriterion::Euclidean];
    let mut mean = [[0.0f64; 2]; 3];
    for seed in 0..5u64 {
        let samples = shapes_samples(&ShapesConfig::default(), 100 + seed, 0, 20);
        let mut learner = ActiveLearner::new(loop_settings(seed, Strategy::AmspS, 0), samples.clone(), None).unwrap();
        learner.run_to_completion().unwrap();
        let probs = learner.predict_all().unwrap();
        for (k, &e) in eps.iter().enumerate() {
            for (c, &criterion) in criteria.iter().enumerate() {
                let cfg = MergeConfig { epsilon: e, merge_fraction: 1.0, criterion };
                let (mut correct, mut total) = (0u64, 0u64);
                for ((img, s), p) in learner.images().iter().zip(&samples).zip(&probs) {
                    let out = adaptive_merge_detailed(&img.base, p, &cfg, Exploration::BreadthFirst).unwrap();
                    let (a, b) = merge_correctness_counts(&out.events, &img.base, &s.labels).unwrap();
                    correct += a;
                    total += b;
                }
                mean[k][c] += correct as f64 / total.max(1) as f64 / 5.0;
            }
        }
    }
    let js_beats_ed = mean.iter().all(|m| m[0] >= m[1]);
    let trend = |c: usize| (1..3).all(|k| mean[k][c] <= mean[k - 1][c] + 0.01);
    let table: Vec<String> = eps
        .iter()
        .zip(&mean)
        .map(|(e, m)| format!("eps {e:.2}: JS {:.3} ED {:.3}", m[0], m[1]))
        .collect();
    all_pass(&[
        (js_beats_ed, format!("(a) {}", table.join(", "))),
        (trend(0) && trend(1), "(b) correctness non-increasing in eps".into()),
    ])
}

fn criterion_6() -> Outcome {
    let ys: Vec<f64> = (0..101).map(|i| (i as f64 / 100.0).sqrt()).collect();
    let knee = kneedle(&ys).unwrap();
    let knee_ok = knee.is_some_and(|k| (24..=26).contains(&k));

    let flat = ProbMap::from_pixels(50, 1, 2, &vec![vec![0.7f32, 0.3]; 50]).unwrap();
    let pixels: Vec<u32> = (0..50).collect();
    let flat_res = sieve_superpixel(&pixels, 0, &flat, &SieveConfig::default()).unwrap();
    let flat_ok = flat_res.threshold == Threshold::KeepAll && flat_res.kept_pixels == pixels;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut kept_ok = true;
    let mut pure_ok = true;
    for trial in 0..500 {
        let n = rng.random_range(1..200u32);
        let conf: Vec<Vec<f32>> = (0..n)
            .map(|_| {
                let a = rng.random_range(0.0..1.0f32);
                vec![a, 1.0 - a]
            })
            .collect();
        let probs = ProbMap::from_pixels(n, 1, 2, &conf).unwrap();
        let mut region: Vec<u32> = (0..n).filter(|_| rng.random_bool(0.7)).collect();
        if region.is_empty() {
            region.push(0);
        }
        let dominant = (trial % 2) as u16;
        let res = sieve_superpixel(&region, dominant, &probs, &SieveConfig::default()).unwrap();
        kept_ok &= !res.kept_pixels.is_empty() && res.kept_pixels.iter().all(|p| region.contains(p));
        let query = QueryRecord {
            query_id: trial,
            image_id: 0,
            round: 1,
            pixels: region,
            status: QueryStatus::Answered { class_id: dominant },
        };
        let ds = build_sieved_dataset(&[query], |_| Some(&probs), Some(&SieveConfig::default())).unwrap();
        pure_ok &= !ds.is_empty() && ds.records.iter().all(|r| r.class_id == dominant);
    }
    all_pass(&[
        (knee_ok, format!("sqrt knee at {knee:?}")),
        (flat_ok, "flat curve keeps all".into()),
        (kept_ok && pure_ok, "500 random regions: kept set non-empty, labels pure".into()),
    ])
}

fn noise_fraction(ds: &SievedDataset, samples: &[ImageSample]) -> f64 {
    let by_id: HashMap<u32, &LabelMap> = samples.iter().map(|s| (s.id, &s.labels)).collect();
    let (mut wrong, mut total) = (0usize, 0usize);
    for r in &ds.records {
        let gt = by_id[&r.image_id];
        if gt.is_ignored(r.pixel as usize) {
            continue;
        }
        total += 1;
        wrong += usize::from(gt.get(r.pixel as usize) != r.class_id);
    }
    wrong as f64 / total.max(1) as f64
}

fn criterion_7() -> Outcome {
    let spec = FeatureSpec::default();
    let mut lines = Vec::new();
    let mut all_reduced = true;
    for seed in 0..5u64 {
        let samples = shapes_samples(&ShapesConfig::default(), 300 + seed, 0, 8);
        let features: Vec<_> = samples.iter().map(|s| spec.extract(&s.image)).collect();
        let dense: Vec<SievedRecord> = samples
            .iter()
            .flat_map(|s| {
                (0..s.labels.len())
                    .filter(|&p| !s.labels.is_ignored(p))
                    .map(move |p| SievedRecord { image_id: s.id, pixel: p as u32, class_id: s.labels.get(p) })
            })
            .collect();
        let dense = SievedDataset::from_records(dense).unwrap();
        let cfg = TrainConfig { epochs: 10, seed, ..Default::default() };
        let model = train(&dense, |id| features.get(id as usize), spec.dim(), 4, &cfg).unwrap().params;
        let probs: Vec<ProbMap> = samples
            .iter()
            .zip(&features)
            .map(|(s, f)| predict(&model, f, s.image.width(), s.image.height()).unwrap())
            .collect();

        let mut queries = Vec::new();
        for s in &samples {
            let grid = grid_segmentation(s.image.width(), s.image.height(), 12).unwrap();
            for pixels in grid.region_pixels() {
                let mut classes: Vec<u16> =
                    pixels.iter().filter(|&&p| !s.labels.is_ignored(p as usize)).map(|&p| s.labels.get(p as usize)).collect();
                classes.sort_unstable();
                classes.dedup();
                if classes.len() < 2 {
                    continue;
                }
                let dominant = answer_query(&pixels, &s.labels).unwrap().dominant;
                queries.push(QueryRecord {
                    query_id: queries.len() as u64,
                    image_id: s.id,
                    round: 1,
                    pixels,
                    status: QueryStatus::Answered { class_id: dominant },
                });
            }
        }
        let lookup = |id: u32| probs.get(id as usize);
        let raw = build_sieved_dataset(&queries, lookup, None).unwrap();
        let sieved = build_sieved_dataset(&queries, lookup, Some(&SieveConfig::default())).unwrap();
        let (before, after) = (noise_fraction(&raw, &samples), noise_fraction(&sieved, &samples));
        all_reduced &= after < before;
        lines.push(format!("seed {seed}: {} regions, noise {before:.3} -> {after:.3}", queries.len()));
    }
    outcome(all_reduced, lines.join("; "))
}

fn run_loop(seed: u64, strategy: Strategy) -> (f64, Vec<u8>) {
    let cfg = ShapesConfig::default();
    let train = shapes_samples(&cfg, 100 + seed, 0, 20);
    let val = shapes_samples(&cfg, 100 + seed, 1000, 10);
    let mut learner = ActiveLearner::new(loop_settings(seed, strategy, 3), train, None).unwrap();
    learner.run_to_completion().unwrap();
    (learner.evaluate(&val).unwrap(), learner.model().unwrap().to_bytes())
}

fn criterion_8() -> Outcome {
    let (mut full, mut random) = (0.0, 0.0);
    let mut per_seed = Vec::new();
    for seed in 0..5u64 {
        let (a, _) = run_loop(seed, Strategy::AmspS);
        let (r, _) = run_loop(seed, Strategy::Random);
        full += a / 5.0;
        random += r / 5.0;
        per_seed.push(format!("{a:.3}/{r:.3}"));
    }
    let (_, first) = run_loop(7, Strategy::AmspS);
    let (_, second) = run_loop(7, Strategy::AmspS);
    all_pass(&[
        (
            full >= random - 0.02,
            format!("mean mIoU AMSP+S {full:.3} vs random {random:.3} (per seed {})", per_seed.join(" ")),
        ),
        (first == second, "same seed gives identical model bytes".into()),
    ])
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (dim, classes) = (6usize, 4usize);
    let rows: Vec<Vec<f32>> = (0..50)
        .map(|_| {
            let mut r: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            r.push(1.0);
            r
        })
        .collect();
    let labels: Vec<u16> = (0..50).map(|_| rng.random_range(0..classes as u16)).collect();
    let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let w: Vec<f64> = (0..(dim + 1) * classes).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, grad) = loss_and_gradient(&w, &refs, &labels, classes);
        let k = rng.random_range(0..w.len());
        let h = 1e-5;
        let (mut plus, mut minus) = (w.clone(), w.clone());
        plus[k] += h;
        minus[k] -= h;
        let numeric = (loss_and_gradient(&plus, &refs, &labels, classes).0
            - loss_and_gradient(&minus, &refs, &labels, classes).0)
            / (2.0 * h);
        worst = worst.max((numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-8));
    }
    let mut norm_err: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..20);
        let scale = [1.0, 100.0, 1000.0][rng.random_range(0..3)];
        let mut logits: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        softmax(&mut logits);
        norm_err = norm_err.max((logits.iter().sum::<f64>() - 1.0).abs());
    }
    let img = random_image(&mut rng, 16, 16);
    let spec = FeatureSpec::default();
    let mut model = spal_core::model::ModelParams::zeros(spec.dim() as u32, 5);
    model.weights.iter_mut().for_each(|w| *w = rng.random_range(-50.0..50.0));
    let probs = predict(&model, &spec.extract(&img), 16, 16).unwrap();
    for p in 0..probs.len() {
        norm_err = norm_err.max((probs.pixel(p).iter().sum::<f64>() - 1.0).abs());
    }
    all_pass(&[
        (worst <= 1e-4, format!("gradient rel. error {worst:.1e} over 100 probes")),
        (norm_err <= 1e-6, format!("softmax normalization error {norm_err:.1e}")),
    ])
}

/// Components by explicit flood fill with a queue.
fn flood_fill_count(labels: &[u16], w: usize, h: usize) -> usize {
    let mut seen = vec![false; labels.len()];
    let mut count = 0;
    for start in 0..labels.len() {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % w, p / w);
            let mut next = Vec::new();
            if x > 0 {
                next.push(p - 1);
            }
            if x + 1 < w {
                next.push(p + 1);
            }
            if y > 0 {
                next.push(p - w);
            }
            if y + 1 < h {
                next.push(p + w);
            }
            for q in next {
                if !seen[q] && labels[q] == labels[p] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    count
}

fn label_map(rows: &[&str]) -> LabelMap {
    let w = rows[0].len() as u32;
    let data: Vec<u16> = rows
        .iter()
        .flat_map(|r| r.bytes().map(|b| if b == b'x' { 255 } else { (b - b'0') as u16 }))
        .collect();
    LabelMap::new(w, rows.len() as u32, data, 4, 255).unwrap()
}

fn criterion_10() -> Outcome {
    // Two cars of class 1 apart from each other on road 0.
    let cars = label_map(&["00000000", "01100110", "01100110", "00000000"]);
    // A building (2) cut in two by a pole (3) spanning its full height.
    let building = label_map(&["22232222", "22232222", "22232222", "00030000"]);
    // Ignore pixels form their own flagged region.
    let ignored = label_map(&["00xx", "00xx", "1111"]);
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, gt, expected) in [("cars", &cars, 3usize), ("building", &building, 5), ("ignore", &ignored, 3)] {
        let o = oracle_superpixels(gt);
        let reference = flood_fill_count(gt.data(), gt.width() as usize, gt.height() as usize);
        ok &= o.segmentation.num_regions() as usize == reference && reference == expected;
        notes.push(format!("{name} {} components", o.segmentation.num_regions()));
    }
    let building_parts = oracle_superpixels(&building);
    let left = building_parts.segmentation.region_of(0);
    let right = building_parts.segmentation.region_of(7);
    ok &= left != right;
    ok &= oracle_superpixels(&ignored).ignored.iter().filter(|&&f| f).count() == 1;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..20), rng.random_range(1..20));
        let data: Vec<u16> = (0..w * h).map(|_| rng.random_range(0..3)).collect();
        let gt = LabelMap::new(w, h, data.clone(), 4, 255).unwrap();
        ok &= oracle_superpixels(&gt).segmentation.num_regions() as usize == flood_fill_count(&data, w as usize, h as usize);
    }
    notes.push("200 random maps match flood fill".into());
    outcome(ok, notes.join(", "))
}

fn spal(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_spal")).args(args).output().expect("run spal");
    assert!(out.status.success(), "spal {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn criterion_11(tmp: &Path) -> Outcome {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let ys = [2.0, 4.0, 5.0, 4.0, 5.0];
    // sxy = 6, sxx = 10, syy = 6
    let hand = 6.0 / (10.0f64 * 6.0).sqrt();
    let r1 = pearson_correlation(&xs, &ys).unwrap();
    let r2 = pearson_correlation(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap();
    let hand_ok = (r1 - hand).abs() <= 1e-12 && (r2 + 0.5).abs() <= 1e-12;

    let (mut af_gs, mut asa_sg) = (0.0, 0.0);
    let mut ranks = Vec::new();
    for seed in 200..205u64 {
        let csv = tmp.join(format!("sweep_{seed}.csv"));
        let csv = csv.to_str().unwrap();
        spal(&["sweep", "--seed", &seed.to_string(), "--budget", "40", "-o", csv]);
        let out = spal(&["correlate", "--input", csv]);
        let ranked: Vec<(String, f64)> = out
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].to_string(), f[1].parse().unwrap())
            })
            .collect();
        let get = |m: &str| ranked.iter().find(|r| r.0 == m).unwrap().1;
        af_gs += get("af_gs") / 5.0;
        asa_sg += get("asa_sg") / 5.0;
        let pos = |m: &str| ranked.iter().position(|r| r.0 == m).unwrap() + 1;
        ranks.push(format!("{}/{}", pos("af_gs"), pos("asa_sg")));
    }
    all_pass(&[
        (hand_ok, format!("hand-computed Pearson {r1:.12}, {r2:.12}")),
        (
            af_gs > asa_sg,
            format!("mean corr af_gs {af_gs:.3} vs asa_sg {asa_sg:.3}, ranks af_gs/asa_sg {}", ranks.join(" ")),
        ),
    ])
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let criteria: Vec<(u32, &str, Option<Duration>, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "metric identity", Some(Duration::from_secs(5)), Box::new(criterion_1)),
        (2, "metric oracle equivalence", Some(Duration::from_secs(10)), Box::new(criterion_2)),
        (3, "JS distance contract", Some(Duration::from_secs(5)), Box::new(criterion_3)),
        (4, "merge contracts", Some(Duration::from_secs(30)), Box::new(criterion_4)),
        (5, "merge correctness trends", Some(Duration::from_secs(120)), Box::new(criterion_5)),
        (6, "kneedle", Some(Duration::from_secs(1)), Box::new(criterion_6)),
        (7, "sieving reduces label noise", Some(Duration::from_secs(60)), Box::new(criterion_7)),
        (8, "end-to-end loop", Some(Duration::from_secs(120)), Box::new(criterion_8)),
        (9, "trainer numerics", Some(Duration::from_secs(5)), Box::new(criterion_9)),
        (10, "oracle superpixels", Some(Duration::from_secs(1)), Box::new(criterion_10)),
        (11, "correlation utility", None, Box::new(move || criterion_11(tmp.path()))),
    ];
    let mut failed = 0;
    for (n, name, limit, run) in &criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let pass = result.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "criterion {n:>2} {} {name}: {} [{:.2}s{}{}]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            limit.map_or(String::new(), |l| format!(", limit {}s", l.as_secs())),
            if in_time { "" } else { ", over time" }
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
