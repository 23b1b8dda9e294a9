//! One-shot subcommands operating on files.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use spal_core::acquisition::{acquisition_score, class_popularity, rank_candidates, Candidate, LabeledPixels};
use spal_core::config::{BaseSegmentation, LoopSettings};
use spal_core::dataset::{write_shapes_dataset, Dataset, DatasetEntry, ImageSample, Split};
use spal_core::learner::RunSnapshot;
use spal_core::merge::{adaptive_merge_detailed, region_stats, Exploration, MergeConfig, MergeCriterion};
use spal_core::metrics::{pearson_correlation, AchievableMetrics, MetricAccumulator, OverlapTable};
use spal_core::model::{predict, train, FeatureSpec, ModelParams, TrainConfig, TrainWarning};
use spal_core::oracle::oracle_superpixels;
use spal_core::overlay::draw_boundaries;
use spal_core::query::QueryRecord;
use spal_core::raster::{
    load_label_map, load_prob_map, load_rgb, load_segmentation, save_prob_map, save_rgb, save_segmentation,
    ProbMap, Segmentation,
};
use spal_core::sieve::{build_sieved_dataset, SieveConfig, SievedDataset};
use spal_core::store::ArtifactStore;
use spal_core::superpixel::SlicConfig;
use spal_core::sweep::{default_sweep_configs, long_rows, run_sweep};
use spal_core::synth::ShapesConfig;

use crate::cli::*;

fn entries(ds: &Dataset, split: SplitArg) -> Vec<&DatasetEntry> {
    ds.images
        .iter()
        .filter(|e| match split {
            SplitArg::All => true,
            SplitArg::Train => e.split == Split::Train,
            SplitArg::Val => e.split == Split::Val,
        })
        .collect()
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .with_context(|| format!("no file name in {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Files in `dir` with extension `ext`, sorted by name.
fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let cfg = ShapesConfig {
        width: args.size,
        height: args.size,
        ..Default::default()
    };
    let manifest = write_shapes_dataset(&args.out, &cfg, args.seed, args.train, args.val)?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn base_segmentation(algo: AlgoArg, size: u32, compactness: f64, iters: u32) -> BaseSegmentation {
    match algo {
        AlgoArg::Slic => BaseSegmentation::Slic(SlicConfig {
            target_region_size: size,
            compactness,
            iterations: iters,
        }),
        AlgoArg::Grid => BaseSegmentation::Grid { cell: size },
    }
}

pub fn segment(args: &SegmentArgs) -> Result<()> {
    let base = base_segmentation(args.algo, args.size, args.compactness, args.iters);
    if let Some(path) = &args.image {
        let image = load_rgb(path)?;
        let seg = base.segment(&image)?;
        save_segmentation(&seg, &args.out)?;
        if let Some(overlay) = &args.overlay {
            save_rgb(&draw_boundaries(&image, &seg, [255, 230, 0])?, overlay)?;
        }
        println!("{}: {} regions", path.display(), seg.num_regions());
        return Ok(());
    }
    let manifest = args.dataset.as_ref().expect("clap enforces --dataset or --image");
    let ds = Dataset::load(manifest)?;
    create_dir(&args.out)?;
    let mut total = 0u64;
    let list = entries(&ds, args.split);
    for e in &list {
        let image = load_rgb(&ds.resolve(&e.image))?;
        let seg = base.segment(&image)?;
        total += seg.num_regions() as u64;
        save_segmentation(&seg, &args.out.join(format!("{}.seg", stem(&e.image)?)))?;
    }
    println!(
        "segmented {} images, {:.1} regions per image",
        list.len(),
        total as f64 / list.len().max(1) as f64
    );
    Ok(())
}

pub fn merge(args: &MergeArgs) -> Result<()> {
    let probs = load_prob_map(&args.probs)?;
    let seg = load_segmentation(&args.seg, Some((probs.width(), probs.height())))?;
    let cfg = MergeConfig {
        epsilon: args.epsilon,
        merge_fraction: args.fraction,
        criterion: match args.criterion {
            CriterionArg::Js => MergeCriterion::JensenShannon,
            CriterionArg::Euclidean => MergeCriterion::Euclidean,
        },
    };
    cfg.validate()?;
    let outcome = adaptive_merge_detailed(&seg, &probs, &cfg, Exploration::BreadthFirst)?;
    save_segmentation(&outcome.segmentation, &args.out)?;
    if let Some(path) = &args.events {
        write_json(path, &outcome.events)?;
    }
    println!(
        "{} -> {} regions ({} merges)",
        seg.num_regions(),
        outcome.segmentation.num_regions(),
        outcome.events.len()
    );
    Ok(())
}

#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct BatchEntry {
    pub image_id: u32,
    pub region_id: u32,
    pub pixel_count: u32,
    pub score: f64,
}

/// Ranks the regions of round `round` of a stored run, excluding any region
/// touching a pixel queried in an earlier round.
pub fn select_from_run(run: &Path, round: u32, budget: usize) -> Result<Vec<BatchEntry>> {
    if budget == 0 {
        bail!("budget must be >= 1");
    }
    let store = ArtifactStore::open(run)?;
    let snapshot = RunSnapshot::load(&store)?;
    let settings = &snapshot.settings;
    let mut ids: Vec<u32> = Vec::new();
    for path in files_with_ext(&store.root().join("base"), "seg")? {
        ids.push(stem(&path)?.parse().with_context(|| format!("image id of {}", path.display()))?);
    }
    ids.sort_unstable();
    let mut segs = Vec::with_capacity(ids.len());
    let mut stats = Vec::with_capacity(ids.len());
    for &id in &ids {
        let probs = store.load_probs(round, id)?;
        let dims = Some((probs.width(), probs.height()));
        let merged = store.merged_path(round, id);
        let seg = if merged.exists() {
            load_segmentation(&merged, dims)?
        } else {
            load_segmentation(&store.base_path(id), dims)?
        };
        stats.push(region_stats(&seg, &probs)?);
        segs.push(seg);
    }
    let pairs: Vec<(&Segmentation, &[_])> = segs.iter().zip(&stats).map(|(s, st)| (s, st.as_slice())).collect();
    let pop = class_popularity(&pairs, settings.num_classes)?;

    let mut labeled = LabeledPixels::new();
    let sizes: HashMap<u32, usize> = ids.iter().copied().zip(segs.iter().map(Segmentation::len)).collect();
    for q in snapshot.state.queries.iter().filter(|q| q.round < round) {
        labeled.mark(q.image_id, sizes.get(&q.image_id).copied().unwrap_or(0), &q.pixels);
    }
    let mut candidates = Vec::new();
    for ((&id, seg), st) in ids.iter().zip(&segs).zip(stats) {
        for (s, pixels) in st.into_iter().zip(seg.region_pixels()) {
            candidates.push(Candidate {
                image_id: id,
                region_id: s.region_id,
                score: acquisition_score(&s, &pop),
                stats: s,
                pixels,
            });
        }
    }
    Ok(rank_candidates(candidates, &labeled)
        .into_iter()
        .take(budget)
        .map(|c| BatchEntry {
            image_id: c.image_id,
            region_id: c.region_id,
            pixel_count: c.stats.pixel_count,
            score: c.score,
        })
        .collect())
}

pub fn select(args: &SelectArgs) -> Result<()> {
    let batch = select_from_run(&args.run, args.round, args.budget)?;
    match &args.out {
        Some(path) => {
            write_json(path, &batch)?;
            println!("selected {} regions", batch.len());
        }
        None => println!("{}", serde_json::to_string_pretty(&batch)?),
    }
    Ok(())
}

pub fn sieve(args: &SieveArgs) -> Result<()> {
    let mut queries: Vec<QueryRecord> = Vec::new();
    for path in &args.queries {
        queries.extend(read_json::<Vec<QueryRecord>>(path)?);
    }
    let cfg = SieveConfig {
        sample_count: args.sample_count,
        min_pixels_for_knee: args.min_pixels,
    };
    let mut probs: HashMap<u32, ProbMap> = HashMap::new();
    if let (false, Some(dir)) = (args.keep_all, &args.probs_dir) {
        for q in queries.iter().filter(|q| q.answer().is_some()) {
            if !probs.contains_key(&q.image_id) {
                let path = dir.join(format!("{}.ppf", q.image_id));
                probs.insert(q.image_id, load_prob_map(&path)?);
            }
        }
    }
    let sieve_cfg = (!args.keep_all).then_some(&cfg);
    let ds = build_sieved_dataset(&queries, |id| probs.get(&id), sieve_cfg)?;
    ds.save(&args.out)?;
    let region_pixels: usize = queries.iter().filter(|q| q.answer().is_some()).map(|q| q.pixels.len()).sum();
    println!(
        "kept {} of {} labeled pixels ({} distinct labels)",
        ds.len(),
        region_pixels,
        ds.num_distinct_labels()
    );
    Ok(())
}

fn label_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        files_with_ext(path, "png")
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

pub fn oracle(args: &OracleArgs) -> Result<()> {
    create_dir(&args.out)?;
    let inputs = label_inputs(&args.gt_dir)?;
    if inputs.is_empty() {
        bail!("no label PNGs in {}", args.gt_dir.display());
    }
    for path in &inputs {
        let gt = load_label_map(path, args.num_classes, args.ignore_id)?;
        let oracle = oracle_superpixels(&gt);
        let name = stem(path)?;
        save_segmentation(&oracle.segmentation, &args.out.join(format!("{name}.seg")))?;
        let ignored: Vec<u32> = (0..oracle.ignored.len() as u32)
            .filter(|&r| oracle.ignored[r as usize])
            .collect();
        write_json(&args.out.join(format!("{name}.ignored.json")), &ignored)?;
    }
    println!("wrote {} oracle segmentations", inputs.len());
    Ok(())
}

/// Pixel mask of the oracle regions listed in the sidecar next to `oracle`.
fn ignore_mask(oracle_path: &Path, oracle: &Segmentation) -> Result<Option<Vec<bool>>> {
    let sidecar = oracle_path.with_extension("ignored.json");
    if !sidecar.exists() {
        return Ok(None);
    }
    let ids: Vec<u32> = read_json(&sidecar)?;
    let mut flagged = vec![false; oracle.num_regions() as usize];
    for id in ids {
        if let Some(f) = flagged.get_mut(id as usize) {
            *f = true;
        }
    }
    Ok(Some(oracle.region_ids().iter().map(|&r| flagged[r as usize]).collect()))
}

fn evaluation_pairs(seg: &Path, oracle: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    match (seg.is_dir(), oracle.is_dir()) {
        (false, false) => Ok(vec![(stem(seg)?, seg.to_path_buf(), oracle.to_path_buf())]),
        (true, true) => {
            let mut pairs = Vec::new();
            for path in files_with_ext(seg, "seg")? {
                let name = stem(&path)?;
                let g = oracle.join(format!("{name}.seg"));
                if !g.exists() {
                    bail!("no oracle segmentation {}", g.display());
                }
                pairs.push((name, path, g));
            }
            if pairs.is_empty() {
                bail!("no .seg files in {}", seg.display());
            }
            Ok(pairs)
        }
        _ => bail!("--seg and --oracle must both be files or both be directories"),
    }
}

/// Rows of an evaluation report: per image, then pooled and mean.
pub fn evaluate_paths(seg: &Path, oracle: &Path) -> Result<Vec<(String, AchievableMetrics)>> {
    let mut rows = Vec::new();
    let mut pooled = MetricAccumulator::default();
    for (name, s_path, g_path) in evaluation_pairs(seg, oracle)? {
        let g = load_segmentation(&g_path, None)?;
        let s = load_segmentation(&s_path, Some((g.width(), g.height())))?;
        let mask = ignore_mask(&g_path, &g)?;
        let table = OverlapTable::new(&s, &g, mask.as_deref())?;
        pooled.add_table(&table);
        let mut one = MetricAccumulator::default();
        one.add_table(&table);
        let m = one.finish().with_context(|| format!("metrics for {name}"))?;
        rows.push((name, m));
    }
    let n = rows.len() as f64;
    let mut mean = [0.0; 8];
    for (_, m) in &rows {
        for (acc, v) in mean.iter_mut().zip(m.values()) {
            *acc += v / n;
        }
    }
    let pooled = pooled.finish()?;
    rows.push(("pooled".into(), pooled));
    rows.push(("mean".into(), metrics_from_values(mean)));
    Ok(rows)
}

fn metrics_from_values(v: [f64; 8]) -> AchievableMetrics {
    use spal_core::metrics::DirectionalMetrics;
    AchievableMetrics {
        sg: DirectionalMetrics {
            asa: v[0],
            ap: v[1],
            ar: v[2],
            af: v[3],
        },
        gs: DirectionalMetrics {
            asa: v[4],
            ap: v[5],
            ar: v[6],
            af: v[7],
        },
    }
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let rows = evaluate_paths(&args.seg, &args.oracle)?;
    let mut w = csv::Writer::from_path(&args.report).with_context(|| format!("writing {}", args.report.display()))?;
    let mut header = vec!["image".to_string()];
    header.extend(AchievableMetrics::NAMES.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (name, m) in &rows {
        let mut rec = vec![name.clone()];
        rec.extend(m.values().iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let (_, pooled) = &rows[rows.len() - 2];
    for (name, v) in AchievableMetrics::NAMES.iter().zip(pooled.values()) {
        println!("{name:>7} {v:.4}");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation {
    pub metric: String,
    pub pearson: f64,
    pub n: usize,
}

/// Pearson correlation of each metric's values with the score column,
/// highest first. Rows are `(metric, metric_value, score)`.
pub fn correlate_rows(rows: &[(String, f64, f64)]) -> Result<Vec<Correlation>> {
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (metric, value, score) in rows {
        let g = groups.entry(metric).or_default();
        g.0.push(*value);
        g.1.push(*score);
    }
    let mut out = Vec::new();
    for (metric, (xs, ys)) in groups {
        let pearson = pearson_correlation(&xs, &ys).with_context(|| format!("correlating {metric}"))?;
        out.push(Correlation {
            metric: metric.to_string(),
            pearson,
            n: xs.len(),
        });
    }
    out.sort_by(|a, b| b.pearson.total_cmp(&a.pearson).then_with(|| a.metric.cmp(&b.metric)));
    Ok(out)
}

pub fn read_long_csv(path: &Path) -> Result<Vec<(String, f64, f64)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() < 3 {
            bail!("line {}: expected metric,metric_value,score", i + 2);
        }
        let value: f64 = rec[1].trim().parse().with_context(|| format!("line {}: metric_value", i + 2))?;
        let score: f64 = rec[2].trim().parse().with_context(|| format!("line {}: score", i + 2))?;
        rows.push((rec[0].trim().to_string(), value, score));
    }
    Ok(rows)
}

pub fn correlate(args: &CorrelateArgs) -> Result<()> {
    let ranked = correlate_rows(&read_long_csv(&args.input)?)?;
    if let Some(path) = &args.out {
        let mut w = csv::Writer::from_path(path)?;
        for c in &ranked {
            w.serialize(c)?;
        }
        w.flush()?;
    }
    println!("metric,pearson,n");
    for c in &ranked {
        println!("{},{:.6},{}", c.metric, c.pearson, c.n);
    }
    Ok(())
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let ds = Dataset::load(&args.dataset)?;
    let sieved = SievedDataset::load(&args.sieved)?;
    let spec = FeatureSpec::default();
    let mut features = HashMap::new();
    for r in &sieved.records {
        if features.contains_key(&r.image_id) {
            continue;
        }
        let e = ds
            .images
            .iter()
            .find(|e| e.id == r.image_id)
            .with_context(|| format!("image {} not in {}", r.image_id, args.dataset.display()))?;
        features.insert(r.image_id, spec.extract(&load_rgb(&ds.resolve(&e.image))?));
    }
    let cfg = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
    };
    let outcome = train(&sieved, |id| features.get(&id), spec.dim(), args.num_classes, &cfg)?;
    if outcome.warning == Some(TrainWarning::SingleClass) {
        eprintln!("warning: training labels contain a single class");
    }
    outcome.params.save(&args.out)?;
    println!(
        "trained on {} pixels, final loss {:.4}",
        sieved.len(),
        outcome.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn predict_cmd(args: &PredictArgs) -> Result<()> {
    let model = ModelParams::load(&args.model)?;
    let spec = FeatureSpec::default();
    if spec.dim() != model.feature_dim as usize {
        bail!("model expects {} features, extractor gives {}", model.feature_dim, spec.dim());
    }
    let run = |path: &Path| -> Result<ProbMap> {
        let image = load_rgb(path)?;
        Ok(predict(&model, &spec.extract(&image), image.width(), image.height())?)
    };
    if let Some(path) = &args.image {
        save_prob_map(&run(path)?, &args.out)?;
        return Ok(());
    }
    let manifest = args.dataset.as_ref().expect("clap enforces --dataset or --image");
    let ds = Dataset::load(manifest)?;
    create_dir(&args.out)?;
    let classes = model.num_classes as u16;
    let mut counts = spal_core::metrics::IouCounts::new(classes);
    let list = entries(&ds, args.split);
    for e in &list {
        let probs = run(&ds.resolve(&e.image))?;
        save_prob_map(&probs, &args.out.join(format!("{}.ppf", stem(&e.image)?)))?;
        let gt = load_label_map(&ds.resolve(&e.labels), classes, args.ignore_id)?;
        counts.add(&probs.argmax_map(args.ignore_id), &gt)?;
    }
    println!("predicted {} images, mIoU {:.4}", list.len(), counts.miou()?);
    Ok(())
}

fn sweep_data(args: &SweepArgs) -> Result<(Vec<ImageSample>, Vec<ImageSample>)> {
    match &args.dataset {
        Some(path) => {
            let ds = Dataset::load(path)?;
            Ok((
                ds.load_split(Split::Train, args.num_classes, 255)?,
                ds.load_split(Split::Val, args.num_classes, 255)?,
            ))
        }
        None => {
            let cfg = ShapesConfig {
                width: args.size,
                height: args.size,
                ..Default::default()
            };
            let all = spal_core::dataset::shapes_samples(&cfg, args.seed, 0, args.train + args.val);
            let (train, val) = all.split_at(args.train as usize);
            Ok((train.to_vec(), val.to_vec()))
        }
    }
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let (train, val) = sweep_data(args)?;
    if train.is_empty() || val.is_empty() {
        bail!("sweep needs training and validation images");
    }
    let defaults = LoopSettings::default();
    let template = LoopSettings {
        num_classes: args.num_classes,
        class_names: if args.num_classes == defaults.num_classes {
            defaults.class_names.clone()
        } else {
            Vec::new()
        },
        seed: args.seed,
        ..defaults
    };
    let rows = run_sweep(&train, &val, &default_sweep_configs(), &template, args.budget)?;
    let mut w = csv::Writer::from_path(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    w.write_record(["metric", "metric_value", "score", "config"])?;
    for (metric, value, score, config) in long_rows(&rows) {
        w.write_record([metric, format!("{value:.6}"), format!("{score:.6}"), config])?;
    }
    w.flush()?;
    for r in &rows {
        println!(
            "{:>10}  asa_sg {:.3}  af_gs {:.3}  miou {:.3}",
            r.config, r.metrics.sg.asa, r.metrics.gs.af, r.miou
        );
    }
    Ok(())
}
