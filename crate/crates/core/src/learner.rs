//! The active learning loop.
//!
//! Round 0 queries uniformly random base superpixels and trains the first
//! model on the unsieved answers. Every later round predicts with the
//! previous model, merges base superpixels (holding already-queried ones
//! out of merging unless disabled), ranks the merged regions by the
//! acquisition score, queries the top of the ranking, re-sieves every answer
//! so far with the previous model and trains a fresh model on the result.
//!
//! A round is split into `begin_round` (selection), answers arriving through
//! [`ActiveLearner::answer`] / [`ActiveLearner::skip`], and `finish_round`
//! (sieving and training), so a human annotator can sit in the middle.

use std::collections::{HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{acquisition_score, class_popularity, rank_candidates, Candidate, LabeledPixels};
use crate::config::LoopSettings;
use crate::dataset::{Dataset, ImageSample, Split};
use crate::error::{Error, Result};
use crate::merge::{adaptive_merge, adaptive_merge_locked, region_stats};
use crate::metrics::IouCounts;
use crate::model::{predict, train, FeatureMatrix, ModelParams, TrainConfig, TrainWarning};
use crate::oracle::answer_query;
use crate::par_map;
use crate::query::{QueryRecord, QueryStatus};
use crate::raster::{LabelMap, ProbMap, RgbImage, Segmentation};
use crate::sieve::{build_sieved_dataset, SievedDataset};
use crate::store::ArtifactStore;

const STREAM_WARMUP: u64 = 1;
const STREAM_SELECT: u64 = 2;
const STREAM_TRAIN: u64 = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG seed per (run seed, round, purpose).
pub fn stream_seed(seed: u64, round: u32, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64((round as u64) << 8 | stream))
}

/// A training image with its precomputed base segmentation and features.
#[derive(Clone, Debug)]
pub struct LoopImage {
    pub id: u32,
    pub image: RgbImage,
    /// Ground truth, required only by the simulated oracle.
    pub labels: Option<LabelMap>,
    pub base: Segmentation,
    pub features: FeatureMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Waiting to select the batch of `round`.
    Ready,
    /// Batch selected; answers outstanding.
    Querying,
    Finished,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefillCandidate {
    pub image_id: u32,
    pub pixels: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    pub round: u32,
    pub phase: Phase,
    pub queries: Vec<QueryRecord>,
    /// Ranked candidates left over from the current selection, used to
    /// replace skipped queries.
    pub refill: VecDeque<RefillCandidate>,
    pub next_query_id: u64,
}

impl LoopState {
    pub fn clicks(&self) -> u64 {
        self.queries.iter().map(|q| q.clicks() as u64).sum()
    }

    pub fn pending(&self) -> impl Iterator<Item = &QueryRecord> {
        self.queries.iter().filter(|q| q.is_pending())
    }

    pub fn num_pending(&self) -> usize {
        self.pending().count()
    }

    pub fn num_answered(&self) -> usize {
        self.queries.iter().filter(|q| q.answer().is_some()).count()
    }

    pub fn query(&self, query_id: u64) -> Option<&QueryRecord> {
        self.queries.iter().find(|q| q.query_id == query_id)
    }
}

/// Contents of a run's `state.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub settings: LoopSettings,
    pub state: LoopState,
}

impl RunSnapshot {
    pub fn load(store: &ArtifactStore) -> Result<Self> {
        store.read_json(&store.state_path())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundSummary {
    pub round: u32,
    pub clicks: u64,
    pub answered: usize,
    pub skipped: usize,
    pub dataset_size: usize,
    /// Fraction of training labels disagreeing with ground truth, when known.
    pub label_noise: Option<f64>,
    pub warning: Option<String>,
}

pub struct ActiveLearner {
    settings: LoopSettings,
    images: Vec<LoopImage>,
    index: HashMap<u32, usize>,
    state: LoopState,
    model: Option<ModelParams>,
    /// Predictions of the previous model for the round being queried.
    round_probs: Option<Vec<ProbMap>>,
    last_dataset: Option<SievedDataset>,
    store: Option<ArtifactStore>,
}

impl ActiveLearner {
    /// Starts a run over `samples`, computing base segmentations with the
    /// configured algorithm.
    pub fn new(settings: LoopSettings, samples: Vec<ImageSample>, store: Option<ArtifactStore>) -> Result<Self> {
        settings.validate()?;
        let bases = par_map(&samples, |s| settings.base.segment(&s.image));
        let bases = bases.into_iter().collect::<Result<Vec<_>>>()?;
        Self::with_bases(settings, samples, bases, store)
    }

    /// Starts a run with externally supplied base segmentations.
    pub fn with_bases(
        settings: LoopSettings,
        samples: Vec<ImageSample>,
        bases: Vec<Segmentation>,
        store: Option<ArtifactStore>,
    ) -> Result<Self> {
        settings.validate()?;
        if bases.len() != samples.len() {
            return Err(Error::LengthMismatch(samples.len(), bases.len()));
        }
        let images = Self::build_images(&settings, samples, bases)?;
        let learner = Self::assemble(
            settings,
            images,
            LoopState {
                round: 0,
                phase: Phase::Ready,
                queries: Vec::new(),
                refill: VecDeque::new(),
                next_query_id: 0,
            },
            store,
        )?;
        if let Some(store) = &learner.store {
            for img in &learner.images {
                store.save_base(img.id, &img.base)?;
            }
        }
        learner.checkpoint()?;
        Ok(learner)
    }

    fn build_images(
        settings: &LoopSettings,
        samples: Vec<ImageSample>,
        bases: Vec<Segmentation>,
    ) -> Result<Vec<LoopImage>> {
        samples
            .into_iter()
            .zip(bases)
            .map(|(s, base)| {
                base.same_dims(s.image.width(), s.image.height())?;
                let features = settings.features.extract(&s.image);
                Ok(LoopImage {
                    id: s.id,
                    image: s.image,
                    labels: Some(s.labels),
                    base,
                    features,
                })
            })
            .collect()
    }

    fn assemble(
        settings: LoopSettings,
        images: Vec<LoopImage>,
        state: LoopState,
        store: Option<ArtifactStore>,
    ) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::InvalidArgument("no training images".into()));
        }
        let mut index = HashMap::new();
        for (i, img) in images.iter().enumerate() {
            if index.insert(img.id, i).is_some() {
                return Err(Error::Config(format!("duplicate image id {}", img.id)));
            }
        }
        Ok(Self {
            settings,
            images,
            index,
            state,
            model: None,
            round_probs: None,
            last_dataset: None,
            store,
        })
    }

    /// Reopens a persisted run. Training images come from `samples` when
    /// given, otherwise from the dataset manifest recorded in the settings.
    pub fn resume(store: ArtifactStore, samples: Option<Vec<ImageSample>>) -> Result<Self> {
        let run = RunSnapshot::load(&store)?;
        let settings = run.settings;
        let samples = match samples {
            Some(s) => s,
            None => {
                let path = settings
                    .dataset
                    .clone()
                    .ok_or_else(|| Error::State("run has no dataset manifest".into()))?;
                Dataset::load(&path)?.load_split(Split::Train, settings.num_classes, settings.ignore_id)?
            }
        };
        let bases = samples
            .iter()
            .map(|s| store.load_base(s.id, (s.image.width(), s.image.height())))
            .collect::<Result<Vec<_>>>()?;
        let images = Self::build_images(&settings, samples, bases)?;
        let state = run.state;
        let round = state.round;
        let phase = state.phase;
        let mut learner = Self::assemble(settings, images, state, Some(store))?;
        let store = learner.store.as_ref().unwrap();
        if round > 0 {
            learner.model = Some(store.load_model(round - 1)?);
        }
        if phase == Phase::Querying && round > 0 {
            let probs = learner
                .images
                .iter()
                .map(|img| store.load_probs(round, img.id))
                .collect::<Result<Vec<_>>>()?;
            learner.round_probs = Some(probs);
        }
        Ok(learner)
    }

    pub fn settings(&self) -> &LoopSettings {
        &self.settings
    }

    pub fn state(&self) -> &LoopState {
        &self.state
    }

    pub fn model(&self) -> Option<&ModelParams> {
        self.model.as_ref()
    }

    pub fn images(&self) -> &[LoopImage] {
        &self.images
    }

    pub fn image(&self, image_id: u32) -> Option<&LoopImage> {
        self.index.get(&image_id).map(|&i| &self.images[i])
    }

    pub fn store(&self) -> Option<&ArtifactStore> {
        self.store.as_ref()
    }

    /// Training set of the most recently finished round.
    pub fn last_dataset(&self) -> Option<&SievedDataset> {
        self.last_dataset.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.state.phase == Phase::Finished
    }

    /// Persists the loop state when a store is attached.
    pub fn checkpoint(&self) -> Result<()> {
        if let Some(store) = &self.store {
            store.write_json(
                &store.state_path(),
                &RunSnapshot {
                    settings: self.settings.clone(),
                    state: self.state.clone(),
                },
            )?;
        }
        Ok(())
    }

    fn labeled_pixels(&self) -> LabeledPixels {
        let mut labeled = LabeledPixels::new();
        for q in &self.state.queries {
            let n = self.image(q.image_id).map_or(0, |img| img.base.len());
            labeled.mark(q.image_id, n, &q.pixels);
        }
        labeled
    }

    /// Predictions of the current model for every training image.
    pub fn predict_all(&self) -> Result<Vec<ProbMap>> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::State("no trained model yet".into()))?;
        par_map(&self.images, |img| {
            predict(model, &img.features, img.image.width(), img.image.height())
        })
        .into_iter()
        .collect()
    }

    fn base_candidates(&self) -> Vec<RefillCandidate> {
        self.images
            .iter()
            .flat_map(|img| {
                img.base
                    .region_pixels()
                    .into_iter()
                    .map(move |pixels| RefillCandidate {
                        image_id: img.id,
                        pixels,
                    })
            })
            .collect()
    }

    fn shuffled_base_candidates(&self, seed: u64) -> Vec<RefillCandidate> {
        let mut all = self.base_candidates();
        all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        all
    }

    /// Selects the batch for the current round.
    pub fn begin_round(&mut self) -> Result<()> {
        match self.state.phase {
            Phase::Ready => {}
            Phase::Querying => return Err(Error::State("round already in progress".into())),
            Phase::Finished => return Err(Error::State("run is finished".into())),
        }
        let round = self.state.round;
        let budget = self.settings.budget;
        let ranked: Vec<RefillCandidate> = if round == 0 {
            let all = self.shuffled_base_candidates(stream_seed(self.settings.seed, 0, STREAM_WARMUP));
            if budget > all.len() {
                return Err(Error::InvalidArgument(format!(
                    "warm-up budget {budget} exceeds {} base superpixels",
                    all.len()
                )));
            }
            all
        } else {
            self.rank_round(round)?
        };
        if ranked.is_empty() {
            return Err(Error::NoEligibleCandidates);
        }
        let mut ranked: VecDeque<RefillCandidate> = ranked.into();
        let take = budget.min(ranked.len());
        for _ in 0..take {
            let c = ranked.pop_front().unwrap();
            self.push_query(c);
        }
        self.state.refill = ranked;
        self.state.phase = Phase::Querying;
        if let Some(store) = &self.store {
            let batch: Vec<_> = self.state.pending().cloned().collect();
            store.write_json(&store.round_dir(round).join("batch.json"), &batch)?;
        }
        self.checkpoint()
    }

    fn rank_round(&mut self, round: u32) -> Result<Vec<RefillCandidate>> {
        let probs = self.predict_all()?;
        let labeled = self.labeled_pixels();
        let strategy = self.settings.strategy;
        let ranked = if strategy.random_selection() {
            self.shuffled_base_candidates(stream_seed(self.settings.seed, round, STREAM_SELECT))
                .into_iter()
                .filter(|c| !labeled.overlaps(c.image_id, &c.pixels))
                .collect()
        } else {
            let merge = self.settings.merge;
            let segs: Vec<Segmentation> = if strategy.merges() {
                let lock = self.settings.lock_labeled;
                let pairs: Vec<(&LoopImage, &ProbMap)> = self.images.iter().zip(&probs).collect();
                par_map(&pairs, |(img, p)| {
                    if !lock {
                        return adaptive_merge(&img.base, p, &merge);
                    }
                    let mut locked = vec![false; img.base.num_regions() as usize];
                    if let Some(mask) = labeled.mask(img.id) {
                        for (px, &r) in img.base.region_ids().iter().enumerate() {
                            locked[r as usize] |= mask[px];
                        }
                    }
                    adaptive_merge_locked(&img.base, p, &merge, &locked)
                })
                .into_iter()
                .collect::<Result<_>>()?
            } else {
                self.images.iter().map(|img| img.base.clone()).collect()
            };
            let stats = segs
                .iter()
                .zip(&probs)
                .map(|(s, p)| region_stats(s, p))
                .collect::<Result<Vec<_>>>()?;
            let pairs: Vec<(&Segmentation, &[_])> =
                segs.iter().zip(&stats).map(|(s, st)| (s, st.as_slice())).collect();
            let pop = class_popularity(&pairs, self.settings.num_classes)?;
            let mut candidates = Vec::new();
            for ((img, seg), st) in self.images.iter().zip(&segs).zip(stats) {
                for (stats, pixels) in st.into_iter().zip(seg.region_pixels()) {
                    candidates.push(Candidate {
                        image_id: img.id,
                        region_id: stats.region_id,
                        score: acquisition_score(&stats, &pop),
                        stats,
                        pixels,
                    });
                }
            }
            if let Some(store) = &self.store {
                for (img, seg) in self.images.iter().zip(&segs) {
                    store.save_merged(round, img.id, seg)?;
                }
            }
            rank_candidates(candidates, &labeled)
                .into_iter()
                .map(|c| RefillCandidate {
                    image_id: c.image_id,
                    pixels: c.pixels,
                })
                .collect()
        };
        if let Some(store) = &self.store {
            for (img, p) in self.images.iter().zip(&probs) {
                store.save_probs(round, img.id, p)?;
            }
        }
        self.round_probs = Some(probs);
        Ok(ranked)
    }

    fn push_query(&mut self, c: RefillCandidate) -> u64 {
        let id = self.state.next_query_id;
        self.state.next_query_id += 1;
        self.state.queries.push(QueryRecord {
            query_id: id,
            image_id: c.image_id,
            round: self.state.round,
            pixels: c.pixels,
            status: QueryStatus::Pending,
        });
        id
    }

    fn pending_mut(&mut self, query_id: u64) -> Result<&mut QueryRecord> {
        let q = self
            .state
            .queries
            .iter_mut()
            .find(|q| q.query_id == query_id)
            .ok_or(Error::QueryNotFound(query_id))?;
        if !q.is_pending() {
            return Err(Error::QueryClosed(query_id));
        }
        Ok(q)
    }

    /// Records a dominant label for a pending query.
    pub fn answer(&mut self, query_id: u64, class_id: u16) -> Result<()> {
        let num_classes = self.settings.num_classes;
        let q = self.pending_mut(query_id)?;
        if class_id >= num_classes {
            return Err(Error::ClassOutOfRange {
                pixel: 0,
                class_id: class_id as u32,
                num_classes: num_classes as u32,
            });
        }
        q.status = QueryStatus::Answered { class_id };
        Ok(())
    }

    /// Rejects a pending query at no cost. Unless the run is in partial mode
    /// the next ranked candidate is queried in its place; returns its id.
    pub fn skip(&mut self, query_id: u64) -> Result<Option<u64>> {
        self.pending_mut(query_id)?.status = QueryStatus::Skipped;
        if self.settings.partial {
            return Ok(None);
        }
        Ok(self.state.refill.pop_front().map(|c| self.push_query(c)))
    }

    /// Answers every pending query from ground truth; all-ignore regions are
    /// skipped and refilled.
    pub fn answer_with_oracle(&mut self) -> Result<()> {
        loop {
            let next = self.state.pending().next().map(|q| (q.query_id, q.image_id));
            let Some((id, image_id)) = next else { break };
            let verdict = {
                let q = self.state.query(id).expect("pending query");
                let gt = self
                    .image(image_id)
                    .and_then(|img| img.labels.as_ref())
                    .ok_or(Error::UnknownImage(image_id))?;
                answer_query(&q.pixels, gt)
            };
            match verdict {
                Ok(a) => self.answer(id, a.dominant)?,
                Err(Error::Unanswerable) => {
                    self.skip(id)?;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// Sieves every answered query and trains the next model.
    pub fn finish_round(&mut self) -> Result<RoundSummary> {
        if self.state.phase != Phase::Querying {
            return Err(Error::State("no round in progress".into()));
        }
        if self.state.num_pending() > 0 {
            return Err(Error::State(format!(
                "{} queries still pending",
                self.state.num_pending()
            )));
        }
        let round = self.state.round;
        let sieve = (round > 0 && self.settings.strategy.sieves()).then_some(self.settings.sieve);
        let dataset = {
            let probs = self.round_probs.as_deref();
            let index = &self.index;
            build_sieved_dataset(
                &self.state.queries,
                |id| Some(&probs?[*index.get(&id)?]),
                sieve.as_ref(),
            )?
        };
        let label_noise = self.label_noise(&dataset);
        let cfg = TrainConfig {
            seed: stream_seed(self.settings.seed, round, STREAM_TRAIN),
            ..self.settings.train
        };
        let outcome = {
            let images = &self.images;
            let index = &self.index;
            train(
                &dataset,
                |id| index.get(&id).map(|&i| &images[i].features),
                self.settings.features.dim(),
                self.settings.num_classes,
                &cfg,
            )?
        };
        if let Some(store) = &self.store {
            store.save_sieved(round, &dataset)?;
            store.save_model(round, &outcome.params)?;
            let round_queries: Vec<_> = self.state.queries.iter().filter(|q| q.round == round).collect();
            store.write_json(&store.round_dir(round).join("queries.json"), &round_queries)?;
        }
        let round_queries = self.state.queries.iter().filter(|q| q.round == round);
        let (answered, skipped) = round_queries.fold((0, 0), |(a, s), q| match q.status {
            QueryStatus::Answered { .. } => (a + 1, s),
            QueryStatus::Skipped => (a, s + 1),
            QueryStatus::Pending => (a, s),
        });
        let summary = RoundSummary {
            round,
            clicks: self.state.clicks(),
            answered,
            skipped,
            dataset_size: dataset.len(),
            label_noise,
            warning: outcome.warning.map(|w| match w {
                TrainWarning::SingleClass => "training labels contain a single class".to_string(),
            }),
        };
        self.model = Some(outcome.params);
        self.last_dataset = Some(dataset);
        self.round_probs = None;
        self.state.refill.clear();
        self.state.round += 1;
        self.state.phase = if self.state.round > self.settings.rounds {
            Phase::Finished
        } else {
            Phase::Ready
        };
        self.checkpoint()?;
        Ok(summary)
    }

    fn label_noise(&self, dataset: &SievedDataset) -> Option<f64> {
        let mut wrong = 0usize;
        let mut total = 0usize;
        for r in &dataset.records {
            let gt = self.image(r.image_id)?.labels.as_ref()?;
            if gt.is_ignored(r.pixel as usize) {
                continue;
            }
            total += 1;
            wrong += usize::from(gt.get(r.pixel as usize) != r.class_id);
        }
        (total > 0).then(|| wrong as f64 / total as f64)
    }

    /// Runs (or completes) the current round with the simulated oracle.
    pub fn run_round(&mut self) -> Result<RoundSummary> {
        if self.state.phase == Phase::Ready {
            self.begin_round()?;
        }
        self.answer_with_oracle()?;
        self.finish_round()
    }

    /// Warm-up round: random base superpixels, no sieving.
    pub fn warmup(&mut self) -> Result<RoundSummary> {
        if self.state.round != 0 {
            return Err(Error::State("warm-up already done".into()));
        }
        self.run_round()
    }

    /// Runs rounds with the simulated oracle until the final round is done.
    pub fn run_to_completion(&mut self) -> Result<Vec<RoundSummary>> {
        let mut out = Vec::new();
        while !self.is_finished() {
            out.push(self.run_round()?);
        }
        Ok(out)
    }

    /// Pooled mIoU of the current model on held-out samples.
    pub fn evaluate(&self, samples: &[ImageSample]) -> Result<f64> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::State("no trained model yet".into()))?;
        evaluate_model(model, &self.settings, samples)
    }
}

/// Pooled mIoU of `model` on `samples`.
pub fn evaluate_model(model: &ModelParams, settings: &LoopSettings, samples: &[ImageSample]) -> Result<f64> {
    let preds = par_map(samples, |s| {
        let fm = settings.features.extract(&s.image);
        predict(model, &fm, s.image.width(), s.image.height()).map(|p| p.argmax_map(settings.ignore_id))
    });
    let mut counts = IouCounts::new(settings.num_classes);
    for (pred, s) in preds.into_iter().zip(samples) {
        counts.add(&pred?, &s.labels)?;
    }
    counts.miou()
}
