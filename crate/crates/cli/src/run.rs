//! `loop run`, `loop resume` and `loop status`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use spal_core::config::{LoopSettings, OracleMode, RunConfig};
use spal_core::dataset::{Dataset, Split};
use spal_core::learner::{ActiveLearner, RoundSummary, RunSnapshot};
use spal_core::query::QueryStatus;
use spal_core::store::ArtifactStore;

use crate::server::{self, Service};

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub rounds: Vec<RoundSummary>,
    pub clicks_spent: u64,
    pub val_miou: Option<f64>,
}

fn print_summary(s: &RoundSummary) {
    let noise = s.label_noise.map_or("n/a".to_string(), |n| format!("{n:.3}"));
    println!(
        "round {}: {} answered, {} skipped, {} clicks total, {} training pixels, label noise {}",
        s.round, s.answered, s.skipped, s.clicks, s.dataset_size, noise
    );
    if let Some(w) = &s.warning {
        eprintln!("warning: {w}");
    }
}

fn validation_miou(learner: &ActiveLearner) -> Result<Option<f64>> {
    let settings = learner.settings();
    let Some(path) = &settings.dataset else { return Ok(None) };
    let val = Dataset::load(path)?.load_split(Split::Val, settings.num_classes, settings.ignore_id)?;
    if val.is_empty() || learner.model().is_none() {
        return Ok(None);
    }
    Ok(Some(learner.evaluate(&val)?))
}

fn finish(learner: &ActiveLearner, rounds: Vec<RoundSummary>) -> Result<RunReport> {
    let report = RunReport {
        rounds,
        clicks_spent: learner.state().clicks(),
        val_miou: validation_miou(learner)?,
    };
    if let Some(store) = learner.store() {
        store.write_json(&store.root().join("report.json"), &report)?;
    }
    if let Some(m) = report.val_miou {
        println!("validation mIoU {m:.4}");
    }
    Ok(report)
}

fn drive(mut learner: ActiveLearner, listen: &str) -> Result<RunReport> {
    match learner.settings().oracle {
        OracleMode::Simulated => {
            let mut rounds = Vec::new();
            while !learner.is_finished() {
                let s = learner.run_round()?;
                print_summary(&s);
                rounds.push(s);
            }
            finish(&learner, rounds)
        }
        OracleMode::Human => {
            if learner.is_finished() {
                return finish(&learner, Vec::new());
            }
            let addr: SocketAddr = listen.parse().with_context(|| format!("listen address {listen:?}"))?;
            let service = Service::new(learner)?;
            tokio::runtime::Runtime::new()?.block_on(server::serve(service.clone(), addr))?;
            let rounds = service.summaries();
            rounds.iter().for_each(print_summary);
            let learner = service.lock();
            if !learner.is_finished() {
                println!("stopped in round {}; continue with `loop resume`", learner.state().round);
            }
            finish(&learner, rounds)
        }
    }
}

pub fn run(config: &Path, listen: Option<&str>, partial: bool) -> Result<RunReport> {
    let mut cfg = RunConfig::load(config)?;
    cfg.partial |= partial;
    let settings = cfg.settings()?;
    let dir = cfg.run_dir();
    if dir.join("state.json").exists() {
        bail!("{} already holds a run; use `loop resume --state {}`", dir.display(), dir.display());
    }
    let train = Dataset::load(&cfg.dataset)?.load_split(Split::Train, settings.num_classes, settings.ignore_id)?;
    if train.is_empty() {
        bail!("dataset {} has no training images", cfg.dataset.display());
    }
    let store = ArtifactStore::create(&dir)?;
    println!("run directory {}", dir.display());
    let learner = ActiveLearner::new(settings, train, Some(store))?;
    drive(learner, listen.unwrap_or(&cfg.listen))
}

fn run_dir(state: &Path) -> PathBuf {
    if state.is_file() {
        state.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        state.to_path_buf()
    }
}

pub fn resume(state: &Path, listen: Option<&str>) -> Result<RunReport> {
    let store = ArtifactStore::open(run_dir(state))?;
    let learner = ActiveLearner::resume(store, None)?;
    drive(learner, listen.unwrap_or("127.0.0.1:8080"))
}

#[derive(Debug, Serialize)]
pub struct Status {
    pub round: u32,
    pub rounds: u32,
    pub phase: spal_core::learner::Phase,
    pub budget: usize,
    pub pending: usize,
    pub answered: usize,
    pub skipped: usize,
    pub clicks_spent: u64,
    pub settings: LoopSettings,
}

pub fn status(state: &Path) -> Result<Status> {
    let store = ArtifactStore::open(run_dir(state))?;
    let snap = RunSnapshot::load(&store)?;
    let s = &snap.state;
    Ok(Status {
        round: s.round,
        rounds: snap.settings.rounds,
        phase: s.phase,
        budget: snap.settings.budget,
        pending: s.num_pending(),
        answered: s.num_answered(),
        skipped: s.queries.iter().filter(|q| q.status == QueryStatus::Skipped).count(),
        clicks_spent: s.clicks(),
        settings: snap.settings.clone(),
    })
}
