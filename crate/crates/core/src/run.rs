//! End-to-end runs: read corpora, train, and write the run directory.
//!
//! A run directory holds
//! - `model.ckpt`: the final parameters (see [`crate::checkpoint`]),
//! - `metrics.csv`: one row per logging interval,
//! - `manifest.json`: the fully resolved [`RunConfig`],
//! - `vocab.txt`: the vocabulary,
//! - `report.json`: final validation (and test) NLL.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::{Objective, RunConfig};
use crate::data::{build_vocab, encode, Corpus, Vocabulary};
use crate::error::{Result, SkdError};
use crate::eval::{eval_nll, NllReport};
use crate::network::{init_params, ModelParams};
use crate::training::{save_metrics_csv, train, Optimizer, TrainHistory};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub vocab: Vocabulary,
    pub corpus: Corpus,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| SkdError::io(path, e))
}

/// Builds the vocabulary from the training split and encodes every split.
pub fn prepare_data(config: &RunConfig) -> Result<PreparedData> {
    let train_path = config
        .train_path
        .as_ref()
        .ok_or_else(|| SkdError::Config("train_path is required".into()))?;
    let train_text = read_text(train_path)?;
    let vocab = build_vocab(&train_text, config.vocab_size)?;
    let load = |p: &Option<PathBuf>| -> Result<Vec<usize>> {
        match p {
            Some(p) => Ok(encode(&read_text(p)?, &vocab)),
            None => Ok(Vec::new()),
        }
    };
    let corpus = Corpus {
        train: encode(&train_text, &vocab),
        valid: load(&config.valid_path)?,
        test: load(&config.test_path)?,
        source: train_path.display().to_string(),
    };
    Ok(PreparedData { vocab, corpus })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub iterations: u64,
    pub stopped_early: bool,
    pub valid: Option<NllReport>,
    pub test: Option<NllReport>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: ModelParams,
    pub history: TrainHistory,
    pub report: RunReport,
}

/// Initializes a model from `config.seed` and trains it on `corpus`.
pub fn execute(config: &RunConfig, vocab_size: usize, corpus: &Corpus) -> Result<RunOutcome> {
    config.validate()?;
    let mut model = init_params(config.dims(vocab_size), config.seed)?;
    let mut optimizer = Optimizer::new(config.optimizer_config())?;
    let history = train(
        &mut model,
        corpus,
        &config.train_config(),
        &mut optimizer,
        config.epochs,
    )?;
    let score = |ids: &[usize]| -> Result<Option<NllReport>> {
        if ids.is_empty() {
            Ok(None)
        } else {
            eval_nll(&model, ids).map(Some)
        }
    };
    let report = RunReport {
        iterations: history.iterations,
        stopped_early: history.stopped_early,
        valid: score(&corpus.valid)?,
        test: score(&corpus.test)?,
    };
    Ok(RunOutcome {
        model,
        history,
        report,
    })
}

pub fn write_run_dir(
    out_dir: &Path,
    config: &RunConfig,
    vocab: &Vocabulary,
    outcome: &RunOutcome,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| SkdError::io(out_dir, e))?;
    let write = |name: &str, contents: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, contents).map_err(|e| SkdError::io(path, e))
    };
    // a replay must not depend on the optimizer defaults of the replaying build
    let resolved = RunConfig {
        learning_rate: Some(config.optimizer_config().learning_rate),
        ..config.clone()
    };
    write(MANIFEST_FILE, resolved.to_json())?;
    vocab.write(&out_dir.join(VOCAB_FILE))?;
    save_metrics_csv(&outcome.history.rows, &out_dir.join(METRICS_FILE))?;
    checkpoint::save(&outcome.model, &out_dir.join(CHECKPOINT_FILE))?;
    write(
        REPORT_FILE,
        serde_json::to_string_pretty(&outcome.report)? + "\n",
    )?;
    Ok(())
}

/// Reads the corpora named in `config`, trains, and writes `out_dir`.
pub fn run_to_dir(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let data = prepare_data(config)?;
    let outcome = execute(config, data.vocab.len(), &data.corpus)?;
    write_run_dir(out_dir, config, &data.vocab, &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRun {
    pub objective: Objective,
    pub seed: u64,
    pub report: RunReport,
}

impl CompareRun {
    /// Test-split scores when there is a test split, validation otherwise.
    pub fn headline(&self) -> Option<NllReport> {
        self.report.test.or(self.report.valid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareSummary {
    pub objective: Objective,
    pub runs: usize,
    pub sentence_nll_mean: f64,
    pub sentence_nll_std: f64,
    pub token_nll_mean: f64,
    pub token_nll_std: f64,
    pub perplexity_mean: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains all four objectives for every seed on shared data. Runs are
/// independent and execute in parallel; results come back in
/// objective-major, seed-minor order.
pub fn compare(
    base: &RunConfig,
    seeds: &[u64],
    data: &PreparedData,
    out_dir: Option<&Path>,
) -> Result<Vec<CompareRun>> {
    let jobs: Vec<(Objective, u64)> = Objective::ALL
        .into_iter()
        .flat_map(|o| seeds.iter().map(move |&s| (o, s)))
        .collect();
    jobs.par_iter()
        .map(|&(objective, seed)| {
            let config = RunConfig {
                objective,
                seed,
                ..base.clone()
            };
            let outcome = execute(&config, data.vocab.len(), &data.corpus)?;
            if let Some(dir) = out_dir {
                let run_dir = dir.join(format!("{objective}-seed{seed}"));
                write_run_dir(&run_dir, &config, &data.vocab, &outcome)?;
            }
            Ok(CompareRun {
                objective,
                seed,
                report: outcome.report,
            })
        })
        .collect()
}

pub fn summarize(runs: &[CompareRun]) -> Vec<CompareSummary> {
    Objective::ALL
        .into_iter()
        .filter_map(|objective| {
            let scores: Vec<NllReport> = runs
                .iter()
                .filter(|r| r.objective == objective)
                .filter_map(CompareRun::headline)
                .collect();
            if scores.is_empty() {
                return None;
            }
            let (sentence_nll_mean, sentence_nll_std) =
                mean_std(&scores.iter().map(|s| s.sentence_nll).collect::<Vec<_>>());
            let (token_nll_mean, token_nll_std) =
                mean_std(&scores.iter().map(|s| s.token_nll).collect::<Vec<_>>());
            let (perplexity_mean, _) =
                mean_std(&scores.iter().map(|s| s.perplexity).collect::<Vec<_>>());
            Some(CompareSummary {
                objective,
                runs: scores.len(),
                sentence_nll_mean,
                sentence_nll_std,
                token_nll_mean,
                token_nll_std,
                perplexity_mean,
            })
        })
        .collect()
}

pub fn render_table(summary: &[CompareSummary]) -> String {
    let mut out = String::from(
        "| Model | runs | sentence NLL | token NLL | perplexity |\n|---|---:|---:|---:|---:|\n",
    );
    for s in summary {
        out.push_str(&format!(
            "| {} | {} | {:.3} ± {:.3} | {:.4} ± {:.4} | {:.2} |\n",
            s.objective.label(),
            s.runs,
            s.sentence_nll_mean,
            s.sentence_nll_std,
            s.token_nll_mean,
            s.token_nll_std,
            s.perplexity_mean
        ));
    }
    out
}

pub fn write_compare_csv(runs: &[CompareRun], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["objective", "seed", "iterations", "sentence_nll", "token_nll", "perplexity"])?;
    for r in runs {
        let (s, t, p) = r
            .headline()
            .map(|h| (h.sentence_nll, h.token_nll, h.perplexity))
            .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        w.write_record([
            r.objective.to_string(),
            r.seed.to_string(),
            r.report.iterations.to_string(),
            s.to_string(),
            t.to_string(),
            p.to_string(),
        ])?;
    }
    w.flush().map_err(|e| SkdError::io(path, e))?;
    Ok(())
}
