//! Command compositions behind the CLI. Each command writes into its own run
//! directory, which always receives the resolved `config.txt`.
//!
//! Prepared data directory layout:
//!
//! ```text
//! dataset.tsv  train.tsv  test.tsv  popularity.tsv  user_keys.tsv  item_keys.tsv  summary.txt
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::RunConfig;
use crate::dataio::{
    binarize, compute_popularity, k_core_filter, load_interactions, read_dataset, read_popularity,
    split, write_dataset, write_key_map, write_popularity, InteractionDataset, PopularityStats,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ood_sweep, MetricsReport, OodSweep};
use crate::model::{read_checkpoint, write_checkpoint, Backbone, Checkpoint};
use crate::synth::{
    disentanglement_score, generate_synthetic, single_embedding_score, Disentanglement,
};
use crate::trainer::{scoring_embeddings, train_with_hook, EpochLog, TrainOutcome};

pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LAST_CHECKPOINT_FILE: &str = "last.ckpt";
pub const TRAIN_LOG_FILE: &str = "train.log";

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Creates `<out>/<command>-<unix seconds>-<config hash>` (with a numeric
/// suffix on collision) and writes the resolved config into it.
pub fn create_run_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let root = cfg.require_path("out")?;
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let base = format!("{command}-{stamp}-{}", cfg.hash());
    let mut dir = root.join(&base);
    let mut n = 1;
    loop {
        match std::fs::create_dir(&dir) {
            Ok(()) => break,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                dir = root.join(format!("{base}-{n}"));
                n += 1;
            }
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    write_text(&dir.join(CONFIG_FILE), &cfg.to_text())?;
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareSummary {
    pub users: usize,
    pub items: usize,
    pub pairs: usize,
    pub density: f64,
    pub train_pairs: usize,
    pub test_pairs: usize,
}

impl PrepareSummary {
    pub fn to_text(&self) -> String {
        format!(
            "users={}\nitems={}\npairs={}\ndensity={:.6e}\ntrain_pairs={}\ntest_pairs={}\n",
            self.users, self.items, self.pairs, self.density, self.train_pairs, self.test_pairs
        )
    }
}

/// Raw file -> binarize -> k-core -> split -> popularity, written to `dir`.
/// An empty k-core is [`Error::EmptyDataset`].
pub fn cmd_prepare(cfg: &RunConfig, dir: &Path) -> Result<PrepareSummary> {
    let input = cfg.require_path("input")?;
    let raw = load_interactions(&input, cfg.format())?;
    let data = k_core_filter(&binarize(&raw), cfg.k_core());
    if data.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "{}-core of {} is empty",
            cfg.k_core(),
            input.display()
        )));
    }
    let parts = split(&data, cfg.test_fraction(), cfg.seed())?;
    let stats = compute_popularity(&parts.train)?;
    write_dataset(&dir.join("dataset.tsv"), &data)?;
    write_dataset(&dir.join("train.tsv"), &parts.train)?;
    write_dataset(&dir.join("test.tsv"), &parts.test)?;
    write_popularity(&dir.join("popularity.tsv"), &stats)?;
    write_key_map(&dir.join("user_keys.tsv"), data.user_keys())?;
    write_key_map(&dir.join("item_keys.tsv"), data.item_keys())?;
    let summary = PrepareSummary {
        users: data.num_users(),
        items: data.num_items(),
        pairs: data.len(),
        density: data.density(),
        train_pairs: parts.train.len(),
        test_pairs: parts.test.len(),
    };
    write_text(&dir.join("summary.txt"), &summary.to_text())?;
    Ok(summary)
}

/// Train split, test split and popularity from a prepared data directory.
pub fn load_prepared(
    data_dir: &Path,
) -> Result<(InteractionDataset, InteractionDataset, PopularityStats)> {
    let train = read_dataset(&data_dir.join("train.tsv"))?;
    let test = read_dataset(&data_dir.join("test.tsv"))?;
    let stats = read_popularity(&data_dir.join("popularity.tsv"))?;
    if test.num_users() != train.num_users() || test.num_items() != train.num_items() {
        return Err(Error::DimensionMismatch {
            expected: train.num_users() + train.num_items(),
            got: test.num_users() + test.num_items(),
        });
    }
    Ok((train, test, stats))
}

fn log_text(log: &[EpochLog]) -> String {
    let mut s = format!("{}\n", EpochLog::HEADER);
    for l in log {
        s.push_str(&l.to_line());
        s.push('\n');
    }
    s
}

/// Trains on `data_dir/train.tsv`, overwriting `last.ckpt` every epoch and
/// writing the selected tables to `model.ckpt` plus `train.log`.
pub fn cmd_train(cfg: &RunConfig, dir: &Path) -> Result<TrainOutcome> {
    let data_dir = cfg.require_path("data_dir")?;
    let (train, _, stats) = load_prepared(&data_dir)?;
    let last = dir.join(LAST_CHECKPOINT_FILE);
    let mut lines = Vec::new();
    let outcome = train_with_hook(&cfg.train_config(), &train, &stats, |entry, ckpt| {
        lines.push(entry.clone());
        write_text(&dir.join(TRAIN_LOG_FILE), &log_text(&lines))?;
        write_checkpoint(&last, ckpt)
    })?;
    write_checkpoint(&dir.join(CHECKPOINT_FILE), &outcome.checkpoint)?;
    Ok(outcome)
}

fn stamp(mut report: MetricsReport, cfg: &RunConfig) -> MetricsReport {
    report.config_hash = cfg.hash();
    report.seed = cfg.seed();
    report
}

/// Full-ranking HR/NDCG of `checkpoint` on the prepared test split.
pub fn cmd_eval(cfg: &RunConfig, dir: &Path) -> Result<MetricsReport> {
    let (train, test, stats) = load_prepared(&cfg.require_path("data_dir")?)?;
    let ckpt = read_checkpoint(&cfg.require_path("checkpoint")?)?;
    let emb = scoring_embeddings(&ckpt, &train)?;
    let report = stamp(evaluate(&emb, &train, &test, &stats, cfg.k())?, cfg);
    report.write_files(&dir.join("report.txt"), &dir.join("metrics.tsv"))?;
    Ok(report)
}

/// Re-tests `checkpoint` on popularity-intervened test sets.
pub fn cmd_ood(cfg: &RunConfig, dir: &Path) -> Result<OodSweep> {
    let (train, test, stats) = load_prepared(&cfg.require_path("data_dir")?)?;
    let ckpt = read_checkpoint(&cfg.require_path("checkpoint")?)?;
    let emb = scoring_embeddings(&ckpt, &train)?;
    let mut sweep = ood_sweep(
        &emb,
        &train,
        &test,
        &stats,
        &cfg.proportions(),
        &cfg.ood_seeds(),
        cfg.k(),
    )?;
    sweep.base = stamp(sweep.base, cfg);
    for e in &mut sweep.entries {
        e.report = stamp(e.report.clone(), cfg);
        let name = format!("p{}_s{}", e.proportion, e.seed);
        e.report.write_files(
            &dir.join(format!("report_{name}.txt")),
            &dir.join(format!("metrics_{name}.tsv")),
        )?;
    }
    sweep
        .base
        .write_files(&dir.join("report_base.txt"), &dir.join("metrics_base.tsv"))?;
    write_text(&dir.join("ood_summary.tsv"), &sweep.summary())?;
    Ok(sweep)
}

#[derive(Debug, Clone)]
pub struct SynthReport {
    pub disentanglement: Disentanglement,
    pub iid: MetricsReport,
    pub ood: MetricsReport,
    pub conformity_share: f64,
    pub checkpoint: Checkpoint,
}

impl SynthReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "conf_pop_corr={:.6}", self.disentanglement.conf_pop_corr);
        let _ = writeln!(s, "int_pop_corr={:.6}", self.disentanglement.int_pop_corr);
        let _ = writeln!(s, "conformity_share={:.6}", self.conformity_share);
        let _ = writeln!(s, "hr_iid={:.6}", self.iid.hr);
        let _ = writeln!(s, "hr_ood={:.6}", self.ood.hr);
        let _ = writeln!(s, "ndcg_iid={:.6}", self.iid.ndcg);
        let _ = writeln!(s, "ndcg_ood={:.6}", self.ood.ndcg);
        s
    }
}

/// Generates a synthetic world, trains the configured model on it and
/// reports disentanglement plus IID/OOD metrics. With `alpha = beta = 0` the
/// tables are scored as one embedding.
pub fn cmd_synth(cfg: &RunConfig, dir: &Path) -> Result<SynthReport> {
    let data = generate_synthetic(&cfg.synth_config())?;
    let stats = compute_popularity(&data.train)?;
    write_dataset(&dir.join("train.tsv"), &data.train)?;
    write_dataset(&dir.join("test.tsv"), &data.test_iid)?;
    write_dataset(&dir.join("test_ood.tsv"), &data.test_ood)?;
    write_popularity(&dir.join("popularity.tsv"), &stats)?;
    data.world.write_ground_truth(dir)?;

    let tc = cfg.train_config();
    let outcome = train_with_hook(&tc, &data.train, &stats, |_, _| Ok(()))?;
    write_text(&dir.join(TRAIN_LOG_FILE), &log_text(&outcome.log))?;
    write_checkpoint(&dir.join(CHECKPOINT_FILE), &outcome.checkpoint)?;
    let emb = scoring_embeddings(&outcome.checkpoint, &data.train)?;
    let disentanglement = if tc.alpha == 0.0 && tc.beta == 0.0 {
        single_embedding_score(&emb, &data.world)?
    } else {
        disentanglement_score(&emb, &data.world)?
    };
    let iid = stamp(
        evaluate(&emb, &data.train, &data.test_iid, &stats, cfg.k())?,
        cfg,
    );
    let ood = stamp(
        evaluate(&emb, &data.train, &data.test_ood, &stats, cfg.k())?,
        cfg,
    );
    let report = SynthReport {
        disentanglement,
        iid,
        ood,
        conformity_share: data.world.conformity_share(),
        checkpoint: outcome.checkpoint,
    };
    write_text(&dir.join("synth_report.txt"), &report.to_text())?;
    Ok(report)
}

/// Backbone name used in reports.
pub fn model_label(cfg: &RunConfig) -> String {
    let tc = cfg.train_config();
    let base = match tc.backbone {
        Backbone::Mf => "MF",
        Backbone::LightGcn => "LightGCN",
    };
    if tc.alpha == 0.0 && tc.beta == 0.0 {
        base.to_string()
    } else {
        format!("DCCL_{base}")
    }
}
