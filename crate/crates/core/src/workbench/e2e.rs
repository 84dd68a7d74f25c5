use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, SynthOptions};
use super::pipeline::{self, Metric, Task, TrainPaths, LABELS, MANIFEST};
use crate::error::Result;
use crate::probing::ProbeReport;

/// Sizes of the synthetic end-to-end run.
#[derive(Debug, Clone)]
pub struct E2eOptions {
    pub n_train_a: usize,
    pub n_train_b: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub n_references: usize,
    pub config: ExperimentConfig,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2eSummary {
    pub asr_wer: f64,
    pub ast_bleu: f64,
    pub asr_hyps: PathBuf,
    pub ast_hyps: PathBuf,
    pub probe: ProbeReport,
    pub spearman: f64,
}

/// Synthesizes both languages, pretrains ASR on language a, transfers its
/// encoder, fine-tunes AST on language b, decodes and scores both,
/// probes the ASR encoder and runs the bundled correlation analysis.
/// Everything lands under `dir`.
pub fn run_synthetic(opts: &E2eOptions, root_seed: u64, dir: &Path) -> Result<E2eSummary> {
    let cfg = &opts.config;
    let force = opts.force;
    let corpus = |lang: &str, stream: &str, n: usize| -> Result<PathBuf> {
        let raw = dir.join("synth").join(format!("{lang}-{stream}"));
        let so = SynthOptions {
            language: lang.into(),
            n_utterances: n,
            n_references: opts.n_references,
            stream: stream.into(),
        };
        pipeline::synth_data(&so, root_seed, &raw, force)?;
        let feats = dir.join("feats").join(format!("{lang}-{stream}"));
        pipeline::prepare_features(&raw.join(MANIFEST), cfg, &feats, force)?;
        Ok(feats.join(MANIFEST))
    };
    let a_train = corpus("a", "train", opts.n_train_a)?;
    let a_dev = corpus("a", "dev", opts.n_dev)?;
    let b_train = corpus("b", "train", opts.n_train_b)?;
    let b_dev = corpus("b", "dev", opts.n_dev)?;
    let b_test = corpus("b", "test", opts.n_test)?;

    let bpe_a = dir.join("bpe").join("asr-a");
    let bpe_b = dir.join("bpe").join("ast-b");
    pipeline::train_bpe(
        std::slice::from_ref(&a_train),
        Task::Asr,
        cfg,
        &bpe_a,
        force,
    )?;
    pipeline::train_bpe(
        std::slice::from_ref(&b_train),
        Task::Ast,
        cfg,
        &bpe_b,
        force,
    )?;

    let asr = dir.join("exp").join("asr");
    let train_a = [a_train];
    pipeline::train(
        Task::Asr,
        &TrainPaths {
            train: &train_a,
            dev: &a_dev,
            bpe: &bpe_a,
            init: None,
            out: &asr,
        },
        cfg,
        root_seed,
        force,
    )?;
    let init = dir.join("exp").join("ast-init");
    pipeline::transfer_init(&asr, Task::Ast, &bpe_b, cfg, root_seed, &init, force)?;
    let ast = dir.join("exp").join("ast");
    let train_b = [b_train];
    pipeline::train(
        Task::Ast,
        &TrainPaths {
            train: &train_b,
            dev: &b_dev,
            bpe: &bpe_b,
            init: Some(&init),
            out: &ast,
        },
        cfg,
        root_seed,
        force,
    )?;

    let asr_hyps = dir.join("decode").join("asr-a-dev.txt");
    let ast_hyps = dir.join("decode").join("ast-b-test.txt");
    pipeline::decode(&asr, &a_dev, cfg, &asr_hyps, true)?;
    pipeline::decode(&ast, &b_test, cfg, &ast_hyps, true)?;
    let (_, wer) = pipeline::score(
        Metric::Wer,
        &a_dev,
        &asr_hyps,
        cfg,
        &dir.join("scores").join("asr-wer.json"),
        true,
    )?;
    let (_, bleu) = pipeline::score(
        Metric::Bleu,
        &b_test,
        &ast_hyps,
        cfg,
        &dir.join("scores").join("ast-bleu.json"),
        true,
    )?;

    let reps = dir.join("probe").join("reps");
    let probes = dir.join("probe").join("probes");
    let labels = dir.join("synth").join("a-dev").join(LABELS);
    pipeline::probe_extract(&asr, &a_dev, &labels, &reps, force)?;
    pipeline::probe_train(&reps, None, cfg, root_seed, &probes, force)?;
    let (_, probe) = pipeline::probe_report(
        &reps,
        &probes,
        None,
        cfg,
        root_seed,
        &dir.join("probe").join("report"),
        true,
    )?;
    let (_, corr) = pipeline::analyze_correlate(None, "ast-20h", &dir.join("analysis"), true)?;

    Ok(E2eSummary {
        asr_wer: wer.expect("forced stage reports").corpus_score,
        ast_bleu: bleu.expect("forced stage reports").corpus_score,
        asr_hyps,
        ast_hyps,
        probe: probe.expect("forced stage reports"),
        spearman: corr.expect("forced stage reports").spearman,
    })
}
