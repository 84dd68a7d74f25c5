//! The stages behind each CLI subcommand. Every stage reads only the
//! paths it is given, writes only under its output path, and does nothing
//! when its outputs already exist unless `force` is set.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SynthOptions};
use super::manifest::{resolve, Manifest, ManifestRow};
use super::seeds::derive_seed;
use super::synth::{synth_dataset, write_synth};
use crate::analysis::{
    bundled_table, correlate_report, emit_plot_data, read_records, CorrelationReport,
};
use crate::audio::{
    accumulate_stats, apply_cmvn, read_wav, speed_perturb, trim_utterance, write_wav,
    FeatureArchiveReader, FeatureArchiveWriter, FeatureSequence, MfccConfig, MfccExtractor,
};
use crate::error::{Error, Result};
use crate::eval::{read_decoded, write_decoded, EvalReport};
use crate::model::transfer_encoder;
use crate::probing::{
    evaluate_probe, extract_layer_reps, read_labels, split_frames, train_probe, write_labels,
    LayerReps, LinearProbe, ProbeOptions, ProbeReport, UttLabels,
};
use crate::text::{
    apply_bpe, decode_bpe, normalize_transcript, train_bpe as learn_bpe_vocab, MergeTable,
    Vocabulary,
};
use crate::train::{
    decode_all, load_checkpoint, load_checkpoint_for, save_checkpoint, train_loop, Checkpoint,
    DevSet, Example, ScheduleState, TrainState,
};

pub const BPE_CODES: &str = "bpe.codes";
pub const VOCAB: &str = "vocab.txt";
pub const FEATS: &str = "feats.ark";
pub const MANIFEST: &str = "manifest.tsv";
pub const LABELS: &str = "labels.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    /// Outputs were already present.
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Asr,
    Ast,
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asr" => Ok(Task::Asr),
            "ast" => Ok(Task::Ast),
            _ => Err(Error::invalid(format!(
                "unknown task {s:?} (expected asr or ast)"
            ))),
        }
    }
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Asr => "asr",
            Task::Ast => "ast",
        }
    }

    /// Normalized training target of a row: the transcript for ASR, the
    /// first translation for AST.
    pub fn target(self, row: &ManifestRow, cfg: &ExperimentConfig) -> Result<String> {
        match self {
            Task::Asr => Ok(normalize_transcript(
                &row.transcript,
                cfg.strip_tone_diacritics,
            )),
            Task::Ast => row
                .translations
                .first()
                .map(|t| normalize_transcript(t, false))
                .ok_or_else(|| {
                    Error::invalid(format!("{}: no translation for the ast task", row.utt_id))
                }),
        }
    }

    /// Word-level references of a row: the transcript, or every translation.
    pub fn references(self, row: &ManifestRow, cfg: &ExperimentConfig) -> Result<Vec<Vec<String>>> {
        let split = |s: String| s.split_whitespace().map(str::to_string).collect();
        match self {
            Task::Asr => Ok(vec![split(self.target(row, cfg)?)]),
            Task::Ast => {
                if row.translations.is_empty() {
                    return Err(Error::invalid(format!(
                        "{}: no translation references",
                        row.utt_id
                    )));
                }
                Ok(row
                    .translations
                    .iter()
                    .map(|t| split(normalize_transcript(t, false)))
                    .collect())
            }
        }
    }
}

fn up_to_date(outputs: &[PathBuf], force: bool) -> bool {
    !force && outputs.iter().all(|p| p.exists())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn parent_dir(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    parent_dir(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn is_wav(path: &str) -> bool {
    path.to_ascii_lowercase().ends_with(".wav")
}

/// Reads the feature matrices a manifest points at, in manifest order.
pub fn load_features(
    manifest_path: &Path,
    manifest: &Manifest,
    frame_shift: f64,
) -> Result<Vec<FeatureSequence>> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut readers: BTreeMap<PathBuf, FeatureArchiveReader> = BTreeMap::new();
    let mut out = Vec::with_capacity(manifest.len());
    for row in &manifest.rows {
        if is_wav(&row.path) {
            return Err(Error::invalid(format!(
                "{}: {} is audio; run prepare-features first",
                row.utt_id, row.path
            )));
        }
        let path = resolve(base, &row.path);
        if !readers.contains_key(&path) {
            readers.insert(path.clone(), FeatureArchiveReader::open(&path)?);
        }
        let frames = readers
            .get_mut(&path)
            .expect("just inserted")
            .get(&row.utt_id)?;
        out.push(FeatureSequence::new(
            frames,
            frame_shift,
            &row.utt_id,
            &row.speaker_id,
        )?);
    }
    Ok(out)
}

fn load_manifests(paths: &[PathBuf]) -> Result<Vec<(PathBuf, Manifest)>> {
    if paths.is_empty() {
        return Err(Error::invalid("at least one manifest is required"));
    }
    paths
        .iter()
        .map(|p| Ok((p.clone(), Manifest::load(p)?)))
        .collect()
}

/// `synth-data`: one synthetic corpus (features, manifest, frame labels).
pub fn synth_data(opts: &SynthOptions, root_seed: u64, out: &Path, force: bool) -> Result<Outcome> {
    let outputs = [out.join(FEATS), out.join(MANIFEST), out.join(LABELS)];
    if up_to_date(&outputs, force) {
        return Ok(Outcome::Skipped);
    }
    let seed = derive_seed(
        root_seed,
        &format!("synth-data/{}/{}", opts.language, opts.stream),
    );
    let data = synth_dataset(&opts.spec(seed)?, FEATS)?;
    write_synth(out, &data)?;
    Ok(Outcome::Ran)
}

/// `prepare-features`: MFCCs for audio rows (feature rows are read as
/// they are), trimming to `max_seconds`, then per-speaker CMVN. Writes a
/// feature archive and a manifest pointing at it.
pub fn prepare_features(
    manifest_path: &Path,
    cfg: &ExperimentConfig,
    out: &Path,
    force: bool,
) -> Result<Outcome> {
    let outputs = [out.join(FEATS), out.join(MANIFEST)];
    if up_to_date(&outputs, force) {
        return Ok(Outcome::Skipped);
    }
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mfcc = MfccConfig::default();
    let mut extractors: BTreeMap<u32, MfccExtractor> = BTreeMap::new();
    let mut readers: BTreeMap<PathBuf, FeatureArchiveReader> = BTreeMap::new();
    let mut feats = Vec::with_capacity(manifest.len());
    for row in &manifest.rows {
        let path = resolve(base, &row.path);
        let seq = if is_wav(&row.path) {
            let wave = read_wav(&path, &row.utt_id, &row.speaker_id)?;
            if let std::collections::btree_map::Entry::Vacant(e) =
                extractors.entry(wave.sample_rate)
            {
                e.insert(MfccExtractor::new(mfcc.clone(), wave.sample_rate)?);
            }
            extractors[&wave.sample_rate].compute(&wave)?
        } else {
            if !readers.contains_key(&path) {
                readers.insert(path.clone(), FeatureArchiveReader::open(&path)?);
            }
            let frames = readers
                .get_mut(&path)
                .expect("just inserted")
                .get(&row.utt_id)?;
            FeatureSequence::new(frames, mfcc.shift_seconds, &row.utt_id, &row.speaker_id)?
        };
        feats.push(trim_utterance(&seq, cfg.max_seconds)?);
    }
    let stats = accumulate_stats(feats.iter())?;
    let (normalized, warnings) = apply_cmvn(&feats, &stats)?;
    if !warnings.is_empty() {
        log::warn!(
            "{} coefficient variances floored during CMVN",
            warnings.len()
        );
    }
    create_dir(out)?;
    let mut ark = FeatureArchiveWriter::create(&out.join(FEATS))?;
    let mut rows = Vec::with_capacity(manifest.len());
    for (row, seq) in manifest.rows.iter().zip(&normalized) {
        ark.append(&seq.utt_id, &seq.frames)?;
        rows.push(ManifestRow {
            path: FEATS.into(),
            duration: seq.duration(),
            ..row.clone()
        });
    }
    ark.finish()?;
    Manifest::new(rows)?.save(&out.join(MANIFEST))?;
    Ok(Outcome::Ran)
}

/// `train-bpe`: merge table and vocabulary over the task targets of all
/// given manifests (several manifests give a shared multilingual BPE).
pub fn train_bpe(
    manifests: &[PathBuf],
    task: Task,
    cfg: &ExperimentConfig,
    out: &Path,
    force: bool,
) -> Result<Outcome> {
    let outputs = [out.join(BPE_CODES), out.join(VOCAB)];
    if up_to_date(&outputs, force) {
        return Ok(Outcome::Skipped);
    }
    let mut corpus = Vec::new();
    for (_, m) in load_manifests(manifests)? {
        for row in &m.rows {
            corpus.push(task.target(row, cfg)?);
        }
    }
    let (table, vocab) = learn_bpe_vocab(&corpus, cfg.bpe_merges)?;
    create_dir(out)?;
    table.save(&out.join(BPE_CODES))?;
    vocab.save(&out.join(VOCAB))?;
    Ok(Outcome::Ran)
}

fn load_bpe(dir: &Path) -> Result<(MergeTable, Vocabulary)> {
    Ok((
        MergeTable::load(&dir.join(BPE_CODES))?,
        Vocabulary::load(&dir.join(VOCAB))?,
    ))
}

/// `apply-bpe`: `utt_id<TAB>subword subword ...` for every row.
pub fn apply_bpe_stage(
    manifest_path: &Path,
    bpe_dir: &Path,
    task: Task,
    cfg: &ExperimentConfig,
    out: &Path,
    force: bool,
) -> Result<Outcome> {
    if up_to_date(&[out.to_path_buf()], force) {
        return Ok(Outcome::Skipped);
    }
    let manifest = Manifest::load(manifest_path)?;
    let (table, vocab) = load_bpe(bpe_dir)?;
    let mut text = String::new();
    for row in &manifest.rows {
        let ids = apply_bpe(&task.target(row, cfg)?, &table, &vocab).ids;
        let toks: Vec<&str> = ids
            .iter()
            .map(|&i| vocab.token_of(i).unwrap_or("<unk>"))
            .collect();
        text.push_str(&format!("{}\t{}\n", row.utt_id, toks.join(" ")));
    }
    write_text(out, &text)?;
    Ok(Outcome::Ran)
}

struct TaskData {
    examples: Vec<Example>,
    references: Vec<Vec<Vec<String>>>,
}

fn task_data(
    manifests: &[(PathBuf, Manifest)],
    task: Task,
    cfg: &ExperimentConfig,
    bpe: &(MergeTable, Vocabulary),
) -> Result<TaskData> {
    let mut examples = Vec::new();
    let mut references = Vec::new();
    for (path, m) in manifests {
        let feats = load_features(path, m, MfccConfig::default().shift_seconds)?;
        for (row, f) in m.rows.iter().zip(feats) {
            let ids = apply_bpe(&task.target(row, cfg)?, &bpe.0, &bpe.1).ids;
            examples.push(Example::new(&row.utt_id, f.frames, ids));
            references.push(task.references(row, cfg)?);
        }
    }
    Ok(TaskData {
        examples,
        references,
    })
}

fn copy_bpe(from: &Path, to: &Path) -> Result<()> {
    for name in [BPE_CODES, VOCAB] {
        let (src, dst) = (from.join(name), to.join(name));
        if src != dst {
            fs::copy(&src, &dst).map_err(|e| Error::io(&src, e))?;
        }
    }
    Ok(())
}

fn is_complete(ck_dir: &Path) -> bool {
    load_checkpoint(ck_dir)
        .is_ok_and(|c| c.info.get("complete").map(String::as_str) == Some("true"))
}

/// Paths used by the `train` stage.
pub struct TrainPaths<'a> {
    pub train: &'a [PathBuf],
    pub dev: &'a Path,
    pub bpe: &'a Path,
    /// Checkpoint written by `transfer-init`, or `None` for random init.
    pub init: Option<&'a Path>,
    pub out: &'a Path,
}

/// `train`: trains an ASR or AST model, saving a checkpoint (with the
/// BPE files) after every epoch. An unfinished checkpoint in `out` is
/// resumed; a finished one makes the stage a no-op unless forced.
pub fn train(
    task: Task,
    paths: &TrainPaths,
    cfg: &ExperimentConfig,
    root_seed: u64,
    force: bool,
) -> Result<Outcome> {
    if !force && is_complete(paths.out) {
        return Ok(Outcome::Skipped);
    }
    let bpe = load_bpe(paths.bpe)?;
    let train_data = task_data(&load_manifests(paths.train)?, task, cfg, &bpe)?;
    let dev_data = task_data(
        &load_manifests(&[paths.dev.to_path_buf()])?,
        task,
        cfg,
        &bpe,
    )?;
    let input_dim = train_data
        .examples
        .first()
        .map(|e| e.feats.ncols())
        .ok_or_else(|| Error::Empty("training manifest".into()))?;
    let model = cfg.model(input_dim, bpe.1.len())?;
    let mut tcfg = cfg.train.clone();
    tcfg.seed = derive_seed(root_seed, &format!("train/{}", task.name()));

    let resumable = !force && paths.out.join("meta.json").exists();
    let (mut state, mut history, mut info) = if resumable {
        let ck = load_checkpoint_for(paths.out, &model)?;
        log::info!(
            "resuming {} at epoch {}",
            paths.out.display(),
            ck.schedule.epoch
        );
        let (h, i) = (ck.history.clone(), ck.info.clone());
        (ck.into_state(), h, i)
    } else {
        let params = match paths.init {
            Some(init) => load_checkpoint_for(init, &model)?.params,
            None => model.init_params(&mut ChaCha8Rng::seed_from_u64(derive_seed(
                root_seed,
                &format!("train/{}/init", task.name()),
            ))),
        };
        let mut info = BTreeMap::new();
        info.insert("task".to_string(), task.name().to_string());
        if let Some(init) = paths.init {
            info.insert("init".to_string(), init.display().to_string());
        }
        (TrainState::new(params, &tcfg), Vec::new(), info)
    };
    create_dir(paths.out)?;
    copy_bpe(paths.bpe, paths.out)?;
    info.insert("complete".into(), "false".into());
    let dev = DevSet {
        examples: &dev_data.examples,
        references: &dev_data.references,
        vocab: &bpe.1,
    };
    let save = |state: &TrainState,
                history: &[crate::train::EpochRecord],
                info: &BTreeMap<String, String>| {
        let mut ck = Checkpoint::from_state(&model, &tcfg, state);
        ck.history = history.to_vec();
        ck.info = info.clone();
        save_checkpoint(paths.out, &ck)
    };
    train_loop(
        &model,
        &train_data.examples,
        &dev,
        &mut state,
        &tcfg,
        |record, st| {
            history.push(record.clone());
            save(st, &history, &info)?;
            Ok(true)
        },
    )?;
    info.insert("complete".into(), "true".into());
    save(&state, &history, &info)?;
    Ok(Outcome::Ran)
}

/// `transfer-init`: a fresh model for `task` over the vocabulary in
/// `bpe_dir`, whose encoder is copied from `source`. The decoder is
/// randomly initialized from the root seed.
pub fn transfer_init(
    source: &Path,
    task: Task,
    bpe_dir: &Path,
    cfg: &ExperimentConfig,
    root_seed: u64,
    out: &Path,
    force: bool,
) -> Result<Outcome> {
    if up_to_date(&[out.join("meta.json")], force) {
        return Ok(Outcome::Skipped);
    }
    let src = load_checkpoint(source)?;
    let (_, vocab) = load_bpe(bpe_dir)?;
    let model = cfg.model(src.model.encoder.input_dim, vocab.len())?;
    let fresh = model.init_params(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        root_seed,
        &format!("train/{}/init", task.name()),
    )));
    let params = transfer_encoder(&src.params, &fresh)?;
    let mut info = BTreeMap::new();
    info.insert("task".to_string(), task.name().to_string());
    info.insert("encoder_from".to_string(), source.display().to_string());
    let ck = Checkpoint {
        model,
        train: cfg.train.clone(),
        params,
        schedule: ScheduleState::new(&cfg.train),
        optimizer: None,
        rng: ChaCha8Rng::seed_from_u64(0),
        info,
        history: Vec::new(),
    };
    create_dir(out)?;
    save_checkpoint(out, &ck)?;
    copy_bpe(bpe_dir, out)?;
    Ok(Outcome::Ran)
}

/// `augment-speed`: the original rows plus one resampled copy of every
/// audio row per factor. Perturbed audio goes to `out/wav`, the combined
/// manifest to `out/manifest.tsv`.
pub fn augment_speed(
    manifest_path: &Path,
    factors: &[f64],
    out: &Path,
    force: bool,
) -> Result<Outcome> {
    if factors.is_empty() || factors.iter().any(|&f| !(f > 0.0) || f == 1.0) {
        return Err(Error::invalid(format!(
            "speed factors must be positive and not 1: {factors:?}"
        )));
    }
    let out_manifest = out.join(MANIFEST);
    if up_to_date(std::slice::from_ref(&out_manifest), force) {
        return Ok(Outcome::Skipped);
    }
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let wav_dir = out.join("wav");
    create_dir(&wav_dir)?;
    let mut originals = Vec::new();
    let mut perturbed = Vec::new();
    for row in &manifest.rows {
        if !is_wav(&row.path) {
            return Err(Error::invalid(format!(
                "{}: speed perturbation needs audio, got {}",
                row.utt_id, row.path
            )));
        }
        let src = resolve(base, &row.path);
        let src = fs::canonicalize(&src).map_err(|e| Error::io(&src, e))?;
        let wave = read_wav(&src, &row.utt_id, &row.speaker_id)?;
        originals.push(ManifestRow {
            path: src.display().to_string(),
            duration: wave.duration(),
            ..row.clone()
        });
        for &f in factors {
            let w = speed_perturb(&wave, f)?;
            let name = format!("{}.wav", w.utt_id);
            write_wav(&wav_dir.join(&name), &w)?;
            perturbed.push(ManifestRow {
                utt_id: w.utt_id.clone(),
                path: format!("wav/{name}"),
                speaker_id: w.speaker_id.clone(),
                duration: w.duration(),
                ..row.clone()
            });
        }
    }
    originals.extend(perturbed);
    Manifest::new(originals)?.save(&out_manifest)?;
    Ok(Outcome::Ran)
}

fn checkpoint_with_vocab(dir: &Path) -> Result<(Checkpoint, Vocabulary)> {
    Ok((load_checkpoint(dir)?, Vocabulary::load(&dir.join(VOCAB))?))
}

/// `decode`: beam search over every row, written as `utt_id<TAB>text`.
pub fn decode(
    checkpoint: &Path,
    manifest_path: &Path,
    cfg: &ExperimentConfig,
    out: &Path,
    force: bool,
) -> Result<Outcome> {
    if up_to_date(&[out.to_path_buf()], force) {
        return Ok(Outcome::Skipped);
    }
    let (ck, vocab) = checkpoint_with_vocab(checkpoint)?;
    let manifest = Manifest::load(manifest_path)?;
    let feats = load_features(
        manifest_path,
        &manifest,
        MfccConfig::default().shift_seconds,
    )?;
    let examples: Vec<Example> = feats
        .into_iter()
        .map(|f| Example::new(f.utt_id, f.frames, Vec::new()))
        .collect();
    let ids = decode_all(&ck.model, &ck.params, &examples, &cfg.beam)?;
    let rows = examples
        .iter()
        .zip(&ids)
        .map(|(e, i)| Ok((e.utt_id.clone(), decode_bpe(i, &vocab)?)))
        .collect::<Result<Vec<_>>>()?;
    parent_dir(out)?;
    write_decoded(out, &rows)?;
    Ok(Outcome::Ran)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Wer,
    Bleu,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wer" => Ok(Metric::Wer),
            "bleu" => Ok(Metric::Bleu),
            _ => Err(Error::invalid(format!(
                "unknown metric {s:?} (expected wer or bleu)"
            ))),
        }
    }
}

/// `score`: corpus WER against transcripts or BLEU against every
/// translation column. Every manifest row needs a hypothesis.
pub fn score(
    metric: Metric,
    manifest_path: &Path,
    hyp_path: &Path,
    cfg: &ExperimentConfig,
    out: &Path,
    force: bool,
) -> Result<(Outcome, Option<EvalReport>)> {
    if up_to_date(&[out.to_path_buf()], force) {
        return Ok((Outcome::Skipped, None));
    }
    let manifest = Manifest::parse(
        &fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?,
        &manifest_path.display().to_string(),
    )?;
    let hyps: BTreeMap<String, String> = read_decoded(hyp_path)?.into_iter().collect();
    let hyp_of = |row: &ManifestRow| -> Result<Vec<String>> {
        let h = hyps
            .get(&row.utt_id)
            .ok_or_else(|| Error::invalid(format!("no hypothesis for {}", row.utt_id)))?;
        Ok(h.split_whitespace().map(str::to_string).collect())
    };
    let report = match metric {
        Metric::Wer => {
            let rows = manifest
                .rows
                .iter()
                .map(|r| {
                    Ok((
                        r.utt_id.clone(),
                        Task::Asr.references(r, cfg)?.remove(0),
                        hyp_of(r)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            EvalReport::wer(&rows)?
        }
        Metric::Bleu => {
            let rows = manifest
                .rows
                .iter()
                .map(|r| Ok((r.utt_id.clone(), Task::Ast.references(r, cfg)?, hyp_of(r)?)))
                .collect::<Result<Vec<_>>>()?;
            EvalReport::bleu(&rows)?
        }
    };
    parent_dir(out)?;
    report.save(out)?;
    Ok((Outcome::Ran, Some(report)))
}

const LAYERS_FILE: &str = "layers.txt";

/// `probe extract`: encoder activations at every probe point with their
/// downsampled frame labels, as `<layer>.ark` and `<layer>.labels`.
pub fn probe_extract(
    checkpoint: &Path,
    manifest_path: &Path,
    labels_path: &Path,
    out: &Path,
    force: bool,
) -> Result<Outcome> {
    if up_to_date(&[out.join(LAYERS_FILE)], force) {
        return Ok(Outcome::Skipped);
    }
    let ck = load_checkpoint(checkpoint)?;
    let manifest = Manifest::load(manifest_path)?;
    let feats = load_features(
        manifest_path,
        &manifest,
        MfccConfig::default().shift_seconds,
    )?;
    let labels = read_labels(labels_path)?;
    let reps = extract_layer_reps(&ck.model, &ck.params, &feats, &labels)?;
    create_dir(out)?;
    for r in &reps {
        let mut ark = FeatureArchiveWriter::create(&out.join(format!("{}.ark", r.layer_tag)))?;
        let mut l = Vec::with_capacity(r.utterances.len());
        for (id, m, lab) in &r.utterances {
            ark.append(id, &m.mapv(|v| v as f32))?;
            l.push(UttLabels {
                utt_id: id.clone(),
                labels: lab.clone(),
            });
        }
        ark.finish()?;
        write_labels(&out.join(format!("{}.labels", r.layer_tag)), &l)?;
    }
    let tags: Vec<&str> = reps.iter().map(|r| r.layer_tag.as_str()).collect();
    write_text(&out.join(LAYERS_FILE), &(tags.join("\n") + "\n"))?;
    Ok(Outcome::Ran)
}

fn read_layer_tags(reps_dir: &Path, layer: Option<&str>) -> Result<Vec<String>> {
    let path = reps_dir.join(LAYERS_FILE);
    let all: Vec<String> = fs::read_to_string(&path)
        .map_err(|e| Error::io(&path, e))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    match layer {
        None => Ok(all),
        Some(l) if all.iter().any(|t| t == l) => Ok(vec![l.to_string()]),
        Some(l) => Err(Error::invalid(format!(
            "unknown layer {l:?}; extracted layers: {}",
            all.join(", ")
        ))),
    }
}

fn read_layer(reps_dir: &Path, tag: &str) -> Result<LayerReps> {
    let frames = crate::audio::read_archive(&reps_dir.join(format!("{tag}.ark")))?;
    let labels = read_labels(&reps_dir.join(format!("{tag}.labels")))?;
    if frames.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{tag}: {} utterances but {} label rows",
            frames.len(),
            labels.len()
        )));
    }
    let utterances = frames
        .into_iter()
        .zip(labels)
        .map(|((id, m), l)| {
            if id != l.utt_id {
                return Err(Error::invalid(format!(
                    "{tag}: utterance order differs ({id} vs {})",
                    l.utt_id
                )));
            }
            Ok((id, m.mapv(f64::from), l.labels))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LayerReps {
        layer_tag: tag.to_string(),
        utterances,
    })
}

fn probe_split_seed(root_seed: u64) -> u64 {
    derive_seed(root_seed, "probe/split")
}

/// `probe train`: one linear probe per layer (or only `layer`), saved as
/// `<layer>.probe.json`.
pub fn probe_train(
    reps_dir: &Path,
    layer: Option<&str>,
    cfg: &ExperimentConfig,
    root_seed: u64,
    out: &Path,
    force: bool,
) -> Result<Outcome> {
    let tags = read_layer_tags(reps_dir, layer)?;
    let outputs: Vec<PathBuf> = tags
        .iter()
        .map(|t| out.join(format!("{t}.probe.json")))
        .collect();
    if up_to_date(&outputs, force) {
        return Ok(Outcome::Skipped);
    }
    create_dir(out)?;
    for (tag, path) in tags.iter().zip(&outputs) {
        let reps = read_layer(reps_dir, tag)?;
        let (train, _) = split_frames(
            &reps,
            cfg.probe_train_fraction,
            cfg.probe_frame_cap,
            probe_split_seed(root_seed),
        )?;
        let probe = train_probe(&train, &ProbeOptions::default())?;
        write_text(path, &(serde_json::to_string(&probe)? + "\n"))?;
    }
    Ok(Outcome::Ran)
}

/// `probe report`: test-split accuracy and majority baseline of every
/// trained probe, written as `<out>.json` and `<out>.tsv`.
pub fn probe_report(
    reps_dir: &Path,
    probes_dir: &Path,
    layer: Option<&str>,
    cfg: &ExperimentConfig,
    root_seed: u64,
    out: &Path,
    force: bool,
) -> Result<(Outcome, Option<ProbeReport>)> {
    if up_to_date(
        &[out.with_extension("json"), out.with_extension("tsv")],
        force,
    ) {
        return Ok((Outcome::Skipped, None));
    }
    let mut layers = Vec::new();
    for tag in read_layer_tags(reps_dir, layer)? {
        let ppath = probes_dir.join(format!("{tag}.probe.json"));
        let probe: LinearProbe =
            serde_json::from_str(&fs::read_to_string(&ppath).map_err(|e| Error::io(&ppath, e))?)?;
        let reps = read_layer(reps_dir, &tag)?;
        let (train, test) = split_frames(
            &reps,
            cfg.probe_train_fraction,
            cfg.probe_frame_cap,
            probe_split_seed(root_seed),
        )?;
        let mut res = evaluate_probe(&probe, &test)?;
        res.n_train = train.len();
        layers.push(res);
    }
    let report = ProbeReport {
        dataset: reps_dir.display().to_string(),
        model: probes_dir.display().to_string(),
        split: "utterance-level".into(),
        layers,
    };
    parent_dir(out)?;
    report.save(out)?;
    Ok((Outcome::Ran, Some(report)))
}

/// `analyze correlate`: Spearman correlation between pretraining WER and
/// AST BLEU over the dev rows, plus scatter-plot data. Uses the bundled
/// table when `records` is `None`.
pub fn analyze_correlate(
    records: Option<&Path>,
    baseline: &str,
    out: &Path,
    force: bool,
) -> Result<(Outcome, Option<CorrelationReport>)> {
    let outputs = [out.join("correlation.json"), out.join("plot_data.tsv")];
    if up_to_date(&outputs, force) {
        return Ok((Outcome::Skipped, None));
    }
    let table = match records {
        Some(p) => read_records(p)?,
        None => bundled_table(),
    };
    let report = correlate_report(&table.records, baseline)?;
    create_dir(out)?;
    write_text(
        &outputs[0],
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    emit_plot_data(Some(&report), &outputs[1])?;
    Ok((Outcome::Ran, Some(report)))
}
