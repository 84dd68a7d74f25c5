use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bleu::{BleuStats, MAX_ORDER};
use super::wer::{edit_counts, EditCounts};
use crate::error::{Error, Result};

/// Corpus score with the sufficient statistics needed to recompute it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub corpus_score: f64,
    pub n_utterances: usize,
    pub counts: BTreeMap<String, usize>,
    #[serde(default)]
    pub per_utterance: Vec<(String, f64)>,
}

impl EvalReport {
    /// WER report; `pairs` are (utt_id, reference words, hypothesis words).
    pub fn wer(pairs: &[(String, Vec<String>, Vec<String>)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("evaluation corpus".into()));
        }
        let mut total = EditCounts::default();
        let mut per = Vec::with_capacity(pairs.len());
        for (id, r, h) in pairs {
            let c = edit_counts(r, h);
            per.push((id.clone(), c.rate()?));
            total.add(&c);
        }
        let counts = BTreeMap::from([
            ("substitutions".to_string(), total.substitutions),
            ("insertions".to_string(), total.insertions),
            ("deletions".to_string(), total.deletions),
            ("ref_words".to_string(), total.ref_words),
        ]);
        Ok(Self {
            metric: "wer".into(),
            corpus_score: total.rate()?,
            n_utterances: pairs.len(),
            counts,
            per_utterance: per,
        })
    }

    /// BLEU report; `items` are (utt_id, references, hypothesis words).
    pub fn bleu(items: &[(String, Vec<Vec<String>>, Vec<String>)]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Empty("hypothesis corpus".into()));
        }
        let mut total = BleuStats::default();
        let mut per = Vec::with_capacity(items.len());
        for (id, refs, hyp) in items {
            let st = BleuStats::sentence(refs, hyp)?;
            per.push((id.clone(), st.score()));
            total.add(&st);
        }
        let mut counts = BTreeMap::new();
        for n in 0..MAX_ORDER {
            counts.insert(format!("matches_{}", n + 1), total.matches[n]);
            counts.insert(format!("totals_{}", n + 1), total.totals[n]);
        }
        counts.insert("hyp_len".into(), total.hyp_len);
        counts.insert("ref_len".into(), total.ref_len);
        Ok(Self {
            metric: "bleu".into(),
            corpus_score: total.score(),
            n_utterances: items.len(),
            counts,
            per_utterance: per,
        })
    }

    /// Recomputes the corpus score from `counts` alone.
    pub fn recompute(&self) -> Result<f64> {
        let get = |k: &str| {
            self.counts
                .get(k)
                .copied()
                .ok_or_else(|| Error::invalid(format!("report lacks count {k}")))
        };
        match self.metric.as_str() {
            "wer" => EditCounts {
                substitutions: get("substitutions")?,
                insertions: get("insertions")?,
                deletions: get("deletions")?,
                ref_words: get("ref_words")?,
            }
            .rate(),
            "bleu" => {
                let mut st = BleuStats {
                    hyp_len: get("hyp_len")?,
                    ref_len: get("ref_len")?,
                    ..Default::default()
                };
                for n in 0..MAX_ORDER {
                    st.matches[n] = get(&format!("matches_{}", n + 1))?;
                    st.totals[n] = get(&format!("totals_{}", n + 1))?;
                }
                Ok(st.score())
            }
            other => Err(Error::invalid(format!("unknown metric {other}"))),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Writes `utt_id<TAB>text` lines.
pub fn write_decoded(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (id, text) in rows {
        writeln!(out, "{id}\t{text}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads `utt_id<TAB>text` lines; text may be empty.
pub fn read_decoded(path: &Path) -> Result<Vec<(String, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line.split_once('\t').unwrap_or((line.as_str(), ""));
        if id.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                reason: "missing utterance id".into(),
            });
        }
        rows.push((id.to_string(), text.trim().to_string()));
    }
    Ok(rows)
}
