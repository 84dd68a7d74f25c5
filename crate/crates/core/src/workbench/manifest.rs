use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_REFERENCES: usize = 4;
const FIXED_COLUMNS: [&str; 5] = ["utt_id", "path", "speaker_id", "duration", "transcript"];

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub utt_id: String,
    /// Feature archive or wav file, relative to the manifest's directory
    /// unless absolute.
    pub path: String,
    pub speaker_id: String,
    pub duration: f64,
    pub transcript: String,
    /// Zero to four translation references.
    pub translations: Vec<String>,
}

/// Tab-separated utterance table with a header row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

fn field(s: &str) -> Result<&str> {
    if s.contains('\t') || s.contains('\n') {
        return Err(Error::invalid(format!(
            "manifest field contains a tab or newline: {s:?}"
        )));
    }
    Ok(s)
}

impl Manifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        let m = Self { rows };
        m.check_unique()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.rows.iter().map(|r| r.duration).sum()
    }

    /// Number of reference columns (the widest row).
    pub fn n_references(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.translations.len())
            .max()
            .unwrap_or(0)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.rows {
            if !seen.insert(r.utt_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate utterance id {}",
                    r.utt_id
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> Result<String> {
        let n_refs = self.n_references();
        if n_refs > MAX_REFERENCES {
            return Err(Error::invalid(format!(
                "at most {MAX_REFERENCES} references per utterance"
            )));
        }
        let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend((1..=n_refs).map(|k| format!("ref{k}")));
        let mut out = header.join("\t") + "\n";
        for r in &self.rows {
            let mut cols = vec![
                field(&r.utt_id)?.to_string(),
                field(&r.path)?.to_string(),
                field(&r.speaker_id)?.to_string(),
                format!("{}", r.duration),
                field(&r.transcript)?.to_string(),
            ];
            for k in 0..n_refs {
                cols.push(field(r.translations.get(k).map_or("", String::as_str))?.to_string());
            }
            out += &cols.join("\t");
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, reason: String| Error::Parse {
            path: origin.to_string(),
            line,
            reason,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| err(1, "missing header row".into()))?;
        let cols: Vec<&str> = header.split('\t').collect();
        if cols.len() < FIXED_COLUMNS.len() || cols[..5] != FIXED_COLUMNS {
            return Err(err(
                1,
                format!("header must start with {}", FIXED_COLUMNS.join(",")),
            ));
        }
        let n_refs = cols.len() - FIXED_COLUMNS.len();
        if n_refs > MAX_REFERENCES
            || cols[5..]
                .iter()
                .enumerate()
                .any(|(k, c)| *c != format!("ref{}", k + 1))
        {
            return Err(err(1, "reference columns must be ref1..ref4".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != cols.len() {
                return Err(err(
                    i + 1,
                    format!("{} fields, expected {}", f.len(), cols.len()),
                ));
            }
            let duration: f64 = f[3]
                .parse()
                .ok()
                .filter(|d: &f64| d.is_finite() && *d >= 0.0)
                .ok_or_else(|| err(i + 1, format!("bad duration {:?}", f[3])))?;
            if f[0].is_empty() {
                return Err(err(i + 1, "empty utterance id".into()));
            }
            let translations: Vec<String> = f[5..].iter().map(|s| s.to_string()).collect();
            let keep = translations
                .iter()
                .rposition(|t| !t.is_empty())
                .map_or(0, |p| p + 1);
            rows.push(ManifestRow {
                utt_id: f[0].into(),
                path: f[1].into(),
                speaker_id: f[2].into(),
                duration,
                transcript: f[4].into(),
                translations: translations[..keep].to_vec(),
            });
        }
        let m = Self { rows };
        m.check_unique()?;
        Ok(m)
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        for r in &m.rows {
            let p = resolve(base, &r.path);
            if !p.exists() {
                return Err(Error::invalid(format!(
                    "{}: missing file {}",
                    r.utt_id,
                    p.display()
                )));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }
}

/// Resolves a manifest path against the manifest's directory.
pub fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Random subset whose total duration stays within one utterance below
/// `target_hours`. Rows come back ordered by utterance id.
pub fn downsample_manifest(manifest: &Manifest, target_hours: f64, seed: u64) -> Result<Manifest> {
    let target = target_hours * 3600.0;
    let total = manifest.total_duration();
    if !(target >= 0.0) || target > total * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "target {target_hours} h exceeds the available {:.4} h",
            total / 3600.0
        )));
    }
    let mut chosen: Vec<&ManifestRow> = if target >= total * (1.0 - 1e-12) {
        manifest.rows.iter().collect()
    } else {
        let mut order: Vec<usize> = (0..manifest.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut sum = 0.0;
        let mut picked = Vec::new();
        for i in order {
            let d = manifest.rows[i].duration;
            if sum + d <= target {
                sum += d;
                picked.push(&manifest.rows[i]);
            }
        }
        picked
    };
    chosen.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    Ok(Manifest {
        rows: chosen.into_iter().cloned().collect(),
    })
}
