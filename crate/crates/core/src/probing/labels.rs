use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Frame-level phone ids of one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UttLabels {
    pub utt_id: String,
    pub labels: Vec<usize>,
}

/// Keeps indices 0, s, 2s, ... once per strided layer.
pub fn subsample_labels<T: Clone>(labels: &[T], stride: usize, n_layers: usize) -> Vec<T> {
    let mut out = labels.to_vec();
    for _ in 0..n_layers {
        out = out.into_iter().step_by(stride.max(1)).collect();
    }
    out
}

/// Drops every other label once per stride-2 layer.
pub fn downsample_labels<T: Clone>(labels: &[T], n_stride2_layers: usize) -> Vec<T> {
    subsample_labels(labels, 2, n_stride2_layers)
}

/// Writes `utt_id<TAB>space-separated ids` lines.
pub fn write_labels(path: &Path, labels: &[UttLabels]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for u in labels {
        let ids: Vec<String> = u.labels.iter().map(usize::to_string).collect();
        writeln!(out, "{}\t{}", u.utt_id, ids.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<UttLabels>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            reason,
        };
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| err("expected utt_id<TAB>labels".into()))?;
        let labels = rest
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(format!("bad label {t:?}"))))
            .collect::<Result<Vec<usize>>>()?;
        out.push(UttLabels {
            utt_id: id.to_string(),
            labels,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn halving_example() {
        let s1 = chars("aaaaaaann");
        let s2 = downsample_labels(&s1, 1);
        assert_eq!(s2.iter().collect::<String>(), "aaaan");
        assert_eq!(downsample_labels(&s1, 2).iter().collect::<String>(), "aan");
    }

    #[test]
    fn length_one_survives() {
        assert_eq!(downsample_labels(&[3], 5), vec![3]);
        assert!(downsample_labels::<usize>(&[], 2).is_empty());
    }

    #[test]
    fn keeps_even_indices() {
        let l: Vec<usize> = (0..8).collect();
        assert_eq!(downsample_labels(&l, 1), vec![0, 2, 4, 6]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.txt");
        let l = vec![
            UttLabels {
                utt_id: "u1".into(),
                labels: vec![0, 0, 3],
            },
            UttLabels {
                utt_id: "u2".into(),
                labels: vec![7],
            },
        ];
        write_labels(&p, &l).unwrap();
        assert_eq!(read_labels(&p).unwrap(), l);
    }
}
