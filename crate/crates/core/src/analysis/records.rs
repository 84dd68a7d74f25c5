use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spearman::spearman;
use crate::error::{Error, Result};

/// Dev-set results of the reference study, one row per pretraining set.
pub const BUNDLED_TABLE: &str = include_str!("../../data/dev_results.tsv");
const HEADER: [&str; 6] = ["dataset_id", "hours", "speakers", "wer", "bleu", "split"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordSplit {
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub dataset_id: String,
    pub hours: f64,
    pub speakers: Option<u32>,
    /// Pretraining WER in percent; absent for the no-pretraining baseline.
    pub wer: Option<f64>,
    pub bleu: f64,
    pub split: RecordSplit,
}

/// Records plus `# key<TAB>value` annotations from the file header.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub records: Vec<ExperimentRecord>,
    pub annotations: Vec<(String, String)>,
}

impl ReferenceTable {
    pub fn annotation(&self, key: &str) -> Option<&str> {
        self.annotations
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub fn parse_records(text: &str, origin: &str) -> Result<ReferenceTable> {
    let err = |line: usize, reason: String| Error::Parse {
        path: origin.to_string(),
        line,
        reason,
    };
    let mut annotations = Vec::new();
    let mut records: Vec<ExperimentRecord> = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.trim().split_once('\t') {
                annotations.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if !header_seen {
            if f != HEADER {
                return Err(err(n, format!("header must be {}", HEADER.join(","))));
            }
            header_seen = true;
            continue;
        }
        if f.len() != HEADER.len() {
            return Err(err(
                n,
                format!("{} fields, expected {}", f.len(), HEADER.len()),
            ));
        }
        let real = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| err(n, format!("bad {what} {s:?}")))
        };
        let opt = |s: &str| !s.trim().is_empty();
        let rec = ExperimentRecord {
            dataset_id: f[0].trim().to_string(),
            hours: real(f[1], "hours")?,
            speakers: if opt(f[2]) {
                Some(
                    f[2].trim()
                        .parse()
                        .map_err(|_| err(n, format!("bad speakers {:?}", f[2])))?,
                )
            } else {
                None
            },
            wer: if opt(f[3]) {
                Some(real(f[3], "wer")?)
            } else {
                None
            },
            bleu: real(f[4], "bleu")?,
            split: match f[5].trim() {
                "dev" => RecordSplit::Dev,
                "test" => RecordSplit::Test,
                s => return Err(err(n, format!("bad split {s:?}"))),
            },
        };
        if records
            .iter()
            .any(|r| r.dataset_id == rec.dataset_id && r.split == rec.split)
        {
            return Err(err(n, format!("duplicate dataset {}", rec.dataset_id)));
        }
        records.push(rec);
    }
    if !header_seen {
        return Err(err(1, "missing header row".into()));
    }
    Ok(ReferenceTable {
        records,
        annotations,
    })
}

pub fn read_records(path: &Path) -> Result<ReferenceTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text, &path.display().to_string())
}

pub fn bundled_table() -> ReferenceTable {
    parse_records(BUNDLED_TABLE, "dev_results.tsv").expect("bundled table parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub dataset_id: String,
    pub wer: f64,
    pub bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub spearman: f64,
    pub n_points: usize,
    pub baseline: String,
    pub baseline_bleu: f64,
    pub points: Vec<PlotPoint>,
    /// BLEU gain of each record over the baseline.
    pub deltas: Vec<(String, f64)>,
}

/// Spearman correlation over records with a WER, plus BLEU deltas over
/// `baseline_id`.
pub fn correlate_report(
    records: &[ExperimentRecord],
    baseline_id: &str,
) -> Result<CorrelationReport> {
    let base = records
        .iter()
        .find(|r| r.dataset_id == baseline_id)
        .ok_or_else(|| Error::invalid(format!("baseline {baseline_id} not among the records")))?;
    let points: Vec<PlotPoint> = records
        .iter()
        .filter_map(|r| {
            r.wer.map(|wer| PlotPoint {
                dataset_id: r.dataset_id.clone(),
                wer,
                bleu: r.bleu,
            })
        })
        .collect();
    if points.len() < 2 {
        return Err(Error::invalid(
            "correlation needs at least two records with a WER",
        ));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.wer).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.bleu).collect();
    let deltas = records
        .iter()
        .filter(|r| r.dataset_id != baseline_id)
        .map(|r| {
            (
                r.dataset_id.clone(),
                ((r.bleu - base.bleu) * 1e6).round() / 1e6,
            )
        })
        .collect();
    Ok(CorrelationReport {
        spearman: spearman(&xs, &ys)?,
        n_points: points.len(),
        baseline: baseline_id.to_string(),
        baseline_bleu: base.bleu,
        points,
        deltas,
    })
}

/// `aishell` for AISHELL-derived sets, `globalphone` for GlobalPhone ones.
pub fn marker_group(dataset_id: &str) -> &'static str {
    if dataset_id.starts_with("zh-ai") {
        "aishell"
    } else if dataset_id.ends_with("-gp") {
        "globalphone"
    } else {
        "other"
    }
}

/// `dataset_id, wer, bleu, marker_group` rows sorted by dataset id.
pub fn plot_data_tsv(report: Option<&CorrelationReport>) -> String {
    let mut out = String::from("dataset_id\twer\tbleu\tmarker_group\n");
    if let Some(r) = report {
        let mut pts: Vec<&PlotPoint> = r.points.iter().collect();
        pts.sort_by(|a, b| a.dataset_id.cmp(&b.dataset_id));
        for p in pts {
            out += &format!(
                "{}\t{}\t{}\t{}\n",
                p.dataset_id,
                p.wer,
                p.bleu,
                marker_group(&p.dataset_id)
            );
        }
    }
    out
}

pub fn emit_plot_data(report: Option<&CorrelationReport>, path: &Path) -> Result<()> {
    fs::write(path, plot_data_tsv(report)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_shape() {
        let t = bundled_table();
        assert_eq!(t.records.len(), 12);
        assert_eq!(t.records.iter().filter(|r| r.wer.is_some()).count(), 11);
        assert_eq!(t.annotation("reported_spearman_all_runs"), Some("-0.97"));
        assert_eq!(t.annotation("reported_spearman_test"), Some("-0.92"));
        let base = &t.records[0];
        assert_eq!(
            (base.dataset_id.as_str(), base.wer, base.bleu),
            ("ast-20h", None, 10.3)
        );
    }

    #[test]
    fn deltas_over_baseline() {
        let rep = correlate_report(&bundled_table().records, "ast-20h").unwrap();
        let get = |id: &str| rep.deltas.iter().find(|(k, _)| k == id).unwrap().1;
        assert!((get("zh-ai-large") - 4.3).abs() < 1e-9);
        assert!((get("pt-gp") - 0.2).abs() < 1e-9);
        assert_eq!(rep.n_points, 11);
    }

    #[test]
    fn missing_baseline_and_single_record() {
        let t = bundled_table();
        assert!(correlate_report(&t.records, "nope").is_err());
        assert!(correlate_report(&t.records[..2], "ast-20h").is_err());
    }

    #[test]
    fn plot_rows_sorted_and_grouped() {
        let rep = correlate_report(&bundled_table().records, "ast-20h").unwrap();
        let tsv = plot_data_tsv(Some(&rep));
        let rows: Vec<&str> = tsv.lines().skip(1).collect();
        assert_eq!(rows.len(), 11);
        assert!(rows[0].starts_with("cs-gp\t") && rows[0].ends_with("\tglobalphone"));
        assert!(tsv.contains("zh-ai-large\t22.5\t14.6\taishell"));
        assert!(tsv.contains("multilin6\t44.2\t13.3\tother"));
        assert_eq!(plot_data_tsv(None), "dataset_id\twer\tbleu\tmarker_group\n");
    }

    #[test]
    fn duplicate_dataset_rejected() {
        let text =
            "dataset_id\thours\tspeakers\twer\tbleu\tsplit\na\t1\t\t2\t3\tdev\na\t1\t\t2\t3\tdev\n";
        assert!(parse_records(text, "x").is_err());
    }
}
