use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub ref_words: usize,
}

impl EditCounts {
    pub fn edits(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn add(&mut self, other: &EditCounts) {
        self.substitutions += other.substitutions;
        self.insertions += other.insertions;
        self.deletions += other.deletions;
        self.ref_words += other.ref_words;
    }

    pub fn rate(&self) -> Result<f64> {
        if self.ref_words == 0 {
            return Err(Error::Empty("reference".into()));
        }
        Ok(self.edits() as f64 / self.ref_words as f64)
    }
}

/// Minimal uniform-cost alignment between two word sequences. Among
/// alignments of equal cost the backtrace prefers substitutions, then
/// deletions, then insertions.
pub fn edit_counts<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            let diag = d[i - 1][j - 1] + usize::from(!same);
            d[i][j] = diag.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut counts = EditCounts {
        ref_words: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
                if !same {
                    counts.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

/// Word error rate of one utterance.
pub fn wer<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<f64> {
    edit_counts(reference, hypothesis).rate()
}

/// Total edits over total reference words, plus the summed counts.
pub fn corpus_wer<S: AsRef<str>>(pairs: &[(Vec<S>, Vec<S>)]) -> Result<(f64, EditCounts)> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation corpus".into()));
    }
    let mut total = EditCounts::default();
    for (r, h) in pairs {
        total.add(&edit_counts(r, h));
    }
    Ok((total.rate()?, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_is_zero() {
        assert_eq!(wer(&w("a b c"), &w("a b c")).unwrap(), 0.0);
    }

    #[test]
    fn one_substitution_in_three() {
        let c = edit_counts(&w("a b c"), &w("a x c"));
        assert_eq!(c.substitutions, 1);
        assert_eq!(c.edits(), 1);
        assert!((wer(&w("a b c"), &w("a x c")).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        let c = edit_counts(&w("a b c d"), &[]);
        assert_eq!(c.deletions, 4);
        assert_eq!(wer(&w("a b c d"), &[]).unwrap(), 1.0);
    }

    #[test]
    fn empty_reference_is_error() {
        assert!(wer::<&str>(&[], &w("a")).is_err());
    }

    #[test]
    fn normalization_is_directional() {
        let short = w("a b");
        let long = w("a b c d");
        assert_eq!(wer(&short, &long).unwrap(), 1.0);
        assert_eq!(wer(&long, &short).unwrap(), 0.5);
    }

    #[test]
    fn corpus_pools_edits() {
        let pairs = vec![(w("a b"), w("a")), (w("c d e f"), w("c d e f"))];
        let (rate, counts) = corpus_wer(&pairs).unwrap();
        assert_eq!(counts.edits(), 1);
        assert_eq!(counts.ref_words, 6);
        assert!((rate - 1.0 / 6.0).abs() < 1e-15);
    }
}
