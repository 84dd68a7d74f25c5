use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for corpus BLEU.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    /// Clipped n-gram matches for n = 1..4.
    pub matches: [usize; MAX_ORDER],
    /// Hypothesis n-gram counts for n = 1..4.
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    /// Sum of closest reference lengths.
    pub ref_len: usize,
}

fn ngram_counts<S: AsRef<str>>(words: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if words.len() >= n {
        for win in words.windows(n) {
            let key: Vec<&str> = win.iter().map(|w| w.as_ref()).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    /// Statistics of one hypothesis against its references.
    pub fn sentence<S: AsRef<str>>(refs: &[Vec<S>], hyp: &[S]) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::Empty("reference set".into()));
        }
        let c = hyp.len();
        let ref_len = refs
            .iter()
            .map(Vec::len)
            .min_by_key(|&r| (r.abs_diff(c), r))
            .unwrap();
        let mut stats = BleuStats {
            hyp_len: c,
            ref_len,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let hyp_counts = ngram_counts(hyp, n);
            let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
            for r in refs {
                for (gram, count) in ngram_counts(r, n) {
                    let slot = max_ref.entry(gram).or_insert(0);
                    *slot = (*slot).max(count);
                }
            }
            stats.totals[n - 1] = c.saturating_sub(n - 1);
            stats.matches[n - 1] = hyp_counts
                .iter()
                .map(|(g, &k)| k.min(max_ref.get(g).copied().unwrap_or(0)))
                .sum();
        }
        Ok(stats)
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// Unsmoothed BLEU on a 0-100 scale.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.contains(&0) {
            return 0.0;
        }
        let log_prec: f64 = (0..MAX_ORDER)
            .map(|n| (self.matches[n] as f64 / self.totals[n] as f64).ln())
            .sum::<f64>()
            / MAX_ORDER as f64;
        let bp = if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        100.0 * bp * log_prec.exp()
    }
}

/// Corpus-level BLEU-4 with up to several references per hypothesis.
/// Returns the score with the pooled statistics.
pub fn bleu4<S: AsRef<str>>(refs: &[Vec<Vec<S>>], hyps: &[Vec<S>]) -> Result<(f64, BleuStats)> {
    if hyps.is_empty() {
        return Err(Error::Empty("hypothesis corpus".into()));
    }
    if refs.len() != hyps.len() {
        return Err(Error::DimensionMismatch {
            expected: hyps.len(),
            actual: refs.len(),
        });
    }
    let mut total = BleuStats::default();
    for (r, h) in refs.iter().zip(hyps) {
        total.add(&BleuStats::sentence(r, h)?);
    }
    Ok((total.score(), total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn exact_match_scores_100() {
        let refs = vec![
            vec![w("the cat sat on the mat"), w("a cat was on the mat")],
            vec![w("there is a dog here today")],
        ];
        let hyps = vec![w("a cat was on the mat"), w("there is a dog here today")];
        let (s, _) = bleu4(&refs, &hyps).unwrap();
        assert!((s - 100.0).abs() < 1e-9);
    }

    #[test]
    fn missing_four_grams_give_zero() {
        let refs = vec![vec![w("a b c d e")]];
        let hyps = vec![w("a b c x d e")];
        let (s, stats) = bleu4(&refs, &hyps).unwrap();
        assert_eq!(stats.matches[3], 0);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn brevity_penalty_short_hypothesis() {
        let (s, stats) = bleu4(&[vec![w("a b c d e")]], &[w("a b c d")]).unwrap();
        assert_eq!(stats.matches, stats.totals);
        assert!((s - 100.0 * (-0.25f64).exp()).abs() < 1e-9);
        assert!((s - 77.88).abs() < 0.01);
    }

    #[test]
    fn closest_reference_prefers_shorter_on_tie() {
        let st = BleuStats::sentence(&[w("a b c d e f"), w("a b")], &w("a b c d")).unwrap();
        assert_eq!(st.ref_len, 2);
    }

    #[test]
    fn clipping_limits_repeats() {
        let st = BleuStats::sentence(&[w("the cat")], &w("the the the")).unwrap();
        assert_eq!(st.matches[0], 1);
        assert_eq!(st.totals[0], 3);
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(bleu4::<String>(&[], &[]).is_err());
    }
}
