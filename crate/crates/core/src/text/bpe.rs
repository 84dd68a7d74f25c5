use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use super::vocab::{TokenSequence, Vocabulary, BOS, EOS, PAD, UNK};
use crate::error::{Error, Result};

/// Suffix attached to the last symbol of every word.
pub const END_OF_WORD: &str = "</w>";

const VERSION_TAG: &str = "#bpe-merges v1";

/// Ordered merge operations; earlier merges take priority.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MergeTable {
    pub merges: Vec<(String, String)>,
}

impl MergeTable {
    pub fn n_merges(&self) -> usize {
        self.merges.len()
    }

    fn ranks(&self) -> HashMap<(&str, &str), usize> {
        self.merges
            .iter()
            .enumerate()
            .map(|(i, (a, b))| ((a.as_str(), b.as_str()), i))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{VERSION_TAG}\n");
        for (a, b) in &self.merges {
            out.push_str(a);
            out.push(' ');
            out.push_str(b);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(VERSION_TAG) {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: 1,
                reason: format!("expected version tag {VERSION_TAG:?}"),
            });
        }
        let mut merges = Vec::new();
        let mut seen = BTreeSet::new();
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: n + 2,
                    reason: "expected \"left right\"".into(),
                });
            };
            if !seen.insert((a.to_string(), b.to_string())) {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: n + 2,
                    reason: format!("duplicate merge {a} {b}"),
                });
            }
            merges.push((a.to_string(), b.to_string()));
        }
        Ok(Self { merges })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Splits a word into characters, marking the last one as word-final.
fn word_symbols(word: &str) -> Vec<String> {
    let mut symbols: Vec<String> = word.chars().map(String::from).collect();
    if let Some(last) = symbols.last_mut() {
        last.push_str(END_OF_WORD);
    }
    symbols
}

fn merge_pair(symbols: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let merged = format!("{left}{right}");
            symbols[i] = merged;
            symbols.remove(i + 1);
        }
        i += 1;
    }
}

/// Learns up to `n_merges` merges by repeatedly joining the most frequent
/// adjacent symbol pair inside words. Ties go to the lexicographically
/// smallest pair.
pub fn learn_bpe(corpus: &[String], n_merges: usize) -> MergeTable {
    let mut word_freq: BTreeMap<&str, usize> = BTreeMap::new();
    for line in corpus {
        for word in line.split_whitespace() {
            *word_freq.entry(word).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<String>, usize)> = word_freq
        .into_iter()
        .map(|(w, f)| (word_symbols(w), f))
        .collect();

    let mut merges = Vec::with_capacity(n_merges);
    while merges.len() < n_merges {
        let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (symbols, freq) in &words {
            for pair in symbols.windows(2) {
                *counts.entry((&pair[0], &pair[1])).or_default() += freq;
            }
        }
        let mut best: Option<((&str, &str), usize)> = None;
        for (pair, count) in counts {
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((pair, count));
            }
        }
        let Some(((left, right), _)) = best else {
            break;
        };
        let (left, right) = (left.to_string(), right.to_string());
        for (symbols, _) in &mut words {
            merge_pair(symbols, &left, &right);
        }
        merges.push((left, right));
    }
    MergeTable { merges }
}

/// Learns a merge table and the vocabulary it induces over `corpus`:
/// every initial symbol (sorted) followed by merge products in merge order.
pub fn train_bpe(corpus: &[String], n_merges: usize) -> Result<(MergeTable, Vocabulary)> {
    if corpus.is_empty() {
        return Err(Error::Empty("BPE training corpus".into()));
    }
    let table = learn_bpe(corpus, n_merges);
    let alphabet: BTreeSet<String> = corpus
        .iter()
        .flat_map(|line| line.split_whitespace())
        .flat_map(word_symbols)
        .collect();
    let merged = table.merges.iter().map(|(a, b)| format!("{a}{b}"));
    let vocab = Vocabulary::new(alphabet.into_iter().chain(merged));
    Ok((table, vocab))
}

fn segment_word(
    word: &str,
    ranks: &HashMap<(&str, &str), usize>,
    merges: &[(String, String)],
) -> Vec<String> {
    let mut symbols = word_symbols(word);
    loop {
        let best = symbols
            .windows(2)
            .filter_map(|p| ranks.get(&(p[0].as_str(), p[1].as_str())).copied())
            .min();
        let Some(rank) = best else { break };
        let (left, right) = &merges[rank];
        merge_pair(&mut symbols, left, right);
    }
    symbols
}

/// Segments normalized text into subword ids; symbols missing from the
/// vocabulary become unk. No eos is appended.
pub fn apply_bpe(text: &str, table: &MergeTable, vocab: &Vocabulary) -> TokenSequence {
    let ranks = table.ranks();
    let ids = text
        .split_whitespace()
        .flat_map(|w| segment_word(w, &ranks, &table.merges))
        .map(|sym| {
            vocab
                .id_of(&sym)
                .filter(|&id| !Vocabulary::is_reserved(id))
                .unwrap_or(UNK)
        })
        .collect();
    TokenSequence {
        ids,
        utt_id: String::new(),
    }
}

/// Joins subwords back into words. Stops at the first eos and skips pad/bos.
pub fn decode_bpe(tokens: &[usize], vocab: &Vocabulary) -> Result<String> {
    let mut out = String::new();
    for &id in tokens {
        match id {
            EOS => break,
            PAD | BOS => continue,
            _ => {}
        }
        let tok = vocab.token_of(id).ok_or(Error::InvalidToken {
            id,
            vocab_size: vocab.len(),
        })?;
        if id == UNK {
            out.push_str(tok);
            out.push(' ');
        } else if let Some(stem) = tok.strip_suffix(END_OF_WORD) {
            out.push_str(stem);
            out.push(' ');
        } else {
            out.push_str(tok);
        }
    }
    Ok(out.trim_end().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(lines: &[&str]) -> Vec<String> {
        lines.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn first_merge_is_most_frequent_pair() {
        // (a,a) occurs 2 + 1 = 3 times, (a,b</w>) 1 + 1 = 2 times.
        let table = learn_bpe(&corpus(&["aaab", "aab"]), 1);
        assert_eq!(table.merges, vec![("a".into(), "a".into())]);
    }

    #[test]
    fn ties_break_lexicographically() {
        // (x,y</w>) and (a,b</w>) both occur once.
        let table = learn_bpe(&corpus(&["xy ab"]), 1);
        assert_eq!(table.merges, vec![("a".into(), "b</w>".into())]);
    }

    #[test]
    fn stops_when_pairs_run_out() {
        let table = learn_bpe(&corpus(&["ab"]), 10);
        assert_eq!(table.n_merges(), 1);
    }

    #[test]
    fn zero_merges_segments_characters() {
        let (table, vocab) = train_bpe(&corpus(&["hola mundo"]), 0).unwrap();
        let seq = apply_bpe("hola", &table, &vocab);
        let toks: Vec<_> = seq
            .ids
            .iter()
            .map(|&i| vocab.token_of(i).unwrap())
            .collect();
        assert_eq!(toks, ["h", "o", "l", "a</w>"]);
    }

    #[test]
    fn roundtrip_hola_mundo() {
        let (table, vocab) = train_bpe(&corpus(&["hola mundo", "hola amigo"]), 5).unwrap();
        let seq = apply_bpe("hola mundo", &table, &vocab);
        assert_eq!(decode_bpe(&seq.ids, &vocab).unwrap(), "hola mundo");
    }

    #[test]
    fn unseen_character_maps_to_unk() {
        let (table, vocab) = train_bpe(&corpus(&["abc"]), 2).unwrap();
        let seq = apply_bpe("abz", &table, &vocab);
        assert!(seq.ids.contains(&UNK));
    }

    #[test]
    fn decode_control_sequences() {
        let vocab = Vocabulary::new(["a</w>"]);
        assert_eq!(decode_bpe(&[], &vocab).unwrap(), "");
        assert_eq!(decode_bpe(&[BOS, EOS], &vocab).unwrap(), "");
        assert_eq!(decode_bpe(&[4, EOS, 4], &vocab).unwrap(), "a");
        assert!(matches!(
            decode_bpe(&[99], &vocab),
            Err(Error::InvalidToken { id: 99, .. })
        ));
    }

    #[test]
    fn table_file_roundtrip() {
        let table = learn_bpe(&corpus(&["the cat", "the hat", "that"]), 6);
        let text = table.to_text();
        assert!(text.starts_with("#bpe-merges v1\n"));
        assert_eq!(MergeTable::parse(&text, "mem").unwrap(), table);
        assert!(MergeTable::parse("a b\n", "mem").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_in_alphabet(words in prop::collection::vec("[a-e]{1,6}", 1..8), n in 0usize..30) {
            let text = words.join(" ");
            let (table, vocab) = train_bpe(&[text.clone(), "abcde edcba".to_string()], n).unwrap();
            let seq = apply_bpe(&text, &table, &vocab);
            prop_assert!(seq.ids.iter().all(|&i| i >= crate::text::NUM_RESERVED));
            prop_assert_eq!(decode_bpe(&seq.ids, &vocab).unwrap(), text);
        }

        #[test]
        fn learning_is_deterministic(words in prop::collection::vec("[a-d]{1,5}", 1..10), n in 0usize..20) {
            let c = vec![words.join(" ")];
            prop_assert_eq!(learn_bpe(&c, n), learn_bpe(&c, n));
        }
    }
}
