use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const NUM_RESERVED: usize = 4;

const RESERVED: [&str; NUM_RESERVED] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Subword inventory. Ids 0..4 are reserved for pad, bos, eos and unk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary over `symbols`, skipping duplicates.
    pub fn new<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for r in RESERVED {
            vocab.push(r.to_string());
        }
        for s in symbols {
            vocab.push(s.into());
        }
        vocab
    }

    fn push(&mut self, token: String) {
        if !self.ids.contains_key(&token) {
            self.ids.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= NUM_RESERVED
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token_of(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn is_reserved(id: usize) -> bool {
        id < NUM_RESERVED
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, tok) in self.tokens.iter().enumerate() {
            writeln!(out, "{tok}\t{id}").unwrap();
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let err = |reason: &str| Error::Parse {
                path: origin.to_string(),
                line: n + 1,
                reason: reason.to_string(),
            };
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| err("expected token<TAB>id"))?;
            let id: usize = id.parse().map_err(|_| err("bad id"))?;
            entries.push((id, tok.to_string()));
        }
        entries.sort();
        for (expected, (id, tok)) in entries.iter().enumerate() {
            if *id != expected {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: 0,
                    reason: format!("ids are not contiguous at {id}"),
                });
            }
            if expected < NUM_RESERVED && tok != RESERVED[expected] {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    line: 0,
                    reason: format!("reserved id {expected} must be {}", RESERVED[expected]),
                });
            }
        }
        let vocab = Self::new(entries.into_iter().skip(NUM_RESERVED).map(|(_, t)| t));
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Token ids for one utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub utt_id: String,
}

impl TokenSequence {
    /// Appends eos unless already present, as required for training targets.
    pub fn with_eos(mut self) -> Self {
        if self.ids.last() != Some(&EOS) {
            self.ids.push(EOS);
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_come_first() {
        let v = Vocabulary::new(["a", "b</w>"]);
        assert_eq!(v.id_of("<pad>"), Some(PAD));
        assert_eq!(v.id_of("</s>"), Some(EOS));
        assert_eq!(v.id_of("a"), Some(4));
        assert_eq!(v.token_of(5), Some("b</w>"));
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn text_roundtrip() {
        let v = Vocabulary::new(["x", "y</w>", "xy</w>"]);
        assert_eq!(Vocabulary::parse(&v.to_text(), "mem").unwrap(), v);
    }

    #[test]
    fn parse_rejects_gaps() {
        let text = "<pad>\t0\n<s>\t1\n</s>\t2\n<unk>\t3\na\t5\n";
        assert!(Vocabulary::parse(text, "mem").is_err());
    }
}
