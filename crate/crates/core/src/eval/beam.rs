use crate::error::{Error, Result};
use crate::model::{DecoderConfig, DecoderSession, DecoderState, EncoderStates, ParameterSet};
use crate::text::{EOS, NUM_RESERVED};

/// A partial or complete decoder output. `ids` excludes the leading bos.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub ids: Vec<usize>,
    /// Sum of token log-probabilities.
    pub logprob: f64,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub len_norm_alpha: f64,
    /// Defaults to `2 * T' + 10` when unset.
    pub max_len: Option<usize>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam_size: 5,
            len_norm_alpha: 0.6,
            max_len: None,
        }
    }
}

/// `((5 + len) / 6) ^ alpha`.
pub fn length_penalty(len: usize, alpha: f64) -> f64 {
    ((5.0 + len as f64) / 6.0).powf(alpha)
}

/// Log-probability divided by the length penalty of the generated tokens
/// (eos included).
pub fn length_normalized_score(h: &Hypothesis, alpha: f64) -> Result<f64> {
    if h.ids.is_empty() {
        return Err(Error::Empty("hypothesis".into()));
    }
    Ok(h.logprob / length_penalty(h.ids.len(), alpha))
}

struct Candidate {
    parent: usize,
    token: usize,
    logprob: f64,
}

/// Breadth-first beam search. Each step keeps the `beam_size` best
/// expansions by cumulative log-probability (ties to the lower token id);
/// expansions ending in eos move to a completed pool. At `max_len` eos is
/// forced. Search stops once no active hypothesis can still beat the best
/// completed length-normalized score. Pad, bos and unk are never emitted.
pub fn beam_search(
    enc: &EncoderStates,
    params: &ParameterSet,
    cfg: &DecoderConfig,
    beam: &BeamConfig,
) -> Result<Hypothesis> {
    if beam.beam_size == 0 || !(beam.len_norm_alpha >= 0.0) {
        return Err(Error::invalid(format!("invalid beam config {beam:?}")));
    }
    let session = DecoderSession::new(params, cfg, enc)?;
    let max_len = beam.max_len.unwrap_or(2 * session.source_len() + 10).max(1);
    let alpha = beam.len_norm_alpha;
    // Normalized scores can only improve by lengthening; this bounds them.
    let best_possible_penalty = length_penalty(max_len, alpha);

    let mut active = vec![(
        Hypothesis {
            ids: Vec::new(),
            logprob: 0.0,
            finished: false,
        },
        DecoderState::initial(cfg),
    )];
    let mut best: Option<(f64, Hypothesis)> = None;

    while !active.is_empty() {
        let prev: Vec<usize> = active
            .iter()
            .map(|(h, _)| h.ids.last().copied().unwrap_or(crate::text::BOS))
            .collect();
        let states: Vec<&DecoderState> = active.iter().map(|(_, s)| s).collect();
        let outputs = session.step(&prev, &states)?;

        let mut candidates = Vec::new();
        for (parent, ((hyp, _), out)) in active.iter().zip(&outputs).enumerate() {
            let must_end = hyp.ids.len() + 1 >= max_len;
            let tokens = std::iter::once(EOS).chain(NUM_RESERVED..cfg.vocab_size);
            for token in tokens {
                if must_end && token != EOS {
                    continue;
                }
                candidates.push(Candidate {
                    parent,
                    token,
                    logprob: hyp.logprob + out.log_probs[token],
                });
            }
        }
        candidates.sort_by(|a, b| {
            b.logprob
                .total_cmp(&a.logprob)
                .then(a.token.cmp(&b.token))
                .then(a.parent.cmp(&b.parent))
        });
        candidates.truncate(beam.beam_size);

        let mut next = Vec::with_capacity(candidates.len());
        for cand in candidates {
            let mut ids = active[cand.parent].0.ids.clone();
            ids.push(cand.token);
            let finished = cand.token == EOS;
            let hyp = Hypothesis {
                ids,
                logprob: cand.logprob,
                finished,
            };
            if finished {
                let score = length_normalized_score(&hyp, alpha)?;
                if best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((score, hyp));
                }
            } else {
                next.push((hyp, outputs[cand.parent].state.clone()));
            }
        }
        active = next;
        if let Some((best_score, _)) = &best {
            active.retain(|(h, _)| h.logprob / best_possible_penalty >= *best_score);
        }
    }
    Ok(best.expect("forced eos completes every hypothesis").1)
}
