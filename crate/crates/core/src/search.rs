//! Beam search over the decoder and conversion of decoded rules into
//! candidate products.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::{self, Write};

use crate::fragment::{enumerate_cuts, FragmentationConstraints};
use crate::model::tape::Mat;
use crate::model::transformer::{log_softmax, DecoderCache, Memory, ShapeError, Transformer};
use crate::model::vocab::{BOS, EOS, PAD, UNK};
use crate::model::{tokenize, Checkpoint, TokenError};
use crate::molgraph::{canonical_smiles, Molecule};
use crate::smirks::{apply_rule_canonical, parse_rule};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub beam_size: usize,
    pub temperature: f64,
    pub top_k: usize,
    /// Longest rule, in tokens including EOS and any forced prefix.
    pub max_steps: usize,
    pub forced_prefix: Option<Vec<String>>,
    /// Constraints under which decoded rules are applied to the source.
    pub constraints: FragmentationConstraints,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            beam_size: 100,
            temperature: 0.3,
            top_k: 100,
            max_steps: 96,
            forced_prefix: None,
            constraints: FragmentationConstraints::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self, max_tgt_len: usize) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::InvalidConfig(m));
        if self.top_k == 0 || self.beam_size < self.top_k {
            return bad(format!(
                "need beam_size >= top_k >= 1 (beam {}, k {})",
                self.beam_size, self.top_k
            ));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.max_steps == 0 || self.max_steps > max_tgt_len {
            return bad(format!("max_steps must lie in 1..={max_tgt_len}"));
        }
        let prefix = self.forced_prefix.as_ref().map_or(0, Vec::len);
        if prefix >= self.max_steps {
            return bad(format!("forced prefix of {prefix} tokens leaves no room to decode"));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("no hypothesis reached EOS within {0} steps")]
    DecodeOverflow(usize),
    #[error("fragment {0} is not a removable R-group of the source")]
    FragmentNotFound(String),
    #[error("token '{0}' is not in the model vocabulary")]
    UnknownToken(String),
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Token(#[from] TokenError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub rule_text: String,
    /// Sum of token log-probabilities divided by the number of decoded
    /// tokens (EOS included, forced prefix excluded).
    pub score: f64,
    /// Distinct canonical products, sorted; empty when the rule does not
    /// parse or does not apply.
    pub products: Vec<String>,
    /// Why the rule text failed to parse, if it did.
    pub rule_error: Option<String>,
}

impl Candidate {
    pub fn is_valid(&self) -> bool {
        !self.products.is_empty()
    }
}

/// Incremental next-token scorer for a batch of hypotheses.
pub trait StepModel {
    type State: Clone;

    /// State for a single empty hypothesis.
    fn start(&self) -> Self::State;

    /// Feeds one token per hypothesis; returns one logit row per
    /// hypothesis and the advanced state.
    fn step(&self, state: &Self::State, tokens: &[u32]) -> Result<(Mat, Self::State), SearchError>;

    /// Keeps hypothesis `parents[i]` as hypothesis `i`.
    fn reorder(&self, state: &Self::State, parents: &[usize]) -> Self::State;
}

/// A transformer conditioned on one encoded source.
pub struct SourceDecoder<'a> {
    model: &'a Transformer,
    memory: Memory,
}

impl<'a> SourceDecoder<'a> {
    pub fn new(model: &'a Transformer, src: &[u32]) -> Result<Self, SearchError> {
        Ok(SourceDecoder {
            model,
            memory: model.encode(src)?,
        })
    }
}

impl StepModel for SourceDecoder<'_> {
    type State = DecoderCache;

    fn start(&self) -> DecoderCache {
        self.model.start(1)
    }

    fn step(&self, state: &DecoderCache, tokens: &[u32]) -> Result<(Mat, DecoderCache), SearchError> {
        Ok(self.model.step(&self.memory, state, tokens)?)
    }

    fn reorder(&self, state: &DecoderCache, parents: &[usize]) -> DecoderCache {
        state.reorder(parents)
    }
}

/// A finished hypothesis: full token ids (prefix included, EOS excluded)
/// and its length-normalized score.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub tokens: Vec<u32>,
    pub score: f64,
}

fn selectable(token: u32) -> bool {
    token != PAD && token != BOS && token != UNK
}

/// Feeds BOS and the prefix; returns the state and the last logit row.
fn prime<M: StepModel>(model: &M, prefix: &[u32]) -> Result<(Mat, M::State), SearchError> {
    let mut state = model.start();
    let mut logits = Mat::zeros((0, 0));
    for &t in std::iter::once(&BOS).chain(prefix) {
        let (l, s) = model.step(&state, &[t])?;
        logits = l;
        state = s;
    }
    Ok((logits, state))
}

/// Beam search. At every step each live hypothesis is extended by every
/// selectable token, scored with `log_softmax(logits / temperature)`; the
/// best `beam_size` extensions survive (ties: earlier hypothesis, then
/// smaller token id) and those ending in EOS are set aside as finished.
/// Finished sequences are returned best first by length-normalized score.
pub fn beam_search<M: StepModel>(
    model: &M,
    prefix: &[u32],
    beam_size: usize,
    temperature: f64,
    max_steps: usize,
) -> Result<Vec<Sequence>, SearchError> {
    let (mut logits, mut state) = prime(model, prefix)?;
    let mut live: Vec<(Vec<u32>, f64)> = vec![(prefix.to_vec(), 0.0)];
    let mut finished: Vec<Sequence> = Vec::new();
    while !live.is_empty() && live[0].0.len() < max_steps {
        let mut expansions: Vec<(f64, usize, u32)> = Vec::with_capacity(live.len() * logits.ncols());
        for (i, (_, score)) in live.iter().enumerate() {
            let lp = log_softmax(logits.row(i), temperature);
            for (t, &v) in lp.iter().enumerate() {
                if selectable(t as u32) {
                    expansions.push((score + v, i, t as u32));
                }
            }
        }
        expansions.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        expansions.truncate(beam_size);
        let mut next = Vec::new();
        let mut parents = Vec::new();
        for (score, parent, token) in expansions {
            let mut tokens = live[parent].0.clone();
            if token == EOS {
                let decoded = tokens.len() - prefix.len() + 1;
                finished.push(Sequence {
                    tokens,
                    score: score / decoded as f64,
                });
            } else {
                tokens.push(token);
                next.push((tokens, score));
                parents.push(parent);
            }
        }
        if next.is_empty() || next[0].0.len() >= max_steps {
            break;
        }
        let fed: Vec<u32> = next.iter().map(|(t, _)| *t.last().expect("non-empty")).collect();
        let (l, s) = model.step(&model.reorder(&state, &parents), &fed)?;
        logits = l;
        state = s;
        live = next;
    }
    if finished.is_empty() {
        return Err(SearchError::DecodeOverflow(max_steps));
    }
    finished.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens)));
    Ok(finished)
}

/// Argmax decoding over selectable tokens (ties to the smaller id);
/// returns the tokens after BOS, prefix included, EOS excluded.
pub fn greedy_decode<M: StepModel>(model: &M, prefix: &[u32], max_steps: usize) -> Result<Vec<u32>, SearchError> {
    let (mut logits, mut state) = prime(model, prefix)?;
    let mut tokens = prefix.to_vec();
    while tokens.len() < max_steps {
        let row = logits.row(0);
        let best = (0..row.len() as u32)
            .filter(|&t| selectable(t))
            .max_by(|&a, &b| row[a as usize].total_cmp(&row[b as usize]).then(b.cmp(&a)))
            .expect("vocabulary has selectable tokens");
        if best == EOS {
            return Ok(tokens);
        }
        tokens.push(best);
        if tokens.len() >= max_steps {
            break;
        }
        let (l, s) = model.step(&state, &[best])?;
        logits = l;
        state = s;
    }
    Err(SearchError::DecodeOverflow(max_steps))
}

/// Source ids as the model sees them: canonical SMILES tokens plus EOS.
/// Unknown tokens map to UNK.
pub fn encode_source(ck: &Checkpoint, source: &Molecule) -> Result<Vec<u32>, SearchError> {
    let tokens = tokenize(&canonical_smiles(source))?;
    let (mut ids, _) = ck.vocab.encode(&tokens);
    ids.push(EOS);
    Ok(ids)
}

fn encode_prefix(ck: &Checkpoint, prefix: &[String]) -> Result<Vec<u32>, SearchError> {
    prefix
        .iter()
        .map(|t| ck.vocab.id(t).ok_or_else(|| SearchError::UnknownToken(t.clone())))
        .collect()
}

/// Ranks decoded rule texts: deduplicated, best score first with ties by
/// text, truncated to `top_k`. Products are not yet computed.
fn rank(ck: &Checkpoint, sequences: Vec<Sequence>, top_k: usize) -> Vec<Candidate> {
    let mut candidates: Vec<Candidate> = sequences
        .into_iter()
        .map(|s| Candidate {
            rule_text: ck.vocab.decode(&s.tokens),
            score: s.score,
            products: Vec::new(),
            rule_error: None,
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.rule_text.cmp(&b.rule_text))
    });
    let mut seen = BTreeSet::new();
    candidates.retain(|c| seen.insert(c.rule_text.clone()));
    candidates.truncate(top_k);
    candidates
}

/// Decodes rules for `source`; candidates carry no products yet.
pub fn beam_decode(ck: &Checkpoint, source: &Molecule, config: &SearchConfig) -> Result<Vec<Candidate>, SearchError> {
    config.validate(ck.model.config().max_tgt_len)?;
    let src = encode_source(ck, source)?;
    let prefix = match &config.forced_prefix {
        Some(p) => encode_prefix(ck, p)?,
        None => Vec::new(),
    };
    let decoder = SourceDecoder::new(&ck.model, &src)?;
    let sequences = beam_search(&decoder, &prefix, config.beam_size, config.temperature, config.max_steps)?;
    Ok(rank(ck, sequences, config.top_k))
}

/// Fills in products by applying each candidate rule to `source`.
pub fn attach_products(source: &Molecule, candidates: &mut [Candidate], constraints: &FragmentationConstraints) {
    for c in candidates {
        match parse_rule(&c.rule_text) {
            Ok(rule) => c.products = apply_rule_canonical(&rule, source, constraints),
            Err(e) => c.rule_error = Some(e.to_string()),
        }
    }
}

/// Model-chosen replacement: decode freely, then apply every rule.
pub fn suggest_replacements(
    ck: &Checkpoint,
    source: &Molecule,
    config: &SearchConfig,
) -> Result<Vec<Candidate>, SearchError> {
    let config = SearchConfig {
        forced_prefix: None,
        ..config.clone()
    };
    let mut candidates = beam_decode(ck, source, &config)?;
    attach_products(source, &mut candidates, &config.constraints);
    Ok(candidates)
}

/// User-chosen replacement: the decoder is forced to start with
/// `<fragment>>>`, so every rule removes exactly that fragment.
pub fn replace_specified(
    ck: &Checkpoint,
    source: &Molecule,
    fragment: &Molecule,
    config: &SearchConfig,
) -> Result<Vec<Candidate>, SearchError> {
    let wanted = canonical_smiles(fragment);
    let present = enumerate_cuts(source, &config.constraints)
        .iter()
        .any(|f| canonical_smiles(&f.rgroup) == wanted);
    if !present {
        return Err(SearchError::FragmentNotFound(wanted));
    }
    let config = SearchConfig {
        forced_prefix: Some(tokenize(&format!("{wanted}>>"))?),
        ..config.clone()
    };
    let mut candidates = beam_decode(ck, source, &config)?;
    attach_products(source, &mut candidates, &config.constraints);
    Ok(candidates)
}

pub const GENERATION_HEADER: &str = "source\trank\tscore\tsmirks\tproducts";

/// Writes one generation block (no header).
pub fn write_generation<W: Write>(mut out: W, source: &str, candidates: &[Candidate]) -> io::Result<()> {
    for (i, c) in candidates.iter().enumerate() {
        writeln!(
            out,
            "{source}\t{}\t{:.6}\t{}\t{}",
            i + 1,
            c.score,
            c.rule_text,
            c.products.join("|")
        )?;
    }
    Ok(())
}

/// Orders candidates as the ranking contract requires; used by callers
/// that assemble candidate lists themselves.
pub fn compare_candidates(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.rule_text.cmp(&b.rule_text))
}
