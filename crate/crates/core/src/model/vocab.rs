use std::collections::{BTreeSet, HashMap};

use sha2::{Digest, Sha256};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Token table with the four special tokens at ids 0-3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("duplicate token '{0}'")]
    Duplicate(String),
    #[error("token list must start with the special tokens")]
    MissingSpecials,
    #[error("special token '{0}' appears among corpus tokens")]
    ReservedToken(String),
}

impl Vocabulary {
    /// Builds a vocabulary from corpus tokens, sorted for determinism.
    pub fn build<I, S>(corpus_tokens: I) -> Result<Vocabulary, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = corpus_tokens.into_iter().map(Into::into).collect();
        if let Some(t) = set.iter().find(|t| SPECIALS.contains(&t.as_str())) {
            return Err(VocabError::ReservedToken(t.clone()));
        }
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(set)
            .collect();
        Vocabulary::from_tokens(tokens)
    }

    /// Restores a vocabulary from its full token list (specials included).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocabulary, VocabError> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(VocabError::MissingSpecials);
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(VocabError::Duplicate(t.clone()));
            }
        }
        Ok(Vocabulary { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    /// Maps tokens to ids, substituting UNK; returns the ids and how many
    /// tokens were unknown.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> (Vec<u32>, usize) {
        let mut unknown = 0;
        let ids = tokens
            .iter()
            .map(|t| {
                self.id(t.as_ref()).unwrap_or_else(|| {
                    unknown += 1;
                    UNK
                })
            })
            .collect();
        (ids, unknown)
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter().map(|&i| self.token(i)).collect()
    }

    /// SHA-256 over the newline-joined token list.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize().into()
    }
}
