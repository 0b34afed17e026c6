//! Reading SMILES corpus files.
//!
//! One record per line, either `<smiles>` or `<smiles>\t<id>`. Lines starting
//! with `#` and blank lines are skipped. Records without an id are named by
//! their 1-based line number.

use std::collections::HashSet;
use std::io::{self, BufRead};
use std::path::Path;

use crate::molgraph::{canonical_smiles, parse_smiles, Molecule};

#[derive(Debug, Clone)]
pub struct CorpusRecord {
    pub id: String,
    pub canonical: String,
    pub mol: Molecule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub records: Vec<CorpusRecord>,
    pub rejected: Vec<Rejection>,
    /// Lines dropped because an earlier record had the same canonical SMILES.
    pub duplicates: usize,
}

impl Corpus {
    pub fn molecules(&self) -> Vec<Molecule> {
        self.records.iter().map(|r| r.mol.clone()).collect()
    }

    pub fn lines_read(&self) -> usize {
        self.records.len() + self.rejected.len() + self.duplicates
    }
}

pub fn read_corpus<R: BufRead>(reader: R) -> io::Result<Corpus> {
    let mut corpus = Corpus::default();
    let mut seen = HashSet::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = index + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.splitn(2, '\t');
        let smiles = fields.next().unwrap_or_default().trim();
        let id = fields
            .next()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| line_no.to_string());
        let reject = |reason: String| Rejection {
            line: line_no,
            id: id.clone(),
            reason,
        };
        let mol = match parse_smiles(smiles) {
            Ok(mol) => mol,
            Err(e) => {
                corpus.rejected.push(reject(e.to_string()));
                continue;
            }
        };
        if !mol.wildcard_atoms().is_empty() {
            corpus
                .rejected
                .push(reject("attachment atoms are not allowed in corpus molecules".into()));
            continue;
        }
        let canonical = canonical_smiles(&mol);
        if !seen.insert(canonical.clone()) {
            corpus.duplicates += 1;
            continue;
        }
        corpus.records.push(CorpusRecord { id, canonical, mol });
    }
    Ok(corpus)
}

pub fn read_corpus_file(path: impl AsRef<Path>) -> io::Result<Corpus> {
    let file = std::fs::File::open(path)?;
    read_corpus(io::BufReader::new(file))
}

/// The toy corpus shipped with the crate.
pub fn bundled_toy_corpus() -> Corpus {
    let text = include_str!("../data/toy_corpus.smi");
    read_corpus(text.as_bytes()).expect("in-memory read")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_comments_and_duplicates() {
        let text = "# header\nCCO\tethanol\n\nOCC\n[*:1]C\nC1CC\nc1ccccc1O\n";
        let corpus = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(corpus.records.len(), 2);
        assert_eq!(corpus.records[0].id, "ethanol");
        assert_eq!(corpus.records[1].id, "7");
        assert_eq!(corpus.duplicates, 1);
        assert_eq!(corpus.rejected.len(), 2);
        assert_eq!(corpus.rejected[0].line, 5);
        assert_eq!(corpus.rejected[1].line, 6);
    }

    #[test]
    fn bundled_corpus_parses_completely() {
        let corpus = bundled_toy_corpus();
        assert!(corpus.rejected.is_empty(), "{:?}", &corpus.rejected[..corpus.rejected.len().min(5)]);
        assert!(corpus.records.len() >= 1000);
        assert!(corpus.records.iter().all(|r| r.mol.heavy_atom_count() <= 60));
    }
}
