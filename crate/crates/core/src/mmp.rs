//! Fragment-and-index mining of matched molecular pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::fragment::{enumerate_cuts, FragmentationConstraints};
use crate::molgraph::{canonical_smiles, Molecule};

pub const PAIRS_HEADER: &str = "source\ttarget\tsmirks\tcore";

/// One directed matched pair and the rule that converts source into target.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MmpRecord {
    pub source: String,
    pub target: String,
    pub rule: String,
    pub core: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningConfig {
    pub constraints: FragmentationConstraints,
    pub per_molecule_cap: usize,
    pub per_rule_cap: usize,
    pub sample_size: Option<usize>,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            constraints: FragmentationConstraints::default(),
            per_molecule_cap: 10,
            per_rule_cap: 10,
            sample_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MiningError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct IndexEntry {
    pub molecule: usize,
    pub rgroup: String,
}

/// Canonical core → molecules carrying it, with their R-groups.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FragmentIndex {
    /// Canonical SMILES of each indexed molecule, addressed by position.
    pub molecules: Vec<String>,
    pub cores: BTreeMap<String, Vec<IndexEntry>>,
}

impl FragmentIndex {
    pub fn entry_count(&self) -> usize {
        self.cores.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }
}

/// Canonical `(core, rgroup)` strings of every admissible cut, sorted and
/// deduplicated.
pub fn fragment_keys(mol: &Molecule, constraints: &FragmentationConstraints) -> Vec<(String, String)> {
    let mut keys: Vec<(String, String)> = enumerate_cuts(mol, constraints)
        .iter()
        .map(|f| (canonical_smiles(&f.core), canonical_smiles(&f.rgroup)))
        .collect();
    keys.sort();
    keys.dedup();
    keys
}

/// Fragments every molecule and groups the results by canonical core.
/// Molecules are addressed by their position in `corpus`.
pub fn build_index(corpus: &[Molecule], constraints: &FragmentationConstraints) -> FragmentIndex {
    let per_molecule: Vec<(String, Vec<(String, String)>)> = corpus
        .par_iter()
        .map(|mol| (canonical_smiles(mol), fragment_keys(mol, constraints)))
        .collect();
    let mut index = FragmentIndex::default();
    for (id, (canonical, keys)) in per_molecule.into_iter().enumerate() {
        index.molecules.push(canonical);
        for (core, rgroup) in keys {
            index.cores.entry(core).or_default().push(IndexEntry {
                molecule: id,
                rgroup,
            });
        }
    }
    for entries in index.cores.values_mut() {
        entries.sort();
        entries.dedup();
    }
    index
}

pub fn make_rule(lhs: &str, rhs: &str) -> String {
    format!("{lhs}>>{rhs}")
}

/// Emits every directed pair of distinct molecules sharing a core with
/// different R-groups. Output is sorted; a (source, target, rule) triple
/// reached through several cores keeps the smallest core.
pub fn emit_pairs(index: &FragmentIndex) -> Vec<MmpRecord> {
    let per_core: Vec<Vec<MmpRecord>> = index
        .cores
        .par_iter()
        .map(|(core, entries)| {
            let mut out = Vec::new();
            for a in entries {
                for b in entries {
                    if a.molecule == b.molecule || a.rgroup == b.rgroup {
                        continue;
                    }
                    out.push(MmpRecord {
                        source: index.molecules[a.molecule].clone(),
                        target: index.molecules[b.molecule].clone(),
                        rule: make_rule(&a.rgroup, &b.rgroup),
                        core: core.clone(),
                    });
                }
            }
            out
        })
        .collect();
    let mut records: Vec<MmpRecord> = per_core.into_iter().flatten().collect();
    records.sort();
    records.dedup_by(|next, kept| {
        next.source == kept.source && next.target == kept.target && next.rule == kept.rule
    });
    records
}

/// Keeps at most `cap` records per key; which ones survive is decided by
/// the order of `shuffled`.
fn cap_by<F>(records: Vec<MmpRecord>, cap: usize, rng: &mut ChaCha8Rng, key: F) -> Vec<MmpRecord>
where
    F: Fn(&MmpRecord) -> &str,
{
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(rng);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut keep = vec![false; records.len()];
    for &i in &order {
        let c = counts.entry(key(&records[i])).or_default();
        if *c < cap {
            *c += 1;
            keep[i] = true;
        }
    }
    records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect()
}

/// Applies the per-source cap, then the per-rule cap. Survivors are chosen
/// by a seeded shuffle; the result is returned in sorted order.
pub fn apply_caps(records: Vec<MmpRecord>, config: &MiningConfig) -> Vec<MmpRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let capped = cap_by(records, config.per_molecule_cap, &mut rng, |r| &r.source);
    let mut capped = cap_by(capped, config.per_rule_cap, &mut rng, |r| &r.rule);
    capped.sort();
    capped
}

fn sample_sorted(pool: &mut Vec<MmpRecord>, n: usize, rng: &mut ChaCha8Rng) -> Result<(), MiningError> {
    if n > pool.len() {
        return Err(MiningError::InvalidConfig(format!(
            "sample size {n} exceeds the {} available records",
            pool.len()
        )));
    }
    pool.shuffle(rng);
    pool.truncate(n);
    pool.sort();
    Ok(())
}

/// A seeded sample of `n` records, returned sorted.
pub fn sample_records(records: &[MmpRecord], n: usize, seed: u64) -> Result<Vec<MmpRecord>, MiningError> {
    let mut pool = records.to_vec();
    pool.sort();
    sample_sorted(&mut pool, n, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok(pool)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<MmpRecord>,
    pub valid: Vec<MmpRecord>,
    pub test: Vec<MmpRecord>,
}

/// Optionally samples `config.sample_size` records, then partitions by
/// source molecule so that every source lands in exactly one split.
pub fn sample_and_split(
    records: &[MmpRecord],
    config: &MiningConfig,
    ratios: [f64; 3],
) -> Result<Split, MiningError> {
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 || ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
        return Err(MiningError::InvalidConfig(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pool: Vec<MmpRecord> = records.to_vec();
    pool.sort();
    if let Some(n) = config.sample_size {
        sample_sorted(&mut pool, n, &mut rng)?;
    }

    let mut by_source: BTreeMap<String, Vec<MmpRecord>> = BTreeMap::new();
    for r in pool {
        by_source.entry(r.source.clone()).or_default().push(r);
    }
    let mut sources: Vec<String> = by_source.keys().cloned().collect();
    sources.shuffle(&mut rng);
    let n = sources.len();
    let n_train = (ratios[0] * n as f64).round() as usize;
    let n_valid = ((ratios[1] * n as f64).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let n_test = n - n_train - n_valid;
    if n_train == 0 || n_valid == 0 || n_test == 0 {
        return Err(MiningError::InsufficientData(format!(
            "{n} sources cannot fill a {n_train}/{n_valid}/{n_test} split"
        )));
    }

    let mut split = Split::default();
    for (i, source) in sources.iter().enumerate() {
        let part = if i < n_train {
            &mut split.train
        } else if i < n_train + n_valid {
            &mut split.valid
        } else {
            &mut split.test
        };
        part.extend(by_source.remove(source).expect("grouped source"));
    }
    split.train.sort();
    split.valid.sort();
    split.test.sort();
    Ok(split)
}

pub fn write_pairs<W: Write>(mut out: W, records: &[MmpRecord]) -> io::Result<()> {
    writeln!(out, "{PAIRS_HEADER}")?;
    for r in records {
        writeln!(out, "{}\t{}\t{}\t{}", r.source, r.target, r.rule, r.core)?;
    }
    out.flush()
}

pub fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<MmpRecord>, MiningError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.is_empty() || line.starts_with('#') || (line_no == 1 && line == PAIRS_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [source, target, rule, core] = fields[..] else {
            return Err(MiningError::Format {
                line: line_no,
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        };
        records.push(MmpRecord {
            source: source.to_string(),
            target: target.to_string(),
            rule: rule.to_string(),
            core: core.to_string(),
        });
    }
    Ok(records)
}

pub fn read_pairs_file(path: impl AsRef<std::path::Path>) -> Result<Vec<MmpRecord>, MiningError> {
    let file = std::fs::File::open(path)?;
    read_pairs(io::BufReader::new(file))
}

/// Writes the index as sorted `core<TAB>mol_id<TAB>rgroup` lines, where
/// `mol_id` is looked up in `ids` by molecule position.
pub fn write_index<W: Write>(mut out: W, index: &FragmentIndex, ids: &[String]) -> io::Result<()> {
    let mut lines = BTreeSet::new();
    for (core, entries) in &index.cores {
        for e in entries {
            lines.insert(format!("{core}\t{}\t{}", ids[e.molecule], e.rgroup));
        }
    }
    for line in lines {
        writeln!(out, "{line}")?;
    }
    out.flush()
}

/// Reads an index written by [`write_index`]; `molecules` pairs each id with
/// its canonical SMILES, in corpus order.
pub fn read_index<R: BufRead>(
    reader: R,
    molecules: &[(String, String)],
) -> Result<FragmentIndex, MiningError> {
    let position: HashMap<&str, usize> = molecules
        .iter()
        .enumerate()
        .map(|(i, (id, _))| (id.as_str(), i))
        .collect();
    let mut index = FragmentIndex {
        molecules: molecules.iter().map(|(_, c)| c.clone()).collect(),
        cores: BTreeMap::new(),
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let format_err = |message: String| MiningError::Format {
            line: i + 1,
            message,
        };
        let [core, id, rgroup] = fields[..] else {
            return Err(format_err("expected core, mol_id and rgroup".into()));
        };
        let &molecule = position
            .get(id)
            .ok_or_else(|| format_err(format!("unknown molecule id '{id}'")))?;
        index.cores.entry(core.to_string()).or_default().push(IndexEntry {
            molecule,
            rgroup: rgroup.to_string(),
        });
    }
    for entries in index.cores.values_mut() {
        entries.sort();
        entries.dedup();
    }
    Ok(index)
}
