//! Evaluation protocols: validity/existence by top-k, coverage of known
//! matched targets, and the search-size sweep.
//!
//! Metrics operate on distinct canonical products per source. Each metric
//! has a pure form over decoded candidates (so fixtures can exercise it
//! without a model) and a driver that decodes with a checkpoint.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};

use rayon::prelude::*;

use crate::mmp::MmpRecord;
use crate::model::Checkpoint;
use crate::molgraph::{canonical_smiles, parse_smiles};
use crate::search::{suggest_replacements, Candidate, SearchConfig};
use crate::smirks::{apply_rule_canonical, parse_rule};
use crate::fragment::FragmentationConstraints;

/// Every molecule of a pairs dataset, plus each source's known targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnownSet {
    molecules: BTreeSet<String>,
    targets: BTreeMap<String, BTreeSet<String>>,
}

impl KnownSet {
    pub fn from_records(records: &[MmpRecord]) -> KnownSet {
        let mut known = KnownSet::default();
        for r in records {
            known.molecules.insert(r.source.clone());
            known.molecules.insert(r.target.clone());
            known
                .targets
                .entry(r.source.clone())
                .or_default()
                .insert(r.target.clone());
        }
        known
    }

    pub fn contains(&self, canonical: &str) -> bool {
        self.molecules.contains(canonical)
    }

    pub fn len(&self) -> usize {
        self.molecules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.molecules.is_empty()
    }

    pub fn known_targets(&self, source: &str) -> Option<&BTreeSet<String>> {
        self.targets.get(source)
    }

    pub fn target_count(&self, source: &str) -> usize {
        self.targets.get(source).map_or(0, BTreeSet::len)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("source {molecule} has {actual} known targets but is in group k={group}")]
    GroupMismatch {
        molecule: String,
        group: usize,
        actual: usize,
    },
    #[error("group k={0} is empty")]
    EmptyGroup(usize),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("invalid k list: {0}")]
    InvalidKs(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

/// Decoding outcome for one source. A failed decode (overflow, unusable
/// source) has no candidates and scores zero everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceResult {
    pub source: String,
    pub candidates: Vec<Candidate>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidExistRow {
    pub k: usize,
    pub percent_valid: f64,
    pub percent_exist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageRow {
    pub k: usize,
    pub coverage_rate: f64,
    pub avg_covered: f64,
    pub sources: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepRow {
    pub k: usize,
    pub n_existing: usize,
    pub n_novel: usize,
}

/// Requires a non-empty, strictly ascending list of positive ks.
pub fn check_ks(ks: &[usize], beam_size: usize) -> Result<(), EvalError> {
    if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::InvalidKs(format!("{ks:?} must be positive and strictly ascending")));
    }
    if *ks.last().expect("non-empty") > beam_size {
        return Err(EvalError::InvalidKs(format!("largest k exceeds beam size {beam_size}")));
    }
    Ok(())
}

fn distinct_products(candidates: &[Candidate]) -> BTreeSet<&str> {
    candidates
        .iter()
        .flat_map(|c| c.products.iter().map(String::as_str))
        .collect()
}

/// %Valid and %Exist for one source's top-k list: the fraction of
/// candidates with at least one product, and the fraction of distinct
/// products already known. `None` for %Exist when nothing is valid.
pub fn source_metrics(candidates: &[Candidate], known: &KnownSet) -> (f64, Option<f64>) {
    if candidates.is_empty() {
        return (0.0, None);
    }
    let valid = candidates.iter().filter(|c| c.is_valid()).count();
    let products = distinct_products(candidates);
    let exist = (!products.is_empty())
        .then(|| products.iter().filter(|p| known.contains(p)).count() as f64 / products.len() as f64);
    (valid as f64 / candidates.len() as f64, exist)
}

/// Per-k rows averaged over sources. %Valid averages over all sources
/// (failed decodes count as 0); %Exist averages over sources with at
/// least one valid product, and is 0 when there are none.
pub fn valid_exist_rows(results: &[SourceResult], known: &KnownSet, ks: &[usize]) -> Vec<ValidExistRow> {
    ks.iter()
        .map(|&k| {
            let mut valid_sum = 0.0;
            let (mut exist_sum, mut exist_n) = (0.0, 0usize);
            for r in results {
                let top = &r.candidates[..k.min(r.candidates.len())];
                let (v, e) = source_metrics(top, known);
                valid_sum += v;
                if let Some(e) = e {
                    exist_sum += e;
                    exist_n += 1;
                }
            }
            ValidExistRow {
                k,
                percent_valid: if results.is_empty() { 0.0 } else { valid_sum / results.len() as f64 },
                percent_exist: if exist_n == 0 { 0.0 } else { exist_sum / exist_n as f64 },
            }
        })
        .collect()
}

/// Coverage of known targets for groups of sources keyed by their known
/// target count. Uses every candidate each source decoded.
pub fn coverage_rows(
    groups: &BTreeMap<usize, Vec<SourceResult>>,
    known: &KnownSet,
) -> Result<Vec<CoverageRow>, EvalError> {
    let mut rows = Vec::new();
    for (&k, members) in groups {
        if members.is_empty() {
            return Err(EvalError::EmptyGroup(k));
        }
        let mut covered_sources = 0;
        let mut covered_total = 0;
        for r in members {
            let actual = known.target_count(&r.source);
            if actual != k {
                return Err(EvalError::GroupMismatch {
                    molecule: r.source.clone(),
                    group: k,
                    actual,
                });
            }
            let targets = known.known_targets(&r.source).expect("count checked");
            let hit = distinct_products(&r.candidates)
                .into_iter()
                .filter(|p| targets.contains(*p))
                .count();
            covered_total += hit;
            covered_sources += usize::from(hit > 0);
        }
        rows.push(CoverageRow {
            k,
            coverage_rate: covered_sources as f64 / members.len() as f64,
            avg_covered: covered_total as f64 / members.len() as f64,
            sources: members.len(),
        });
    }
    Ok(rows)
}

/// Distinct valid products in each source's top-k, split into known and
/// novel, summed over sources.
pub fn sweep_rows(results: &[SourceResult], known: &KnownSet, ks: &[usize]) -> Vec<SweepRow> {
    ks.iter()
        .map(|&k| {
            let (mut existing, mut novel) = (0, 0);
            for r in results {
                let top = &r.candidates[..k.min(r.candidates.len())];
                for p in distinct_products(top) {
                    if known.contains(p) {
                        existing += 1;
                    } else {
                        novel += 1;
                    }
                }
            }
            SweepRow {
                k,
                n_existing: existing,
                n_novel: novel,
            }
        })
        .collect()
}

/// Decodes every source at `config.beam_size`, keeping all distinct
/// candidates, in parallel; results come back in input order.
pub fn decode_sources(ck: &Checkpoint, sources: &[String], config: &SearchConfig) -> Vec<SourceResult> {
    let config = SearchConfig {
        top_k: config.beam_size,
        ..config.clone()
    };
    sources
        .par_iter()
        .map(|source| {
            let outcome = parse_smiles(source)
                .map_err(|e| e.to_string())
                .and_then(|mol| suggest_replacements(ck, &mol, &config).map_err(|e| e.to_string()));
            match outcome {
                Ok(candidates) => SourceResult {
                    source: source.clone(),
                    candidates,
                    failure: None,
                },
                Err(e) => SourceResult {
                    source: source.clone(),
                    candidates: Vec::new(),
                    failure: Some(e),
                },
            }
        })
        .collect()
}

/// One decode per source at the beam size, truncated to each k.
pub fn valid_exist_table(
    ck: &Checkpoint,
    sources: &[String],
    known: &KnownSet,
    ks: &[usize],
    config: &SearchConfig,
) -> Result<Vec<ValidExistRow>, EvalError> {
    check_ks(ks, config.beam_size)?;
    Ok(valid_exist_rows(&decode_sources(ck, sources, config), known, ks))
}

pub fn coverage_by_group(
    ck: &Checkpoint,
    groups: &BTreeMap<usize, Vec<String>>,
    known: &KnownSet,
    config: &SearchConfig,
) -> Result<Vec<CoverageRow>, EvalError> {
    // validate labels before spending time decoding
    for (&k, members) in groups {
        if members.is_empty() {
            return Err(EvalError::EmptyGroup(k));
        }
        if let Some(s) = members.iter().find(|s| known.target_count(s) != k) {
            return Err(EvalError::GroupMismatch {
                molecule: s.clone(),
                group: k,
                actual: known.target_count(s),
            });
        }
    }
    let decoded = groups
        .iter()
        .map(|(&k, members)| (k, decode_sources(ck, members, config)))
        .collect();
    coverage_rows(&decoded, known)
}

pub fn search_size_sweep(
    ck: &Checkpoint,
    sources: &[String],
    known: &KnownSet,
    ks: &[usize],
    config: &SearchConfig,
) -> Result<Vec<SweepRow>, EvalError> {
    check_ks(ks, config.beam_size)?;
    Ok(sweep_rows(&decode_sources(ck, sources, config), known, ks))
}

/// Groups distinct sources of `records` by known-target count, at most
/// `per_group` each (in sorted source order); only keys in `ks` are kept.
/// Returns the groups and the keys that came up short.
pub fn build_groups(
    records: &[MmpRecord],
    known: &KnownSet,
    ks: &[usize],
    per_group: usize,
) -> (BTreeMap<usize, Vec<String>>, Vec<(usize, usize)>) {
    let sources: BTreeSet<&str> = records.iter().map(|r| r.source.as_str()).collect();
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for s in sources {
        let k = known.target_count(s);
        if ks.contains(&k) {
            let g = groups.entry(k).or_default();
            if g.len() < per_group {
                g.push(s.to_string());
            }
        }
    }
    let short = ks
        .iter()
        .map(|&k| (k, groups.get(&k).map_or(0, Vec::len)))
        .filter(|&(_, n)| n < per_group)
        .collect();
    (groups, short)
}

/// Reads `source\trank\tprediction` rows (optional header) and scores
/// them. A prediction containing `>>` is a rule applied to the source;
/// otherwise it is a whole molecule, valid when it parses.
pub fn score_external_predictions<R: BufRead>(
    reader: R,
    known: &KnownSet,
    ks: &[usize],
) -> Result<Vec<ValidExistRow>, EvalError> {
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) || ks[0] == 0 {
        return Err(EvalError::InvalidKs(format!("{ks:?} must be positive and strictly ascending")));
    }
    let mut by_source: BTreeMap<String, Vec<(usize, usize, String)>> = BTreeMap::new();
    let mut order = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() || (lineno == 1 && line == "source\trank\tprediction") {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [source, rank, prediction] = fields[..] else {
            return Err(EvalError::Format {
                line: lineno,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        };
        let rank: usize = rank.parse().ok().filter(|&r| r > 0).ok_or_else(|| EvalError::Format {
            line: lineno,
            message: format!("rank '{rank}' is not a positive integer"),
        })?;
        let entry = by_source.entry(source.to_string()).or_insert_with(|| {
            order.push(source.to_string());
            Vec::new()
        });
        entry.push((rank, lineno, prediction.to_string()));
    }
    let constraints = FragmentationConstraints::default();
    let mut results = Vec::new();
    for source in order {
        let mut preds = by_source.remove(&source).expect("recorded");
        preds.sort();
        let first_line = preds[0].1;
        let mol = parse_smiles(&source).map_err(|e| EvalError::Format {
            line: first_line,
            message: format!("source does not parse: {e}"),
        })?;
        let candidates = preds
            .into_iter()
            .map(|(_, _, text)| {
                let (products, rule_error) = if text.contains(">>") {
                    match parse_rule(&text) {
                        Ok(rule) => (apply_rule_canonical(&rule, &mol, &constraints), None),
                        Err(e) => (Vec::new(), Some(e.to_string())),
                    }
                } else {
                    match parse_smiles(&text) {
                        Ok(m) => (vec![canonical_smiles(&m)], None),
                        Err(e) => (Vec::new(), Some(e.to_string())),
                    }
                };
                Candidate {
                    rule_text: text,
                    score: 0.0,
                    products,
                    rule_error,
                }
            })
            .collect();
        results.push(SourceResult {
            source,
            candidates,
            failure: None,
        });
    }
    Ok(valid_exist_rows(&results, known, ks))
}

/// Asserts the report invariants; returns a description of the first
/// violation.
pub fn check_valid_exist(rows: &[ValidExistRow]) -> Result<(), String> {
    for r in rows {
        for (name, v) in [("percent_valid", r.percent_valid), ("percent_exist", r.percent_exist)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("k={}: {name} = {v} outside [0, 1]", r.k));
            }
        }
    }
    Ok(())
}

pub fn check_coverage(rows: &[CoverageRow]) -> Result<(), String> {
    for r in rows {
        if !(0.0..=1.0).contains(&r.coverage_rate) || r.avg_covered > r.k as f64 || r.avg_covered < 0.0 {
            return Err(format!("k={}: rate {} avg {}", r.k, r.coverage_rate, r.avg_covered));
        }
    }
    Ok(())
}

pub fn check_sweep(rows: &[SweepRow]) -> Result<(), String> {
    for w in rows.windows(2) {
        if w[1].n_existing < w[0].n_existing || w[1].n_novel < w[0].n_novel {
            return Err(format!("counts decrease from k={} to k={}", w[0].k, w[1].k));
        }
    }
    Ok(())
}

fn write_comments<W: Write>(out: &mut W, comments: &[String]) -> io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    Ok(())
}

pub fn write_valid_exist_csv<W: Write>(mut out: W, comments: &[String], rows: &[ValidExistRow]) -> io::Result<()> {
    write_comments(&mut out, comments)?;
    writeln!(out, "k,percent_valid,percent_exist")?;
    for r in rows {
        writeln!(out, "{},{:.6},{:.6}", r.k, r.percent_valid, r.percent_exist)?;
    }
    Ok(())
}

pub fn write_coverage_csv<W: Write>(mut out: W, comments: &[String], rows: &[CoverageRow]) -> io::Result<()> {
    write_comments(&mut out, comments)?;
    writeln!(out, "k,coverage_rate,avg_covered")?;
    for r in rows {
        writeln!(out, "{},{:.6},{:.6}", r.k, r.coverage_rate, r.avg_covered)?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(mut out: W, comments: &[String], rows: &[SweepRow]) -> io::Result<()> {
    write_comments(&mut out, comments)?;
    writeln!(out, "k,n_existing,n_novel")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.k, r.n_existing, r.n_novel)?;
    }
    Ok(())
}
