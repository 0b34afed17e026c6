use std::collections::BTreeSet;
use std::fmt::Display;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mmpt::corpus::read_corpus_file;
use mmpt::eval::{self, EvalError, KnownSet};
use mmpt::fragment::FragmentationConstraints;
use mmpt::mmp::{self, MiningConfig, MiningError, MmpRecord};
use mmpt::model::train::TrainError;
use mmpt::model::{Checkpoint, ModelConfig, TrainConfig};
use mmpt::molgraph::parse_smiles;
use mmpt::search::{self, SearchConfig, SearchError, GENERATION_HEADER};

use crate::Failure;

/// Comma-separated list flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("'{p}': {e}")))
            .collect::<Result<Vec<T>, String>>()
            .map(List)
    }
}

impl<T: Display> Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))
}

fn write_failed(path: &Path, e: io::Error) -> Failure {
    Failure::io(format!("writing {}: {e}", path.display()))
}

fn mining_failure(e: MiningError) -> Failure {
    match e {
        MiningError::Io(e) => Failure::io(e.to_string()),
        MiningError::Format { .. } => Failure::io(e.to_string()),
        MiningError::InsufficientData(m) => Failure::insufficient(m),
        MiningError::InvalidConfig(m) => Failure::usage(m),
    }
}

fn read_pairs(path: &Path) -> Result<Vec<MmpRecord>, Failure> {
    mmp::read_pairs_file(path).map_err(|e| match e {
        MiningError::Io(io) => Failure::io(format!("cannot read {}: {io}", path.display())),
        other => Failure::io(format!("{}: {other}", path.display())),
    })
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path).map_err(|e| Failure::io(format!("cannot load checkpoint {}: {e}", path.display())))
}

fn search_failure(e: SearchError) -> Failure {
    match e {
        SearchError::DecodeOverflow(_) => Failure::overflow(e.to_string()),
        SearchError::FragmentNotFound(_) | SearchError::UnknownToken(_) => Failure::not_found(e.to_string()),
        other => Failure::usage(other.to_string()),
    }
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::Io(e) => Failure::io(e.to_string()),
        EvalError::Format { .. } => Failure::io(e.to_string()),
        EvalError::InvalidKs(m) => Failure::usage(m),
        other => Failure::insufficient(other.to_string()),
    }
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Corpus file: one SMILES per line, optionally followed by a tab and an id.
    #[arg(long)]
    pub input: PathBuf,
    /// Output pairs TSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Maximum heavy atoms in the core.
    #[arg(long, default_value_t = 50)]
    pub max_core: usize,
    /// Maximum heavy atoms in the R-group.
    #[arg(long, default_value_t = 13)]
    pub max_rgroup: usize,
    /// R-group heavy atoms must be strictly below this fraction of the molecule.
    #[arg(long, default_value_t = 0.33)]
    pub max_ratio: f64,
    #[arg(long, default_value_t = 10)]
    pub per_mol_cap: usize,
    #[arg(long, default_value_t = 10)]
    pub per_rule_cap: usize,
    /// Keep a seeded random sample of this many pairs.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn cmd_mine(a: &MineArgs) -> Result<(), Failure> {
    let config = MiningConfig {
        constraints: FragmentationConstraints {
            max_core_heavy: a.max_core,
            max_rgroup_heavy: a.max_rgroup,
            max_rgroup_ratio: a.max_ratio,
        },
        per_molecule_cap: a.per_mol_cap,
        per_rule_cap: a.per_rule_cap,
        sample_size: a.sample,
        seed: a.seed,
    };
    config.constraints.validate().map_err(Failure::usage)?;
    if a.per_mol_cap == 0 || a.per_rule_cap == 0 {
        return Err(Failure::usage("caps must be positive"));
    }
    let corpus = read_corpus_file(&a.input).map_err(|e| Failure::io(format!("cannot read {}: {e}", a.input.display())))?;
    eprintln!("molecules read: {}", corpus.lines_read());
    eprintln!("molecules kept: {}", corpus.records.len());
    eprintln!("duplicates: {}", corpus.duplicates);
    eprintln!("rejected: {}", corpus.rejected.len());
    for r in &corpus.rejected {
        eprintln!("  line {} ({}): {}", r.line, r.id, r.reason);
    }
    let molecules = corpus.molecules();
    let index = mmp::build_index(&molecules, &config.constraints);
    let raw = mmp::emit_pairs(&index);
    eprintln!("index: {} cores, {} entries", index.cores.len(), index.entry_count());
    eprintln!("pairs before caps: {}", raw.len());
    let mut pairs = mmp::apply_caps(raw, &config);
    eprintln!("pairs after caps: {}", pairs.len());
    if let Some(n) = a.sample {
        pairs = mmp::sample_records(&pairs, n, a.seed).map_err(mining_failure)?;
        eprintln!("pairs sampled: {}", pairs.len());
    }
    if pairs.is_empty() {
        return Err(Failure::empty("no matched pairs found"));
    }
    let out = create(&a.out)?;
    mmp::write_pairs(out, &pairs).map_err(|e| write_failed(&a.out, e))
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// Train, validation and test fractions of source molecules.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub ratios: List<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes <prefix>.train.tsv, <prefix>.valid.tsv and <prefix>.test.tsv.
    #[arg(long)]
    pub out_prefix: String,
}

pub fn cmd_split(a: &SplitArgs) -> Result<(), Failure> {
    let ratios: [f64; 3] = a
        .ratios
        .0
        .clone()
        .try_into()
        .map_err(|_| Failure::usage("--ratios needs exactly three values"))?;
    let records = read_pairs(&a.pairs)?;
    let config = MiningConfig {
        seed: a.seed,
        ..MiningConfig::default()
    };
    let split = mmp::sample_and_split(&records, &config, ratios).map_err(mining_failure)?;
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        let path = PathBuf::from(format!("{}.{name}.tsv", a.out_prefix));
        let sources: BTreeSet<&str> = part.iter().map(|r| r.source.as_str()).collect();
        eprintln!("{name}: {} pairs from {} sources", part.len(), sources.len());
        mmp::write_pairs(create(&path)?, part).map_err(|e| write_failed(&path, e))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    #[arg(long)]
    pub out_ckpt: PathBuf,
    /// Continue from this checkpoint (its model shape and vocabulary are kept).
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub encoder_layers: Option<usize>,
    #[arg(long)]
    pub decoder_layers: Option<usize>,
    #[arg(long)]
    pub d_ffn: Option<usize>,
    #[arg(long)]
    pub max_src_len: Option<usize>,
    #[arg(long)]
    pub max_tgt_len: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 2)]
    pub patience: usize,
    #[arg(long, default_value_t = 50)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainArgs {
    fn model_config(&self, base: ModelConfig) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model.unwrap_or(base.d_model),
            n_heads: self.heads.unwrap_or(base.n_heads),
            n_encoder_layers: self.encoder_layers.unwrap_or(base.n_encoder_layers),
            n_decoder_layers: self.decoder_layers.unwrap_or(base.n_decoder_layers),
            d_ffn: self.d_ffn.unwrap_or(base.d_ffn),
            max_src_len: self.max_src_len.unwrap_or(base.max_src_len),
            max_tgt_len: self.max_tgt_len.unwrap_or(base.max_tgt_len),
            dropout: self.dropout.unwrap_or(base.dropout),
        }
    }
}

fn log_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".log");
    PathBuf::from(s)
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), Failure> {
    let resume = a.resume.as_deref().map(load_checkpoint).transpose()?;
    let model_config = match &resume {
        Some(ck) => {
            let base = ck.model.config().clone();
            if a.model_config(base.clone()) != base {
                return Err(Failure::usage("model shape flags conflict with the resumed checkpoint"));
            }
            base
        }
        None => a.model_config(ModelConfig::default()),
    };
    let train_config = TrainConfig {
        batch_size: a.batch_size,
        learning_rate: a.lr,
        early_stop_patience_epochs: a.patience,
        max_epochs: a.max_epochs,
        seed: a.seed,
    };
    let train = read_pairs(&a.train)?;
    let valid = read_pairs(&a.valid)?;
    let log = log_path(&a.out_ckpt);
    let mut log_file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(resume.is_some())
        .truncate(resume.is_none())
        .open(&log)
        .map_err(|e| Failure::io(format!("cannot write {}: {e}", log.display())))?;
    if resume.is_none() {
        writeln!(log_file, "epoch,train_loss,valid_loss").map_err(|e| write_failed(&log, e))?;
    }
    let mut log_error = None;
    let outcome = mmpt::model::train(&train, &valid, &model_config, &train_config, resume, |s| {
        eprintln!("epoch {}: train {:.6} valid {:.6}", s.epoch, s.train_loss, s.valid_loss);
        if let Err(e) = writeln!(log_file, "{},{:.6},{:.6}", s.epoch, s.train_loss, s.valid_loss) {
            log_error.get_or_insert(e);
        }
    })
    .map_err(|e| match e {
        TrainError::InsufficientData(m) => Failure::insufficient(m),
        other => Failure::usage(other.to_string()),
    })?;
    if let Some(e) = log_error {
        return Err(write_failed(&log, e));
    }
    if outcome.dropped > 0 {
        eprintln!("warning: {} oversize pairs dropped", outcome.dropped);
    }
    if outcome.unknown_tokens > 0 {
        eprintln!("warning: {} validation tokens not in the training vocabulary", outcome.unknown_tokens);
    }
    let ck = &outcome.checkpoint;
    eprintln!("best epoch {} (valid loss {:.6})", ck.epoch, ck.best_valid_loss);
    ck.save(&a.out_ckpt).map_err(|e| write_failed(&a.out_ckpt, e))
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 0.3)]
    pub temperature: f64,
    /// Longest rule in tokens, EOS included (default: the model's limit).
    #[arg(long)]
    pub max_steps: Option<usize>,
}

impl SearchArgs {
    fn config(&self, ck: &Checkpoint, beam: usize, k: usize) -> SearchConfig {
        SearchConfig {
            beam_size: beam,
            temperature: self.temperature,
            top_k: k,
            max_steps: self.max_steps.unwrap_or(ck.model.config().max_tgt_len),
            ..SearchConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// A single source SMILES.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub source: Option<String>,
    /// File of source SMILES, one per line (first tab-separated field).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub beam: usize,
    /// Replace this fragment (e.g. "[*:1]O") instead of letting the model choose.
    #[arg(long)]
    pub replace: Option<String>,
    #[command(flatten)]
    pub search: SearchArgs,
}

fn read_sources(path: &Path) -> Result<Vec<String>, Failure> {
    let file = File::open(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Failure::io(e.to_string()))?;
        let first = line.split('\t').next().unwrap_or_default().trim();
        if first.is_empty() || first.starts_with('#') || (i == 0 && (first == "source" || first == "smiles")) {
            continue;
        }
        out.push(first.to_string());
    }
    Ok(out)
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<(), Failure> {
    let ck = load_checkpoint(&a.ckpt)?;
    let config = a.search.config(&ck, a.beam, a.k);
    config
        .validate(ck.model.config().max_tgt_len)
        .map_err(search_failure)?;
    let sources = match (&a.source, &a.input) {
        (Some(s), _) => vec![s.clone()],
        (None, Some(p)) => read_sources(p)?,
        (None, None) => return Err(Failure::usage("give --source or --input")),
    };
    let fragment = a
        .replace
        .as_deref()
        .map(|f| parse_smiles(f).map_err(|e| Failure::usage(format!("--replace: {e}"))))
        .transpose()?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    writeln!(out, "{GENERATION_HEADER}").map_err(|e| Failure::io(e.to_string()))?;
    let mut first_failure = None;
    for source in &sources {
        let result = parse_smiles(source)
            .map_err(|e| Failure::usage(format!("source {source}: {e}")))
            .and_then(|mol| {
                match &fragment {
                    Some(f) => search::replace_specified(&ck, &mol, f, &config),
                    None => search::suggest_replacements(&ck, &mol, &config),
                }
                .map_err(|e| {
                    let f = search_failure(e);
                    Failure { message: format!("source {source}: {}", f.message), ..f }
                })
            });
        match result {
            Ok(candidates) => {
                search::write_generation(&mut out, source, &candidates).map_err(|e| Failure::io(e.to_string()))?
            }
            Err(f) => {
                eprintln!("error: {}", f.message);
                first_failure.get_or_insert(Failure { message: String::new(), ..f });
            }
        }
    }
    out.flush().map_err(|e| Failure::io(e.to_string()))?;
    first_failure.map_or(Ok(()), Err)
}

/// Distinct sources of a pairs file, optionally a seeded subset of them.
fn pick_sources(records: &[MmpRecord], limit: Option<usize>, seed: u64) -> Vec<String> {
    let mut sources: Vec<String> = records
        .iter()
        .map(|r| r.source.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if let Some(n) = limit {
        if n < sources.len() {
            sources.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            sources.truncate(n);
            sources.sort();
        }
    }
    sources
}

fn write_output<F>(path: Option<&Path>, write: F) -> Result<(), Failure>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match path {
        Some(p) => {
            let mut f = create(p)?;
            write(&mut f).and_then(|_| f.flush()).map_err(|e| write_failed(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock).map_err(|e| Failure::io(e.to_string()))
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to decode with (not needed with --predictions).
    #[arg(long, required_unless_present = "predictions")]
    pub ckpt: Option<PathBuf>,
    /// Pairs file whose source molecules are evaluated.
    #[arg(long)]
    pub test: PathBuf,
    /// Pairs file defining the known-molecule universe (default: --test).
    #[arg(long)]
    pub known: Option<PathBuf>,
    #[arg(long, default_value = "1,10,20,50,100")]
    pub ks: List<usize>,
    #[arg(long, default_value_t = 200)]
    pub beam: usize,
    /// Metrics CSV (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluate a seeded subset of this many sources.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write coverage-by-group rows to this CSV.
    #[arg(long)]
    pub coverage_out: Option<PathBuf>,
    #[arg(long, default_value = "1,2,3,4,5,6,7,8,9,10")]
    pub coverage_ks: List<usize>,
    #[arg(long, default_value_t = 100)]
    pub group_size: usize,
    /// Score an external `source<TAB>rank<TAB>prediction` file instead of decoding.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
}

fn known_set(known: Option<&Path>, fallback: &[MmpRecord]) -> Result<(KnownSet, String), Failure> {
    match known {
        Some(p) => {
            let records = read_pairs(p)?;
            Ok((KnownSet::from_records(&records), p.display().to_string()))
        }
        None => Ok((KnownSet::from_records(fallback), "evaluated pairs file".into())),
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), Failure> {
    let records = read_pairs(&a.test)?;
    let (known, universe) = known_set(a.known.as_deref(), &records)?;
    let mut header = vec![
        format!("test={}", a.test.display()),
        format!("exist_universe=all molecules in {universe} ({} molecules)", known.len()),
        format!("ks={}", a.ks),
    ];
    if let Some(pred) = &a.predictions {
        header.push(format!("predictions={}", pred.display()));
        let file = File::open(pred).map_err(|e| Failure::io(format!("cannot read {}: {e}", pred.display())))?;
        let rows = eval::score_external_predictions(BufReader::new(file), &known, &a.ks.0).map_err(eval_failure)?;
        return write_output(a.out.as_deref(), |w| eval::write_valid_exist_csv(w, &header, &rows));
    }
    let ck = load_checkpoint(a.ckpt.as_deref().expect("required by clap"))?;
    let config = a.search.config(&ck, a.beam, a.beam);
    config
        .validate(ck.model.config().max_tgt_len)
        .map_err(search_failure)?;
    eval::check_ks(&a.ks.0, a.beam).map_err(eval_failure)?;
    let sources = pick_sources(&records, a.limit, a.seed);
    if sources.is_empty() {
        return Err(Failure::empty("no sources to evaluate"));
    }
    header.extend([
        format!("ckpt={}", a.ckpt.as_ref().expect("present").display()),
        format!("beam={}", a.beam),
        format!("temperature={}", config.temperature),
        format!("max_steps={}", config.max_steps),
        format!("sources={}", sources.len()),
        format!("seed={}", a.seed),
    ]);
    let results = eval::decode_sources(&ck, &sources, &config);
    let failures = results.iter().filter(|r| r.failure.is_some()).count();
    if failures > 0 {
        eprintln!("warning: {failures} sources failed to decode and score zero");
    }
    header.push(format!("decode_failures={failures}"));
    let rows = eval::valid_exist_rows(&results, &known, &a.ks.0);
    eval::check_valid_exist(&rows).map_err(Failure::usage)?;
    write_output(a.out.as_deref(), |w| eval::write_valid_exist_csv(w, &header, &rows))?;

    if let Some(path) = &a.coverage_out {
        let (groups, short) = eval::build_groups(&records, &known, &a.coverage_ks.0, a.group_size);
        for (k, n) in short {
            eprintln!("warning: group k={k} has {n} of {} sources", a.group_size);
        }
        if groups.is_empty() {
            return Err(Failure::empty("no source has a known-target count in --coverage-ks"));
        }
        let rows = eval::coverage_by_group(&ck, &groups, &known, &config).map_err(eval_failure)?;
        let mut header = header.clone();
        header.push(format!("group_size={}", a.group_size));
        for r in &rows {
            header.push(format!("group k={} sources={}", r.k, r.sources));
        }
        write_output(Some(path), |w| eval::write_coverage_csv(w, &header, &rows))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Pairs file whose source molecules are decoded.
    #[arg(long)]
    pub subset: PathBuf,
    /// Pairs file defining the known-molecule universe (default: --subset).
    #[arg(long)]
    pub known: Option<PathBuf>,
    #[arg(long, default_value = "1,5,10,50,100,200,500,1000")]
    pub ks: List<usize>,
    /// Beam size (default: the largest k).
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub search: SearchArgs,
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<(), Failure> {
    let records = read_pairs(&a.subset)?;
    let (known, universe) = known_set(a.known.as_deref(), &records)?;
    let ck = load_checkpoint(&a.ckpt)?;
    let beam = a.beam.unwrap_or_else(|| a.ks.0.iter().copied().max().unwrap_or(1));
    let config = a.search.config(&ck, beam, beam);
    config
        .validate(ck.model.config().max_tgt_len)
        .map_err(search_failure)?;
    let sources = pick_sources(&records, a.limit, a.seed);
    if sources.is_empty() {
        return Err(Failure::empty("no sources to decode"));
    }
    let rows = eval::search_size_sweep(&ck, &sources, &known, &a.ks.0, &config).map_err(eval_failure)?;
    eval::check_sweep(&rows).map_err(Failure::usage)?;
    let header = vec![
        format!("ckpt={}", a.ckpt.display()),
        format!("subset={}", a.subset.display()),
        format!("exist_universe=all molecules in {universe} ({} molecules)", known.len()),
        format!("ks={}", a.ks),
        format!("beam={beam}"),
        format!("temperature={}", config.temperature),
        format!("max_steps={}", config.max_steps),
        format!("sources={}", sources.len()),
        format!("seed={}", a.seed),
    ];
    write_output(a.out.as_deref(), |w| eval::write_sweep_csv(w, &header, &rows))
}
