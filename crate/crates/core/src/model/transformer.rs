//! Pre-norm encoder-decoder transformer.
//!
//! Two execution paths share one parameter set: a taped graph over packed
//! batches (training, loss, full-sequence scores) and a plain incremental
//! decoder with key/value caches (beam search). Tests pin them together.

use ndarray::{s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{layer_norm, softmax_in_place, AttentionSpec, Mat, ParamSet, Segment, Tape, Var};
use super::vocab::{BOS, EOS, PAD};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub d_ffn: usize,
    /// Encoder positions, including the trailing EOS.
    pub max_src_len: usize,
    /// Decoder positions, i.e. rule tokens plus EOS.
    pub max_tgt_len: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_encoder_layers: 2,
            n_decoder_layers: 2,
            d_ffn: 256,
            max_src_len: 160,
            max_tgt_len: 96,
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("d_model {d_model} is not divisible by n_heads {n_heads}")]
    Heads { d_model: usize, n_heads: usize },
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("dropout must lie in [0, 1)")]
    Dropout,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ffn", self.d_ffn),
            ("max_src_len", self.max_src_len),
            ("max_tgt_len", self.max_tgt_len),
        ] {
            if v == 0 {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ConfigError::Heads {
                d_model: self.d_model,
                n_heads: self.n_heads,
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::Dropout);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShapeError {
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("source of {len} positions exceeds maximum {max}")]
    SourceTooLong { len: usize, max: usize },
    #[error("target of {len} positions exceeds maximum {max}")]
    TargetTooLong { len: usize, max: usize },
    #[error("empty sequence")]
    Empty,
}

/// One training pair as id sequences. Both sides end in EOS; trailing PAD
/// is allowed and ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
}

impl Example {
    /// Appends EOS to both token-id sequences.
    pub fn new(mut src: Vec<u32>, mut tgt: Vec<u32>) -> Example {
        src.push(EOS);
        tgt.push(EOS);
        Example { src, tgt }
    }

    /// BOS followed by the gold prefix.
    pub fn decoder_input(&self) -> Vec<u32> {
        std::iter::once(BOS)
            .chain(self.tgt[..self.tgt.len() - 1].iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Attn {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
}

#[derive(Debug, Clone, Copy)]
struct Ffn {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayer {
    ln1: Norm,
    attn: Attn,
    ln2: Norm,
    ffn: Ffn,
}

#[derive(Debug, Clone, Copy)]
struct DecoderLayer {
    ln1: Norm,
    self_attn: Attn,
    ln2: Norm,
    cross: Attn,
    ln3: Norm,
    ffn: Ffn,
}

#[derive(Debug, Clone)]
struct Layout {
    embed: usize,
    encoder: Vec<EncoderLayer>,
    enc_norm: Norm,
    decoder: Vec<DecoderLayer>,
    dec_norm: Norm,
    out_w: usize,
    out_b: usize,
}

/// Parameter shapes in declaration order, with the index layout.
fn declare(config: &ModelConfig, vocab: usize) -> (Vec<(String, (usize, usize))>, Layout) {
    let d = config.d_model;
    let mut shapes: Vec<(String, (usize, usize))> = Vec::new();
    let mut add = |name: String, shape: (usize, usize)| {
        shapes.push((name, shape));
        shapes.len() - 1
    };
    let norm = |add: &mut dyn FnMut(String, (usize, usize)) -> usize, p: &str| Norm {
        g: add(format!("{p}.g"), (1, d)),
        b: add(format!("{p}.b"), (1, d)),
    };
    let attn = |add: &mut dyn FnMut(String, (usize, usize)) -> usize, p: &str| Attn {
        wq: add(format!("{p}.wq"), (d, d)),
        bq: add(format!("{p}.bq"), (1, d)),
        wk: add(format!("{p}.wk"), (d, d)),
        bk: add(format!("{p}.bk"), (1, d)),
        wv: add(format!("{p}.wv"), (d, d)),
        bv: add(format!("{p}.bv"), (1, d)),
        wo: add(format!("{p}.wo"), (d, d)),
        bo: add(format!("{p}.bo"), (1, d)),
    };
    let ffn = |add: &mut dyn FnMut(String, (usize, usize)) -> usize, p: &str| Ffn {
        w1: add(format!("{p}.w1"), (d, config.d_ffn)),
        b1: add(format!("{p}.b1"), (1, config.d_ffn)),
        w2: add(format!("{p}.w2"), (config.d_ffn, d)),
        b2: add(format!("{p}.b2"), (1, d)),
    };
    let embed = add("embed".into(), (vocab, d));
    let encoder = (0..config.n_encoder_layers)
        .map(|l| EncoderLayer {
            ln1: norm(&mut add, &format!("enc.{l}.ln1")),
            attn: attn(&mut add, &format!("enc.{l}.attn")),
            ln2: norm(&mut add, &format!("enc.{l}.ln2")),
            ffn: ffn(&mut add, &format!("enc.{l}.ffn")),
        })
        .collect();
    let enc_norm = norm(&mut add, "enc.ln");
    let decoder = (0..config.n_decoder_layers)
        .map(|l| DecoderLayer {
            ln1: norm(&mut add, &format!("dec.{l}.ln1")),
            self_attn: attn(&mut add, &format!("dec.{l}.self")),
            ln2: norm(&mut add, &format!("dec.{l}.ln2")),
            cross: attn(&mut add, &format!("dec.{l}.cross")),
            ln3: norm(&mut add, &format!("dec.{l}.ln3")),
            ffn: ffn(&mut add, &format!("dec.{l}.ffn")),
        })
        .collect();
    let dec_norm = norm(&mut add, "dec.ln");
    let out_w = add("out.w".into(), (d, vocab));
    let out_b = add("out.b".into(), (1, vocab));
    let layout = Layout {
        embed,
        encoder,
        enc_norm,
        decoder,
        dec_norm,
        out_w,
        out_b,
    };
    (shapes, layout)
}

fn sinusoid_table(positions: usize, d: usize) -> Mat {
    Mat::from_shape_fn((positions, d), |(pos, i)| {
        let angle = pos as f64 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Debug, Clone)]
pub struct Transformer {
    config: ModelConfig,
    vocab_size: usize,
    params: ParamSet,
    layout: Layout,
    positions: Mat,
}

/// Per-layer cross-attention keys and values for one encoded source.
#[derive(Debug, Clone)]
pub struct Memory {
    keys: Vec<Mat>,
    values: Vec<Mat>,
    valid: Vec<bool>,
}

/// Self-attention caches for a batch of decoder hypotheses; indexed
/// `[layer][hypothesis]`, each `positions x d_model`.
#[derive(Debug, Clone)]
pub struct DecoderCache {
    len: usize,
    keys: Vec<Vec<Mat>>,
    values: Vec<Vec<Mat>>,
}

impl DecoderCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn hypotheses(&self) -> usize {
        self.keys.first().map_or(0, Vec::len)
    }

    /// Keeps hypothesis `parents[i]` as the new hypothesis `i`.
    pub fn reorder(&self, parents: &[usize]) -> DecoderCache {
        let pick = |layers: &Vec<Vec<Mat>>| {
            layers
                .iter()
                .map(|hyps| parents.iter().map(|&p| hyps[p].clone()).collect())
                .collect()
        };
        DecoderCache {
            len: self.len,
            keys: pick(&self.keys),
            values: pick(&self.values),
        }
    }
}

fn linear(x: &Mat, w: &Mat, b: &Mat) -> Mat {
    x.dot(w) + b
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), bound: f64) -> Mat {
    Mat::from_shape_simple_fn(shape, || rng.gen_range(-bound..bound))
}

impl Transformer {
    /// Seeded initialization: weights uniform in ±1/sqrt(fan_in), biases
    /// and norm shifts zero, norm gains one. Embedding rows are indexed by
    /// a one-hot input, so their fan-in is 1.
    pub fn new(config: ModelConfig, vocab_size: usize, seed: u64) -> Result<Transformer, ConfigError> {
        config.validate()?;
        let (shapes, layout) = declare(&config, vocab_size);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, shape) in shapes {
            let value = if name == "embed" {
                uniform(&mut rng, shape, 1.0)
            } else if name.ends_with(".g") {
                Mat::ones(shape)
            } else if shape.0 == 1 {
                Mat::zeros(shape)
            } else {
                uniform(&mut rng, shape, 1.0 / (shape.0 as f64).sqrt())
            };
            params.push(name, value);
        }
        Ok(Transformer::assemble(config, vocab_size, params, layout))
    }

    /// Builds a model around existing parameters, checking every shape.
    pub fn from_params(config: ModelConfig, vocab_size: usize, params: ParamSet) -> Result<Transformer, String> {
        config.validate().map_err(|e| e.to_string())?;
        let (shapes, layout) = declare(&config, vocab_size);
        if shapes.len() != params.len() {
            return Err(format!("expected {} tensors, found {}", shapes.len(), params.len()));
        }
        for (i, (name, shape)) in shapes.iter().enumerate() {
            if params.name(i) != name || params.get(i).dim() != *shape {
                return Err(format!(
                    "tensor {i}: expected {name} {:?}, found {} {:?}",
                    shape,
                    params.name(i),
                    params.get(i).dim()
                ));
            }
        }
        Ok(Transformer::assemble(config, vocab_size, params, layout))
    }

    fn assemble(config: ModelConfig, vocab_size: usize, params: ParamSet, layout: Layout) -> Transformer {
        let positions = sinusoid_table(config.max_src_len.max(config.max_tgt_len), config.d_model);
        Transformer {
            config,
            vocab_size,
            params,
            layout,
            positions,
        }
    }

    /// Parameter shapes this configuration declares, in order.
    pub fn declared_shapes(config: &ModelConfig, vocab_size: usize) -> Vec<(String, (usize, usize))> {
        declare(config, vocab_size).0
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn check_ids(&self, ids: &[u32]) -> Result<(), ShapeError> {
        match ids.iter().find(|&&id| id as usize >= self.vocab_size) {
            Some(&id) => Err(ShapeError::TokenOutOfRange {
                id,
                vocab: self.vocab_size,
            }),
            None => Ok(()),
        }
    }

    pub fn check_example(&self, ex: &Example) -> Result<(), ShapeError> {
        if ex.src.is_empty() || ex.tgt.is_empty() {
            return Err(ShapeError::Empty);
        }
        if ex.src.len() > self.config.max_src_len {
            return Err(ShapeError::SourceTooLong {
                len: ex.src.len(),
                max: self.config.max_src_len,
            });
        }
        if ex.tgt.len() > self.config.max_tgt_len {
            return Err(ShapeError::TargetTooLong {
                len: ex.tgt.len(),
                max: self.config.max_tgt_len,
            });
        }
        self.check_ids(&ex.src)?;
        self.check_ids(&ex.tgt)
    }

    fn embed(&self, tape: &mut Tape, table: Var, seqs: &[&[u32]]) -> Var {
        let ids: Vec<usize> = seqs.iter().flat_map(|s| s.iter().map(|&i| i as usize)).collect();
        let mut pe = Mat::zeros((ids.len(), self.config.d_model));
        let mut row = 0;
        for s in seqs {
            pe.slice_mut(s![row..row + s.len(), ..])
                .assign(&self.positions.slice(s![..s.len(), ..]));
            row += s.len();
        }
        let x = tape.gather(table, ids);
        let pe = tape.constant(pe);
        tape.add(x, pe)
    }

    fn graph_attention(
        &self,
        tape: &mut Tape,
        p: &[Var],
        a: Attn,
        query: Var,
        keys: Var,
        spec: AttentionSpec,
    ) -> Var {
        let q = tape.linear(query, p[a.wq], p[a.bq]);
        let k = tape.linear(keys, p[a.wk], p[a.bk]);
        let v = tape.linear(keys, p[a.wv], p[a.bv]);
        let o = tape.attention(q, k, v, spec);
        tape.linear(o, p[a.wo], p[a.bo])
    }

    fn graph_ffn(tape: &mut Tape, p: &[Var], f: Ffn, x: Var) -> Var {
        let h = tape.linear(x, p[f.w1], p[f.b1]);
        let h = tape.gelu(h);
        tape.linear(h, p[f.w2], p[f.b2])
    }

    fn dropout(&self, tape: &mut Tape, x: Var, rng: &mut Option<ChaCha8Rng>) -> Var {
        let rate = self.config.dropout;
        let Some(rng) = rng.as_mut() else {
            return x;
        };
        if rate == 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - rate);
        let mask = Mat::from_shape_simple_fn(tape.value(x).raw_dim(), || {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                keep
            }
        });
        tape.dropout(x, mask)
    }

    /// Records the full forward pass over a packed batch and returns the
    /// logits, one row per decoder position.
    fn graph_logits(
        &self,
        tape: &mut Tape,
        srcs: &[&[u32]],
        dec_inputs: &[&[u32]],
        rng: &mut Option<ChaCha8Rng>,
    ) -> Var {
        let l = &self.layout;
        let p: Vec<Var> = (0..self.params.len()).map(|i| tape.param(i)).collect();
        let spans = |seqs: &[&[u32]]| {
            let mut start = 0;
            seqs.iter()
                .map(|s| {
                    let span = (start, s.len());
                    start += s.len();
                    span
                })
                .collect::<Vec<_>>()
        };
        let src_spans = spans(srcs);
        let dec_spans = spans(dec_inputs);
        let valid = |seqs: &[&[u32]]| -> Vec<bool> {
            seqs.iter().flat_map(|s| s.iter().map(|&t| t != PAD)).collect()
        };
        let self_segments = |spans: &[(usize, usize)]| -> Vec<Segment> {
            spans
                .iter()
                .map(|&(start, len)| Segment {
                    q_start: start,
                    q_len: len,
                    k_start: start,
                    k_len: len,
                })
                .collect()
        };
        let enc_spec = AttentionSpec {
            heads: self.config.n_heads,
            segments: self_segments(&src_spans),
            key_valid: valid(srcs),
            causal: false,
        };
        let dec_spec = AttentionSpec {
            heads: self.config.n_heads,
            segments: self_segments(&dec_spans),
            key_valid: valid(dec_inputs),
            causal: true,
        };
        let cross_spec = AttentionSpec {
            heads: self.config.n_heads,
            segments: dec_spans
                .iter()
                .zip(&src_spans)
                .map(|(&(qs, ql), &(ks, kl))| Segment {
                    q_start: qs,
                    q_len: ql,
                    k_start: ks,
                    k_len: kl,
                })
                .collect(),
            key_valid: enc_spec.key_valid.clone(),
            causal: false,
        };

        let mut x = self.embed(tape, p[l.embed], srcs);
        x = self.dropout(tape, x, rng);
        for layer in &l.encoder {
            let h = tape.layer_norm(x, p[layer.ln1.g], p[layer.ln1.b]);
            let a = self.graph_attention(tape, &p, layer.attn, h, h, enc_spec.clone());
            let a = self.dropout(tape, a, rng);
            x = tape.add(x, a);
            let h = tape.layer_norm(x, p[layer.ln2.g], p[layer.ln2.b]);
            let f = Self::graph_ffn(tape, &p, layer.ffn, h);
            let f = self.dropout(tape, f, rng);
            x = tape.add(x, f);
        }
        let memory = tape.layer_norm(x, p[l.enc_norm.g], p[l.enc_norm.b]);

        let mut y = self.embed(tape, p[l.embed], dec_inputs);
        y = self.dropout(tape, y, rng);
        for layer in &l.decoder {
            let h = tape.layer_norm(y, p[layer.ln1.g], p[layer.ln1.b]);
            let a = self.graph_attention(tape, &p, layer.self_attn, h, h, dec_spec.clone());
            let a = self.dropout(tape, a, rng);
            y = tape.add(y, a);
            let h = tape.layer_norm(y, p[layer.ln2.g], p[layer.ln2.b]);
            let c = self.graph_attention(tape, &p, layer.cross, h, memory, cross_spec.clone());
            let c = self.dropout(tape, c, rng);
            y = tape.add(y, c);
            let h = tape.layer_norm(y, p[layer.ln3.g], p[layer.ln3.b]);
            let f = Self::graph_ffn(tape, &p, layer.ffn, h);
            let f = self.dropout(tape, f, rng);
            y = tape.add(y, f);
        }
        let out = tape.layer_norm(y, p[l.dec_norm.g], p[l.dec_norm.b]);
        tape.linear(out, p[l.out_w], p[l.out_b])
    }

    /// Records the summed token loss; returns it with the number of scored
    /// (non-PAD) target positions.
    fn graph_loss(&self, tape: &mut Tape, batch: &[Example], dropout_seed: Option<u64>) -> (Var, usize) {
        let dec_inputs: Vec<Vec<u32>> = batch.iter().map(Example::decoder_input).collect();
        let srcs: Vec<&[u32]> = batch.iter().map(|e| e.src.as_slice()).collect();
        let decs: Vec<&[u32]> = dec_inputs.iter().map(Vec::as_slice).collect();
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let logits = self.graph_logits(tape, &srcs, &decs, &mut rng);
        let targets: Vec<Option<usize>> = batch
            .iter()
            .flat_map(|e| e.tgt.iter().map(|&t| (t != PAD).then_some(t as usize)))
            .collect();
        let count = targets.iter().flatten().count();
        (tape.cross_entropy_sum(logits, targets), count)
    }

    /// Mean cross-entropy per scored target token. Dropout is active only
    /// when a seed is given.
    pub fn batch_loss(&self, batch: &[Example], dropout_seed: Option<u64>) -> f64 {
        let (sum, count) = self.loss_sum(batch, dropout_seed);
        sum / count.max(1) as f64
    }

    /// Summed cross-entropy and the number of scored positions.
    pub fn loss_sum(&self, batch: &[Example], dropout_seed: Option<u64>) -> (f64, usize) {
        let mut tape = Tape::new(&self.params);
        let (loss, count) = self.graph_loss(&mut tape, batch, dropout_seed);
        (tape.value(loss)[[0, 0]], count)
    }

    /// Mean token loss and its gradient for every parameter.
    pub fn loss_and_gradients(&self, batch: &[Example], dropout_seed: Option<u64>) -> (f64, Vec<Mat>) {
        let mut tape = Tape::new(&self.params);
        let (loss, count) = self.graph_loss(&mut tape, batch, dropout_seed);
        let scale = 1.0 / count.max(1) as f64;
        let value = tape.value(loss)[[0, 0]] * scale;
        (value, tape.backward(loss, Mat::from_elem((1, 1), scale)))
    }

    /// Summed token loss, scored positions, and the gradient of the sum.
    pub fn loss_sum_and_gradients(&self, batch: &[Example], dropout_seed: Option<u64>) -> (f64, usize, Vec<Mat>) {
        let mut tape = Tape::new(&self.params);
        let (loss, count) = self.graph_loss(&mut tape, batch, dropout_seed);
        let value = tape.value(loss)[[0, 0]];
        (value, count, tape.backward(loss, Mat::from_elem((1, 1), 1.0)))
    }

    /// Score vectors (logits) for every decoder position: row `i` scores
    /// the token following `dec_input[..=i]`. `src` should end in EOS and
    /// `dec_input` start with BOS.
    pub fn scores(&self, src: &[u32], dec_input: &[u32]) -> Result<Mat, ShapeError> {
        if src.is_empty() || dec_input.is_empty() {
            return Err(ShapeError::Empty);
        }
        if src.len() > self.config.max_src_len {
            return Err(ShapeError::SourceTooLong {
                len: src.len(),
                max: self.config.max_src_len,
            });
        }
        if dec_input.len() > self.config.max_tgt_len {
            return Err(ShapeError::TargetTooLong {
                len: dec_input.len(),
                max: self.config.max_tgt_len,
            });
        }
        self.check_ids(src)?;
        self.check_ids(dec_input)?;
        let mut tape = Tape::new(&self.params);
        let logits = self.graph_logits(&mut tape, &[src], &[dec_input], &mut None);
        Ok(tape.value(logits).clone())
    }

    /// Encodes one source and precomputes cross-attention keys and values.
    pub fn encode(&self, src: &[u32]) -> Result<Memory, ShapeError> {
        if src.is_empty() {
            return Err(ShapeError::Empty);
        }
        if src.len() > self.config.max_src_len {
            return Err(ShapeError::SourceTooLong {
                len: src.len(),
                max: self.config.max_src_len,
            });
        }
        self.check_ids(src)?;
        let l = &self.layout;
        let pv = |i: usize| self.params.get(i);
        let mut x = Mat::zeros((src.len(), self.config.d_model));
        for (row, &id) in src.iter().enumerate() {
            let mut r = x.row_mut(row);
            r.assign(&pv(l.embed).row(id as usize));
            r += &self.positions.row(row);
        }
        let valid: Vec<bool> = src.iter().map(|&t| t != PAD).collect();
        for layer in &l.encoder {
            let h = layer_norm(x.view(), pv(layer.ln1.g), pv(layer.ln1.b)).0;
            let k = linear(&h, pv(layer.attn.wk), pv(layer.attn.bk));
            let v = linear(&h, pv(layer.attn.wv), pv(layer.attn.bv));
            let q = linear(&h, pv(layer.attn.wq), pv(layer.attn.bq));
            let a = self.plain_attention(&q, &k, &v, &valid);
            x += &linear(&a, pv(layer.attn.wo), pv(layer.attn.bo));
            let h = layer_norm(x.view(), pv(layer.ln2.g), pv(layer.ln2.b)).0;
            x += &self.plain_ffn(layer.ffn, &h);
        }
        let memory = layer_norm(x.view(), pv(l.enc_norm.g), pv(l.enc_norm.b)).0;
        let (keys, values) = l
            .decoder
            .iter()
            .map(|layer| {
                (
                    linear(&memory, pv(layer.cross.wk), pv(layer.cross.bk)),
                    linear(&memory, pv(layer.cross.wv), pv(layer.cross.bv)),
                )
            })
            .unzip();
        Ok(Memory { keys, values, valid })
    }

    /// Attention of every query row over all valid keys. No causal mask is
    /// needed: the incremental decoder only ever queries its newest position.
    fn plain_attention(&self, q: &Mat, k: &Mat, v: &Mat, valid: &[bool]) -> Mat {
        let d = self.config.d_model;
        let dh = d / self.config.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Mat::zeros((q.nrows(), d));
        for h in 0..self.config.n_heads {
            let cols = h * dh..(h + 1) * dh;
            let mut p = q.slice(s![.., cols.clone()]).dot(&k.slice(s![.., cols.clone()]).t());
            for mut row in p.rows_mut() {
                for (x, &ok) in row.iter_mut().zip(valid) {
                    *x = if ok { *x * scale } else { f64::NEG_INFINITY };
                }
                softmax_in_place(row.as_slice_mut().expect("contiguous row"));
            }
            out.slice_mut(s![.., cols.clone()])
                .assign(&p.dot(&v.slice(s![.., cols])));
        }
        out
    }

    fn plain_ffn(&self, f: Ffn, x: &Mat) -> Mat {
        let pv = |i: usize| self.params.get(i);
        let h = linear(x, pv(f.w1), pv(f.b1)).mapv(super::tape::gelu);
        linear(&h, pv(f.w2), pv(f.b2))
    }

    /// An empty cache for `hypotheses` parallel decodes.
    pub fn start(&self, hypotheses: usize) -> DecoderCache {
        let layers = self.layout.decoder.len();
        let empty = || vec![vec![Mat::zeros((0, self.config.d_model)); hypotheses]; layers];
        DecoderCache {
            len: 0,
            keys: empty(),
            values: empty(),
        }
    }

    /// Feeds one token per hypothesis at the next position; returns the
    /// logits (`hypotheses x vocab`) and the extended cache.
    pub fn step(&self, memory: &Memory, cache: &DecoderCache, tokens: &[u32]) -> Result<(Mat, DecoderCache), ShapeError> {
        assert_eq!(tokens.len(), cache.hypotheses(), "one token per hypothesis");
        let pos = cache.len;
        if pos + 1 > self.config.max_tgt_len {
            return Err(ShapeError::TargetTooLong {
                len: pos + 1,
                max: self.config.max_tgt_len,
            });
        }
        self.check_ids(tokens)?;
        let l = &self.layout;
        let pv = |i: usize| self.params.get(i);
        let d = self.config.d_model;
        let mut x = Mat::zeros((tokens.len(), d));
        for (row, &id) in tokens.iter().enumerate() {
            let mut r = x.row_mut(row);
            r.assign(&pv(l.embed).row(id as usize));
            r += &self.positions.row(pos);
        }
        let mut next = cache.clone();
        next.len = pos + 1;
        for (li, layer) in l.decoder.iter().enumerate() {
            let a = layer.self_attn;
            let h = layer_norm(x.view(), pv(layer.ln1.g), pv(layer.ln1.b)).0;
            let q = linear(&h, pv(a.wq), pv(a.bq));
            let k = linear(&h, pv(a.wk), pv(a.bk));
            let v = linear(&h, pv(a.wv), pv(a.bv));
            let mut attn = Mat::zeros((tokens.len(), d));
            for hyp in 0..tokens.len() {
                let keys = &mut next.keys[li][hyp];
                keys.push_row(k.row(hyp)).expect("width matches");
                let values = &mut next.values[li][hyp];
                values.push_row(v.row(hyp)).expect("width matches");
                let valid = vec![true; pos + 1];
                let qrow = q.slice(s![hyp..hyp + 1, ..]).to_owned();
                let o = self.plain_attention(&qrow, &next.keys[li][hyp], &next.values[li][hyp], &valid);
                attn.row_mut(hyp).assign(&o.row(0));
            }
            x += &linear(&attn, pv(a.wo), pv(a.bo));

            let c = layer.cross;
            let h = layer_norm(x.view(), pv(layer.ln2.g), pv(layer.ln2.b)).0;
            let q = linear(&h, pv(c.wq), pv(c.bq));
            let o = self.plain_attention(&q, &memory.keys[li], &memory.values[li], &memory.valid);
            x += &linear(&o, pv(c.wo), pv(c.bo));

            let h = layer_norm(x.view(), pv(layer.ln3.g), pv(layer.ln3.b)).0;
            x += &self.plain_ffn(layer.ffn, &h);
        }
        let out = layer_norm(x.view(), pv(l.dec_norm.g), pv(l.dec_norm.b)).0;
        Ok((linear(&out, pv(l.out_w), pv(l.out_b)), next))
    }
}

/// `log_softmax(row / temperature)` for one score vector.
pub fn log_softmax(row: ndarray::ArrayView1<f64>, temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = row.iter().map(|v| v / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    scaled.into_iter().map(|v| v - lse).collect()
}

/// Row-wise softmax of a score matrix.
pub fn softmax_rows(scores: &Mat) -> Array2<f64> {
    let mut p = scores.clone();
    for mut row in p.axis_iter_mut(Axis(0)) {
        softmax_in_place(row.as_slice_mut().expect("contiguous row"));
    }
    p
}
