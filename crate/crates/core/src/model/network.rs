use super::config::{LossConfig, ModelConfig, Modality};
use super::loss::masked_total;
use crate::dataio::{SentenceRecord, WordSample};
use crate::error::{Error, Result};
use crate::numcore::{xavier_uniform, ParamId, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Additive logit for masked attention keys.
pub const MASK_LOGIT: f64 = -1e9;
/// Guard keeping head probabilities strictly inside (0, 1).
pub const HEAD_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Norm {
    gain: ParamId,
    bias: ParamId,
}

/// Per-word model inputs for one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceBatch {
    pub inputs: Vec<(Modality, Tensor)>,
    /// Words that may be attended to.
    pub attention_mask: Vec<bool>,
    pub targets: Vec<f64>,
    /// Words that count towards the loss and metrics.
    pub loss_mask: Vec<bool>,
}

impl SentenceBatch {
    /// Every valid word is visible to attention; `include` further restricts
    /// which valid words are scored.
    pub fn from_record(
        record: &SentenceRecord,
        modalities: &[Modality],
        include: impl Fn(&WordSample) -> bool,
    ) -> Result<Self> {
        let m = record.words.len();
        if m == 0 {
            return Err(Error::contract("sentence has no words"));
        }
        let mut inputs = Vec::with_capacity(modalities.len());
        for &modality in modalities {
            let mut data = Vec::new();
            let mut width = None;
            for w in &record.words {
                let row: &[f64] = match modality {
                    Modality::Eye => &w.eye,
                    Modality::Eeg => &w.eeg,
                    Modality::Wemb => w.wemb.as_deref().ok_or_else(|| {
                        Error::schema(format!(
                            "wemb missing in sentence {} of subject '{}'",
                            record.sentence_id, record.subject
                        ))
                    })?,
                };
                if *width.get_or_insert(row.len()) != row.len() || row.is_empty() {
                    return Err(Error::schema(format!(
                        "{modality} features missing or ragged in sentence {}",
                        record.sentence_id
                    )));
                }
                data.extend_from_slice(row);
            }
            inputs.push((modality, Tensor::new(vec![m, width.expect("m > 0")], data)?));
        }
        Ok(SentenceBatch {
            inputs,
            attention_mask: record.words.iter().map(|w| w.valid).collect(),
            targets: record
                .words
                .iter()
                .map(|w| w.label.map_or(0.0, |l| l.target()))
                .collect(),
            loss_mask: record.words.iter().map(|w| w.valid && include(w)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.attention_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attention_mask.is_empty()
    }
}

/// Encoder output and per-head attention weights.
#[derive(Clone, Debug)]
pub struct EncoderTrace {
    pub output: Var,
    pub attention: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Encoder output, `[M × d_model]`.
    pub hidden: Var,
    pub attention: Vec<Var>,
    /// HRW probabilities, `[M × 1]`.
    pub probs: Var,
}

/// Probabilities for one sentence alongside the mask and targets that
/// score them.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPrediction {
    pub p: Vec<f64>,
    pub mask: Vec<bool>,
    pub y: Vec<f64>,
}

/// `PE[pos, 2i] = sin(pos / 10000^(2i/d))`, `PE[pos, 2i+1] = cos(…)`.
pub fn positional_encoding(m: usize, d_model: usize) -> Result<Tensor> {
    if d_model == 0 || !d_model.is_multiple_of(2) {
        return Err(Error::contract(format!(
            "positional encoding needs an even width, got {d_model}"
        )));
    }
    let mut pe = Tensor::zeros(&[m.max(1), d_model]);
    let data = pe.data_mut();
    for pos in 0..m {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf((2 * i) as f64 / d_model as f64);
            data[pos * d_model + 2 * i] = angle.sin();
            data[pos * d_model + 2 * i + 1] = angle.cos();
        }
    }
    if m == 0 {
        return Err(Error::contract("positional encoding for zero positions"));
    }
    Ok(pe)
}

/// Element-wise sum of two projected modalities.
pub fn fuse(tape: &mut Tape<'_>, a: Var, b: Var) -> Result<Var> {
    tape.add(a, b)
}

/// The reading-embedding classifier: per-modality projections into a
/// shared space, additive fusion, sinusoidal positions, one self-attention
/// encoder block and an MLP head with a logistic output.
#[derive(Clone, Debug)]
pub struct ReadingModel {
    config: ModelConfig,
    params: ParamStore,
    projections: Vec<(Modality, Linear)>,
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
    norm1: Norm,
    norm2: Norm,
    ffn_in: Linear,
    ffn_out: Linear,
    head: Vec<Linear>,
}

impl ReadingModel {
    /// Xavier-uniform weights from `config.seed`, zero biases, unit norm gains.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut modalities = config.modalities.clone();
        modalities.sort();
        modalities.dedup();
        let config = ModelConfig { modalities, ..config };

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let mut linear = |params: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize| Linear {
            w: params.add(format!("{name}.w"), xavier_uniform(fan_in, fan_out, &mut rng)),
            b: params.add(format!("{name}.b"), Tensor::zeros(&[fan_out])),
        };
        let d = config.d_model;
        let projections = config
            .modalities
            .iter()
            .map(|&m| (m, linear(&mut params, &format!("proj.{m}"), config.input_dim(m), d)))
            .collect();
        let query = linear(&mut params, "attn.q", d, d);
        let key = linear(&mut params, "attn.k", d, d);
        let value = linear(&mut params, "attn.v", d, d);
        let out = linear(&mut params, "attn.o", d, d);
        let norm = |params: &mut ParamStore, name: &str| Norm {
            gain: params.add(format!("{name}.gain"), Tensor::full(&[d], 1.0)),
            bias: params.add(format!("{name}.bias"), Tensor::zeros(&[d])),
        };
        let norm1 = norm(&mut params, "ln1");
        let norm2 = norm(&mut params, "ln2");
        let ffn_in = linear(&mut params, "ffn.in", d, config.ffn_dim);
        let ffn_out = linear(&mut params, "ffn.out", config.ffn_dim, d);
        let mut head = Vec::new();
        let mut width = d;
        for (i, &h) in config.mlp_hidden.iter().enumerate() {
            head.push(linear(&mut params, &format!("head.{i}"), width, h));
            width = h;
        }
        head.push(linear(&mut params, "head.out", width, 1));

        Ok(ReadingModel {
            config,
            params,
            projections,
            query,
            key,
            value,
            out,
            norm1,
            norm2,
            ffn_in,
            ffn_out,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn projection(&self, m: Modality) -> Option<Linear> {
        self.projections.iter().find(|(k, _)| *k == m).map(|(_, l)| *l)
    }

    pub fn head_layers(&self) -> &[Linear] {
        &self.head
    }

    /// Every parameter of the attention, feed-forward and norm layers.
    pub fn encoder_params(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for l in [self.query, self.key, self.value, self.out, self.ffn_in, self.ffn_out] {
            ids.extend([l.w, l.b]);
        }
        for n in [self.norm1, self.norm2] {
            ids.extend([n.gain, n.bias]);
        }
        ids
    }

    fn apply<'a>(&'a self, tape: &mut Tape<'a>, x: Var, l: Linear) -> Result<Var> {
        let w = tape.param(&self.params, l.w);
        let b = tape.param(&self.params, l.b);
        let h = tape.matmul(x, w)?;
        tape.add_row(h, b)
    }

    /// Affine map of `[M × D_mod]` features into `[M × d_model]`.
    pub fn project<'a>(&'a self, tape: &mut Tape<'a>, modality: Modality, x: Var) -> Result<Var> {
        let lin = self
            .projection(modality)
            .ok_or_else(|| Error::contract(format!("modality {modality} is not enabled in this model")))?;
        let expected = self.config.input_dim(modality);
        let got = tape.value(x).cols();
        if got != expected {
            return Err(Error::contract(format!(
                "{modality} input has {got} features, model expects {expected}"
            )));
        }
        self.apply(tape, x, lin)
    }

    fn maybe_norm<'a>(&'a self, tape: &mut Tape<'a>, x: Var, n: Norm) -> Result<Var> {
        if !self.config.use_layer_norm {
            return Ok(x);
        }
        let g = tape.param(&self.params, n.gain);
        let b = tape.param(&self.params, n.bias);
        tape.layer_norm(x, g, b, self.config.ln_eps)
    }

    /// Multi-head self-attention over unmasked words followed by the
    /// position-wise feed-forward sublayer (post-norm residual layout).
    pub fn encoder_block<'a>(&'a self, tape: &mut Tape<'a>, x: Var, mask: &[bool]) -> Result<EncoderTrace> {
        let m = tape.value(x).rows();
        if mask.len() != m {
            return Err(Error::contract(format!("mask has {} entries for {m} words", mask.len())));
        }
        if !mask.iter().any(|&v| v) {
            return Err(Error::contract("every word of the sentence is masked"));
        }
        let q = self.apply(tape, x, self.query)?;
        let k = self.apply(tape, x, self.key)?;
        let v = self.apply(tape, x, self.value)?;
        let bias: Vec<f64> = (0..m)
            .flat_map(|_| mask.iter().map(|&ok| if ok { 0.0 } else { MASK_LOGIT }))
            .collect();
        let bias = tape.constant(Tensor::new(vec![m, m], bias)?);

        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.n_heads);
        let mut attention = Vec::with_capacity(self.config.n_heads);
        for h in 0..self.config.n_heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let scores = tape.add(scores, bias)?;
            let weights = tape.softmax_rows(scores);
            attention.push(weights);
            heads.push(tape.matmul(weights, vh)?);
        }
        let concat = tape.concat_cols(&heads)?;
        let attended = self.apply(tape, concat, self.out)?;

        let x1 = if self.config.use_residual { tape.add(x, attended)? } else { attended };
        let x1 = self.maybe_norm(tape, x1, self.norm1)?;
        let f = self.apply(tape, x1, self.ffn_in)?;
        let f = tape.gelu(f);
        let f = self.apply(tape, f, self.ffn_out)?;
        let x2 = if self.config.use_residual { tape.add(x1, f)? } else { f };
        let output = self.maybe_norm(tape, x2, self.norm2)?;
        Ok(EncoderTrace { output, attention })
    }

    /// Per-word HRW probability, `[M × 1]`.
    pub fn mlp_head<'a>(&'a self, tape: &mut Tape<'a>, x: Var) -> Result<Var> {
        let mut h = x;
        let (last, hidden) = self.head.split_last().expect("output layer");
        for &l in hidden {
            h = self.apply(tape, h, l)?;
            h = tape.gelu(h);
        }
        let logit = self.apply(tape, h, *last)?;
        let p = tape.sigmoid(logit);
        Ok(tape.clamp(p, HEAD_CLAMP, 1.0 - HEAD_CLAMP))
    }

    /// project → fuse → positional encoding → encoder → head.
    pub fn forward<'a>(&'a self, tape: &mut Tape<'a>, batch: &SentenceBatch) -> Result<ForwardTrace> {
        if !batch.attention_mask.iter().any(|&v| v) {
            return Err(Error::contract("sentence has no valid words"));
        }
        let mut fused: Option<Var> = None;
        for &m in &self.config.modalities {
            let input = batch
                .inputs
                .iter()
                .find(|(k, _)| *k == m)
                .ok_or_else(|| Error::contract(format!("batch lacks enabled modality {m}")))?;
            let x = tape.constant(input.1.clone());
            let projected = self.project(tape, m, x)?;
            fused = Some(match fused {
                Some(acc) => fuse(tape, acc, projected)?,
                None => projected,
            });
        }
        let fused = fused.expect("at least one modality");
        let pe = tape.constant(positional_encoding(batch.len(), self.config.d_model)?);
        let embedded = tape.add(fused, pe)?;
        let enc = self.encoder_block(tape, embedded, &batch.attention_mask)?;
        let probs = self.mlp_head(tape, enc.output)?;
        Ok(ForwardTrace {
            hidden: enc.output,
            attention: enc.attention,
            probs,
        })
    }

    /// Forward pass plus the weighted masked loss over `batch.loss_mask`.
    pub fn loss<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        batch: &SentenceBatch,
        cfg: &LossConfig,
    ) -> Result<(Var, ForwardTrace)> {
        let trace = self.forward(tape, batch)?;
        let loss = masked_total(tape, trace.probs, &batch.targets, &batch.loss_mask, cfg)?;
        Ok((loss, trace))
    }

    /// Predictions over every valid word of a sentence.
    pub fn predict(&self, batch: &SentenceBatch) -> Result<BatchPrediction> {
        let mut tape = Tape::new();
        let trace = self.forward(&mut tape, batch)?;
        Ok(BatchPrediction {
            p: tape.value(trace.probs).data().to_vec(),
            mask: batch.loss_mask.clone(),
            y: batch.targets.clone(),
        })
    }

    pub fn forward_sentence(&self, record: &SentenceRecord) -> Result<BatchPrediction> {
        let batch = SentenceBatch::from_record(record, &self.config.modalities, |_| true)?;
        self.predict(&batch)
    }

    /// Encoder outputs `[M × d_model]` for a sentence.
    pub fn encode(&self, batch: &SentenceBatch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let trace = self.forward(&mut tape, batch)?;
        Ok(tape.value(trace.hidden).clone())
    }

    /// Replaces parameter values (checkpoint restore).
    pub(crate) fn set_param(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let id = self
            .params
            .find(name)
            .ok_or_else(|| Error::schema(format!("checkpoint has unknown parameter '{name}'")))?;
        let t = self.params.get_mut(id);
        if t.numel() != values.len() {
            return Err(Error::schema(format!(
                "parameter '{name}' has {} values, expected {}",
                values.len(),
                t.numel()
            )));
        }
        t.data_mut().copy_from_slice(values);
        Ok(())
    }
}
