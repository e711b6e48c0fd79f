use rand::Rng as _;
use rayon::prelude::*;

use crate::corpus::PAD;
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    Cnn,
    Blstm,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Cnn => "cnn",
            EncoderKind::Blstm => "blstm",
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(EncoderKind::Cnn),
            "blstm" => Ok(EncoderKind::Blstm),
            _ => Err(Error::InvalidArgument(format!("unknown encoder {s:?} (cnn|blstm)"))),
        }
    }
}

/// Architecture of a sentence classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub encoder: EncoderKind,
    pub embed_dim: usize,
    /// Convolution window widths.
    pub cnn_widths: Vec<usize>,
    /// Feature maps per window width.
    pub cnn_feature_maps: usize,
    /// Units per LSTM direction.
    pub lstm_units: usize,
    /// Hidden fully-connected layer sizes, each followed by ReLU.
    pub hidden: Vec<usize>,
    /// Sentences are truncated to this many tokens before encoding.
    pub max_len: usize,
    /// Weights start uniform in `[-init_scale, init_scale)`.
    pub init_scale: f64,
}

impl ClassifierConfig {
    pub fn new(encoder: EncoderKind) -> Self {
        ClassifierConfig {
            encoder,
            embed_dim: 300,
            cnn_widths: vec![3, 4, 5],
            cnn_feature_maps: 100,
            lstm_units: 300,
            hidden: vec![200, 100],
            max_len: 100,
            init_scale: 0.1,
        }
    }

    pub fn encoder_dim(&self) -> usize {
        match self.encoder {
            EncoderKind::Cnn => self.cnn_widths.len() * self.cnn_feature_maps,
            EncoderKind::Blstm => 2 * self.lstm_units,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.embed_dim == 0 {
            return bad("embed_dim must be >= 1");
        }
        if self.max_len == 0 {
            return bad("max_len must be >= 1");
        }
        match self.encoder {
            EncoderKind::Cnn if self.cnn_widths.is_empty() || self.cnn_widths.contains(&0) => {
                bad("cnn widths must be non-empty and positive")
            }
            EncoderKind::Cnn if self.cnn_feature_maps == 0 => bad("cnn_feature_maps must be >= 1"),
            EncoderKind::Blstm if self.lstm_units == 0 => bad("lstm_units must be >= 1"),
            _ if self.hidden.contains(&0) => bad("hidden layer sizes must be >= 1"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LstmParams {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
enum EncoderParams {
    Cnn(Vec<(usize, ParamId, ParamId)>),
    Blstm { fwd: LstmParams, bwd: LstmParams },
}

/// Embedding -> encoder -> fully-connected head -> two-way softmax.
/// Class 1 is "in-domain".
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    config: ClassifierConfig,
    vocab_size: usize,
    params: ParamStore,
    embedding: ParamId,
    encoder: EncoderParams,
    head: Vec<(ParamId, ParamId)>,
}

/// Transformed batch ready for a forward pass.
struct Batch {
    ids: Vec<u32>,
    lengths: Vec<usize>,
    len: usize,
}

/// Length after truncation, with trailing PAD ignored.
fn content_len(ids: &[u32], max_len: usize) -> usize {
    let ids = &ids[..ids.len().min(max_len)];
    ids.iter().rposition(|&id| id != PAD).map_or(0, |p| p + 1)
}

impl ClassifierModel {
    /// Freshly initialized model.
    pub fn new(config: ClassifierConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab_size < 1 {
            return Err(Error::InvalidArgument("vocabulary is empty".into()));
        }
        let mut rng = seeded(seed);
        let s = config.init_scale;
        let d = config.embed_dim;
        let mut params = ParamStore::new();
        let uniform = |rng: &mut Rng, shape: &[usize]| Tensor::uniform(shape, -s, s, rng);

        let mut emb = uniform(&mut rng, &[vocab_size, d]);
        emb.row_mut(PAD as usize).fill(0.0);
        let embedding = params.add("embedding", emb);

        let encoder = match config.encoder {
            EncoderKind::Cnn => {
                let f = config.cnn_feature_maps;
                let banks = config
                    .cnn_widths
                    .iter()
                    .map(|&w| {
                        let wt = params.add(format!("conv{w}.weight"), uniform(&mut rng, &[w * d, f]));
                        let b = params.add(format!("conv{w}.bias"), Tensor::zeros(&[1, f]));
                        (w, wt, b)
                    })
                    .collect();
                EncoderParams::Cnn(banks)
            }
            EncoderKind::Blstm => {
                let h = config.lstm_units;
                let mut direction = |name: &str, rng: &mut Rng| {
                    let wx = params.add(format!("lstm.{name}.wx"), uniform(rng, &[d, 4 * h]));
                    let wh = params.add(format!("lstm.{name}.wh"), uniform(rng, &[h, 4 * h]));
                    // Gate order i, f, g, o; forget bias starts at 1.
                    let mut bias = Tensor::zeros(&[1, 4 * h]);
                    bias.data_mut()[h..2 * h].fill(1.0);
                    let b = params.add(format!("lstm.{name}.b"), bias);
                    LstmParams { wx, wh, b }
                };
                let fwd = direction("fwd", &mut rng);
                let bwd = direction("bwd", &mut rng);
                EncoderParams::Blstm { fwd, bwd }
            }
        };

        let mut head = Vec::new();
        let mut prev = config.encoder_dim();
        for (k, &size) in config.hidden.iter().enumerate() {
            let w = params.add(format!("fc{k}.weight"), uniform(&mut rng, &[prev, size]));
            let b = params.add(format!("fc{k}.bias"), Tensor::zeros(&[1, size]));
            head.push((w, b));
            prev = size;
        }
        let w = params.add("out.weight", uniform(&mut rng, &[prev, 2]));
        let b = params.add("out.bias", Tensor::zeros(&[1, 2]));
        head.push((w, b));

        Ok(ClassifierModel {
            config,
            vocab_size,
            params,
            embedding,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Replaces all parameters; names and shapes must match.
    pub fn set_params(&mut self, params: ParamStore) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, model expects {}",
                params.len(),
                self.params.len()
            )));
        }
        for ((n1, t1), (n2, t2)) in self.params.iter().zip(params.iter()) {
            if n1 != n2 || t1.shape() != t2.shape() {
                return Err(Error::Format(format!(
                    "checkpoint tensor {n2} {:?} does not match {n1} {:?}",
                    t2.shape(),
                    t1.shape()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn embedding_id(&self) -> ParamId {
        self.embedding
    }

    /// Output layer parameters `(weight, bias)`.
    pub fn output_layer(&self) -> (ParamId, ParamId) {
        *self.head.last().unwrap()
    }

    pub fn zero_pad_embedding(&mut self) {
        self.params
            .get_mut(self.embedding)
            .row_mut(PAD as usize)
            .fill(0.0);
    }

    /// Makes the backward LSTM share the forward LSTM's weights (test aid).
    pub fn tie_lstm_directions(&mut self) -> Result<()> {
        let EncoderParams::Blstm { fwd, bwd } = &self.encoder else {
            return Err(Error::InvalidArgument("not a BLSTM model".into()));
        };
        for (src, dst) in [(fwd.wx, bwd.wx), (fwd.wh, bwd.wh), (fwd.b, bwd.b)] {
            let t = self.params.get(src).clone();
            *self.params.get_mut(dst) = t;
        }
        Ok(())
    }

    fn prepare(&self, sentences: &[&[u32]], time_major: bool, min_len: usize) -> Batch {
        let lengths: Vec<usize> = sentences
            .iter()
            .map(|s| content_len(s, self.config.max_len))
            .collect();
        let len = lengths.iter().copied().max().unwrap_or(0).max(min_len).max(1);
        let b = sentences.len();
        let mut ids = vec![PAD; b * len];
        for (i, s) in sentences.iter().enumerate() {
            for (t, &id) in s[..lengths[i]].iter().enumerate() {
                let pos = if time_major { t * b + i } else { i * len + t };
                ids[pos] = id;
            }
        }
        Batch { ids, lengths, len }
    }

    fn check_ids(&self, sentences: &[&[u32]]) -> Result<()> {
        for s in sentences {
            if let Some(&bad) = s.iter().find(|&&id| id as usize >= self.vocab_size) {
                return Err(Error::InvalidArgument(format!(
                    "token id {bad} outside vocabulary of {}",
                    self.vocab_size
                )));
            }
        }
        Ok(())
    }

    /// Sentence encodings, `batch x encoder_dim`.
    pub fn encode_graph(&self, g: &mut Graph<'_>, sentences: &[&[u32]]) -> Result<Var> {
        self.check_ids(sentences)?;
        let emb = g.param(self.embedding);
        match &self.encoder {
            EncoderParams::Cnn(banks) => {
                let max_w = banks.iter().map(|b| b.0).max().unwrap();
                let batch = self.prepare(sentences, false, max_w);
                let x = g.embedding(emb, &batch.ids)?;
                let mut pooled = Vec::with_capacity(banks.len());
                for &(w, wt, bias) in banks {
                    let wv = g.param(wt);
                    let bv = g.param(bias);
                    let conv = g.conv1d(x, wv, sentences.len(), batch.len, w)?;
                    let conv = g.add_bias(conv, bv)?;
                    let act = g.relu(conv)?;
                    let valid: Vec<usize> = batch
                        .lengths
                        .iter()
                        .map(|&n| (n + 1).saturating_sub(w).max(1))
                        .collect();
                    pooled.push(g.max_over_time(act, batch.len - w + 1, &valid)?);
                }
                g.concat_cols(&pooled)
            }
            EncoderParams::Blstm { fwd, bwd } => {
                let batch = self.prepare(sentences, true, 1);
                let x = g.embedding(emb, &batch.ids)?;
                let hf = self.run_lstm(g, x, &batch, fwd, false)?;
                let hb = self.run_lstm(g, x, &batch, bwd, true)?;
                g.concat_cols(&[hf, hb])
            }
        }
    }

    /// One LSTM direction over a time-major embedded batch. State passes
    /// unchanged through positions past a sentence's end, so the result is
    /// the state after its true last (or, reversed, first) token.
    fn run_lstm(&self, g: &mut Graph<'_>,
        x: Var,
        batch: &Batch,
        p: &LstmParams,
        reverse: bool,
    ) -> Result<Var> {
        let b = batch.lengths.len();
        let h_units = self.config.lstm_units;
        let wx = g.param(p.wx);
        let wh = g.param(p.wh);
        let bias = g.param(p.b);
        let xw = g.matmul(x, wx)?;
        let xw = g.add_bias(xw, bias)?;
        let mut h = g.constant(Tensor::zeros(&[b, h_units]));
        let mut c = g.constant(Tensor::zeros(&[b, h_units]));
        let steps: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..batch.len).rev())
        } else {
            Box::new(0..batch.len)
        };
        for t in steps {
            let active: Vec<bool> = batch.lengths.iter().map(|&n| t < n).collect();
            if !active.iter().any(|&a| a) {
                continue;
            }
            let xt = g.slice_rows(xw, t * b, b)?;
            let hw = g.matmul(h, wh)?;
            let gates = g.add(xt, hw)?;
            let i = g.slice_cols(gates, 0, h_units)?;
            let i = g.sigmoid(i)?;
            let f = g.slice_cols(gates, h_units, h_units)?;
            let f = g.sigmoid(f)?;
            let cand = g.slice_cols(gates, 2 * h_units, h_units)?;
            let cand = g.tanh(cand)?;
            let o = g.slice_cols(gates, 3 * h_units, h_units)?;
            let o = g.sigmoid(o)?;
            let fc = g.mul(f, c)?;
            let ic = g.mul(i, cand)?;
            let c_new = g.add(fc, ic)?;
            let tc = g.tanh(c_new)?;
            let h_new = g.mul(o, tc)?;
            if active.iter().all(|&a| a) {
                h = h_new;
                c = c_new;
            } else {
                h = g.blend(&active, h_new, h)?;
                c = g.blend(&active, c_new, c)?;
            }
        }
        Ok(h)
    }

    /// Logits `batch x 2`. With `dropout = Some((rate, rng))` an inverted
    /// dropout mask is applied to the encoder output.
    pub fn logits_graph(&self, g: &mut Graph<'_>,
        sentences: &[&[u32]],
        dropout: Option<(f64, &mut Rng)>,
    ) -> Result<Var> {
        let mut x = self.encode_graph(g, sentences)?;
        if let Some((rate, rng)) = dropout {
            if rate > 0.0 {
                let (r, c) = g.value(x).dims();
                let keep = 1.0 / (1.0 - rate);
                let mask = (0..r * c)
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                    .collect();
                x = g.mul_const(x, Tensor::matrix(r, c, mask)?)?;
            }
        }
        let last = self.head.len() - 1;
        for (k, &(w, b)) in self.head.iter().enumerate() {
            let wv = g.param(w);
            let bv = g.param(b);
            x = g.matmul(x, wv)?;
            x = g.add_bias(x, bv)?;
            if k < last {
                x = g.relu(x)?;
            }
        }
        Ok(x)
    }

    /// Encoder output for each sentence (no dropout).
    pub fn encode(&self, sentences: &[&[u32]]) -> Result<Tensor> {
        let mut g = Graph::new(&self.params);
        let v = self.encode_graph(&mut g, sentences)?;
        Ok(g.value(v).clone())
    }

    /// Class probabilities `batch x 2` (column 1 is in-domain).
    pub fn class_probabilities(&self, sentences: &[&[u32]]) -> Result<Tensor> {
        let mut g = Graph::new(&self.params);
        let logits = self.logits_graph(&mut g, sentences, None)?;
        let p = g.softmax_rows(logits)?;
        Ok(g.value(p).clone())
    }

    /// `p(in-domain | x)` per sentence. Batches run in parallel; results are
    /// assembled in input order.
    pub fn predict(&self, sentences: &[&[u32]], batch_size: usize) -> Result<Vec<f64>> {
        let batch_size = batch_size.max(1);
        let parts: Vec<Vec<f64>> = sentences
            .par_chunks(batch_size)
            .map(|chunk| {
                let p = self.class_probabilities(chunk)?;
                Ok((0..chunk.len()).map(|r| p.get(r, 1)).collect())
            })
            .collect::<Result<_>>()?;
        Ok(parts.concat())
    }

    /// Mean cross-entropy over labelled sentences (no dropout).
    pub fn mean_loss(&self, sentences: &[&[u32]], labels: &[usize], batch_size: usize) -> Result<f64> {
        if sentences.len() != labels.len() || sentences.is_empty() {
            return Err(Error::InvalidArgument("need matching non-empty sentences and labels".into()));
        }
        let batch_size = batch_size.max(1);
        let mut total = 0.0;
        for (chunk, lab) in sentences.chunks(batch_size).zip(labels.chunks(batch_size)) {
            let mut g = Graph::new(&self.params);
            let logits = self.logits_graph(&mut g, chunk, None)?;
            let loss = g.softmax_cross_entropy(logits, lab)?;
            total += g.value(loss).item() * chunk.len() as f64;
        }
        Ok(total / sentences.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: EncoderKind) -> ClassifierConfig {
        ClassifierConfig {
            embed_dim: 3,
            cnn_feature_maps: 2,
            lstm_units: 3,
            hidden: vec![4],
            ..ClassifierConfig::new(kind)
        }
    }

    #[test]
    fn paper_dimensions() {
        let cnn = ClassifierConfig::new(EncoderKind::Cnn);
        assert_eq!(cnn.encoder_dim(), 300);
        let blstm = ClassifierConfig::new(EncoderKind::Blstm);
        assert_eq!(blstm.encoder_dim(), 600);
        assert_eq!(cnn.hidden, vec![200, 100]);
    }

    #[test]
    fn output_widths_for_any_length() {
        for kind in [EncoderKind::Cnn, EncoderKind::Blstm] {
            let cfg = ClassifierConfig {
                embed_dim: 4,
                ..ClassifierConfig::new(kind)
            };
            let m = ClassifierModel::new(cfg.clone(), 10, 1).unwrap();
            for len in [1usize, 2, 7] {
                let s: Vec<u32> = (0..len as u32).map(|i| 4 + i % 6).collect();
                let enc = m.encode(&[&s]).unwrap();
                assert_eq!(enc.dims(), (1, cfg.encoder_dim()));
            }
        }
    }

    #[test]
    fn zero_filters_give_zero_features() {
        let mut m = ClassifierModel::new(small(EncoderKind::Cnn), 8, 3).unwrap();
        let ids: Vec<ParamId> = m
            .params()
            .ids()
            .filter(|&id| m.params().name(id).starts_with("conv"))
            .collect();
        for id in ids {
            m.params_mut().get_mut(id).data_mut().fill(0.0);
        }
        let enc = m.encode(&[&[4, 5, 6], &[7]]).unwrap();
        assert!(enc.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_filter_hand_case() {
        let cfg = ClassifierConfig {
            embed_dim: 1,
            cnn_widths: vec![1],
            cnn_feature_maps: 1,
            hidden: vec![],
            ..ClassifierConfig::new(EncoderKind::Cnn)
        };
        let mut m = ClassifierModel::new(cfg, 7, 0).unwrap();
        let emb = m.embedding_id();
        m.params_mut()
            .get_mut(emb)
            .data_mut()
            .copy_from_slice(&[0.0, 0.0, 0.0, 0.0, 1.0, -2.0, 0.5]);
        let w = m.params().find("conv1.weight").unwrap();
        m.params_mut().get_mut(w).data_mut()[0] = 3.0;
        let b = m.params().find("conv1.bias").unwrap();
        m.params_mut().get_mut(b).data_mut()[0] = -1.0;
        // relu(3 e - 1) over e = 1, -2, 0.5 -> max(2, 0, 0.5)
        let enc = m.encode(&[&[4, 5, 6]]).unwrap();
        assert_eq!(enc.data(), &[2.0]);
        let enc = m.encode(&[&[5]]).unwrap();
        assert_eq!(enc.data(), &[0.0]);
    }

    #[test]
    fn zeroed_output_layer_predicts_half() {
        for kind in [EncoderKind::Cnn, EncoderKind::Blstm] {
            let mut m = ClassifierModel::new(small(kind), 9, 5).unwrap();
            let (w, b) = m.output_layer();
            m.params_mut().get_mut(w).data_mut().fill(0.0);
            m.params_mut().get_mut(b).data_mut().fill(0.0);
            let p = m.predict(&[&[4, 5], &[8, 8, 8, 8, 8, 8]], 8).unwrap();
            assert_eq!(p, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        for kind in [EncoderKind::Cnn, EncoderKind::Blstm] {
            let m = ClassifierModel::new(small(kind), 9, 11).unwrap();
            let p = m.class_probabilities(&[&[4, 5, 6], &[7, 8]]).unwrap();
            for r in 0..2 {
                let s = p.get(r, 0) + p.get(r, 1);
                assert!((s - 1.0).abs() < 1e-12);
                assert!(p.get(r, 1) > 0.0 && p.get(r, 1) < 1.0);
            }
        }
    }

    #[test]
    fn single_token_halves_match_with_tied_directions() {
        let mut m = ClassifierModel::new(small(EncoderKind::Blstm), 9, 2).unwrap();
        m.tie_lstm_directions().unwrap();
        let enc = m.encode(&[&[6]]).unwrap();
        let h = 3;
        assert_eq!(&enc.data()[..h], &enc.data()[h..]);
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let m = ClassifierModel::new(small(EncoderKind::Cnn), 6, 0).unwrap();
        assert!(m.encode(&[&[4, 6]]).is_err());
    }

    #[test]
    fn parameter_count_cnn() {
        let m = ClassifierModel::new(small(EncoderKind::Cnn), 10, 0).unwrap();
        let d = 3;
        let f = 2;
        let conv: usize = [3, 4, 5].iter().map(|w| w * d * f + f).sum();
        let expected = 10 * d + conv + (6 * 4 + 4) + (4 * 2 + 2);
        assert_eq!(m.num_parameters(), expected);
    }
}
