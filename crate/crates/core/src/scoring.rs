//! Bi-encoder scorer: `score(q, d) = enc_q(q) · enc_d(d)`.
//!
//! Each encoder is an MLP with tanh hidden layers and a linear output layer.
//! All weights live in one flat vector so optimizers and gradient estimators
//! can treat the model as a point in `R^P`. The flat layout is: query encoder
//! layers in order, then document encoder layers (absent when tied); within a
//! layer, the weight matrix row-major (one row per output unit) followed by
//! the bias vector.

use std::fmt::Write as _;
use std::fs;
use std::ops::Deref;
use std::path::Path;

use rand::Rng;

use crate::rng;
use crate::{ensure, Error, Result};

/// Fixed-width vector of finite reals.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        ensure!(
            values.iter().all(|v| v.is_finite()),
            "feature vector contains a non-finite value"
        );
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Shape of the bi-encoder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    /// Query and document share one encoder.
    pub tied: bool,
}

impl Architecture {
    pub fn linear(input_dim: usize, embed_dim: usize) -> Self {
        Architecture {
            input_dim,
            hidden: Vec::new(),
            embed_dim,
            tied: false,
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.embed_dim);
        w
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.input_dim > 0, "input dimension must be positive");
        ensure!(self.embed_dim > 0, "embedding dimension must be positive");
        ensure!(
            self.hidden.iter().all(|&h| h > 0),
            "hidden layer widths must be positive"
        );
        Ok(())
    }

    fn num_encoders(&self) -> usize {
        if self.tied {
            1
        } else {
            2
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LayerSpan {
    offset: usize,
    inputs: usize,
    outputs: usize,
}

impl LayerSpan {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }
    fn bias(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }
    fn len(&self) -> usize {
        (self.inputs + 1) * self.outputs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Query,
    Doc,
}

/// All trainable weights of the bi-encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerParams {
    arch: Architecture,
    values: Vec<f64>,
    // one span list per stored encoder
    spans: Vec<Vec<LayerSpan>>,
}

impl ScorerParams {
    /// All-zero weights.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let widths = arch.widths();
        let mut spans = Vec::new();
        let mut offset = 0;
        for _ in 0..arch.num_encoders() {
            let mut enc = Vec::new();
            for w in widths.windows(2) {
                let span = LayerSpan {
                    offset,
                    inputs: w[0],
                    outputs: w[1],
                };
                offset += span.len();
                enc.push(span);
            }
            spans.push(enc);
        }
        Ok(ScorerParams {
            arch,
            values: vec![0.0; offset],
            spans,
        })
    }

    /// Uniform `[-a, a]` weights with `a = sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        let mut rng = rng::seeded(seed);
        for enc in &params.spans {
            for span in enc {
                let a = (6.0 / (span.inputs + span.outputs) as f64).sqrt();
                for w in &mut params.values[span.weights()] {
                    *w = rng.random_range(-a..=a);
                }
            }
        }
        Ok(params)
    }

    /// Single affine layer per encoder with identity weights.
    pub fn identity(dim: usize) -> Result<Self> {
        let mut params = Self::zeros(Architecture::linear(dim, dim))?;
        for e in 0..params.spans.len() {
            let span = params.spans[e][0];
            for i in 0..dim {
                params.values[span.offset + i * dim + i] = 1.0;
            }
        }
        Ok(params)
    }

    /// Wraps an existing flat vector.
    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        ensure!(
            values.len() == params.values.len(),
            "expected {} parameters, got {}",
            params.values.len(),
            values.len()
        );
        ensure!(values.iter().all(|v| v.is_finite()), "non-finite parameter");
        params.values = values;
        Ok(params)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn encoder(&self, side: Side) -> &[LayerSpan] {
        match side {
            Side::Query => &self.spans[0],
            Side::Doc => self.spans.last().unwrap(),
        }
    }

    /// Forward pass of one encoder keeping every layer's output.
    fn trace(&self, side: Side, input: &[f64]) -> Result<Trace> {
        let enc = self.encoder(side);
        ensure!(
            input.len() == self.arch.input_dim,
            "input has dimension {} but encoder expects {}",
            input.len(),
            self.arch.input_dim
        );
        let mut acts = Vec::with_capacity(enc.len() + 1);
        acts.push(input.to_vec());
        for (l, span) in enc.iter().enumerate() {
            let x = acts.last().unwrap();
            let w = &self.values[span.weights()];
            let b = &self.values[span.bias()];
            let hidden = l + 1 < enc.len();
            let y: Vec<f64> = (0..span.outputs)
                .map(|o| {
                    let row = &w[o * span.inputs..(o + 1) * span.inputs];
                    let pre = dot(row, x) + b[o];
                    if hidden {
                        pre.tanh()
                    } else {
                        pre
                    }
                })
                .collect();
            acts.push(y);
        }
        Ok(Trace { acts })
    }

    /// Accumulates `upstream`-weighted gradient of the encoder output into `grad`.
    fn backward(&self, side: Side, trace: &Trace, upstream: &[f64], grad: &mut [f64]) {
        let enc = self.encoder(side);
        let mut delta = upstream.to_vec();
        for l in (0..enc.len()).rev() {
            let span = enc[l];
            let input = &trace.acts[l];
            if l + 1 < enc.len() {
                // tanh'(pre) = 1 - out^2
                for (d, y) in delta.iter_mut().zip(&trace.acts[l + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            {
                let gw = &mut grad[span.weights()];
                for o in 0..span.outputs {
                    if delta[o] == 0.0 {
                        continue;
                    }
                    let row = &mut gw[o * span.inputs..(o + 1) * span.inputs];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += delta[o] * x;
                    }
                }
            }
            for (g, d) in grad[span.bias()].iter_mut().zip(&delta) {
                *g += d;
            }
            if l > 0 {
                let w = &self.values[span.weights()];
                let mut next = vec![0.0; span.inputs];
                for o in 0..span.outputs {
                    if delta[o] == 0.0 {
                        continue;
                    }
                    let row = &w[o * span.inputs..(o + 1) * span.inputs];
                    for (n, wv) in next.iter_mut().zip(row) {
                        *n += delta[o] * wv;
                    }
                }
                delta = next;
            }
        }
    }

    pub fn encode_query(&self, q: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(Side::Query, q)?.output().to_vec())
    }

    pub fn encode_doc(&self, d: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(Side::Doc, d)?.output().to_vec())
    }

    pub fn score(&self, q: &[f64], d: &[f64]) -> Result<f64> {
        Ok(dot(&self.encode_query(q)?, &self.encode_doc(d)?))
    }

    pub fn score_with_gradient(&self, q: &[f64], d: &[f64]) -> Result<ScoreGradient> {
        let fwd = self.forward_candidates(q, std::slice::from_ref(&d))?;
        let grad = fwd.backward(self, &[1.0])?;
        Ok(ScoreGradient {
            score: fwd.scores[0],
            grad,
        })
    }

    /// Batch document embeddings for reuse across queries.
    pub fn cache_doc_embeddings<D: AsRef<[f64]>>(&self, docs: &[D]) -> Result<EmbeddingTable> {
        let rows = docs
            .iter()
            .map(|d| self.encode_doc(d.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(EmbeddingTable { rows })
    }

    /// Forward pass for one query and its candidate documents, retaining the
    /// activations needed for [`CandidateForward::backward`].
    pub fn forward_candidates<D: AsRef<[f64]>>(
        &self,
        q: &[f64],
        docs: &[D],
    ) -> Result<CandidateForward> {
        let query = self.trace(Side::Query, q)?;
        let docs = docs
            .iter()
            .map(|d| self.trace(Side::Doc, d.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let qe = query.output();
        let scores = docs.iter().map(|t| dot(qe, t.output())).collect();
        Ok(CandidateForward {
            query,
            docs,
            scores,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_str(&text, path)
    }

    /// Text checkpoint: a header of `key value` lines followed by one
    /// parameter per line in flat-layout order, printed in shortest
    /// round-trip form.
    pub fn to_checkpoint_string(&self) -> String {
        let mut s = String::new();
        let hidden = if self.arch.hidden.is_empty() {
            "-".to_string()
        } else {
            self.arch
                .hidden
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(s, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
        let _ = writeln!(s, "input_dim {}", self.arch.input_dim);
        let _ = writeln!(s, "hidden {hidden}");
        let _ = writeln!(s, "embed_dim {}", self.arch.embed_dim);
        let _ = writeln!(s, "tied {}", u8::from(self.arch.tied));
        let _ = writeln!(s, "values {}", self.values.len());
        for v in &self.values {
            let _ = writeln!(s, "{v:e}");
        }
        s
    }

    pub fn from_checkpoint_str(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, format!("missing `{key}` line")))?;
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| Error::parse(path, no, format!("expected `{key} <value>`")))?;
            if k != key {
                return Err(Error::parse(
                    path,
                    no,
                    format!("expected `{key}`, found `{k}`"),
                ));
            }
            Ok((no, v.trim().to_string()))
        };
        let (no, version) = header(CHECKPOINT_MAGIC)?;
        if version != CHECKPOINT_VERSION.to_string() {
            return Err(Error::parse(
                path,
                no,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let num = |no: usize, v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::parse(path, no, format!("bad integer {v:?}")))
        };
        let (no, v) = header("input_dim")?;
        let input_dim = num(no, &v)?;
        let (no, v) = header("hidden")?;
        let hidden = if v == "-" {
            Vec::new()
        } else {
            v.split(',').map(|h| num(no, h)).collect::<Result<_>>()?
        };
        let (no, v) = header("embed_dim")?;
        let embed_dim = num(no, &v)?;
        let (no, v) = header("tied")?;
        let tied = match v.as_str() {
            "0" => false,
            "1" => true,
            _ => return Err(Error::parse(path, no, "tied must be 0 or 1")),
        };
        let (no, v) = header("values")?;
        let count = num(no, &v)?;
        let arch = Architecture {
            input_dim,
            hidden,
            embed_dim,
            tied,
        };
        let mut values = Vec::with_capacity(count);
        for (no, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::parse(path, no, format!("bad parameter {line:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, no, "non-finite parameter"));
            }
            values.push(v);
        }
        if values.len() != count {
            return Err(Error::parse(
                path,
                0,
                format!("header declares {count} values, found {}", values.len()),
            ));
        }
        Self::from_values(arch, values)
    }
}

const CHECKPOINT_MAGIC: &str = "pgrank-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

/// Score and its gradient with respect to every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreGradient {
    pub score: f64,
    pub grad: Vec<f64>,
}

/// Cached forward pass over one query's candidates.
#[derive(Clone, Debug)]
pub struct CandidateForward {
    query: Trace,
    docs: Vec<Trace>,
    pub scores: Vec<f64>,
}

impl CandidateForward {
    /// Gradient of `Σ_d coeffs[d] · score_d` with respect to the parameters.
    ///
    /// Policy gradients are linear in the per-document score gradients, so a
    /// whole estimator reduces to one call with the right coefficients.
    pub fn backward(&self, params: &ScorerParams, coeffs: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            coeffs.len() == self.docs.len(),
            "{} coefficients for {} documents",
            coeffs.len(),
            self.docs.len()
        );
        let mut grad = vec![0.0; params.num_params()];
        let qe = self.query.output();
        let mut upstream_q = vec![0.0; qe.len()];
        for (doc, &c) in self.docs.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            for (u, e) in upstream_q.iter_mut().zip(doc.output()) {
                *u += c * e;
            }
            let upstream_d: Vec<f64> = qe.iter().map(|e| c * e).collect();
            params.backward(Side::Doc, doc, &upstream_d, &mut grad);
        }
        params.backward(Side::Query, &self.query, &upstream_q, &mut grad);
        Ok(grad)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Precomputed document embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    rows: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Scores every cached document against a query embedding.
    pub fn scores(&self, query_embedding: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| dot(query_embedding, r)).collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mlp() -> Architecture {
        Architecture {
            input_dim: 3,
            hidden: vec![4],
            embed_dim: 2,
            tied: false,
        }
    }

    #[test]
    fn identity_encoder_is_identity() {
        let p = ScorerParams::identity(3).unwrap();
        assert_eq!(
            p.encode_query(&[1.0, -2.0, 0.5]).unwrap(),
            vec![1.0, -2.0, 0.5]
        );
        assert_eq!(p.encode_doc(&[0.0, 3.0, 1.0]).unwrap(), vec![0.0, 3.0, 1.0]);
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let p = ScorerParams::zeros(mlp()).unwrap();
        assert_eq!(p.encode_query(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn two_layer_forward_matches_hand_computation() {
        let arch = Architecture {
            input_dim: 3,
            hidden: vec![2],
            embed_dim: 2,
            tied: true,
        };
        // W1 = [[1, 0, -1], [0.5, 0.5, 0]], b1 = [0.1, -0.2]
        // W2 = [[1, 2], [-1, 0.5]],         b2 = [0, 0.3]
        let values = vec![
            1.0, 0.0, -1.0, 0.5, 0.5, 0.0, 0.1, -0.2, 1.0, 2.0, -1.0, 0.5, 0.0, 0.3,
        ];
        let p = ScorerParams::from_values(arch, values).unwrap();
        let x = [0.2, -0.4, 0.6];
        let h0 = (0.2 - 0.6 + 0.1_f64).tanh();
        let h1 = (0.1 - 0.2 - 0.2_f64).tanh();
        let expect = [h0 + 2.0 * h1, -h0 + 0.5 * h1 + 0.3];
        let got = p.encode_query(&x).unwrap();
        assert_relative_eq!(got[0], expect[0], epsilon = 1e-15);
        assert_relative_eq!(got[1], expect[1], epsilon = 1e-15);
    }

    #[test]
    fn score_is_dot_of_embeddings() {
        let p = ScorerParams::identity(2).unwrap();
        assert_eq!(p.score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(p.score(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = ScorerParams::identity(2).unwrap();
        assert!(matches!(p.encode_query(&[1.0]), Err(Error::Contract(_))));
        assert!(p.score(&[1.0, 0.0], &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let p = ScorerParams::zeros(mlp()).unwrap();
        let g = p
            .score_with_gradient(&[1.0, 2.0, 3.0], &[-1.0, 0.5, 0.0])
            .unwrap();
        assert_eq!(g.score, 0.0);
        assert!(g.grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_gradient_has_closed_form() {
        // s = (A q + a) · (B d + b)
        // ds/dA = (B d + b) qᵀ, ds/da = B d + b, ds/dB = (A q + a) dᵀ, ds/db = A q + a
        let arch = Architecture::linear(2, 2);
        let p = ScorerParams::init(arch, 3).unwrap();
        let q = [0.7, -1.1];
        let d = [0.4, 0.9];
        let eq = p.encode_query(&q).unwrap();
        let ed = p.encode_doc(&d).unwrap();
        let mut expect = Vec::new();
        for e in &ed {
            expect.extend(q.iter().map(|x| e * x));
        }
        expect.extend_from_slice(&ed);
        for e in &eq {
            expect.extend(d.iter().map(|x| e * x));
        }
        expect.extend_from_slice(&eq);
        let g = p.score_with_gradient(&q, &d).unwrap();
        for (a, b) in g.grad.iter().zip(&expect) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn gradient_scalar_equals_score() {
        let p = ScorerParams::init(mlp(), 11).unwrap();
        let q = [0.1, 0.2, -0.3];
        let d = [1.0, -0.5, 0.25];
        assert_eq!(
            p.score_with_gradient(&q, &d).unwrap().score,
            p.score(&q, &d).unwrap()
        );
    }

    #[test]
    fn tied_encoders_share_weights() {
        let mut arch = mlp();
        arch.tied = true;
        let p = ScorerParams::init(arch, 5).unwrap();
        let x = [0.3, 0.1, -0.7];
        assert_eq!(p.encode_query(&x).unwrap(), p.encode_doc(&x).unwrap());
        let untied = ScorerParams::zeros(mlp()).unwrap();
        assert_eq!(untied.num_params(), 2 * p.num_params());
    }

    #[test]
    fn init_respects_glorot_bound_and_zero_bias() {
        let p = ScorerParams::init(mlp(), 1).unwrap();
        let a1 = (6.0f64 / 7.0).sqrt();
        let span = p.spans[0][0];
        assert!(p.values[span.weights()].iter().all(|w| w.abs() <= a1));
        assert!(p.values[span.bias()].iter().all(|&b| b == 0.0));
        assert_eq!(p, ScorerParams::init(mlp(), 1).unwrap());
        assert_ne!(p, ScorerParams::init(mlp(), 2).unwrap());
    }

    #[test]
    fn cached_embeddings_match_direct_scores_bitwise() {
        let p = ScorerParams::init(mlp(), 9).unwrap();
        let q = [0.5, -0.5, 1.5];
        let docs = vec![
            vec![0.1, 0.2, 0.3],
            vec![-1.0, 0.0, 2.0],
            vec![0.0, 0.0, 0.0],
        ];
        let table = p.cache_doc_embeddings(&docs).unwrap();
        let qe = p.encode_query(&q).unwrap();
        let cached = table.scores(&qe);
        for (d, s) in docs.iter().zip(&cached) {
            assert_eq!(p.score(&q, d).unwrap().to_bits(), s.to_bits());
        }
        let fwd = p.forward_candidates(&q, &docs).unwrap();
        assert_eq!(fwd.scores, cached);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut arch = mlp();
        arch.hidden = vec![5, 3];
        let p = ScorerParams::init(arch, 77).unwrap();
        let text = p.to_checkpoint_string();
        let back = ScorerParams::from_checkpoint_str(&text, Path::new("mem")).unwrap();
        assert_eq!(p, back);
        assert_eq!(back.to_checkpoint_string(), text);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let p = ScorerParams::identity(2).unwrap();
        let text = p.to_checkpoint_string();
        let bad_version = text.replacen("pgrank-checkpoint 1", "pgrank-checkpoint 9", 1);
        assert!(ScorerParams::from_checkpoint_str(&bad_version, Path::new("x")).is_err());
        let truncated: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
        assert!(ScorerParams::from_checkpoint_str(&truncated, Path::new("x")).is_err());
        let nan = text.replacen("1e0", "NaN", 1);
        assert!(ScorerParams::from_checkpoint_str(&nan, Path::new("x")).is_err());
    }
}
