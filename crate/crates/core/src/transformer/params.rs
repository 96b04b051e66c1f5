use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::ModelConfig;
use crate::numerics::{Matrix, SeededRng};
use crate::{Error, Result};

/// Standard deviation of the truncated-normal initializer.
pub const INIT_STD: f32 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams {
    pub gain: Vec<f32>,
    pub bias: Vec<f32>,
}

impl LayerNormParams {
    pub fn unit(dim: usize) -> Self {
        Self {
            gain: vec![1.0; dim],
            bias: vec![0.0; dim],
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            gain: vec![0.0; dim],
            bias: vec![0.0; dim],
        }
    }
}

/// One transformer layer. `wq`/`wk`/`wv` are `D × D` with head `i` owning
/// columns `i*d_k .. (i+1)*d_k`; `wo` is `D × D` with head `i` owning the
/// matching rows, so the per-head output projections are row blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub wq: Matrix,
    pub bq: Vec<f32>,
    pub wk: Matrix,
    pub bk: Vec<f32>,
    pub wv: Matrix,
    pub bv: Vec<f32>,
    pub wo: Matrix,
    pub bo: Vec<f32>,
    pub ln1: LayerNormParams,
    pub w1: Matrix,
    pub b1: Vec<f32>,
    pub w2: Matrix,
    pub b2: Vec<f32>,
    pub ln2: LayerNormParams,
}

impl LayerParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.hidden;
        let f = config.ffn_dim;
        Self {
            wq: Matrix::zeros(d, d),
            bq: vec![0.0; d],
            wk: Matrix::zeros(d, d),
            bk: vec![0.0; d],
            wv: Matrix::zeros(d, d),
            bv: vec![0.0; d],
            wo: Matrix::zeros(d, d),
            bo: vec![0.0; d],
            ln1: LayerNormParams::zeros(d),
            w1: Matrix::zeros(d, f),
            b1: vec![0.0; f],
            w2: Matrix::zeros(f, d),
            b2: vec![0.0; d],
            ln2: LayerNormParams::zeros(d),
        }
    }

    pub fn tensor(&self, t: LayerTensor) -> &[f32] {
        match t {
            LayerTensor::Wq => self.wq.as_slice(),
            LayerTensor::Bq => &self.bq,
            LayerTensor::Wk => self.wk.as_slice(),
            LayerTensor::Bk => &self.bk,
            LayerTensor::Wv => self.wv.as_slice(),
            LayerTensor::Bv => &self.bv,
            LayerTensor::Wo => self.wo.as_slice(),
            LayerTensor::Bo => &self.bo,
            LayerTensor::Ln1Gain => &self.ln1.gain,
            LayerTensor::Ln1Bias => &self.ln1.bias,
            LayerTensor::W1 => self.w1.as_slice(),
            LayerTensor::B1 => &self.b1,
            LayerTensor::W2 => self.w2.as_slice(),
            LayerTensor::B2 => &self.b2,
            LayerTensor::Ln2Gain => &self.ln2.gain,
            LayerTensor::Ln2Bias => &self.ln2.bias,
        }
    }

    pub fn tensor_mut(&mut self, t: LayerTensor) -> &mut [f32] {
        match t {
            LayerTensor::Wq => self.wq.as_mut_slice(),
            LayerTensor::Bq => &mut self.bq,
            LayerTensor::Wk => self.wk.as_mut_slice(),
            LayerTensor::Bk => &mut self.bk,
            LayerTensor::Wv => self.wv.as_mut_slice(),
            LayerTensor::Bv => &mut self.bv,
            LayerTensor::Wo => self.wo.as_mut_slice(),
            LayerTensor::Bo => &mut self.bo,
            LayerTensor::Ln1Gain => &mut self.ln1.gain,
            LayerTensor::Ln1Bias => &mut self.ln1.bias,
            LayerTensor::W1 => self.w1.as_mut_slice(),
            LayerTensor::B1 => &mut self.b1,
            LayerTensor::W2 => self.w2.as_mut_slice(),
            LayerTensor::B2 => &mut self.b2,
            LayerTensor::Ln2Gain => &mut self.ln2.gain,
            LayerTensor::Ln2Bias => &mut self.ln2.bias,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LayerTensor {
    Wq,
    Bq,
    Wk,
    Bk,
    Wv,
    Bv,
    Wo,
    Bo,
    Ln1Gain,
    Ln1Bias,
    W1,
    B1,
    W2,
    B2,
    Ln2Gain,
    Ln2Bias,
}

impl LayerTensor {
    pub const ALL: [LayerTensor; 16] = [
        LayerTensor::Wq,
        LayerTensor::Bq,
        LayerTensor::Wk,
        LayerTensor::Bk,
        LayerTensor::Wv,
        LayerTensor::Bv,
        LayerTensor::Wo,
        LayerTensor::Bo,
        LayerTensor::Ln1Gain,
        LayerTensor::Ln1Bias,
        LayerTensor::W1,
        LayerTensor::B1,
        LayerTensor::W2,
        LayerTensor::B2,
        LayerTensor::Ln2Gain,
        LayerTensor::Ln2Bias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerTensor::Wq => "wq",
            LayerTensor::Bq => "bq",
            LayerTensor::Wk => "wk",
            LayerTensor::Bk => "bk",
            LayerTensor::Wv => "wv",
            LayerTensor::Bv => "bv",
            LayerTensor::Wo => "wo",
            LayerTensor::Bo => "bo",
            LayerTensor::Ln1Gain => "ln1.gain",
            LayerTensor::Ln1Bias => "ln1.bias",
            LayerTensor::W1 => "w1",
            LayerTensor::B1 => "b1",
            LayerTensor::W2 => "w2",
            LayerTensor::B2 => "b2",
            LayerTensor::Ln2Gain => "ln2.gain",
            LayerTensor::Ln2Bias => "ln2.bias",
        }
    }

    fn shape(self, c: &ModelConfig) -> Vec<usize> {
        let d = c.hidden;
        match self {
            LayerTensor::Wq | LayerTensor::Wk | LayerTensor::Wv | LayerTensor::Wo => vec![d, d],
            LayerTensor::W1 => vec![d, c.ffn_dim],
            LayerTensor::W2 => vec![c.ffn_dim, d],
            LayerTensor::B1 => vec![c.ffn_dim],
            _ => vec![d],
        }
    }
}

/// Names one tensor of a [`ParamSet`]. Layer indices are zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TensorId {
    TokEmb,
    PosEmb,
    NormGain,
    NormBias,
    Layer(usize, LayerTensor),
    HeadWeight,
    HeadBias,
}

impl TensorId {
    /// Canonical order: embeddings, norm, layers bottom-up, head.
    pub fn all(layers: usize) -> Vec<TensorId> {
        let mut ids = vec![TensorId::TokEmb, TensorId::PosEmb, TensorId::NormGain, TensorId::NormBias];
        for l in 0..layers {
            ids.extend(LayerTensor::ALL.iter().map(|&t| TensorId::Layer(l, t)));
        }
        ids.push(TensorId::HeadWeight);
        ids.push(TensorId::HeadBias);
        ids
    }

    pub fn shape(self, c: &ModelConfig) -> Vec<usize> {
        match self {
            TensorId::TokEmb => vec![c.vocab, c.hidden],
            TensorId::PosEmb => vec![c.max_seq, c.hidden],
            TensorId::NormGain | TensorId::NormBias => vec![c.hidden],
            TensorId::Layer(_, t) => t.shape(c),
            TensorId::HeadWeight => vec![c.hidden, c.vocab],
            TensorId::HeadBias => vec![c.vocab],
        }
    }

    pub fn is_matrix(self) -> bool {
        matches!(
            self,
            TensorId::TokEmb
                | TensorId::PosEmb
                | TensorId::HeadWeight
                | TensorId::Layer(
                    _,
                    LayerTensor::Wq | LayerTensor::Wk | LayerTensor::Wv | LayerTensor::Wo | LayerTensor::W1 | LayerTensor::W2
                )
        )
    }
}

impl fmt::Display for TensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorId::TokEmb => f.write_str("tok_emb"),
            TensorId::PosEmb => f.write_str("pos_emb"),
            TensorId::NormGain => f.write_str("norm.gain"),
            TensorId::NormBias => f.write_str("norm.bias"),
            TensorId::Layer(l, t) => write!(f, "layers.{l}.{}", t.name()),
            TensorId::HeadWeight => f.write_str("head.weight"),
            TensorId::HeadBias => f.write_str("head.bias"),
        }
    }
}

impl FromStr for TensorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown tensor name {s:?}"));
        Ok(match s {
            "tok_emb" => TensorId::TokEmb,
            "pos_emb" => TensorId::PosEmb,
            "norm.gain" => TensorId::NormGain,
            "norm.bias" => TensorId::NormBias,
            "head.weight" => TensorId::HeadWeight,
            "head.bias" => TensorId::HeadBias,
            _ => {
                let rest = s.strip_prefix("layers.").ok_or_else(bad)?;
                let (idx, name) = rest.split_once('.').ok_or_else(bad)?;
                let l: usize = idx.parse().map_err(|_| bad())?;
                let t = LayerTensor::ALL
                    .iter()
                    .copied()
                    .find(|t| t.name() == name)
                    .ok_or_else(bad)?;
                TensorId::Layer(l, t)
            }
        })
    }
}

/// All weights of one model.
///
/// `norm` is the embedding LayerNorm for the post-LN encoder and the final
/// LayerNorm (before the head) for the pre-LN decoder. The output head is a
/// separate `D × vocab` matrix, not tied to the token embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    pub tok_emb: Matrix,
    pub pos_emb: Matrix,
    pub norm: LayerNormParams,
    pub layers: Vec<LayerParams>,
    pub head: Matrix,
    pub head_bias: Vec<f32>,
}

impl ParamSet {
    /// All-zero tensors shaped by `config` (gradient buffers).
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            tok_emb: Matrix::zeros(config.vocab, config.hidden),
            pos_emb: Matrix::zeros(config.max_seq, config.hidden),
            norm: LayerNormParams::zeros(config.hidden),
            layers: (0..config.layers).map(|_| LayerParams::zeros(config)).collect(),
            head: Matrix::zeros(config.hidden, config.vocab),
            head_bias: vec![0.0; config.vocab],
        }
    }

    /// Truncated normal (σ = 0.02) weights, zero biases, unit gains.
    pub fn random(config: &ModelConfig, rng: &mut SeededRng) -> Self {
        let mut p = Self::zeros(config);
        for id in TensorId::all(config.layers) {
            if id.is_matrix() {
                for v in p.get_mut(id) {
                    *v = rng.truncated_normal(INIT_STD);
                }
            }
        }
        p.norm.gain.fill(1.0);
        for layer in &mut p.layers {
            layer.ln1.gain.fill(1.0);
            layer.ln2.gain.fill(1.0);
        }
        p
    }

    pub fn get(&self, id: TensorId) -> &[f32] {
        match id {
            TensorId::TokEmb => self.tok_emb.as_slice(),
            TensorId::PosEmb => self.pos_emb.as_slice(),
            TensorId::NormGain => &self.norm.gain,
            TensorId::NormBias => &self.norm.bias,
            TensorId::Layer(l, t) => self.layers[l].tensor(t),
            TensorId::HeadWeight => self.head.as_slice(),
            TensorId::HeadBias => &self.head_bias,
        }
    }

    pub fn get_mut(&mut self, id: TensorId) -> &mut [f32] {
        match id {
            TensorId::TokEmb => self.tok_emb.as_mut_slice(),
            TensorId::PosEmb => self.pos_emb.as_mut_slice(),
            TensorId::NormGain => &mut self.norm.gain,
            TensorId::NormBias => &mut self.norm.bias,
            TensorId::Layer(l, t) => self.layers[l].tensor_mut(t),
            TensorId::HeadWeight => self.head.as_mut_slice(),
            TensorId::HeadBias => &mut self.head_bias,
        }
    }

    pub fn ids(&self) -> Vec<TensorId> {
        TensorId::all(self.layers.len())
    }

    /// Checks every tensor against the shape `config` dictates and that all
    /// entries are finite.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        config.validate()?;
        if self.layers.len() != config.layers {
            return Err(Error::InvalidConfig(format!(
                "params have {} layers, config {}",
                self.layers.len(),
                config.layers
            )));
        }
        let check_m = |name: &str, m: &Matrix, r: usize, c: usize| -> Result<()> {
            if m.shape() != (r, c) {
                return Err(Error::InvalidConfig(format!(
                    "{name}: shape {:?}, expected {:?}",
                    m.shape(),
                    (r, c)
                )));
            }
            Ok(())
        };
        let d = config.hidden;
        check_m("tok_emb", &self.tok_emb, config.vocab, d)?;
        check_m("pos_emb", &self.pos_emb, config.max_seq, d)?;
        check_m("head.weight", &self.head, d, config.vocab)?;
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, m, r, c) in [
                ("wq", &layer.wq, d, d),
                ("wk", &layer.wk, d, d),
                ("wv", &layer.wv, d, d),
                ("wo", &layer.wo, d, d),
                ("w1", &layer.w1, d, config.ffn_dim),
                ("w2", &layer.w2, config.ffn_dim, d),
            ] {
                check_m(&format!("layers.{l}.{name}"), m, r, c)?;
            }
        }
        for id in self.ids() {
            let want: usize = id.shape(config).iter().product();
            let t = self.get(id);
            if t.len() != want {
                return Err(Error::InvalidConfig(format!("{id}: length {}, expected {want}", t.len())));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{id}: non-finite entry")));
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f32) {
        for id in self.ids() {
            self.get_mut(id).iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += other`, tensor by tensor in canonical order.
    pub fn add_assign(&mut self, other: &ParamSet) {
        for id in self.ids() {
            for (a, b) in self.get_mut(id).iter_mut().zip(other.get(id)) {
                *a += b;
            }
        }
    }

    /// Largest absolute difference over every tensor. Shapes must agree.
    pub fn max_abs_diff(&self, other: &ParamSet) -> f32 {
        self.ids()
            .into_iter()
            .flat_map(|id| {
                self.get(id)
                    .iter()
                    .zip(other.get(id))
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f32::max)
    }

    /// Ids whose tensors differ bitwise between `self` and `other`.
    pub fn changed_tensors(&self, other: &ParamSet) -> Vec<TensorId> {
        self.ids()
            .into_iter()
            .filter(|&id| {
                let a = self.get(id);
                let b = other.get(id);
                a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.to_bits() != y.to_bits())
            })
            .collect()
    }
}

/// Tensors that receive zero gradient and are skipped by the optimizer.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FreezeSet {
    frozen: BTreeSet<TensorId>,
}

impl FreezeSet {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_ids(ids: impl IntoIterator<Item = TensorId>) -> Self {
        Self {
            frozen: ids.into_iter().collect(),
        }
    }

    /// Everything frozen except layers `sub_depth - top .. sub_depth` and the
    /// output head (weight and bias).
    pub fn train_top_layers(total_layers: usize, sub_depth: usize, top: usize) -> Self {
        let lo = sub_depth.saturating_sub(top);
        Self::from_ids(TensorId::all(total_layers).into_iter().filter(|id| match id {
            TensorId::Layer(l, _) => !(lo..sub_depth).contains(l),
            TensorId::HeadWeight | TensorId::HeadBias => false,
            _ => true,
        }))
    }

    pub fn freeze(&mut self, id: TensorId) {
        self.frozen.insert(id);
    }

    #[inline]
    pub fn is_frozen(&self, id: TensorId) -> bool {
        self.frozen.contains(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TensorId> {
        self.frozen.iter()
    }

    pub fn describe(&self) -> String {
        let mut s = String::new();
        for id in &self.frozen {
            if !s.is_empty() {
                s.push(',');
            }
            s.push_str(&format!("{id}"));
        }
        s
    }
}
