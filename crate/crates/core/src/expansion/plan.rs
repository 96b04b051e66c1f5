use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::MappingFn;
use crate::numerics::SeededRng;
use crate::transformer::{LayerTensor, ModelConfig, ParamSet};
use crate::{Error, Result};

/// How the target model is initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Function-preserving initialization.
    Fpi,
    /// Advanced knowledge initialization (current + upper layer).
    Aki,
    /// Source weights in the top-left corner, the rest random.
    DirectCopy,
    /// Random initialization, source ignored.
    Rand,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Fpi => "fpi",
            Strategy::Aki => "aki",
            Strategy::DirectCopy => "directcopy",
            Strategy::Rand => "scratch",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fpi" => Ok(Strategy::Fpi),
            "aki" => Ok(Strategy::Aki),
            "directcopy" | "direct-copy" | "direct_copy" => Ok(Strategy::DirectCopy),
            "rand" | "random" | "scratch" => Ok(Strategy::Rand),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

/// How tail entries of the mappings are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Sampling {
    /// Uniform with replacement.
    #[default]
    Random,
    /// Round-robin; doubling a dimension duplicates every index exactly once.
    Cyclic,
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Sampling::Random),
            "cyclic" | "uniform" => Ok(Sampling::Cyclic),
            other => Err(Error::InvalidConfig(format!("unknown mapping sampling {other:?}"))),
        }
    }
}

/// A trained source model and the shape it should grow into.
#[derive(Clone, Copy, Debug)]
pub struct SourceTargetPair<'a> {
    pub source: &'a ModelConfig,
    pub params: &'a ParamSet,
    pub target: &'a ModelConfig,
}

impl<'a> SourceTargetPair<'a> {
    pub fn new(source: &'a ModelConfig, params: &'a ParamSet, target: &'a ModelConfig) -> Result<Self> {
        let pair = Self { source, params, target };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        let (s, t) = (self.source, self.target);
        s.validate()?;
        t.validate()?;
        self.params.validate(s)?;
        let geom = |msg: String| Err(Error::IncompatibleGeometry(msg));
        if s.variant != t.variant {
            return geom(format!("variant {} -> {}", s.variant.as_str(), t.variant.as_str()));
        }
        if s.vocab != t.vocab {
            return Err(Error::VocabMismatch(s.vocab, t.vocab));
        }
        if s.max_seq != t.max_seq {
            return geom(format!("max_seq {} -> {}", s.max_seq, t.max_seq));
        }
        if s.layers > t.layers {
            return geom(format!("layers shrink {} -> {}", s.layers, t.layers));
        }
        if s.hidden > t.hidden {
            return geom(format!("hidden shrinks {} -> {}", s.hidden, t.hidden));
        }
        if s.ffn_dim > t.ffn_dim {
            return geom(format!("ffn shrinks {} -> {}", s.ffn_dim, t.ffn_dim));
        }
        Ok(())
    }

    /// Target config at source depth (the width-expanded intermediate).
    pub fn widened_config(&self) -> ModelConfig {
        self.target.with_layers(self.source.layers)
    }
}

/// Out-mappings used to sample appended columns from the upper layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpperMapping {
    /// Over heads, `a^t` entries into `0..a^s`.
    pub heads: MappingFn,
    /// Over FFN inner units.
    pub ffn: MappingFn,
}

/// Coordinated mapping functions for one whole-model width expansion.
///
/// A single hidden mapping serves the embedding out-dimension, every
/// `W^{Q|K|V}` and `W^1` in-dimension, every `W^O` and `W^2`
/// out-dimension, the LayerNorms and the head in-dimension. It is the head
/// mapping lifted to coordinates, so per-head blocks stay aligned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpansionPlan {
    pub strategy: Strategy,
    pub seed: u64,
    pub head_dim: usize,
    pub heads: MappingFn,
    pub hidden: MappingFn,
    pub head_coords: MappingFn,
    pub ffn: MappingFn,
    /// AKI only: entry `l` is used for source layer `l`'s appended columns,
    /// drawn independently per layer. Empty for other strategies; the top
    /// layer has no entry and is expanded with FPI.
    pub upper: Vec<UpperMapping>,
}

/// One end of a producer/consumer edge in the forward graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Port {
    EmbeddingOut,
    In(LayerTensor),
    Out(LayerTensor),
    LayerNorm,
    HeadIn,
}

impl ExpansionPlan {
    /// (in, out) mappings for a layer matrix under FPI.
    pub fn matrix_mappings(&self, t: LayerTensor) -> Option<(&MappingFn, &MappingFn)> {
        match t {
            LayerTensor::Wq | LayerTensor::Wk | LayerTensor::Wv => Some((&self.hidden, &self.head_coords)),
            LayerTensor::Wo => Some((&self.head_coords, &self.hidden)),
            LayerTensor::W1 => Some((&self.hidden, &self.ffn)),
            LayerTensor::W2 => Some((&self.ffn, &self.hidden)),
            _ => None,
        }
    }

    /// Out-mapping for a bias or LayerNorm vector.
    pub fn vector_mapping(&self, t: LayerTensor) -> &MappingFn {
        match t {
            LayerTensor::Bq | LayerTensor::Bk | LayerTensor::Bv => &self.head_coords,
            LayerTensor::B1 => &self.ffn,
            _ => &self.hidden,
        }
    }

    fn port(&self, p: Port) -> &MappingFn {
        match p {
            Port::EmbeddingOut | Port::LayerNorm | Port::HeadIn => &self.hidden,
            Port::In(t) => self.matrix_mappings(t).expect("matrix").0,
            Port::Out(t) => self.matrix_mappings(t).expect("matrix").1,
        }
    }

    /// Producer/consumer pairs whose mappings must agree.
    pub fn constraint_edges() -> Vec<(Port, Port)> {
        use LayerTensor::*;
        use Port::*;
        alloc::vec![
            (EmbeddingOut, In(Wq)),
            (EmbeddingOut, In(Wk)),
            (EmbeddingOut, In(Wv)),
            (Out(Wq), In(Wo)),
            (Out(Wk), In(Wo)),
            (Out(Wv), In(Wo)),
            (Out(Wo), In(Wq)),
            (Out(Wo), In(W1)),
            (Out(Wo), LayerNorm),
            (Out(W1), In(W2)),
            (Out(W2), In(W1)),
            (Out(W2), LayerNorm),
            (Out(W2), In(Wq)),
            (Out(W2), HeadIn),
        ]
    }

    /// Checks every edge of [`constraint_edges`](Self::constraint_edges).
    pub fn check_constraints(&self) -> Result<()> {
        for (a, b) in Self::constraint_edges() {
            if self.port(a) != self.port(b) {
                return Err(Error::InvalidMapping(format!("constraint {a:?} = {b:?} violated")));
            }
        }
        if self.head_coords != self.heads.lift(self.head_dim) {
            return Err(Error::InvalidMapping("head coordinates not aligned with head mapping".into()));
        }
        Ok(())
    }
}

/// Builds the mappings for expanding `pair` with `strategy`.
///
/// Head dimension must match; width grows by adding heads.
pub fn build_plan(pair: &SourceTargetPair<'_>, strategy: Strategy, sampling: Sampling, seed: u64) -> Result<ExpansionPlan> {
    pair.validate()?;
    let (s, t) = (pair.source, pair.target);
    if s.head_dim != t.head_dim {
        return Err(Error::IncompatibleGeometry(format!(
            "head dimension must stay fixed ({} -> {})",
            s.head_dim, t.head_dim
        )));
    }
    if s.heads > t.heads {
        return Err(Error::IncompatibleGeometry(format!("heads shrink {} -> {}", s.heads, t.heads)));
    }
    if strategy == Strategy::Aki && s.layers < 2 {
        return Err(Error::NoUpperLayer);
    }
    let root = SeededRng::new(seed);
    let draw = |src: usize, tgt: usize, stream: u64| -> Result<MappingFn> {
        match sampling {
            Sampling::Random => MappingFn::sample(src, tgt, &mut root.derive(stream)),
            Sampling::Cyclic => MappingFn::cyclic(src, tgt),
        }
    };
    let heads = draw(s.heads, t.heads, 1)?;
    let ffn = draw(s.ffn_dim, t.ffn_dim, 2)?;
    let head_coords = heads.lift(s.head_dim);
    let upper = if strategy == Strategy::Aki {
        (0..s.layers - 1)
            .map(|l| {
                let stream = 0x100 + l as u64;
                Ok(UpperMapping {
                    heads: match sampling {
                        Sampling::Random => MappingFn::sample(s.heads, t.heads, &mut root.derive(stream))?,
                        Sampling::Cyclic => MappingFn::cyclic(s.heads, t.heads)?,
                    },
                    ffn: match sampling {
                        Sampling::Random => MappingFn::sample(s.ffn_dim, t.ffn_dim, &mut root.derive(stream ^ 0x8000))?,
                        Sampling::Cyclic => MappingFn::cyclic(s.ffn_dim, t.ffn_dim)?,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let plan = ExpansionPlan {
        strategy,
        seed,
        head_dim: s.head_dim,
        hidden: head_coords.clone(),
        head_coords,
        heads,
        ffn,
        upper,
    };
    plan.check_constraints()?;
    Ok(plan)
}
