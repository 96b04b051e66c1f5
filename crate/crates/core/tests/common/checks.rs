//! Measurements behind the growth properties. Each returns numbers rather
//! than asserting, so the same code backs both the unit-style tests and the
//! acceptance report.

use std::ops::ControlFlow;

use super::oracle::{bitwise_eq, brute_expn, brute_expn_upper, expand_rows, grid_of, lift, random_grid, random_map};
use super::reference::{central_difference, Params64};
use super::{lively_params, random_batch};
use growformer_core::expansion::{
    build_plan, expn, grow, stack_order, verify_on_batches, verify_preservation, MappingFn, PreservationReport,
    Sampling, SourceTargetPair, Strategy, VerifyOptions,
};
use growformer_core::training::{two_stage_train, Corpus, SerialBackend, SubModelFamily, TrainSchedule};
use growformer_core::transformer::{backward, Batch, FreezeSet, LayerParams, LayerTensor, ModelConfig, ParamSet, TensorId, Variant};
use growformer_core::{Matrix, SeededRng};

pub const MATRICES: [LayerTensor; 6] = [
    LayerTensor::Wq,
    LayerTensor::Wk,
    LayerTensor::Wv,
    LayerTensor::Wo,
    LayerTensor::W1,
    LayerTensor::W2,
];

/// Runs `n` random `(W, g_in, g_out)` triples with every dimension at most
/// 16 and returns how many differ bitwise from the brute-force evaluator.
pub fn expn_oracle_mismatches(n: usize, seed: u64) -> usize {
    let mut rng = SeededRng::new(seed);
    let mut bad = 0;
    for _ in 0..n {
        let rs = 1 + rng.sample_index(16).unwrap();
        let cs = 1 + rng.sample_index(16).unwrap();
        let rt = rs + rng.sample_index(17 - rs).unwrap();
        let ct = cs + rng.sample_index(17 - cs).unwrap();
        let w = random_grid(rs, cs, &mut rng);
        let g_in = random_map(rs, rt, &mut rng);
        let g_out = random_map(cs, ct, &mut rng);
        let m = Matrix::from_rows(&w);
        let got = expn(
            &m,
            &MappingFn::from_map(rs, g_in.clone()).unwrap(),
            &MappingFn::from_map(cs, g_out.clone()).unwrap(),
        )
        .unwrap();
        if !bitwise_eq(&grid_of(got.as_slice(), rt, ct), &brute_expn(&w, &g_in, &g_out)) {
            bad += 1;
        }
    }
    bad
}

/// Source configurations for the exact-preservation sweep: depth 1..=3,
/// width 32 or 64 with four heads.
pub fn sweep_config(variant: Variant, i: usize) -> ModelConfig {
    let layers = 1 + i % 3;
    let hidden = if (i / 3).is_multiple_of(2) { 32 } else { 64 };
    ModelConfig::new(variant, layers, 4, hidden / 4, 40, 16)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct GapSummary {
    pub max_logit_gap: f32,
    pub max_loss_gap: f64,
    pub max_relative_loss_gap: f64,
}

impl GapSummary {
    pub fn absorb(&mut self, r: &PreservationReport) {
        self.max_logit_gap = self.max_logit_gap.max(r.max_logit_gap);
        self.max_loss_gap = self.max_loss_gap.max(r.loss_gap());
        self.max_relative_loss_gap = self.max_relative_loss_gap.max(r.relative_loss_gap());
    }
}

/// FPI with uniform duplication to twice the width, over `n` random source
/// models, each checked on 100 random inputs.
pub fn fpi_doubling_gaps(variant: Variant, n: usize) -> GapSummary {
    let mut s = GapSummary::default();
    for i in 0..n {
        let sc = sweep_config(variant, i);
        let sp = lively_params(&sc, 500 + i as u64, 0.15);
        let tc = sc.widened_to_heads(2 * sc.heads);
        let pair = SourceTargetPair::new(&sc, &sp, &tc).unwrap();
        let grown = grow(&pair, Strategy::Fpi, Sampling::Cyclic, i as u64).unwrap();
        let opts = VerifyOptions {
            n_inputs: 100,
            seq_len: 16,
            seed: i as u64,
            tol: 1e-4,
        };
        s.absorb(&verify_preservation(&sc, &sp, &tc, &grown.params, &opts).unwrap());
    }
    s
}

/// FPI to `target_heads` with randomly sampled (non-uniform) mappings,
/// measured on `batches`.
pub fn fpi_sampled_gap(
    sc: &ModelConfig,
    sp: &ParamSet,
    target_heads: usize,
    seeds: std::ops::Range<u64>,
    batches: &[Batch],
) -> GapSummary {
    let tc = sc.widened_to_heads(target_heads);
    let pair = SourceTargetPair::new(sc, sp, &tc).unwrap();
    let mut s = GapSummary::default();
    for seed in seeds {
        let grown = grow(&pair, Strategy::Fpi, Sampling::Random, seed).unwrap();
        s.absorb(&verify_on_batches(sc, sp, &tc, &grown.params, batches, f32::INFINITY).unwrap());
    }
    s
}

fn matrix(l: &LayerParams, t: LayerTensor) -> &Matrix {
    match t {
        LayerTensor::Wq => &l.wq,
        LayerTensor::Wk => &l.wk,
        LayerTensor::Wv => &l.wv,
        LayerTensor::Wo => &l.wo,
        LayerTensor::W1 => &l.w1,
        LayerTensor::W2 => &l.w2,
        _ => unreachable!(),
    }
}

fn grid(m: &Matrix) -> Vec<Vec<f32>> {
    grid_of(m.as_slice(), m.rows(), m.cols())
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AkiCheck {
    pub matrices: usize,
    /// Leading columns differing from the in-expanded current matrix.
    pub prefix_mismatches: usize,
    /// Whole matrices differing from the brute-force evaluator.
    pub oracle_mismatches: usize,
    /// Vectors (biases, LayerNorm) differing from plain duplication.
    pub vector_mismatches: usize,
}

/// AKI on small models (all dimensions at most 16), compared matrix by
/// matrix against the brute-force evaluator fed the plan's raw index maps.
pub fn aki_check(variant: Variant, seeds: std::ops::Range<u64>) -> AkiCheck {
    let mut out = AkiCheck::default();
    for seed in seeds {
        let dk = 3;
        let sc = ModelConfig::new(variant, 3, 2, dk, 9, 6).with_ffn_dim(7);
        let tc = ModelConfig::new(variant, 3, 5, dk, 9, 6).with_ffn_dim(16);
        let sp = lively_params(&sc, seed, 0.5);
        let pair = SourceTargetPair::new(&sc, &sp, &tc).unwrap();
        let plan = build_plan(&pair, Strategy::Aki, Sampling::Random, seed).unwrap();
        let grown = grow(&pair, Strategy::Aki, Sampling::Random, seed).unwrap();
        let heads = plan.heads.map().to_vec();
        let hidden = lift(&heads, dk);
        let ffn = plan.ffn.map().to_vec();
        assert_eq!(plan.hidden.map(), hidden.as_slice(), "hidden map must be the lifted head map");
        for l in 0..sc.layers {
            let cur = &sp.layers[l];
            let got_layer = &grown.params.layers[l];
            for t in MATRICES {
                let (g_in, g_out) = match t {
                    LayerTensor::Wq | LayerTensor::Wk | LayerTensor::Wv => (hidden.clone(), hidden.clone()),
                    LayerTensor::Wo => (hidden.clone(), hidden.clone()),
                    LayerTensor::W1 => (hidden.clone(), ffn.clone()),
                    LayerTensor::W2 => (ffn.clone(), hidden.clone()),
                    _ => unreachable!(),
                };
                let got = grid(matrix(got_layer, t));
                let want = if l + 1 < sc.layers {
                    let up = &plan.upper[l];
                    let upper_out = if t == LayerTensor::W1 {
                        up.ffn.map().to_vec()
                    } else {
                        lift(up.heads.map(), dk)
                    };
                    brute_expn_upper(&grid(matrix(cur, t)), &grid(matrix(&sp.layers[l + 1], t)), &g_in, &upper_out)
                } else {
                    brute_expn(&grid(matrix(cur, t)), &g_in, &g_out)
                };
                out.matrices += 1;
                if !bitwise_eq(&got, &want) {
                    out.oracle_mismatches += 1;
                }
                let d_out = matrix(cur, t).cols();
                let prefix = expand_rows(&grid(matrix(cur, t)), &g_in);
                let got_prefix: Vec<Vec<f32>> = got.iter().map(|r| r[..d_out].to_vec()).collect();
                if !bitwise_eq(&got_prefix, &prefix) {
                    out.prefix_mismatches += 1;
                }
            }
            for t in LayerTensor::ALL {
                let src = TensorId::Layer(l, t);
                if src.is_matrix() {
                    continue;
                }
                let map = match t {
                    LayerTensor::B1 => &ffn,
                    _ => &hidden,
                };
                let want: Vec<f32> = map.iter().map(|&i| sp.get(src)[i]).collect();
                if grown.params.get(src) != want.as_slice() {
                    out.vector_mismatches += 1;
                }
            }
        }
    }
    out
}

/// Grows a random `ls`-layer model to `lt` layers (width unchanged) and
/// returns, per target layer, the index of the source layer it is bitwise
/// equal to (or `None`).
pub fn stacked_layer_sources(ls: usize, lt: usize, seed: u64) -> Vec<Option<usize>> {
    let sc = ModelConfig::new(Variant::PostLnEncoder, ls, 2, 4, 10, 8);
    let sp = lively_params(&sc, seed, 0.5);
    let tc = sc.with_layers(lt);
    let pair = SourceTargetPair::new(&sc, &sp, &tc).unwrap();
    let grown = grow(&pair, Strategy::Fpi, Sampling::Random, seed).unwrap();
    assert_eq!(stack_order(ls, lt).unwrap().len(), lt);
    grown
        .params
        .layers
        .iter()
        .map(|tl| {
            sp.layers.iter().position(|sl| {
                LayerTensor::ALL.iter().all(|&t| {
                    let (a, b) = (tl.tensor(t), sl.tensor(t));
                    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
                })
            })
        })
        .collect()
}

/// Tensors a single stage-1 step may change for `depth`: the top `lb`
/// layers of the sub-model and the head.
pub fn allowed_in_stage_one(depth: usize, lb: usize, id: TensorId) -> bool {
    match id {
        TensorId::Layer(l, _) => l < depth && l + lb >= depth,
        TensorId::HeadWeight | TensorId::HeadBias => true,
        _ => false,
    }
}

/// For each depth of the sub-model family, runs one stage-1 step (drawing
/// schedule seeds until every depth has been hit) and returns the tensors
/// that changed outside the allowed set.
pub fn stage_one_violations(variant: Variant, layers: usize, lb: usize) -> Vec<(usize, Vec<TensorId>)> {
    let c = ModelConfig::new(variant, layers, 2, 4, 12, 8).with_ffn_dim(16);
    let p = lively_params(&c, 7, 0.3);
    let corpus = Corpus::markov(12, 2000, 3).unwrap();
    let family = SubModelFamily::new(layers, lb).unwrap();
    let mut seen = Vec::new();
    for seed in 0..200 {
        let s = TrainSchedule {
            peak_lr: 1e-2,
            warmup_steps: 0,
            epochs: 2,
            steps_per_epoch: 1,
            submodel_epochs: 1,
            layer_step: lb,
            batch_size: 2,
            seq_len: 8,
            seed,
            ..Default::default()
        };
        // stop after the first (stage-1) step
        let out = two_stage_train(&c, p.clone(), &s, &corpus, SerialBackend, |_, _| ControlFlow::Break(())).unwrap();
        assert_eq!(out.log.len(), 1);
        let d = out.log.records()[0].sub_depth;
        if seen.iter().any(|(x, _)| *x == d) {
            continue;
        }
        let changed = out.params.changed_tensors(&p);
        assert!(!changed.is_empty(), "stage-1 step changed nothing");
        let bad = changed.into_iter().filter(|&id| !allowed_in_stage_one(d, lb, id)).collect();
        seen.push((d, bad));
        if seen.len() == family.depths().len() {
            break;
        }
    }
    assert_eq!(seen.len(), family.depths().len(), "not every depth was sampled");
    seen.sort_by_key(|(d, _)| *d);
    seen
}

/// Frozen set used by stage 1 matches the allowed set exactly.
pub fn freeze_set_matches(layers: usize, depth: usize, lb: usize) -> bool {
    let f = FreezeSet::train_top_layers(layers, depth, lb);
    TensorId::all(layers)
        .into_iter()
        .all(|id| f.is_frozen(id) != allowed_in_stage_one(depth, lb, id))
}

/// Largest per-entry relative error between analytic gradients and f64
/// central differences; the denominator is floored at 1e-4.
pub fn max_gradient_error(config: &ModelConfig, seed: u64) -> (f64, TensorId) {
    let params = lively_params(config, seed, 0.4);
    let batch = random_batch(config, 2, 5, seed + 1000);
    let g = backward(config, &params, &batch).unwrap();
    let p64 = Params64::from(&params);
    let mut worst = (0.0, TensorId::TokEmb);
    for id in params.ids() {
        for (idx, &analytic) in g.grads.get(id).iter().enumerate() {
            let fd = central_difference(config, &p64, &batch, id, idx, 1e-5);
            let err = (analytic as f64 - fd).abs() / (analytic.abs() as f64).max(fd.abs()).max(1e-4);
            if err > worst.0 {
                worst = (err, id);
            }
        }
    }
    worst
}
