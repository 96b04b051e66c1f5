//! CSV and text outputs.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use growformer_core::expansion::{ExpansionPlan, MappingFn, PreservationReport};
use growformer_core::training::{LossLog, LossRecord};
use growformer_core::transformer::{AttentionMap, TensorId};
use growformer_core::ModelConfig;

pub const LOSS_HEADER: [&str; 6] = ["step", "stage", "sub_depth", "loss", "lr", "flops"];
pub const ATTENTION_HEADER: [&str; 5] = ["layer", "head", "row", "col", "value"];

fn to_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// Streams loss records to `loss.csv`, flushing every `flush_every` rows.
pub struct LossCsv {
    writer: csv::Writer<fs::File>,
    flush_every: usize,
    pending: usize,
}

impl LossCsv {
    pub fn create(path: &Path, flush_every: usize) -> io::Result<Self> {
        let mut writer = csv::Writer::from_path(path).map_err(to_io)?;
        writer.write_record(LOSS_HEADER).map_err(to_io)?;
        writer.flush()?;
        Ok(Self {
            writer,
            flush_every: flush_every.max(1),
            pending: 0,
        })
    }

    pub fn write(&mut self, r: &LossRecord) -> io::Result<()> {
        self.writer
            .write_record([
                r.step.to_string(),
                r.stage.to_string(),
                r.sub_depth.to_string(),
                r.loss.to_string(),
                r.lr.to_string(),
                r.flops.to_string(),
            ])
            .map_err(to_io)?;
        self.pending += 1;
        if self.pending >= self.flush_every {
            self.flush()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.pending = 0;
        self.writer.flush()
    }
}

pub fn write_loss_csv(path: &Path, log: &LossLog) -> io::Result<()> {
    let mut w = LossCsv::create(path, usize::MAX)?;
    for r in log.records() {
        w.write(r)?;
    }
    w.flush()
}

/// Attention maps of one sequence as `layer,head,row,col,value`.
pub fn write_attention_csv(path: &Path, maps: &[AttentionMap]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(ATTENTION_HEADER).map_err(to_io)?;
    for m in maps {
        for r in 0..m.probs.rows() {
            for c in 0..m.probs.cols() {
                w.write_record([
                    m.layer.to_string(),
                    m.head.to_string(),
                    r.to_string(),
                    c.to_string(),
                    m.probs.get(r, c).to_string(),
                ])
                .map_err(to_io)?;
            }
        }
    }
    w.flush()
}

/// One row of the strategy comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub init_eval_loss: f64,
    pub final_loss: f64,
    pub steps_run: usize,
    pub steps_to_threshold: Option<usize>,
    pub flops_to_threshold: Option<f64>,
    /// `1 - steps / steps(scratch)`, in percent.
    pub savings_pct: Option<f64>,
}

pub const SUMMARY_HEADER: [&str; 8] = [
    "strategy",
    "init_eval_loss",
    "final_loss",
    "steps_run",
    "steps_to_threshold",
    "flops_to_threshold",
    "savings_pct",
    "threshold",
];

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow], threshold: f64) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(SUMMARY_HEADER).map_err(to_io)?;
    let opt = |v: Option<String>| v.unwrap_or_else(|| "inf".into());
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            r.init_eval_loss.to_string(),
            r.final_loss.to_string(),
            r.steps_run.to_string(),
            opt(r.steps_to_threshold.map(|s| s.to_string())),
            opt(r.flops_to_threshold.map(|s| s.to_string())),
            r.savings_pct.map(|s| format!("{s:.2}")).unwrap_or_else(|| "n/a".into()),
            threshold.to_string(),
        ])
        .map_err(to_io)?;
    }
    w.flush()
}

fn shape_str(s: &[usize]) -> String {
    s.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn mapping_line(name: &str, m: &MappingFn) -> String {
    format!("  {name:<12} {} -> {}  digest {:016x}\n", m.src_len(), m.len(), m.digest())
}

/// Inputs to the human-readable expansion report.
pub struct ExpansionReport<'a> {
    pub strategy: &'a str,
    pub seed: u64,
    pub source: &'a ModelConfig,
    pub target: &'a ModelConfig,
    pub plan: Option<&'a ExpansionPlan>,
    pub layer_order: Option<&'a [usize]>,
    /// Source vs. the width-expanded model at source depth.
    pub width_gap: Option<&'a PreservationReport>,
    /// Source vs. the final target.
    pub final_gap: Option<&'a PreservationReport>,
}

impl ExpansionReport<'_> {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let cfg = |c: &ModelConfig| {
            format!(
                "{} L={} D={} heads={} d_k={} d_ff={} vocab={} max_seq={}",
                c.variant.as_str(),
                c.layers,
                c.hidden,
                c.heads,
                c.head_dim,
                c.ffn_dim,
                c.vocab,
                c.max_seq
            )
        };
        let _ = writeln!(s, "strategy: {}", self.strategy);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "source: {}", cfg(self.source));
        let _ = writeln!(s, "target: {}", cfg(self.target));
        if let Some(plan) = self.plan {
            s.push_str("mappings:\n");
            s.push_str(&mapping_line("heads", &plan.heads));
            s.push_str(&mapping_line("hidden", &plan.hidden));
            s.push_str(&mapping_line("ffn", &plan.ffn));
            for (l, up) in plan.upper.iter().enumerate() {
                s.push_str(&mapping_line(&format!("upper{l}.heads"), &up.heads));
                s.push_str(&mapping_line(&format!("upper{l}.ffn"), &up.ffn));
            }
        }
        if let Some(order) = self.layer_order {
            let _ = writeln!(s, "layer order: {order:?}");
        }
        s.push_str("tensors:\n");
        let src_ids = TensorId::all(self.source.layers);
        for id in TensorId::all(self.target.layers) {
            let src_shape = match (id, self.layer_order) {
                (TensorId::Layer(l, t), Some(order)) => Some(TensorId::Layer(order[l], t).shape(self.source)),
                (TensorId::Layer(l, _), None) if l >= self.source.layers => None,
                _ => src_ids.contains(&id).then(|| id.shape(self.source)),
            };
            let from = src_shape.map(|s| shape_str(&s)).unwrap_or_else(|| "-".into());
            let _ = writeln!(s, "  {:<18} {:>10} -> {}", id.to_string(), from, shape_str(&id.shape(self.target)));
        }
        for (label, gap) in [("width-stage", self.width_gap), ("final", self.final_gap)] {
            if let Some(g) = gap {
                let _ = writeln!(
                    s,
                    "verify {label}: max_logit_gap {:e} source_loss {} target_loss {} loss_gap {:e} passed {}",
                    g.max_logit_gap,
                    g.source_loss,
                    g.target_loss,
                    g.loss_gap(),
                    g.passed
                );
            }
        }
        s
    }
}
