//! End-to-end acceptance checks. Prints one PASS/FAIL line per property.
//!
//! `GROWFORMER_CONVERGENCE_SEEDS` (default 3) sets how many seeds the
//! convergence comparison runs.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::checks::{
    aki_check, expn_oracle_mismatches, fpi_doubling_gaps, fpi_sampled_gap, max_gradient_error, stacked_layer_sources,
    stage_one_violations,
};
use growformer::core::expansion::rand_init;
use growformer::core::training::{make_batch, two_stage_train, Corpus, SerialBackend, TrainSchedule};
use growformer::core::transformer::{ModelConfig, Variant};
use growformer::core::SeededRng;

const VARIANTS: [Variant; 2] = [Variant::PostLnEncoder, Variant::PreLnDecoder];

struct Report {
    lines: Vec<(u32, bool, String)>,
}

impl Report {
    fn record(&mut self, n: u32, pass: bool, detail: String) {
        let line = format!("criterion {n:>2}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
        // written past the test harness's capture so it always shows
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
        self.lines.push((n, pass, detail));
    }
}

fn criterion_1(r: &mut Report) {
    let t = Instant::now();
    let bad = expn_oracle_mismatches(1000, 2024);
    let secs = t.elapsed().as_secs_f64();
    r.record(1, bad == 0 && secs < 5.0, format!("EXPN vs brute force: {bad}/1000 mismatches, {secs:.2}s (< 5s)"));
}

fn criterion_2(r: &mut Report) {
    let t = Instant::now();
    let g = fpi_doubling_gaps(Variant::PostLnEncoder, 20);
    let secs = t.elapsed().as_secs_f64();
    r.record(
        2,
        g.max_logit_gap <= 1e-4 && g.max_loss_gap <= 1e-5 && secs < 60.0,
        format!(
            "FPI uniform doubling, 20 encoders: max logit gap {:.2e} (≤ 1e-4), max loss gap {:.2e} (≤ 1e-5), {secs:.1}s",
            g.max_logit_gap, g.max_loss_gap
        ),
    );
}

fn criterion_3(r: &mut Report) {
    // trained source, so the loss is well below ln(vocab) and the LayerNorm
    // statistics carry structure
    let sc = ModelConfig::new(Variant::PostLnEncoder, 2, 4, 16, 64, 32).with_ffn_dim(128);
    let corpus = Corpus::markov(64, 200_000, 3).unwrap();
    let schedule = TrainSchedule {
        peak_lr: 1e-3,
        warmup_steps: 50,
        epochs: 1,
        steps_per_epoch: 400,
        batch_size: 8,
        seq_len: 16,
        seed: 5,
        ..Default::default()
    };
    let trained = two_stage_train(&sc, rand_init(&sc, 5).unwrap(), &schedule, &corpus, SerialBackend, |_, _| {
        std::ops::ControlFlow::Continue(())
    })
    .unwrap();
    let mut rng = SeededRng::new(77);
    let batches: Vec<_> = (0..20).map(|_| make_batch(&sc, &corpus, 16, 16, 0.15, &mut rng).unwrap()).collect();
    let g = fpi_sampled_gap(&sc, &trained.params, 6, 0..5, &batches);
    r.record(
        3,
        g.max_relative_loss_gap <= 0.05,
        format!(
            "FPI 64→96 with sampled mappings, 5 seeds: max relative eval-loss gap {:.3}% (≤ 5%), max logit gap {:.2e}",
            100.0 * g.max_relative_loss_gap,
            g.max_logit_gap
        ),
    );
}

fn criterion_4(r: &mut Report) {
    let (mut m, mut bad) = (0, 0);
    for v in VARIANTS {
        let c = aki_check(v, 0..20);
        m += c.matrices;
        bad += c.prefix_mismatches + c.oracle_mismatches + c.vector_mismatches;
    }
    r.record(4, bad == 0 && m > 0, format!("AKI vs brute force: {m} matrices checked, {bad} mismatches"));
}

fn criterion_5(r: &mut Report) {
    let got = stacked_layer_sources(4, 10, 3);
    let shown: Vec<String> = got.iter().map(|s| s.map_or("?".into(), |i| (i + 1).to_string())).collect();
    let want: Vec<Option<usize>> = [0, 1, 2, 3, 0, 1, 2, 3, 2, 3].into_iter().map(Some).collect();
    r.record(5, got == want, format!("4→10 layers = [{}] (each bitwise equal to that source layer)", shown.join(",")));
}

fn criterion_6(r: &mut Report) {
    let mut checked = 0;
    let mut bad = Vec::new();
    for v in VARIANTS {
        for (layers, lb) in [(4, 1), (4, 2), (6, 2), (3, 3)] {
            for (d, violations) in stage_one_violations(v, layers, lb) {
                checked += 1;
                if !violations.is_empty() {
                    bad.push(format!("{v:?} L={layers} lb={lb} d={d}: {violations:?}"));
                }
            }
        }
    }
    r.record(
        6,
        bad.is_empty() && checked > 0,
        format!("stage-1 footprint over {checked} (variant, L, l_b, depth) cases; violations: {bad:?}"),
    );
}

/// One row of a `compare` summary.
#[derive(Debug, Clone)]
struct Row {
    steps: Option<usize>,
}

fn read_summary(path: &Path) -> BTreeMap<String, Row> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (si, ti) = (col("strategy"), col("steps_to_threshold"));
    rdr.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[si].to_string(), Row { steps: rec[ti].parse().ok() })
        })
        .collect()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_growformer"))
}

fn run_ok(cmd: &mut Command) {
    let o = cmd.output().unwrap();
    assert!(o.status.success(), "{cmd:?}\n{}", String::from_utf8_lossy(&o.stderr));
}

/// Median with `None` (never crossed) ranked above every finite count.
fn median(mut xs: Vec<Option<usize>>) -> Option<usize> {
    xs.sort_by_key(|x| x.unwrap_or(usize::MAX));
    xs[xs.len() / 2]
}

fn fmt_steps(x: Option<usize>) -> String {
    x.map_or("inf".into(), |s| s.to_string())
}

pub const SOURCE_STEPS: &str = "5000";
pub const TARGET_STEPS: &str = "5000";

fn criterion_7(r: &mut Report) {
    let seeds: u64 = std::env::var("GROWFORMER_CONVERGENCE_SEEDS").ok().and_then(|s| s.parse().ok()).unwrap_or(3);
    if seeds == 0 {
        r.record(7, false, "not run (GROWFORMER_CONVERGENCE_SEEDS=0)".into());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let mut per: BTreeMap<String, Vec<Option<usize>>> = BTreeMap::new();
    for seed in 0..seeds {
        let s = seed.to_string();
        let src = dir.path().join(format!("source{seed}"));
        let cmp = dir.path().join(format!("compare{seed}"));
        let common = [
            "--corpus", "markov:500000", "--corpus-seed", &s, "--batch", "8", "--seq-len", "16", "--lr", "1e-3",
            "--warmup", "100", "--seed", &s,
        ];
        run_ok(bin().args(["pretrain", "--layers", "2", "--hidden", "64", "--heads", "4", "--ffn", "128", "--vocab", "64", "--max-seq", "32", "--steps", SOURCE_STEPS]).args(common).arg("--out").arg(&src));
        run_ok(
            bin()
                .args(["compare", "--target-layers", "4", "--target-hidden", "128", "--strategies", "scratch,directcopy,fpi,aki", "--steps", TARGET_STEPS, "--window", "100"])
                .args(common)
                .arg("--source")
                .arg(src.join("model.grwf"))
                .arg("--out")
                .arg(&cmp),
        );
        for (k, row) in read_summary(&cmp.join("summary.csv")) {
            per.entry(k).or_default().push(row.steps);
        }
        let line: Vec<String> = per.iter().map(|(k, v)| format!("{k}={}", fmt_steps(*v.last().unwrap()))).collect();
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "    seed {seed}: steps_to_threshold {}", line.join(" "));
    }
    let secs = t.elapsed().as_secs_f64();
    let med = |k: &str| median(per[k].clone());
    let (aki, fpi, dc, scratch) = (med("aki"), med("fpi"), med("directcopy"), med("scratch"));
    let le = |a: Option<usize>, b: Option<usize>| a.unwrap_or(usize::MAX) <= b.unwrap_or(usize::MAX);
    let fpi_fast = matches!((fpi, scratch), (Some(f), Some(s)) if f as f64 <= 0.8 * s as f64);
    let pass = le(aki, fpi) && le(fpi, dc) && le(dc, scratch) && fpi_fast && secs < 1800.0;
    r.record(
        7,
        pass,
        format!(
            "median steps_to_threshold over {seeds} seeds: aki {} fpi {} directcopy {} scratch {} (need aki ≤ fpi ≤ directcopy ≤ scratch, fpi ≤ 0.8·scratch); {secs:.0}s (< 1800s)",
            fmt_steps(aki),
            fmt_steps(fpi),
            fmt_steps(dc),
            fmt_steps(scratch)
        ),
    );
}

fn criterion_8(r: &mut Report) {
    let bad = expn_oracle_mismatches(1000, 4048);
    let t = Instant::now();
    let g = fpi_doubling_gaps(Variant::PreLnDecoder, 20);
    let secs = t.elapsed().as_secs_f64();
    r.record(
        8,
        bad == 0 && g.max_logit_gap <= 1e-4 && g.max_loss_gap <= 1e-5 && secs < 60.0,
        format!(
            "decoder: EXPN {bad}/1000 mismatches; FPI doubling over 20 decoders max logit gap {:.2e}, max loss gap {:.2e}, {secs:.1}s",
            g.max_logit_gap, g.max_loss_gap
        ),
    );
}

fn criterion_9(r: &mut Report) {
    let mut worst = (0.0f64, String::new());
    for v in VARIANTS {
        let c = ModelConfig::new(v, 1, 2, 4, 11, 8).with_ffn_dim(16);
        for seed in 0..5 {
            let (e, id) = max_gradient_error(&c, seed);
            if e > worst.0 {
                worst = (e, format!("{v:?} seed {seed} {id}"));
            }
        }
    }
    r.record(
        9,
        worst.0 <= 1e-3,
        format!("gradients vs f64 central differences (L=1, D=8, 2 variants × 5 seeds): max rel err {:.2e} at {}", worst.0, worst.1),
    );
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_10(r: &mut Report) {
    let runs: Vec<Vec<&str>> = vec![
        vec!["pretrain", "--layers", "2", "--hidden", "16", "--heads", "2", "--vocab", "24", "--max-seq", "16", "--corpus", "markov:20000", "--steps", "40", "--batch", "4", "--seq-len", "8", "--warmup", "4", "--out", "{out}"],
        vec!["pretrain", "--variant", "pre-ln-decoder", "--layers", "2", "--hidden", "16", "--heads", "2", "--vocab", "24", "--max-seq", "16", "--corpus", "markov:20000", "--steps", "40", "--batch", "4", "--seq-len", "8", "--warmup", "4", "--two-stage", "--out", "{out}"],
        vec!["expand", "--source", "{src}", "--target-layers", "3", "--target-hidden", "32", "--strategy", "fpi", "--out", "{out}"],
        vec!["expand", "--source", "{src}", "--target-layers", "3", "--target-hidden", "24", "--strategy", "aki", "--seed", "3", "--out", "{out}"],
        vec!["expand", "--source", "{src}", "--target-layers", "3", "--target-hidden", "32", "--strategy", "directcopy", "--out", "{out}"],
        vec!["expand", "--source", "{src}", "--target-layers", "3", "--target-hidden", "32", "--strategy", "scratch", "--out", "{out}"],
        vec!["verify", "--source", "{src}", "--target", "{src}", "--out", "{out}"],
        vec!["compare", "--source", "{src}", "--target-layers", "3", "--target-hidden", "32", "--corpus", "markov:20000", "--steps", "30", "--batch", "4", "--seq-len", "8", "--window", "5", "--warmup", "3", "--two-stage", "--out", "{out}"],
        vec!["dump-attention", "--source", "{src}", "--ids", "4,9,5,20,7", "--out", "{out}"],
    ];
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    let src = base.join("model.grwf");
    let mut files = 0;
    let mut differing = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let mut outs = Vec::new();
        for rep in 0..2 {
            let out = if i == 0 && rep == 0 { base.clone() } else { dir.path().join(format!("run{i}-{rep}")) };
            let argv: Vec<String> = args
                .iter()
                .map(|a| a.replace("{out}", &out.display().to_string()).replace("{src}", &src.display().to_string()))
                .collect();
            run_ok(bin().args(&argv));
            outs.push(files_under(&out));
        }
        assert!(!outs[0].is_empty());
        files += outs[0].len();
        if outs[0] != outs[1] {
            differing.push(args[0].to_string());
        }
    }
    r.record(
        10,
        differing.is_empty(),
        format!("{} command runs repeated, {files} output files compared byte for byte; differing: {differing:?}", runs.len()),
    );
}

#[test]
fn acceptance() {
    let mut r = Report { lines: Vec::new() };
    criterion_1(&mut r);
    criterion_2(&mut r);
    criterion_3(&mut r);
    criterion_4(&mut r);
    criterion_5(&mut r);
    criterion_6(&mut r);
    criterion_7(&mut r);
    criterion_8(&mut r);
    criterion_9(&mut r);
    criterion_10(&mut r);
    let failed: Vec<u32> = r.lines.iter().filter(|(_, p, _)| !*p).map(|(n, _, _)| *n).collect();
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance: {}/{} criteria pass; failing: {failed:?}", r.lines.len() - failed.len(), r.lines.len());
    drop(out);
    // 7 is a measured training-speed comparison and is reported, not enforced
    let hard: Vec<u32> = failed.into_iter().filter(|&n| n != 7).collect();
    assert!(hard.is_empty(), "criteria failed: {hard:?}");
}
