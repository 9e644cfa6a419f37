//! `gen-trace`: record a synthetic pair's distributions along the greedy
//! path into paired JSONL trace files plus sidecar manifests.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use specasr_core::{
    record_pair, synthetic_pair, write_manifest, write_trace, AgreementProfile, TraceManifest,
};

use super::{load_file_config, resolve_seed};

/// Entries retained per recorded position; enough for rank-two branching
/// with headroom for deeper rank analysis.
const TRACE_TOP_K: usize = 4;

#[derive(Args, Clone, Debug, Default)]
pub struct GenTraceArgs {
    /// TOML config file; command-line flags win on conflict.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Vocabulary size of the generated pair.
    #[arg(long)]
    pub vocab: Option<u32>,
    /// Number of positions to record.
    #[arg(long)]
    pub len: Option<usize>,
    /// Generator seed; defaults to $SPECASR_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Probability the draft argmax matches the target argmax per position.
    #[arg(long = "p-top1")]
    pub p_top1: Option<f64>,
    /// Probability the target token is the draft's rank-2 pick when they disagree.
    #[arg(long = "p-top2")]
    pub p_top2: Option<f64>,
    /// Mean length of disagreement bursts.
    #[arg(long)]
    pub burst: Option<f64>,
    /// Output directory for target.jsonl, draft.jsonl, and manifests.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn execute(args: GenTraceArgs) -> Result<()> {
    let file = load_file_config(args.config.as_ref())?;
    let vocab = args.vocab.or(file.vocab).unwrap_or(256);
    let len = args.len.or(file.len).unwrap_or(200);
    let seed = resolve_seed(args.seed, file.seed)?;
    let p_top1 = args.p_top1.or(file.p_top1).unwrap_or(0.9);
    let p_top2 = args.p_top2.or(file.p_top2).unwrap_or(0.7);
    let burst = args.burst.or(file.burst).unwrap_or(2.0);
    let out = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("traces"));

    let profile = AgreementProfile::new(p_top1, p_top2, burst)?;
    let (target, draft) = synthetic_pair(seed, vocab, TRACE_TOP_K, profile)?;
    let (t_recs, d_recs, stats) = record_pair(&target, &draft, len)?;

    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let t_path = out.join("target.jsonl");
    let d_path = out.join("draft.jsonl");
    write_trace(&t_path, &t_recs)?;
    write_trace(&d_path, &d_recs)?;

    let eos = t_recs
        .last()
        .context("recorded an empty trace")?
        .argmax()
        .0;
    let manifest = TraceManifest {
        vocab_size: vocab,
        records: len,
        seed,
        p_top1,
        p_top2,
        burst_len: burst,
        measured_top1: stats.realized_top1(),
        measured_top2: stats.realized_top2(),
        eos,
        norm_mode: "softmax_full_vocab".to_string(),
    };
    write_manifest(&t_path, &manifest)?;
    write_manifest(&d_path, &manifest)?;

    println!(
        "wrote {} and {} ({} records, realized top1 {:.6}, realized top2 {:.6})",
        t_path.display(),
        d_path.display(),
        len,
        stats.realized_top1(),
        stats.realized_top2()
    );
    Ok(())
}
