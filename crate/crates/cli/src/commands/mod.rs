//! Command-line surface: argument parsing, config-file merging, and the
//! experiment plumbing shared by the subcommands.

pub mod gen_trace;
pub mod run;
pub mod sweep;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use specasr_core::{
    load_trace, manifest_path, CostModel, StrategyConfig, StrategyKind, SyntheticDraft,
    SyntheticTarget, TraceManifest, TraceModel,
};

/// Deterministic, lossless speculative-decoding experiments.
#[derive(Parser, Debug)]
#[command(name = "specasr", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Record a synthetic model pair into replayable trace files.
    GenTrace(gen_trace::GenTraceArgs),
    /// Decode with the configured strategies and emit one CSV row each.
    Run(run::RunArgs),
    /// Sweep one variable over a grid, one CSV row per point and repeat.
    Sweep(sweep::SweepArgs),
    /// Full five-strategy comparison on identical inputs.
    Ablate(run::RunArgs),
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenTrace(args) => gen_trace::execute(args),
        Command::Run(args) => run::execute(args, None),
        Command::Sweep(args) => sweep::execute(args),
        Command::Ablate(args) => run::execute(args, Some(StrategyKind::ALL.to_vec())),
    }
}

/// 0 = success, 1 = configuration or IO problems, 2 = a strategy produced a
/// transcript that differs from the greedy reference.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(specasr_core::Error::TranscriptMismatch { .. }) =
            cause.downcast_ref::<specasr_core::Error>()
        {
            return 2;
        }
    }
    1
}

/// Flags shared by `run`, `sweep`, and `ablate`. Every flag is optional;
/// unset values fall back to the config file, then to defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct ExperimentArgs {
    /// TOML config file; command-line flags win on conflict.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Synthetic vocabulary size.
    #[arg(long)]
    pub vocab: Option<u32>,
    /// Output length in tokens.
    #[arg(long)]
    pub len: Option<usize>,
    /// Base seed; defaults to $SPECASR_SEED, then 0. Repeat r uses seed + r.
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
    /// Confidence threshold for adaptive truncation and uncertainty marks.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Fixed draft length for baseline speculation.
    #[arg(long = "draft-len")]
    pub draft_len: Option<usize>,
    /// Draft-length cap for adaptive and tree strategies.
    #[arg(long = "max-draft-len")]
    pub max_draft_len: Option<usize>,
    /// Rank drawn at an uncertainty mark when spawning a branch.
    #[arg(long = "branch-k")]
    pub branch_k: Option<usize>,
    /// Branch budget per verification round.
    #[arg(long = "max-branches")]
    pub max_branches: Option<usize>,
    /// Positional slack when grafting re-aligned sequences.
    #[arg(long = "merge-window")]
    pub merge_window: Option<usize>,
    /// Cost preset: 8to1 or 30to1.
    #[arg(long = "cost-preset")]
    pub cost_preset: Option<String>,
    /// Paired repeats per configuration.
    #[arg(long)]
    pub repeats: Option<u64>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Strategy to run (repeatable); defaults to all five.
    #[arg(long = "strategy")]
    pub strategies: Vec<String>,
    /// Replay the target from a recorded trace instead of a synthetic model.
    #[arg(long = "target-trace", requires = "draft_trace")]
    pub target_trace: Option<PathBuf>,
    /// Replay the draft from a recorded trace.
    #[arg(long = "draft-trace", requires = "target_trace")]
    pub draft_trace: Option<PathBuf>,
}

/// Config-file counterpart of the flag set; unknown keys are rejected so
/// typos fail loudly instead of silently using defaults.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub vocab: Option<u32>,
    pub len: Option<usize>,
    pub seed: Option<u64>,
    pub p_top1: Option<f64>,
    pub p_top2: Option<f64>,
    pub burst: Option<f64>,
    pub tau: Option<f64>,
    pub draft_len: Option<usize>,
    pub max_draft_len: Option<usize>,
    pub branch_k: Option<usize>,
    pub max_branches: Option<usize>,
    pub merge_window: Option<usize>,
    pub cost_preset: Option<String>,
    pub repeats: Option<u64>,
    pub out: Option<PathBuf>,
    pub strategies: Option<Vec<String>>,
    pub target_trace: Option<PathBuf>,
    pub draft_trace: Option<PathBuf>,
    pub sweep: Option<String>,
    pub grid: Option<Vec<f64>>,
}

pub fn load_file_config(path: Option<&PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config file {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config file {}", p.display()))
        }
    }
}

/// Seed precedence: flag, config file, $SPECASR_SEED, 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var("SPECASR_SEED") {
        Ok(raw) => raw
            .parse()
            .with_context(|| format!("SPECASR_SEED is set but not a number: {raw:?}")),
        Err(_) => Ok(0),
    }
}

/// Fully resolved experiment parameters.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub vocab: u32,
    pub len: usize,
    pub seed: u64,
    pub p_top1: f64,
    pub p_top2: f64,
    pub burst: f64,
    pub tau: f64,
    pub draft_len: usize,
    pub max_draft_len: usize,
    pub branch_k: usize,
    pub max_branches: usize,
    pub merge_window: usize,
    pub cost: CostModel,
    pub repeats: u64,
    pub out: Option<PathBuf>,
    pub strategies: Vec<StrategyKind>,
    pub traces: Option<(PathBuf, PathBuf)>,
}

impl Experiment {
    pub fn resolve(args: &ExperimentArgs, default_strategies: &[StrategyKind]) -> Result<Self> {
        let file = load_file_config(args.config.as_ref())?;
        let strategies = if !args.strategies.is_empty() {
            parse_strategies(&args.strategies)?
        } else if let Some(names) = &file.strategies {
            parse_strategies(names)?
        } else {
            default_strategies.to_vec()
        };
        if strategies.is_empty() {
            bail!("no strategies selected");
        }
        let preset = args
            .cost_preset
            .clone()
            .or(file.cost_preset)
            .unwrap_or_else(|| "8to1".to_string());
        let traces = match (
            args.target_trace.clone().or(file.target_trace),
            args.draft_trace.clone().or(file.draft_trace),
        ) {
            (Some(t), Some(d)) => Some((t, d)),
            (None, None) => None,
            _ => bail!("trace replay needs both a target and a draft trace"),
        };
        Ok(Self {
            vocab: args.vocab.or(file.vocab).unwrap_or(256),
            len: args.len.or(file.len).unwrap_or(200),
            seed: resolve_seed(args.seed, file.seed)?,
            p_top1: args.p_top1.or(file.p_top1).unwrap_or(0.9),
            p_top2: args.p_top2.or(file.p_top2).unwrap_or(0.7),
            burst: args.burst.or(file.burst).unwrap_or(2.0),
            tau: args.tau.or(file.tau).unwrap_or(0.4),
            draft_len: args.draft_len.or(file.draft_len).unwrap_or(8),
            max_draft_len: args.max_draft_len.or(file.max_draft_len).unwrap_or(24),
            branch_k: args.branch_k.or(file.branch_k).unwrap_or(2),
            max_branches: args.max_branches.or(file.max_branches).unwrap_or(4),
            merge_window: args.merge_window.or(file.merge_window).unwrap_or(1),
            cost: CostModel::preset(&preset)?,
            repeats: args.repeats.or(file.repeats).unwrap_or(1),
            out: args.out.clone().or(file.out),
            strategies,
            traces,
        })
    }

    pub fn strategy_config(&self, kind: StrategyKind) -> StrategyConfig {
        let mut c = StrategyConfig::new(kind);
        c.tau = self.tau;
        c.draft_len = self.draft_len;
        c.max_draft_len = self.max_draft_len;
        c.branch_k = self.branch_k;
        c.max_branches = self.max_branches;
        c.merge_window = self.merge_window;
        c.max_output_len = self.len;
        c
    }

    /// The draft-length knob actually in force for `kind`, for reporting.
    pub fn reported_draft_len(&self, kind: StrategyKind) -> usize {
        match kind {
            StrategyKind::Autoregressive => 0,
            StrategyKind::BaselineSpec => self.draft_len,
            _ => self.max_draft_len,
        }
    }
}

fn parse_strategies(names: &[String]) -> Result<Vec<StrategyKind>> {
    names
        .iter()
        .map(|n| {
            n.to_ascii_lowercase()
                .parse::<StrategyKind>()
                .map_err(|e| anyhow::anyhow!("{e}"))
        })
        .collect()
}

/// The models a repetition decodes with, plus the profile values reported in
/// CSV rows (taken from the trace manifest when replaying).
pub enum ModelSet {
    Synthetic {
        pairs: Vec<(SyntheticTarget, SyntheticDraft)>,
    },
    Trace {
        target: TraceModel,
        draft: TraceModel,
        p_top1: f64,
        p_top2: f64,
    },
}

impl ModelSet {
    /// Builds per-repeat synthetic pairs (seed + repeat) or loads the traces
    /// once. Returns the set plus the effective output length, clamped to
    /// the trace length when replaying.
    pub fn build(exp: &Experiment) -> Result<(Self, usize)> {
        match &exp.traces {
            None => {
                let profile =
                    specasr_core::AgreementProfile::new(exp.p_top1, exp.p_top2, exp.burst)?;
                let pairs = (0..exp.repeats)
                    .map(|r| {
                        specasr_core::synthetic_pair(
                            exp.seed.wrapping_add(r),
                            exp.vocab,
                            4,
                            profile,
                        )
                    })
                    .collect::<specasr_core::Result<Vec<_>>>()?;
                Ok((Self::Synthetic { pairs }, exp.len))
            }
            Some((t_path, d_path)) => {
                let target = load_trace(t_path)
                    .with_context(|| format!("loading target trace {}", t_path.display()))?;
                let draft = load_trace(d_path)
                    .with_context(|| format!("loading draft trace {}", d_path.display()))?;
                let len = exp.len.min(target.len()).min(draft.len());
                if len < exp.len {
                    eprintln!(
                        "note: trace holds {len} records; clamping output length from {}",
                        exp.len
                    );
                }
                let (p1, p2) = match std::fs::read_to_string(manifest_path(t_path)) {
                    Ok(text) => match serde_json::from_str::<TraceManifest>(&text) {
                        Ok(m) => (m.p_top1, m.p_top2),
                        Err(_) => (0.0, 0.0),
                    },
                    Err(_) => (0.0, 0.0),
                };
                Ok((
                    Self::Trace {
                        target,
                        draft,
                        p_top1: p1,
                        p_top2: p2,
                    },
                    len,
                ))
            }
        }
    }

    pub fn models(&self, repeat: usize) -> (&dyn specasr_core::TokenModel, &dyn specasr_core::TokenModel) {
        match self {
            Self::Synthetic { pairs } => (&pairs[repeat].0, &pairs[repeat].1),
            Self::Trace { target, draft, .. } => (target, draft),
        }
    }

    pub fn reported_profile(&self, exp: &Experiment) -> (f64, f64) {
        match self {
            Self::Synthetic { .. } => (exp.p_top1, exp.p_top2),
            Self::Trace { p_top1, p_top2, .. } => (*p_top1, *p_top2),
        }
    }

    pub fn seed_of(&self, exp: &Experiment, repeat: usize) -> u64 {
        match self {
            Self::Synthetic { .. } => exp.seed.wrapping_add(repeat as u64),
            Self::Trace { .. } => exp.seed,
        }
    }
}

/// Writes CSV lines to `out` or stdout; file writes are whole-buffer so a
/// rerun produces byte-identical files.
pub fn emit_csv(out: Option<&PathBuf>, lines: &[String]) -> Result<()> {
    match out {
        Some(path) => {
            let mut body = lines.join("\n");
            body.push('\n');
            std::fs::write(path, body)
                .with_context(|| format!("writing CSV to {}", path.display()))?;
        }
        None => {
            for line in lines {
                println!("{line}");
            }
        }
    }
    Ok(())
}

/// First position where two transcripts disagree (or the shorter length).
pub fn first_divergence(reference: &specasr_core::Sequence, got: &specasr_core::Sequence) -> usize {
    let base = reference.base_position;
    for (i, (a, b)) in reference.tokens.iter().zip(&got.tokens).enumerate() {
        if a != b {
            return base + i;
        }
    }
    base + reference.tokens.len().min(got.tokens.len())
}
