//! `run` / `ablate`: decode the same inputs with each strategy, enforce the
//! losslessness gate, and emit one CSV row per (strategy, repeat).

use anyhow::{Context, Result};
use clap::Args;
use specasr_core::{
    decode, CsvRow, RunMetrics, Sequence, StrategyKind, CSV_HEADER,
};

use super::{emit_csv, first_divergence, Experiment, ExperimentArgs, ModelSet};

#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Print the decoded transcript to stdout (only when CSV goes to a file).
    #[arg(long)]
    pub print_transcript: bool,
}

pub fn execute(args: RunArgs, force_strategies: Option<Vec<StrategyKind>>) -> Result<()> {
    let mut exp = Experiment::resolve(&args.exp, StrategyKind::ALL.as_slice())?;
    if let Some(forced) = force_strategies {
        exp.strategies = forced;
    }
    let (models, len) = ModelSet::build(&exp)?;
    let mut run_exp = exp.clone();
    run_exp.len = len;

    let references = decode_references(&run_exp, &models)?;
    let mut lines = vec![CSV_HEADER.to_string()];
    for kind in &exp.strategies {
        for rep in 0..run_exp.repeats as usize {
            let row = decode_one(&run_exp, &models, &references, *kind, rep)?;
            lines.push(row.render());
        }
    }
    emit_csv(run_exp.out.as_ref(), &lines)?;

    if args.print_transcript && run_exp.out.is_some() {
        let toks: Vec<String> = references[0].0.tokens.iter().map(|t| t.0.to_string()).collect();
        println!("transcript[seed {}]: {}", models.seed_of(&run_exp, 0), toks.join(" "));
    }
    Ok(())
}

/// Greedy reference transcript and metrics for each repeat.
pub fn decode_references(
    exp: &Experiment,
    models: &ModelSet,
) -> Result<Vec<(Sequence, RunMetrics)>> {
    (0..exp.repeats as usize)
        .map(|rep| {
            let (target, _) = models.models(rep);
            let cfg = exp.strategy_config(StrategyKind::Autoregressive);
            decode(target, target, &Sequence::empty(), &cfg)
                .with_context(|| format!("greedy reference, repeat {rep}"))
        })
        .collect()
}

/// Runs one (strategy, repeat) cell and converts it to a CSV row, failing
/// with a transcript-mismatch error if the output strays from the reference.
pub fn decode_one(
    exp: &Experiment,
    models: &ModelSet,
    references: &[(Sequence, RunMetrics)],
    kind: StrategyKind,
    rep: usize,
) -> Result<CsvRow> {
    let (target, draft) = models.models(rep);
    let (reference, ar_metrics) = &references[rep];
    let cfg = exp.strategy_config(kind);
    let (out, metrics) = if kind == StrategyKind::Autoregressive {
        (reference.clone(), ar_metrics.clone())
    } else {
        decode(draft, target, &Sequence::empty(), &cfg)
            .with_context(|| format!("decoding {} (repeat {rep})", kind.name()))?
    };
    if out != *reference {
        let position = first_divergence(reference, &out);
        return Err(specasr_core::Error::TranscriptMismatch { position }).with_context(|| {
            format!(
                "{} (repeat {rep}) diverged from the greedy reference at position {position}",
                kind.name()
            )
        });
    }
    let (p1, p2) = models.reported_profile(exp);
    let row = CsvRow::from_run(
        kind.name(),
        models.seed_of(exp, rep),
        p1,
        p2,
        exp.tau,
        exp.reported_draft_len(kind),
        &metrics,
        ar_metrics,
        &exp.cost,
    )?;
    Ok(row)
}
