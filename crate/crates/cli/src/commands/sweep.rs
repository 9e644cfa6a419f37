//! `sweep`: vary one knob over a grid and emit CSV rows in deterministic
//! (strategy, grid point, repeat) order.

use anyhow::{bail, Context, Result};
use clap::Args;
use specasr_core::{CostModel, StrategyKind, CSV_HEADER};

use super::{emit_csv, load_file_config, Experiment, ExperimentArgs, ModelSet};
use crate::commands::run::{decode_one, decode_references};

#[derive(Args, Clone, Debug, Default)]
pub struct SweepArgs {
    #[command(flatten)]
    pub exp: ExperimentArgs,
    /// Variable to sweep: tau, draft-len, p-top1, or cost-ratio.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Comma-separated grid values; each variable has a sensible default grid.
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum SweepVar {
    Tau,
    DraftLen,
    PTop1,
    CostRatio,
}

impl SweepVar {
    fn parse(name: &str) -> Result<Self> {
        match name.replace('_', "-").as_str() {
            "tau" => Ok(Self::Tau),
            "draft-len" => Ok(Self::DraftLen),
            "p-top1" => Ok(Self::PTop1),
            "cost-ratio" => Ok(Self::CostRatio),
            other => bail!("unknown sweep variable '{other}' (expected tau, draft-len, p-top1, or cost-ratio)"),
        }
    }

    fn default_grid(self) -> Vec<f64> {
        match self {
            Self::Tau => (0..10).map(|i| f64::from(i) / 10.0).collect(),
            Self::DraftLen => vec![2.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0],
            Self::PTop1 => vec![0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 1.0],
            Self::CostRatio => vec![2.0, 4.0, 8.0, 16.0, 30.0, 64.0],
        }
    }
}

fn parse_grid(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad grid value {s:?}"))
        })
        .collect()
}

pub fn execute(args: SweepArgs) -> Result<()> {
    let file = load_file_config(args.exp.config.as_ref())?;
    let var_name = args
        .sweep
        .clone()
        .or(file.sweep.clone())
        .unwrap_or_else(|| "tau".to_string());
    let var = SweepVar::parse(&var_name)?;
    let grid = match (&args.grid, &file.grid) {
        (Some(raw), _) => parse_grid(raw)?,
        (None, Some(values)) => values.clone(),
        (None, None) => var.default_grid(),
    };
    if grid.is_empty() {
        bail!("empty sweep grid");
    }

    let exp = Experiment::resolve(&args.exp, &[StrategyKind::Asp])?;
    if var == SweepVar::PTop1 && exp.traces.is_some() {
        bail!("a p-top1 sweep regenerates the models and cannot replay traces");
    }

    let mut lines = vec![CSV_HEADER.to_string()];
    for kind in exp.strategies.clone() {
        for &g in &grid {
            let mut point = exp.clone();
            match var {
                SweepVar::Tau => {
                    if !(0.0..=1.0).contains(&g) {
                        bail!("tau grid value {g} outside [0, 1]");
                    }
                    point.tau = g;
                }
                SweepVar::DraftLen => {
                    if g < 1.0 || g.fract() != 0.0 {
                        bail!("draft-len grid value {g} is not a positive integer");
                    }
                    point.draft_len = g as usize;
                    point.max_draft_len = g as usize;
                }
                SweepVar::PTop1 => {
                    if !(0.0..=1.0).contains(&g) {
                        bail!("p-top1 grid value {g} outside [0, 1]");
                    }
                    point.p_top1 = g;
                }
                SweepVar::CostRatio => {
                    if g <= 0.0 {
                        bail!("cost-ratio grid value {g} must be positive");
                    }
                    point.cost = CostModel {
                        draft_base: 1.0,
                        draft_per_token: 0.02,
                        target_base: g,
                        target_per_token: 0.05,
                    };
                }
            }
            let (models, len) = ModelSet::build(&point)?;
            point.len = len;
            let references = decode_references(&point, &models)?;
            for rep in 0..point.repeats as usize {
                let row = decode_one(&point, &models, &references, kind, rep)?;
                lines.push(row.render());
            }
        }
    }
    emit_csv(exp.out.as_ref(), &lines)
}
