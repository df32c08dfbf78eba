use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use condcls_core::compressor::{Level, RESNET18_STEM_LEN};

/// Hyper-class clustering, compression planning and routed-evaluation sweeps.
#[derive(Debug, Parser)]
#[command(name = "condcls", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Group classes into hyper-classes from indicator vectors or raw samples.
    Cluster(ClusterArgs),
    /// Rewrite a model to a compression-ladder rung.
    Plan(PlanArgs),
    /// Per-layer multiply-accumulate counts of a model.
    Flops(FlopsArgs),
    /// Evaluate the routed pipeline on a synthetic task at one threshold.
    Simulate(SimulateArgs),
    /// Evaluate the routed pipeline over a range of thresholds.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Indicator rows (`[[…], …]` or `{"rows", "cols", "data"}`) or raw
    /// samples (`{"K": n, "samples": [{"probs": […], "label": i}, …]}`).
    pub input: PathBuf,
    /// Number of hyper-classes; chosen by the eigengap when omitted.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Model description (JSON layer list).
    pub ir: PathBuf,
    #[arg(long, default_value_t = Level::L44)]
    pub level: Level,
    #[arg(long = "shared-prefix", default_value_t = RESNET18_STEM_LEN)]
    pub shared_prefix: usize,
    #[arg(long = "width-ratio", default_value_t = 0.25)]
    pub width_ratio: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    pub ir: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    /// Simulation config (JSON); the reference task when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed; the shuffled split uses `seed + 1`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[arg(long, default_value_t = 0.7)]
    pub tau: f64,
    /// Also write one JSON line per test sample with its activation set.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Also write the generated dataset.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    /// `start:stop:step` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "0.5:0.95:0.05", value_parser = parse_taus)]
    pub taus: Taus,
    /// Also write the reports as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Taus(pub Vec<f64>);

/// Grid points are rounded to 12 decimals so `0.5:0.95:0.05` yields `0.95`
/// rather than `0.9500000000000001`.
pub fn parse_taus(s: &str) -> Result<Taus, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !step.is_finite() || step <= 0.0 {
                return Err(format!("step must be positive, got {step}"));
            }
            if stop < start {
                return Err(format!("stop {stop} is below start {start}"));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok(Taus(
                (0..=n)
                    .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                    .collect(),
            ))
        }
        [_] => s.split(',').map(num).collect::<Result<_, _>>().map(Taus),
        _ => Err(format!("expected start:stop:step or a list, got {s:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_ranges() {
        let t = parse_taus("0.5:0.95:0.05").unwrap().0;
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.5);
        assert_eq!(t[9], 0.95);
        assert_eq!(t[2], 0.6);
        assert_eq!(parse_taus("0.7").unwrap().0, vec![0.7]);
        assert_eq!(parse_taus("0.5, 0.9").unwrap().0, vec![0.5, 0.9]);
        assert!(parse_taus("0.5:0.4:0.1").is_err());
        assert!(parse_taus("0.5:0.9:0").is_err());
        assert!(parse_taus("a").is_err());
    }

    #[test]
    fn command_line_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
