use std::collections::BTreeMap;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FlopConfig, SimulationConfig};
use super::task::{calibrate, gen_synthetic_task, split, Calibration, Dataset, Sample};
use super::HarnessError;
use crate::clustering::ClusterAssignment;
use crate::compressor::{plan, resnet18, WidthPolicy};
use crate::router::{
    activate_with, fuse, top_k, ActivationOptions, ActivationRecord, ActivationSet,
    ClusterConfidence, RouterError,
};

/// Multiply-accumulates of each pipeline component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopTable {
    pub shared: u64,
    pub clustifier: u64,
    pub heads: Vec<u64>,
    /// The uncompressed single model over all classes.
    pub original: u64,
}

impl FlopTable {
    /// Costs from the ResNet18 reference: the shared prefix is the original
    /// model's first layers, the clustifier and each head are the compressed
    /// tail of a ResNet18 with as many outputs as they have classes.
    pub fn from_config(
        cfg: &FlopConfig,
        clusters: &ClusterAssignment,
    ) -> Result<Self, HarnessError> {
        let widths = WidthPolicy::new(cfg.width_ratio)?;
        let k1 = clusters.num_clusters();
        let levels = match &cfg.head_levels {
            Some(l) if l.len() != k1 => {
                return Err(HarnessError::BadConfig(format!(
                    "{} head levels for {k1} clusters",
                    l.len()
                )))
            }
            Some(l) => l.clone(),
            None => vec![cfg.clustifier_level; k1],
        };
        let reference = resnet18(clusters.num_classes());
        let original = reference.flops()?;
        let shared = original - reference.flops_from(cfg.shared_prefix_len)?;
        let tail = |classes, level| {
            plan(&resnet18(classes), level, cfg.shared_prefix_len, &widths)
                .map(|p| p.tail_flops_after)
        };
        let clustifier = tail(k1, cfg.clustifier_level)?;
        let heads = clusters
            .sizes()
            .iter()
            .zip(levels)
            .map(|(&size, level)| tail(size, level))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            shared,
            clustifier,
            heads,
            original,
        })
    }

    /// Cost of one input that runs the heads of `active`.
    pub fn sample_flops(&self, active: &[usize]) -> u64 {
        self.shared + self.clustifier + active.iter().map(|&f| self.heads[f]).sum::<u64>()
    }
}

/// Pipeline quality and cost at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub tau: f64,
    pub samples: usize,
    pub top1: f64,
    pub top5: f64,
    pub mean_flops_per_sample: f64,
    pub mean_active: f64,
    /// Entry `n - 1` counts the samples that activated `n` hyper-classes.
    pub activation_histogram: Vec<u64>,
    pub acc_gain: f64,
    pub cc_save: f64,
}

struct Outcome {
    active: usize,
    flops: u64,
    top1: bool,
    top5: bool,
}

/// Routes samples through activation and fusion against a frozen calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluator {
    pub clusters: ClusterAssignment,
    pub calibration: Calibration,
    pub flops: FlopTable,
    pub options: ActivationOptions,
    /// Top-1 of the uncompressed model; `acc_gain` is measured against it.
    pub baseline_accuracy: f64,
}

impl Evaluator {
    fn check_disjoint(&self, test: &[&Sample]) -> Result<(), HarnessError> {
        match test
            .iter()
            .find(|s| self.calibration.sample_ids.contains(&s.id))
        {
            Some(s) => Err(HarnessError::SplitOverlap { sample_id: s.id }),
            None => Ok(()),
        }
    }

    /// Activation set of one sample.
    pub fn route(&self, sample: &Sample, tau: f64) -> Result<ActivationSet, HarnessError> {
        let v = ClusterConfidence::new(sample.clustifier.clone())?;
        Ok(activate_with(&v, &self.calibration.cm, tau, &self.options)?)
    }

    /// Fused global class scores of one sample.
    pub fn scores(&self, sample: &Sample, act: &ActivationSet) -> Result<Vec<f64>, HarnessError> {
        let k1 = self.clusters.num_clusters();
        if sample.heads.len() != k1 {
            return Err(RouterError::DimensionMismatch(format!(
                "sample {} has {} head outputs for {k1} clusters",
                sample.id,
                sample.heads.len()
            ))
            .into());
        }
        let outputs: BTreeMap<usize, Vec<f64>> = act
            .clusters()
            .into_iter()
            .map(|f| (f, sample.heads[f].clone()))
            .collect();
        Ok(fuse(act, &outputs, &self.clusters)?)
    }

    fn outcome(&self, sample: &Sample, tau: f64) -> Result<Outcome, HarnessError> {
        let act = self.route(sample, tau)?;
        let scores = self.scores(sample, &act)?;
        let best = top_k(&scores, 5);
        Ok(Outcome {
            active: act.len(),
            flops: self.flops.sample_flops(&act.clusters()),
            top1: best.first() == Some(&sample.class),
            top5: best.contains(&sample.class),
        })
    }

    /// Runs every test sample at `tau`. Samples are processed in parallel and
    /// reduced in input order.
    pub fn evaluate(&self, test: &[&Sample], tau: f64) -> Result<EvaluationReport, HarnessError> {
        self.check_disjoint(test)?;
        let outcomes = test
            .par_iter()
            .map(|s| self.outcome(s, tau))
            .collect::<Result<Vec<_>, _>>()?;
        let mut histogram = vec![0u64; self.clusters.num_clusters()];
        let (mut flops, mut active, mut hit1, mut hit5) = (0u128, 0u64, 0u64, 0u64);
        for o in &outcomes {
            histogram[o.active - 1] += 1;
            flops += u128::from(o.flops);
            active += o.active as u64;
            hit1 += u64::from(o.top1);
            hit5 += u64::from(o.top5);
        }
        let n = test.len().max(1) as f64;
        let top1 = hit1 as f64 / n;
        let mean_flops = flops as f64 / n;
        Ok(EvaluationReport {
            tau,
            samples: test.len(),
            top1,
            top5: hit5 as f64 / n,
            mean_flops_per_sample: mean_flops,
            mean_active: active as f64 / n,
            activation_histogram: histogram,
            acc_gain: top1 - self.baseline_accuracy,
            cc_save: 1.0 - mean_flops / self.flops.original as f64,
        })
    }

    /// One report per threshold; `taus` must be strictly increasing in (0, 1).
    pub fn sweep_tau(
        &self,
        test: &[&Sample],
        taus: &[f64],
    ) -> Result<Vec<EvaluationReport>, HarnessError> {
        if taus.is_empty() {
            return Err(HarnessError::InvalidTaus("no thresholds".into()));
        }
        if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(HarnessError::InvalidTaus(format!("{t} outside (0, 1)")));
        }
        if let Some(w) = taus.windows(2).find(|w| w[0] >= w[1]) {
            return Err(HarnessError::InvalidTaus(format!(
                "{} is not above {}",
                w[1], w[0]
            )));
        }
        taus.iter().map(|&t| self.evaluate(test, t)).collect()
    }

    /// Activation records of every test sample at `tau`, in input order.
    pub fn trace(&self, test: &[&Sample], tau: f64) -> Result<Vec<ActivationRecord>, HarnessError> {
        self.check_disjoint(test)?;
        test.par_iter()
            .map(|s| self.route(s, tau).map(|a| ActivationRecord::new(s.id, &a)))
            .collect()
    }
}

/// A generated dataset split and calibrated, ready to evaluate.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    pub evaluator: Evaluator,
    test: Vec<usize>,
}

impl Simulation {
    pub fn new(cfg: &SimulationConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let dataset = gen_synthetic_task(&cfg.task)?;
        let (calibration, test) = {
            let parts = split(&dataset, cfg.split);
            let cal = calibrate(&parts.calibration, cfg.task.num_clusters())?;
            let index: BTreeMap<u64, usize> = dataset
                .samples
                .iter()
                .enumerate()
                .map(|(i, s)| (s.id, i))
                .collect();
            let test = parts.test.iter().map(|s| index[&s.id]).collect();
            (cal, test)
        };
        let evaluator = Evaluator {
            flops: FlopTable::from_config(&cfg.flops, &dataset.assignment)?,
            clusters: dataset.assignment.clone(),
            calibration,
            options: ActivationOptions {
                force_include_predicted: cfg.force_include_predicted,
                ..ActivationOptions::default()
            },
            baseline_accuracy: cfg.baseline_accuracy,
        };
        Ok(Self {
            dataset,
            evaluator,
            test,
        })
    }

    pub fn test_samples(&self) -> Vec<&Sample> {
        self.test
            .iter()
            .map(|&i| &self.dataset.samples[i])
            .collect()
    }

    pub fn evaluate(&self, tau: f64) -> Result<EvaluationReport, HarnessError> {
        self.evaluator.evaluate(&self.test_samples(), tau)
    }

    pub fn sweep_tau(&self, taus: &[f64]) -> Result<Vec<EvaluationReport>, HarnessError> {
        self.evaluator.sweep_tau(&self.test_samples(), taus)
    }

    pub fn trace(&self, tau: f64) -> Result<Vec<ActivationRecord>, HarnessError> {
        self.evaluator.trace(&self.test_samples(), tau)
    }
}

/// `x` with six significant digits, in the style of C's `%g`.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        format!(
            "{}e{}{:02}",
            trim(mantissa),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    } else {
        trim(&format!("{x:.*}", (5 - exp) as usize))
    }
}

/// One row per report: `tau,top1,top5,hist_1..hist_K1,acc_gain,cc_save`.
pub fn write_csv<W: Write>(out: W, reports: &[EvaluationReport]) -> io::Result<()> {
    let k1 = reports.first().map_or(0, |r| r.activation_histogram.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["tau".to_string(), "top1".into(), "top5".into()];
    header.extend((1..=k1).map(|n| format!("hist_{n}")));
    header.extend(["acc_gain".to_string(), "cc_save".into()]);
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![format_sig6(r.tau), format_sig6(r.top1), format_sig6(r.top5)];
        row.extend(r.activation_histogram.iter().map(u64::to_string));
        row.extend([format_sig6(r.acc_gain), format_sig6(r.cc_save)]);
        w.write_record(&row)?;
    }
    w.flush()
}
