use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::compressor::{Level, RESNET18_STEM_LEN};

/// A synthetic classification task with planted hyper-classes and
/// calibrated oracle accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTaskConfig {
    #[serde(rename = "K")]
    pub num_classes: usize,
    /// Hyper-class sizes; cluster `i` holds the next `planted_sizes[i]` classes.
    pub planted_sizes: Vec<usize>,
    pub clustifier_accuracy: f64,
    pub per_cluster_accuracy: Vec<f64>,
    /// Decay length of clustifier errors along the confusion ring; 0 sends
    /// every error to the next cluster.
    pub confusion_spread: f64,
    pub samples_per_class: usize,
    pub seed: u64,
    #[serde(default)]
    pub oracle: OracleShape,
}

/// Shape parameters of the oracle outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleShape {
    /// Softmax temperature of correct clustifier predictions: the off-peak
    /// mass is `0.5 · u^(1/T)` for `u ~ U(0, 1)`.
    pub temperature: f64,
    /// Temperature used when the clustifier is wrong.
    pub error_temperature: f64,
    /// Dirichlet concentration shared by all clusters in the off-peak mass.
    pub noise_floor: f64,
    /// Extra concentration on the true cluster.
    pub true_boost: f64,
    /// Extra concentration spread over the clusters usually confused with
    /// the predicted one.
    pub confusion_pull: f64,
    /// Range of a head's peak probability on in-cluster inputs; `lo > 0.5`.
    pub head_peak: [f64; 2],
}

impl Default for OracleShape {
    fn default() -> Self {
        Self {
            temperature: 0.6,
            error_temperature: 3.0,
            noise_floor: 0.05,
            true_boost: 1.5,
            confusion_pull: 3.0,
            head_peak: [0.55, 0.95],
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), HarnessError> {
    if ok {
        Ok(())
    } else {
        Err(HarnessError::BadConfig(msg()))
    }
}

fn unit_interval(x: f64) -> bool {
    x > 0.0 && x <= 1.0
}

impl SyntheticTaskConfig {
    pub fn num_clusters(&self) -> usize {
        self.planted_sizes.len()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        check(self.num_classes >= 1, || "K must be positive".into())?;
        check(!self.planted_sizes.is_empty(), || {
            "planted_sizes is empty".into()
        })?;
        check(self.planted_sizes.iter().all(|&s| s > 0), || {
            "planted sizes must be positive".into()
        })?;
        let total: usize = self.planted_sizes.iter().sum();
        check(total == self.num_classes, || {
            format!("planted sizes sum to {total}, K = {}", self.num_classes)
        })?;
        check(unit_interval(self.clustifier_accuracy), || {
            format!(
                "clustifier_accuracy {} outside (0, 1]",
                self.clustifier_accuracy
            )
        })?;
        check(
            self.per_cluster_accuracy.len() == self.num_clusters(),
            || {
                format!(
                    "{} per-cluster accuracies for {} clusters",
                    self.per_cluster_accuracy.len(),
                    self.num_clusters()
                )
            },
        )?;
        if let Some(a) = self
            .per_cluster_accuracy
            .iter()
            .find(|a| !unit_interval(**a))
        {
            return Err(HarnessError::BadConfig(format!(
                "cluster accuracy {a} outside (0, 1]"
            )));
        }
        check(
            self.confusion_spread >= 0.0 && self.confusion_spread.is_finite(),
            || "confusion_spread must be finite and >= 0".into(),
        )?;
        check(self.samples_per_class >= 2, || {
            "samples_per_class must be at least 2".into()
        })?;
        let o = &self.oracle;
        check(o.temperature > 0.0 && o.error_temperature > 0.0, || {
            "temperatures must be positive".into()
        })?;
        check(
            o.noise_floor > 0.0 && o.true_boost >= 0.0 && o.confusion_pull >= 0.0,
            || "noise_floor must be positive, true_boost and confusion_pull non-negative".into(),
        )?;
        let [lo, hi] = o.head_peak;
        check(lo > 0.5 && lo <= hi && hi <= 1.0, || {
            format!("head_peak [{lo}, {hi}] must satisfy 0.5 < lo <= hi <= 1")
        })?;
        Ok(())
    }

    /// Oracle accuracies of the starred configuration reported for ResNet18
    /// on CIFAR100: six hyper-classes of 9/28/23/15/14/11 classes.
    pub fn reference(samples_per_class: usize, seed: u64) -> Self {
        Self {
            num_classes: 100,
            planted_sizes: vec![9, 28, 23, 15, 14, 11],
            clustifier_accuracy: 0.923,
            per_cluster_accuracy: vec![0.843, 0.769, 0.748, 0.810, 0.841, 0.832],
            confusion_spread: 0.6,
            samples_per_class,
            seed,
            oracle: OracleShape::default(),
        }
    }
}

/// How the dataset is divided into calibration and test halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SplitPolicy {
    /// Even sample ids calibrate, odd ids test.
    Parity,
    /// A seeded shuffle; the first half calibrates.
    Shuffled { seed: u64 },
}

/// Per-component model costs derived from the ResNet18 reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlopConfig {
    pub shared_prefix_len: usize,
    pub width_ratio: f64,
    pub clustifier_level: Level,
    /// One rung per hyper-class head; `None` uses `clustifier_level` for all.
    pub head_levels: Option<Vec<Level>>,
}

impl Default for FlopConfig {
    fn default() -> Self {
        Self {
            shared_prefix_len: RESNET18_STEM_LEN,
            width_ratio: 0.25,
            clustifier_level: Level::L44,
            head_levels: None,
        }
    }
}

/// Everything `simulate` and `sweep` need besides the thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub task: SyntheticTaskConfig,
    #[serde(default)]
    pub flops: FlopConfig,
    /// Top-1 of the monolithic model that gains are measured against.
    #[serde(default = "default_baseline")]
    pub baseline_accuracy: f64,
    #[serde(default = "default_split")]
    pub split: SplitPolicy,
    #[serde(default = "default_force")]
    pub force_include_predicted: bool,
}

fn default_baseline() -> f64 {
    0.76
}

fn default_split() -> SplitPolicy {
    SplitPolicy::Parity
}

fn default_force() -> bool {
    true
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.task.validate()?;
        check(unit_interval(self.baseline_accuracy), || {
            format!(
                "baseline_accuracy {} outside (0, 1]",
                self.baseline_accuracy
            )
        })?;
        if let Some(levels) = &self.flops.head_levels {
            check(levels.len() == self.task.num_clusters(), || {
                format!(
                    "{} head levels for {} clusters",
                    levels.len(),
                    self.task.num_clusters()
                )
            })?;
        }
        Ok(())
    }

    /// The reference task at 200 samples per class (10,000 test samples).
    pub fn reference(seed: u64) -> Self {
        Self {
            task: SyntheticTaskConfig::reference(200, seed),
            flops: FlopConfig::default(),
            baseline_accuracy: default_baseline(),
            split: SplitPolicy::Parity,
            force_include_predicted: true,
        }
    }
}
