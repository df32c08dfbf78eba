use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{SplitPolicy, SyntheticTaskConfig};
use super::HarnessError;
use crate::clustering::ClusterAssignment;
use crate::router::{confusion_matrix, ClusterConfidence, ConfusionMatrix};

/// One evaluation input as seen by the oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub class: usize,
    pub cluster: usize,
    /// Clustifier softmax over hyper-classes.
    pub clustifier: Vec<f64>,
    /// Softmax of every hyper-class head, indexed by cluster then by the
    /// class's position inside that cluster.
    pub heads: Vec<Vec<f64>>,
}

impl Sample {
    pub fn predicted_cluster(&self) -> usize {
        crate::router::top1(&self.clustifier)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub config: SyntheticTaskConfig,
    pub assignment: ClusterAssignment,
    pub samples: Vec<Sample>,
}

/// Row-stochastic `P(predicted = j | true = g)`.
///
/// The diagonal is the clustifier accuracy; errors fall on clusters
/// `g + 1, g + 2, …` (mod K1) with weights `exp(-(d - 1) / spread)`.
pub fn confusion_kernel(cfg: &SyntheticTaskConfig) -> Vec<Vec<f64>> {
    let k1 = cfg.num_clusters();
    let acc = cfg.clustifier_accuracy;
    (0..k1)
        .map(|g| {
            if k1 == 1 {
                return vec![1.0];
            }
            let weights: Vec<f64> = (0..k1)
                .map(|j| {
                    let d = (j + k1 - g) % k1;
                    match d {
                        0 => 0.0,
                        _ if cfg.confusion_spread == 0.0 => f64::from(u8::from(d == 1)),
                        _ => (-((d - 1) as f64) / cfg.confusion_spread).exp(),
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            weights
                .iter()
                .enumerate()
                .map(|(j, w)| if j == g { acc } else { (1.0 - acc) * w / total })
                .collect()
        })
        .collect()
}

fn dirichlet(rng: &mut ChaCha8Rng, alpha: &[f64]) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|d| *d /= total);
    } else {
        let n = draws.len() as f64;
        draws.iter_mut().for_each(|d| *d = 1.0 / n);
    }
    draws
}

struct Generator<'a> {
    cfg: &'a SyntheticTaskConfig,
    assignment: &'a ClusterAssignment,
    kernel: Vec<Vec<f64>>,
    members: Vec<Vec<usize>>,
}

impl Generator<'_> {
    fn sample(&self, id: u64, class: usize) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(id);
        let g = self.assignment.cluster_of(class);
        let clustifier = self.clustifier_output(&mut rng, g);
        let heads = (0..self.members.len())
            .map(|f| {
                let m = self.members[f].len();
                if f == g {
                    self.true_head(&mut rng, g, self.assignment.local_index(class))
                } else {
                    vec![1.0 / m as f64; m]
                }
            })
            .collect();
        Sample {
            id,
            class,
            cluster: g,
            clustifier,
            heads,
        }
    }

    /// One-hot on the sampled prediction, mixed with a Dirichlet perturbation
    /// of weight `eps < 0.5`, so the prediction stays the argmax.
    fn clustifier_output(&self, rng: &mut ChaCha8Rng, g: usize) -> Vec<f64> {
        let k1 = self.kernel.len();
        if k1 == 1 {
            return vec![1.0];
        }
        let pred = WeightedIndex::new(&self.kernel[g])
            .expect("kernel rows are valid weights")
            .sample(rng);
        let o = &self.cfg.oracle;
        let t = if pred == g {
            o.temperature
        } else {
            o.error_temperature
        };
        let eps = 0.5 * rng.random::<f64>().powf(1.0 / t);
        let pull_total: f64 = (0..k1)
            .filter(|&j| j != pred)
            .map(|j| self.kernel[j][pred])
            .sum();
        let alpha: Vec<f64> = (0..k1)
            .map(|j| {
                let mut a = o.noise_floor;
                if j == g {
                    a += o.true_boost;
                }
                if j != pred && pull_total > 0.0 {
                    a += o.confusion_pull * self.kernel[j][pred] / pull_total;
                }
                a
            })
            .collect();
        let noise = dirichlet(rng, &alpha);
        noise
            .iter()
            .enumerate()
            .map(|(j, d)| eps * d + if j == pred { 1.0 - eps } else { 0.0 })
            .collect()
    }

    /// Peak `p ~ U(lo, hi)` on the right class with the cluster's accuracy,
    /// otherwise on a uniformly chosen wrong member; the rest is spread at random.
    fn true_head(&self, rng: &mut ChaCha8Rng, g: usize, local: usize) -> Vec<f64> {
        let m = self.members[g].len();
        if m == 1 {
            return vec![1.0];
        }
        let correct = rng.random::<f64>() < self.cfg.per_cluster_accuracy[g];
        let peak_at = if correct {
            local
        } else {
            let r = rng.random_range(0..m - 1);
            if r >= local {
                r + 1
            } else {
                r
            }
        };
        let [lo, hi] = self.cfg.oracle.head_peak;
        let p = if lo < hi {
            rng.random_range(lo..hi)
        } else {
            lo
        };
        let rest: Vec<f64> = (0..m - 1).map(|_| Exp1.sample(rng)).collect();
        let rest_total: f64 = rest.iter().sum();
        let mut out = Vec::with_capacity(m);
        let mut it = rest.iter();
        for i in 0..m {
            out.push(if i == peak_at {
                p
            } else {
                (1.0 - p) * it.next().unwrap() / rest_total
            });
        }
        out
    }
}

/// Draws `K · samples_per_class` samples; sample `id = class · n + i`.
///
/// Each sample uses its own ChaCha stream, so the result does not depend on
/// how the work is scheduled.
pub fn gen_synthetic_task(cfg: &SyntheticTaskConfig) -> Result<Dataset, HarnessError> {
    cfg.validate()?;
    let assignment = ClusterAssignment::from_sizes(&cfg.planted_sizes, cfg.seed)?;
    let generator = Generator {
        cfg,
        assignment: &assignment,
        kernel: confusion_kernel(cfg),
        members: (0..cfg.num_clusters())
            .map(|f| assignment.members(f))
            .collect(),
    };
    let n = cfg.samples_per_class;
    let samples = (0..cfg.num_classes * n)
        .into_par_iter()
        .map(|i| generator.sample(i as u64, i / n))
        .collect();
    Ok(Dataset {
        config: cfg.clone(),
        assignment,
        samples,
    })
}

/// Disjoint calibration and test views of a dataset, each in id order.
#[derive(Debug, Clone)]
pub struct Split<'a> {
    pub calibration: Vec<&'a Sample>,
    pub test: Vec<&'a Sample>,
}

pub fn split(dataset: &Dataset, policy: SplitPolicy) -> Split<'_> {
    let (calibration, test) = match policy {
        SplitPolicy::Parity => dataset.samples.iter().partition(|s| s.id % 2 == 0),
        SplitPolicy::Shuffled { seed } => {
            let mut ids: Vec<u64> = dataset.samples.iter().map(|s| s.id).collect();
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let cal: BTreeSet<u64> = ids[..ids.len() / 2].iter().copied().collect();
            dataset.samples.iter().partition(|s| cal.contains(&s.id))
        }
    };
    Split { calibration, test }
}

/// Frozen clustifier benchmark: its confusion matrix and the ids it saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub cm: ConfusionMatrix,
    pub sample_ids: BTreeSet<u64>,
}

/// Benchmarks the clustifier on `samples`.
pub fn calibrate(samples: &[&Sample], num_clusters: usize) -> Result<Calibration, HarnessError> {
    let mut pairs = Vec::with_capacity(samples.len());
    for s in samples {
        ClusterConfidence::new(s.clustifier.clone())?;
        pairs.push((s.predicted_cluster(), s.cluster));
    }
    Ok(Calibration {
        cm: confusion_matrix(&pairs, num_clusters)?,
        sample_ids: samples.iter().map(|s| s.id).collect(),
    })
}
