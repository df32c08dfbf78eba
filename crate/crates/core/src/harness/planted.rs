use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::HarnessError;
use crate::clustering::IndicatorMatrix;
use crate::linalg::DenseMatrix;

/// Indicator vectors of `Σ sizes` classes falling into planted groups.
///
/// Group centers are unit distance apart and each class adds Gaussian noise of
/// RMS radius `1 / ratio`. The points are embedded in the probability simplex
/// through the directions `e_2j − e_2j+1`, so distances are preserved up to a
/// common scale. Classes are shuffled; the second value is the planted group
/// of each (shuffled) class.
pub fn planted_indicators(
    sizes: &[usize],
    ratio: f64,
    seed: u64,
) -> Result<(IndicatorMatrix, Vec<usize>), HarnessError> {
    let g = sizes.len();
    let k: usize = sizes.iter().sum();
    if g == 0 || sizes.contains(&0) {
        return Err(HarnessError::BadConfig(
            "group sizes must be positive".into(),
        ));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(HarnessError::BadConfig(format!("separation ratio {ratio}")));
    }
    if 2 * g > k {
        return Err(HarnessError::BadConfig(format!(
            "{g} groups need at least {} classes",
            2 * g
        )));
    }
    let noise_dim = (k / 2 - g).min(16);
    let dims = g + noise_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if noise_dim > 0 {
        Some(
            Normal::new(0.0, 1.0 / (ratio * (noise_dim as f64).sqrt()))
                .map_err(|e| HarnessError::BadConfig(e.to_string()))?,
        )
    } else {
        None
    };
    let truth: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(grp, &n)| std::iter::repeat_n(grp, n))
        .collect();
    let points: Vec<Vec<f64>> = truth
        .iter()
        .map(|&grp| {
            let mut x = vec![0.0; dims];
            x[grp] = std::f64::consts::FRAC_1_SQRT_2;
            if let Some(n) = &noise {
                x[g..].iter_mut().for_each(|v| *v = n.sample(&mut rng));
            }
            x
        })
        .collect();
    let max_abs = points.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = 0.99 * std::f64::consts::SQRT_2 / (k as f64 * max_abs);
    let mut m = DenseMatrix::zeros(k, k);
    for (i, x) in points.iter().enumerate() {
        for j in 0..k {
            m[(i, j)] = 1.0 / k as f64;
        }
        for (j, v) in x.iter().enumerate() {
            let d = scale * v * std::f64::consts::FRAC_1_SQRT_2;
            m[(i, 2 * j)] += d;
            m[(i, 2 * j + 1)] -= d;
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);
    let ind = IndicatorMatrix::new(m)?.permuted(&order);
    let truth = order.iter().map(|&o| truth[o]).collect();
    Ok((ind, truth))
}
