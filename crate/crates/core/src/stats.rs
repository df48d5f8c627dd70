use rand::Rng;
use serde::{Deserialize, Serialize};

/// Monte-Carlo point estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub mean: f64,
    pub stderr: f64,
    pub batches: usize,
    pub samples: usize,
}

impl EstimateWithError {
    pub fn exact(value: f64) -> Self {
        Self { mean: value, stderr: 0.0, batches: 0, samples: 0 }
    }

    /// Batch means over `values` split into `batches` contiguous chunks.
    pub fn from_samples(values: &[f64], batches: usize) -> Self {
        let n = values.len();
        let batches = batches.clamp(1, n.max(1));
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, batches: 0, samples: 0 };
        }
        let means: Vec<f64> = (0..batches)
            .map(|b| {
                let lo = b * n / batches;
                let hi = (b + 1) * n / batches;
                values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            })
            .collect();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if batches > 1 {
            let bm = means.iter().sum::<f64>() / batches as f64;
            let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
            (var / batches as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, batches, samples: n }
    }

    /// Like [`Self::from_samples`] after subtracting `b·x_i`, where the
    /// columns of `controls` have known mean zero and `b` is the
    /// least-squares coefficient of `values` on them.
    pub fn from_controlled_samples<const K: usize>(values: &[f64], controls: &[[f64; K]], batches: usize) -> Self {
        let n = values.len();
        if n < 2 {
            return Self::from_samples(values, batches);
        }
        let nf = n as f64;
        let ybar = values.iter().sum::<f64>() / nf;
        let mut xbar = [0.0; K];
        for x in controls {
            for j in 0..K {
                xbar[j] += x[j] / nf;
            }
        }
        let mut a = [[0.0; K]; K];
        let mut rhs = [0.0; K];
        for (x, &y) in controls.iter().zip(values) {
            for i in 0..K {
                let xi = x[i] - xbar[i];
                rhs[i] += xi * (y - ybar);
                for j in 0..K {
                    a[i][j] += xi * (x[j] - xbar[j]);
                }
            }
        }
        let b = solve_least_squares(a, rhs);
        let adjusted: Vec<f64> = values
            .iter()
            .zip(controls)
            .map(|(&y, x)| y - b.iter().zip(x).map(|(bi, xi)| bi * xi).sum::<f64>())
            .collect();
        Self::from_samples(&adjusted, batches)
    }

    /// `self − other` for independent estimates.
    pub fn minus(&self, other: &Self) -> Self {
        Self {
            mean: self.mean - other.mean,
            stderr: self.stderr.hypot(other.stderr),
            batches: self.batches.min(other.batches),
            samples: self.samples.min(other.samples),
        }
    }

    pub fn shift(&self, delta: f64) -> Self {
        Self { mean: self.mean + delta, ..*self }
    }
}

/// Solves the normal equations by Gaussian elimination with partial pivoting;
/// directions with a negligible pivot get coefficient zero.
fn solve_least_squares<const K: usize>(mut a: [[f64; K]; K], mut rhs: [f64; K]) -> [f64; K] {
    let scale = (0..K).map(|i| a[i][i]).fold(0.0, f64::max);
    let mut active = [true; K];
    for col in 0..K {
        let pivot = (col..K).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap_or(col);
        if !(a[pivot][col].abs() > 1e-12 * scale) || scale == 0.0 {
            active[col] = false;
            continue;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in 0..K {
            if row != col {
                let f = a[row][col] / a[col][col];
                for j in col..K {
                    a[row][j] -= f * a[col][j];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut b = [0.0; K];
    for i in 0..K {
        if active[i] {
            b[i] = rhs[i] / a[i][i];
        }
    }
    b
}

/// Poisson(λ) by sequential inversion of the CDF.
///
/// λ is at most a few hundred in every use here, so e^{−λ} stays normal.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let u: f64 = rng.gen();
    let mut k = 0usize;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
        if p < 1e-300 && k as f64 > lambda {
            break;
        }
    }
    k
}

/// Serializes non-finite floats as `null` and reads `null` back as +∞.
pub mod open_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_variates_reduce_variance_without_moving_the_mean() {
        let mut rng = crate::rng::stream(3, &[0]);
        let n = 20_000;
        let mut ys = Vec::with_capacity(n);
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.gen::<f64>() - 0.5;
            let e: f64 = rng.gen::<f64>() - 0.5;
            ys.push(1.0 + 4.0 * x + 0.1 * e);
            xs.push([x, 0.0]);
        }
        let plain = EstimateWithError::from_samples(&ys, 20);
        let cv = EstimateWithError::from_controlled_samples(&ys, &xs, 20);
        assert!(cv.stderr < plain.stderr / 10.0);
        assert!((cv.mean - 1.0).abs() < 4.0 * cv.stderr + 1e-3);
        let zero = EstimateWithError::from_controlled_samples(&ys, &vec![[0.0]; n], 20);
        assert_eq!(zero.mean, plain.mean);
    }
    use crate::rng::stream;

    #[test]
    fn batch_means_of_constant() {
        let e = EstimateWithError::from_samples(&[2.0; 100], 20);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.batches, 20);
        assert_eq!(e.samples, 100);
    }

    #[test]
    fn poisson_moments() {
        let mut rng = stream(1, &[42]);
        for lambda in [0.5, 4.0, 30.0] {
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| poisson(&mut rng, lambda) as f64).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let se = (lambda / n as f64).sqrt();
            assert!((mean - lambda).abs() < 5.0 * se, "mean {mean} vs {lambda}");
            assert!((var / lambda - 1.0).abs() < 0.03, "var {var} vs {lambda}");
        }
        assert_eq!(poisson(&mut rng, 0.0), 0);
    }
}
