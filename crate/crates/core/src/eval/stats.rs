use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub sigma_m3c2: f64,
    pub mean_m3c2: f64,
    pub count: usize,
    pub histogram: Histogram,
}

/// Mean, unbiased standard deviation and a `bins`-wide histogram spanning
/// `[-r, r]` with `r` the largest absolute distance.
pub fn precision_stats(distances: &[f64], bins: usize) -> Result<PrecisionReport, EvalError> {
    if distances.is_empty() {
        return Err(EvalError::EmptyInput("distances"));
    }
    if bins == 0 {
        return Err(EvalError::InvalidParams("histogram needs at least one bin".into()));
    }
    let n = distances.len() as f64;
    let mean = distances.iter().sum::<f64>() / n;
    let ss: f64 = distances.iter().map(|d| (d - mean).powi(2)).sum();
    let sigma = if distances.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };

    let mut half = distances.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if half == 0.0 {
        half = 1e-6;
    }
    let width = 2.0 * half / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|k| -half + k as f64 * width).collect();
    let mut counts = vec![0; bins];
    for d in distances {
        let k = (((d + half) / width).floor() as isize).clamp(0, bins as isize - 1);
        counts[k as usize] += 1;
    }
    Ok(PrecisionReport {
        sigma_m3c2: sigma,
        mean_m3c2: mean,
        count: distances.len(),
        histogram: Histogram { edges, counts },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn zeros() {
        let r = precision_stats(&[0.0; 7], 10).unwrap();
        assert_eq!((r.sigma_m3c2, r.mean_m3c2, r.count), (0.0, 0.0, 7));
        assert_eq!(r.histogram.counts.iter().sum::<usize>(), 7);
    }

    #[test]
    fn unbiased_estimator() {
        let r = precision_stats(&[1.0, 2.0, 3.0, 4.0], 4).unwrap();
        assert!((r.mean_m3c2 - 2.5).abs() < 1e-15);
        assert!((r.sigma_m3c2 - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(r.histogram.counts, vec![0, 0, 1, 3]);
    }

    #[test]
    fn gaussian_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = Normal::new(0.0, 0.3e-3).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
        let r = precision_stats(&xs, 50).unwrap();
        assert!((r.sigma_m3c2 / 0.3e-3 - 1.0).abs() < 0.01);
        assert_eq!(r.histogram.counts.iter().sum::<usize>(), 100_000);
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(precision_stats(&[], 5), Err(EvalError::EmptyInput("distances")));
    }
}
