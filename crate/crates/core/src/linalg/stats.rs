use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Parameter(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Numerical("cosine similarity of a zero vector is undefined".into()));
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_similarity(u, v)?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    CosineDistance,
}

impl DistanceMetric {
    pub fn distance(self, u: &[f64], v: &[f64]) -> Result<f64> {
        match self {
            DistanceMetric::Euclidean => Ok(u
                .iter()
                .zip(v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()),
            DistanceMetric::CosineDistance => cosine_distance(u, v),
        }
    }
}

/// Per-point silhouette values `(b − a) / max(a, b)` for rows of `x` grouped
/// by `labels` (cluster indices). Points in singleton clusters, and points
/// with `a = b = 0`, score 0.
pub fn silhouette_samples(
    x: &DMatrix<f64>,
    labels: &[usize],
    metric: DistanceMetric,
) -> Result<Vec<f64>> {
    let n = x.nrows();
    if labels.len() != n {
        return Err(Error::Parameter(format!("{n} rows but {} labels", labels.len())));
    }
    if n < 3 {
        return Err(Error::Parameter(format!("silhouette needs n >= 3, got {n}")));
    }
    let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_clusters];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::Parameter("silhouette needs at least 2 clusters".into()));
    }
    let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return Ok(0.0);
            }
            let mut sums = vec![0.0; n_clusters];
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += metric.distance(&rows[i], &rows[j])?;
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..n_clusters)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            Ok(if denom > 0.0 { (b - a) / denom } else { 0.0 })
        })
        .collect()
}

pub fn silhouette_mean(x: &DMatrix<f64>, labels: &[usize], metric: DistanceMetric) -> Result<f64> {
    let s = silhouette_samples(x, labels, metric)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Parameter(format!(
            "pearson of vectors with lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Parameter(format!("pearson needs >= 3 values, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numerical("correlation undefined for zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // 32 / (sqrt(14) * sqrt(77))
        let c = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((c - 0.974_631_846_197_076_2).abs() < 1e-15);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        // cov = 1.5, sd = 1 and sqrt(7/3): 1.5 / sqrt(7/3) = 0.98198...
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.981_980_506_061_965_7).abs() < 1e-14);
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn silhouette_examples() {
        let x = DMatrix::from_row_slice(6, 1, &[0.0, 0.01, 0.02, 100.0, 100.01, 100.02]);
        let labels = [0, 0, 0, 1, 1, 1];
        assert!(silhouette_mean(&x, &labels, DistanceMetric::Euclidean).unwrap() >= 0.9);
        let same = DMatrix::from_element(6, 2, 1.0);
        assert_eq!(silhouette_mean(&same, &labels, DistanceMetric::Euclidean).unwrap(), 0.0);
        assert!(silhouette_mean(&x, &[0; 6], DistanceMetric::Euclidean).is_err());
        // singletons contribute 0
        let s = silhouette_samples(&x, &[0, 0, 0, 1, 1, 2], DistanceMetric::Euclidean).unwrap();
        assert_eq!(s[5], 0.0);
    }

    proptest! {
        #[test]
        fn pearson_affine_invariance(
            x in prop::collection::vec(-100.0f64..100.0, 3..40),
            noise in prop::collection::vec(-1.0f64..1.0, 40),
            a in 0.01f64..50.0, b in -50.0f64..50.0,
        ) {
            let y: Vec<f64> = x.iter().zip(&noise).map(|(v, e)| v * 0.5 + e).collect();
            prop_assume!(pearson(&x, &y).is_ok());
            let r = pearson(&x, &y).unwrap();
            let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!((pearson(&xs, &y).unwrap() - r).abs() <= 1e-12);
            let xn: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
            prop_assert!((pearson(&xn, &y).unwrap() + r).abs() <= 1e-12);
        }
    }
}
