//! PCA and LDA projections.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    Pca,
    Lda,
}

impl ProjectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProjectionKind::Pca => "pca",
            ProjectionKind::Lda => "lda",
        }
    }
}

/// Affine map `x ↦ (x − mean) · basis` onto `k` components.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub kind: ProjectionKind,
    pub mean: DVector<f64>,
    /// `D × k`, one component per column.
    pub basis: DMatrix<f64>,
    /// Eigenvalues of the selected components, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Sum of all eigenvalues (total variance for PCA).
    pub eigenvalue_total: f64,
    pub warnings: Vec<String>,
}

impl Projection {
    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn explained_ratio(&self) -> Vec<f64> {
        if self.eigenvalue_total > 0.0 {
            self.eigenvalues.iter().map(|v| v / self.eigenvalue_total).collect()
        } else {
            vec![0.0; self.eigenvalues.len()]
        }
    }
}

fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

fn centered(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    c
}

/// Flips each column so that its largest-magnitude entry (first on ties) is positive.
pub(crate) fn fix_signs(basis: &mut DMatrix<f64>) {
    for mut col in basis.column_iter_mut() {
        let mut best = 0usize;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

/// PCA on the sample covariance of `x` (`n × D`), keeping `k` components.
pub fn fit_pca(x: &DMatrix<f64>, k: usize) -> Result<Projection> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::Parameter(format!("PCA needs at least 2 rows, got {n}")));
    }
    if k == 0 || k > n.min(d) {
        return Err(Error::Parameter(format!(
            "PCA k must be in 1..={} for {n}x{d} data, got {k}",
            n.min(d)
        )));
    }
    let mean = column_mean(x);
    let xc = centered(x, &mean);
    let cov = (xc.transpose() * &xc) / (n as f64 - 1.0);
    let total: f64 = cov.trace();
    let (values, vectors) = sorted_eigen(cov);
    let mut basis = vectors.columns(0, k).into_owned();
    fix_signs(&mut basis);
    let eigenvalues: Vec<f64> = values[..k].iter().map(|v| v.max(0.0)).collect();
    let mut warnings = Vec::new();
    let floor = 1e-12 * total.max(f64::MIN_POSITIVE);
    if eigenvalues.iter().any(|&v| v <= floor) {
        warnings.push(format!(
            "degenerate variance: {} of {k} PCA components have zero variance",
            eigenvalues.iter().filter(|&&v| v <= floor).count()
        ));
    }
    Ok(Projection {
        kind: ProjectionKind::Pca,
        mean,
        basis,
        eigenvalues,
        eigenvalue_total: total,
        warnings,
    })
}

/// Fisher LDA: top-`k` generalized eigenvectors of the between-class scatter
/// against the shrinkage-regularized within-class scatter
/// `S_w + shrinkage · tr(S_w)/D · I`. Components are scaled so that
/// `Wᵀ S_w' W = I`.
pub fn fit_lda<L: Ord + Clone>(
    x: &DMatrix<f64>,
    y: &[L],
    k: usize,
    shrinkage: f64,
) -> Result<Projection> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::Parameter(format!("{n} rows but {} labels", y.len())));
    }
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::Parameter(format!("shrinkage must be in [0, 1], got {shrinkage}")));
    }
    let mut classes: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, label) in y.iter().enumerate() {
        classes.entry(label).or_default().push(i);
    }
    let c = classes.len();
    if c < 2 {
        return Err(Error::Parameter("LDA needs at least 2 classes".into()));
    }
    if let Some(small) = classes.values().find(|m| m.len() < 2) {
        return Err(Error::Parameter(format!(
            "every LDA class needs >= 2 samples (row {} is alone)",
            small[0]
        )));
    }
    if k == 0 || k > d.min(c - 1) {
        return Err(Error::Parameter(format!(
            "LDA k must be in 1..={} (D={d}, C={c}), got {k}",
            d.min(c - 1)
        )));
    }

    let mean = column_mean(x);
    let mut within = x.clone();
    let mut between = DMatrix::zeros(c, d);
    for (ci, members) in classes.values().enumerate() {
        let nc = members.len() as f64;
        let mut mu = DVector::zeros(d);
        for &i in members {
            mu += x.row(i).transpose();
        }
        mu /= nc;
        for &i in members {
            for j in 0..d {
                within[(i, j)] -= mu[j];
            }
        }
        let scale = nc.sqrt();
        for j in 0..d {
            between[(ci, j)] = scale * (mu[j] - mean[j]);
        }
    }
    let mut sw = within.transpose() * &within;
    let sb = between.transpose() * &between;

    let mut warnings = Vec::new();
    let trace = sw.trace();
    let reg = if trace > 0.0 {
        shrinkage * trace / d as f64
    } else if shrinkage > 0.0 {
        warnings.push("degenerate variance: within-class scatter is zero".to_string());
        shrinkage
    } else {
        return Err(Error::Numerical(
            "within-class scatter is zero; use lda_shrinkage > 0".into(),
        ));
    };
    for j in 0..d {
        sw[(j, j)] += reg;
    }
    let singular = || {
        Error::Numerical(
            "within-class scatter is singular; increase lda_shrinkage".into(),
        )
    };
    let chol = Cholesky::new(sw).ok_or_else(singular)?;
    let l = chol.l();
    let diag: Vec<f64> = l.diagonal().iter().map(|v| v * v).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-14 * max) {
        return Err(singular());
    }
    // L⁻¹ S_b L⁻ᵀ, symmetric since S_b is
    let a = l.solve_lower_triangular(&sb).ok_or_else(singular)?;
    let m = l.solve_lower_triangular(&a.transpose()).ok_or_else(singular)?;
    let m = (&m + m.transpose()) * 0.5;
    let total: f64 = m.trace();
    let (values, vectors) = sorted_eigen(m);
    let top = vectors.columns(0, k).into_owned();
    let mut basis = l.tr_solve_lower_triangular(&top).ok_or_else(singular)?;
    fix_signs(&mut basis);
    Ok(Projection {
        kind: ProjectionKind::Lda,
        mean,
        basis,
        eigenvalues: values[..k].iter().map(|v| v.max(0.0)).collect(),
        eigenvalue_total: total,
        warnings,
    })
}

pub fn project(p: &Projection, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != p.dim() {
        return Err(Error::Parameter(format!(
            "projection expects dimension {}, got {}",
            p.dim(),
            x.ncols()
        )));
    }
    Ok(centered(x, &p.mean) * &p.basis)
}
