//! First canonical correlation and the projected mutual-information bound.
//!
//! For any maps `h`, `g` the data-processing inequality gives
//! `I(q; d) >= I(h(q); g(d))`. Taking `h`, `g` as the first canonical
//! projections keeps as much linear dependence as a 1-D pair can, and the
//! 1-D x 1-D KSG estimate stays reliable where the full-dimensional one does
//! not. For jointly Gaussian data with one canonical pair the bound is tight.
//!
//! CCA is solved by whitening both blocks and taking the SVD of the whitened
//! cross-covariance, which avoids forming the generalized eigenproblem.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mi::{ksg_mi, KnnConfig};
use crate::sample::SampleMatrix;

/// Diagonal loading applied to each block covariance before whitening.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Ridge {
    /// Adds exactly this value to the diagonal.
    Absolute(f64),
    /// Adds `factor * trace / dim` to the diagonal.
    Relative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-8)
    }
}

impl Ridge {
    fn amount(&self, cov: &DMatrix<f64>) -> f64 {
        match *self {
            Ridge::Absolute(v) => v,
            Ridge::Relative(f) => f * cov.trace() / cov.nrows() as f64,
        }
    }

    fn is_zero(&self) -> bool {
        matches!(*self, Ridge::Absolute(v) | Ridge::Relative(v) if v == 0.0)
    }

    fn check(&self) -> Result<()> {
        match *self {
            Ridge::Absolute(v) | Ridge::Relative(v) if v >= 0.0 && v.is_finite() => Ok(()),
            _ => Err(invalid("ridge must be finite and >= 0")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalPair {
    /// Direction in the original q coordinates.
    pub alpha: DVector<f64>,
    /// Direction in the original d coordinates.
    pub beta: DVector<f64>,
    pub rho1: f64,
    /// All canonical correlations, descending.
    pub spectrum: Vec<f64>,
    q_mean: DVector<f64>,
    d_mean: DVector<f64>,
}

impl CanonicalPair {
    pub fn project_q(&self, q: &SampleMatrix) -> Vec<f64> {
        project(q, &self.q_mean, &self.alpha)
    }

    pub fn project_d(&self, d: &SampleMatrix) -> Vec<f64> {
        project(d, &self.d_mean, &self.beta)
    }
}

fn project(x: &SampleMatrix, mean: &DVector<f64>, dir: &DVector<f64>) -> Vec<f64> {
    (0..x.rows())
        .map(|i| x.row(i).iter().zip(mean.iter()).zip(dir.iter()).map(|((v, m), w)| (v - m) * w).sum())
        .collect()
}

fn centered(x: &SampleMatrix) -> (DMatrix<f64>, DVector<f64>) {
    let mut m = x.to_dmatrix();
    let mean = DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.mean()));
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    (m, mean)
}

/// `C^{-1/2}` of a symmetric PSD covariance after diagonal loading.
fn inv_sqrt(cov: &DMatrix<f64>, ridge: &Ridge, block: &'static str) -> Result<DMatrix<f64>> {
    let load = ridge.amount(cov);
    let mut c = cov.clone();
    for i in 0..c.nrows() {
        c[(i, i)] += load;
    }
    let eig = SymmetricEigen::new(c);
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = top * 1e-12 * cov.nrows() as f64;
    let deficient = eig.eigenvalues.iter().any(|&l| l <= tol);
    if top <= 0.0 || (deficient && ridge.is_zero()) {
        return Err(Error::RankDeficient { block });
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(tol).sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Top canonical pair of `q` and `d` from their sample covariances.
///
/// `q` is standardized per coordinate before CCA; `alpha` is reported in the
/// original q units. Fails on a rank-deficient block when the ridge is zero.
pub fn first_canonical(q: &SampleMatrix, d: &SampleMatrix, ridge: Ridge) -> Result<CanonicalPair> {
    ridge.check()?;
    let n = q.rows();
    if d.rows() != n {
        return Err(invalid(format!("sample counts differ: {n} vs {}", d.rows())));
    }
    if n <= q.cols() + d.cols() {
        return Err(invalid(format!(
            "need more than {} samples for CCA, got {n}",
            q.cols() + d.cols()
        )));
    }
    let (mut qc, q_mean) = centered(q);
    let (dc, d_mean) = centered(d);
    let scale = 1.0 / (n as f64 - 1.0);
    let mut q_std = DVector::zeros(q.cols());
    for (j, mut col) in qc.column_iter_mut().enumerate() {
        let s = (col.norm_squared() * scale).sqrt();
        if s <= 0.0 {
            return Err(Error::RankDeficient { block: "q" });
        }
        q_std[j] = s;
        col /= s;
    }
    let cqq = qc.transpose() * &qc * scale;
    let cdd = dc.transpose() * &dc * scale;
    let cqd = qc.transpose() * &dc * scale;
    let wq = inv_sqrt(&cqq, &ridge, "q")?;
    let wd = inv_sqrt(&cdd, &ridge, "d")?;
    let m = &wq * cqd * &wd;
    let svd = m.svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| invalid("SVD failed"))?;
    let vt = svd.v_t.as_ref().ok_or_else(|| invalid("SVD failed"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = order[0];
    let spectrum: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].clamp(0.0, 1.0)).collect();
    let alpha_std = &wq * u.column(top);
    let beta = &wd * vt.row(top).transpose();
    let alpha = alpha_std.component_div(&q_std);
    Ok(CanonicalPair { alpha, beta, rho1: spectrum[0], spectrum, q_mean, d_mean })
}

/// Gaussian mutual information `-1/2 * sum(ln(1 - rho_i^2))`.
pub fn gaussian_mi_from_correlations(rhos: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for &r in rhos {
        if !(0.0..1.0).contains(&r) {
            if r >= 1.0 {
                return Err(Error::InfiniteInformation(r));
            }
            return Err(invalid(format!("canonical correlation {r} outside [0, 1)")));
        }
        acc += (1.0 - r * r).ln();
    }
    Ok(-0.5 * acc)
}

fn standardize(v: &mut [f64]) -> Result<()> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::RankDeficient { block: "projection" });
    }
    let s = var.sqrt();
    v.iter_mut().for_each(|x| *x = (*x - mean) / s);
    Ok(())
}

/// KSG mutual information between the first canonical projections of `q` and `d`.
///
/// A 1-D `q` is used as is. Both projections are standardized before the
/// neighbor search.
pub fn mi_lower_bound(q: &SampleMatrix, d: &SampleMatrix, knn: &KnnConfig, ridge: Ridge) -> Result<f64> {
    let pair = first_canonical(q, d, ridge)?;
    let mut hq = if q.cols() == 1 { q.column(0) } else { pair.project_q(q) };
    let mut gd = pair.project_d(d);
    standardize(&mut hq)?;
    standardize(&mut gd)?;
    ksg_mi(&SampleMatrix::from_column(&hq)?, &SampleMatrix::from_column(&gd)?, knn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normals(n: usize, cols: usize, seed: u64) -> SampleMatrix {
        let mut r = rng::stream(seed);
        SampleMatrix::new(n, cols, (0..n * cols).map(|_| r.sample(StandardNormal)).collect()).unwrap()
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn identical_blocks_fully_correlated() {
        let q = normals(300, 2, 1);
        let p = first_canonical(&q, &q, Ridge::Absolute(0.0)).unwrap();
        assert!((p.rho1 - 1.0).abs() < 1e-8, "rho1 = {}", p.rho1);
    }

    #[test]
    fn projections_attain_rho1() {
        let q = normals(400, 2, 2);
        let noise = normals(400, 3, 3);
        let d = SampleMatrix::new(
            400,
            3,
            (0..400)
                .flat_map(|i| {
                    let (a, b) = (q.get(i, 0), q.get(i, 1));
                    [a + noise.get(i, 0), a - b + 2.0 * noise.get(i, 1), noise.get(i, 2)]
                })
                .collect(),
        )
        .unwrap();
        let p = first_canonical(&q, &d, Ridge::Absolute(0.0)).unwrap();
        let c = corr(&p.project_q(&q), &p.project_d(&d));
        assert!((c - p.rho1).abs() < 1e-8, "{c} vs {}", p.rho1);
        assert!(p.spectrum.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn constant_column_rank_deficient_without_ridge() {
        let q = normals(100, 1, 4);
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![q.get(i, 0), 3.0]).collect();
        let d = SampleMatrix::from_rows(&rows).unwrap();
        assert!(matches!(
            first_canonical(&q, &d, Ridge::Absolute(0.0)),
            Err(Error::RankDeficient { block: "d" })
        ));
        assert!(first_canonical(&q, &d, Ridge::default()).is_ok());
    }

    #[test]
    fn gaussian_mi_closed_form() {
        assert_eq!(gaussian_mi_from_correlations(&[0.0]).unwrap(), 0.0);
        assert!((gaussian_mi_from_correlations(&[0.9]).unwrap() - 0.8304).abs() < 1e-4);
        assert!((gaussian_mi_from_correlations(&[0.5, 0.5]).unwrap() - 0.2877).abs() < 1e-4);
        assert!(matches!(gaussian_mi_from_correlations(&[1.0]), Err(Error::InfiniteInformation(_))));
        assert!(gaussian_mi_from_correlations(&[-0.1]).is_err());
    }

    #[test]
    fn too_few_samples_rejected() {
        let q = normals(4, 2, 5);
        let d = normals(4, 2, 6);
        assert!(first_canonical(&q, &d, Ridge::default()).is_err());
    }
}
