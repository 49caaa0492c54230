use super::AnalysisError;

/// Non-whitened 2D PCA: mean vector plus the two leading eigenvectors of
/// the sample covariance, via exact Jacobi eigendecomposition (d_model is
/// small, <= 256).
pub struct Pca {
    pub mean: Vec<f64>,
    pub component1: Vec<f64>,
    pub component2: Vec<f64>,
    pub eigenvalue1: f64,
    pub eigenvalue2: f64,
}

impl Pca {
    pub fn fit(data: &[f64], rows: usize, cols: usize) -> Result<Self, AnalysisError> {
        if rows < 2 {
            return Err(AnalysisError::DegenerateBasis(format!("{rows} rows, need at least 2")));
        }
        assert_eq!(data.len(), rows * cols);
        let mut mean = vec![0.0; cols];
        for row in data.chunks(cols) {
            for (m, &v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= rows as f64;
        }
        // Sample covariance of the centered data.
        let mut cov = vec![0.0; cols * cols];
        for row in data.chunks(cols) {
            for i in 0..cols {
                let di = row[i] - mean[i];
                for j in i..cols {
                    cov[i * cols + j] += di * (row[j] - mean[j]);
                }
            }
        }
        let denom = (rows - 1) as f64;
        for i in 0..cols {
            for j in i..cols {
                let v = cov[i * cols + j] / denom;
                cov[i * cols + j] = v;
                cov[j * cols + i] = v;
            }
        }
        let (eigenvalues, vectors) = jacobi_eigen(&cov, cols);
        // Indices of the two largest eigenvalues.
        let mut order: Vec<usize> = (0..cols).collect();
        order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
        let (i1, i2) = (order[0], order[1]);
        let (l1, l2) = (eigenvalues[i1], eigenvalues[i2]);
        if !(l1 > 0.0) || l2 <= l1 * 1e-12 {
            return Err(AnalysisError::DegenerateBasis(format!(
                "leading eigenvalues {l1:.3e}, {l2:.3e}"
            )));
        }
        let column = |idx: usize| -> Vec<f64> {
            let mut v: Vec<f64> = (0..cols).map(|r| vectors[r * cols + idx]).collect();
            // Deterministic sign: largest-magnitude entry positive.
            let lead = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            if v[lead] < 0.0 {
                for x in v.iter_mut() {
                    *x = -*x;
                }
            }
            v
        };
        Ok(Self { mean, component1: column(i1), component2: column(i2), eigenvalue1: l1, eigenvalue2: l2 })
    }

    /// Project rows into the fitted 2D basis (centered, not whitened).
    pub fn project(&self, data: &[f64], cols: usize) -> Vec<(f64, f64)> {
        data.chunks(cols)
            .map(|row| {
                let mut c1 = 0.0;
                let mut c2 = 0.0;
                for ((&v, &m), (&e1, &e2)) in row
                    .iter()
                    .zip(self.mean.iter())
                    .zip(self.component1.iter().zip(self.component2.iter()))
                {
                    let centered = v - m;
                    c1 += centered * e1;
                    c2 += centered * e2;
                }
                (c1, c2)
            })
            .collect()
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, column eigenvectors flattened row-major).
fn jacobi_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigenvalues: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    (eigenvalues, v)
}

/// Fraction of projected points outside the fit points' bounding box
/// inflated by `inflate` (e.g. 0.1 widens each axis by 10%, centered).
pub fn out_of_support_fraction(
    fit: &[(f64, f64)],
    projected: &[(f64, f64)],
    inflate: f64,
) -> f64 {
    if fit.is_empty() || projected.is_empty() {
        return 0.0;
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in fit {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (mx, my) = ((x1 - x0) * inflate / 2.0, (y1 - y0) * inflate / 2.0);
    let outside = projected
        .iter()
        .filter(|&&(x, y)| x < x0 - mx || x > x1 + mx || y < y0 - my || y > y1 + my)
        .count();
    outside as f64 / projected.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn components_ordered_by_variance() {
        // Synthetic data stretched 3x along a known axis.
        let mut rng = stream(1, "pca-unit");
        let normal = StandardNormal;
        let rows = 400;
        let mut data = Vec::with_capacity(rows * 3);
        for _ in 0..rows {
            let a: f64 = normal.sample(&mut rng);
            let b: f64 = normal.sample(&mut rng);
            let c: f64 = normal.sample(&mut rng);
            data.extend([3.0 * a + 0.01 * c, b, 0.02 * a + 0.5 * c]);
        }
        let pca = Pca::fit(&data, rows, 3).unwrap();
        assert!(pca.eigenvalue1 >= pca.eigenvalue2);
        let coords = pca.project(&data, 3);
        let var = |sel: fn(&(f64, f64)) -> f64| {
            let m = coords.iter().map(sel).sum::<f64>() / coords.len() as f64;
            coords.iter().map(|c| (sel(c) - m).powi(2)).sum::<f64>() / (coords.len() - 1) as f64
        };
        assert!(var(|c| c.0) >= var(|c| c.1));
        // Dominant direction is x: component 1 mostly along the first axis.
        assert!(pca.component1[0].abs() > 0.95, "{:?}", pca.component1);
    }

    #[test]
    fn isotropic_data_has_balanced_components() {
        let mut rng = stream(2, "pca-iso");
        let normal = StandardNormal;
        let rows = 20_000;
        let cols = 4;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let x: f64 = normal.sample(&mut rng);
            data.push(x);
        }
        let pca = Pca::fit(&data, rows, cols).unwrap();
        let ratio = pca.eigenvalue1 / pca.eigenvalue2;
        assert!(ratio < 1.1, "eigenvalue ratio {ratio}");
    }

    #[test]
    fn fit_mean_projects_to_origin() {
        let data = vec![1.0, 2.0, 3.0, 2.0, 4.0, 7.0, -1.0, 0.5, 2.0, 4.0, 1.0, 0.0];
        let pca = Pca::fit(&data, 4, 3).unwrap();
        let coords = pca.project(&pca.mean.clone(), 3);
        assert!(coords[0].0.abs() < 1e-6 && coords[0].1.abs() < 1e-6);
    }

    #[test]
    fn rank_deficient_data_rejected() {
        // All rows identical: zero covariance.
        let data = vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        assert!(Pca::fit(&data, 3, 2).is_err());
        assert!(Pca::fit(&data[..2], 1, 2).is_err());
    }

    #[test]
    fn out_of_support_counts_outside_box() {
        let fit = vec![(0.0, 0.0), (1.0, 1.0)];
        let proj = vec![(0.5, 0.5), (2.0, 0.5), (0.5, -3.0), (1.04, 1.04)];
        // Box inflated by 10%: [-0.05, 1.05]^2; two points outside.
        let f = out_of_support_fraction(&fit, &proj, 0.1);
        assert!((f - 0.5).abs() < 1e-12);
    }
}
