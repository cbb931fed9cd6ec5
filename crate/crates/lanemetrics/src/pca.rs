//! Correlation-matrix PCA with Varimax rotation and parallel analysis.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Result of a PCA with Varimax rotation on a subjects x variables matrix.
///
/// Loadings are on the factor-analysis scale (eigenvector * sqrt(eigenvalue)
/// of the correlation matrix), so their magnitudes are bounded by ~1.
/// Component signs are normalized so the largest-magnitude loading per
/// component is positive; components are ordered by descending rotated
/// variance.
#[derive(Debug, Clone)]
pub struct PcaResult {
    /// variables x components.
    pub loadings: DMatrix<f64>,
    /// subjects x components; column variance equals the rotated
    /// eigenvalue (sum of squared loadings) of the component.
    pub scores: DMatrix<f64>,
    /// Fraction of total variance per rotated component.
    pub variance_explained: Vec<f64>,
    /// All eigenvalues of the correlation matrix, descending (unrotated).
    pub eigenvalues: Vec<f64>,
    /// Indices of zero-variance input columns that were dropped.
    pub dropped_columns: Vec<usize>,
    pub rotated: bool,
}

impl PcaResult {
    /// Per-variable communality: row sums of squared loadings.
    pub fn communalities(&self) -> Vec<f64> {
        (0..self.loadings.nrows())
            .map(|i| self.loadings.row(i).iter().map(|x| x * x).sum())
            .collect()
    }
}

/// Standardizes columns to zero mean, unit variance (denominator n-1).
/// Returns the standardized matrix and the indices of dropped
/// zero-variance columns.
fn standardize(matrix: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let n = matrix.nrows();
    let mut kept_cols: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..matrix.ncols() {
        let col: Vec<f64> = (0..n).map(|i| matrix[(i, j)]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        if var <= 0.0 || !var.is_finite() {
            dropped.push(j);
            continue;
        }
        let sd = var.sqrt();
        kept_cols.push(col.iter().map(|x| (x - mean) / sd).collect());
    }
    let p = kept_cols.len();
    let z = DMatrix::from_fn(n, p, |i, j| kept_cols[j][i]);
    (z, dropped)
}

fn correlation_from_standardized(z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.nrows() as f64;
    (z.transpose() * z) / (n - 1.0)
}

/// Descending eigenvalues and matching eigenvectors of a symmetric matrix.
fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(m.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

/// In-place Varimax rotation with Kaiser normalization.
/// Pairwise rotations are swept until the total angle change per sweep
/// drops below `tol` or `max_sweeps` is reached.
pub fn varimax(loadings: &mut DMatrix<f64>, tol: f64, max_sweeps: usize) {
    let p = loadings.nrows();
    let k = loadings.ncols();
    if k < 2 || p == 0 {
        return;
    }
    // Kaiser normalization: scale rows to unit communality
    let comm: Vec<f64> = (0..p)
        .map(|i| loadings.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    for i in 0..p {
        if comm[i] > 0.0 {
            for j in 0..k {
                loadings[(i, j)] /= comm[i];
            }
        }
    }
    for _ in 0..max_sweeps {
        let mut total_rotation = 0.0;
        for a in 0..k - 1 {
            for b in a + 1..k {
                let (mut su, mut sv, mut suv, mut su2v2) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..p {
                    let x = loadings[(i, a)];
                    let y = loadings[(i, b)];
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    su += u;
                    sv += v;
                    suv += u * v;
                    su2v2 += u * u - v * v;
                }
                let num = 2.0 * (suv - su * sv / p as f64);
                let den = su2v2 - (su * su - sv * sv) / p as f64;
                let phi = 0.25 * num.atan2(den);
                if phi.abs() < 1e-15 {
                    continue;
                }
                total_rotation += phi.abs();
                let (c, s) = (phi.cos(), phi.sin());
                for i in 0..p {
                    let x = loadings[(i, a)];
                    let y = loadings[(i, b)];
                    loadings[(i, a)] = c * x + s * y;
                    loadings[(i, b)] = -s * x + c * y;
                }
            }
        }
        if total_rotation < tol {
            break;
        }
    }
    // undo Kaiser normalization
    for i in 0..p {
        if comm[i] > 0.0 {
            for j in 0..k {
                loadings[(i, j)] *= comm[i];
            }
        }
    }
}

/// PCA of the column correlation matrix with Varimax-rotated loadings.
pub fn pca_varimax(matrix: &DMatrix<f64>, n_components: usize) -> Result<PcaResult> {
    let n = matrix.nrows();
    if n < n_components + 1 {
        return Err(Error::TooFewSubjects { n, k: n_components });
    }
    let (z, dropped) = standardize(matrix);
    let p = z.ncols();
    if p < n_components {
        return Err(Error::RankDeficient);
    }
    let corr = correlation_from_standardized(&z);
    let (eigenvalues, eigenvectors) = sorted_eigen(&corr);
    if eigenvalues[n_components - 1] <= 1e-12 {
        return Err(Error::RankDeficient);
    }

    let mut loadings = DMatrix::from_fn(p, n_components, |i, j| {
        eigenvectors[(i, j)] * eigenvalues[j].sqrt()
    });
    varimax(&mut loadings, 1e-6, 200);

    // rotated variance (sum of squared loadings) per component
    let mut rotated_var: Vec<f64> = (0..n_components)
        .map(|j| loadings.column(j).iter().map(|x| x * x).sum())
        .collect();

    // order by descending rotated variance
    let mut order: Vec<usize> = (0..n_components).collect();
    order.sort_by(|&a, &b| rotated_var[b].partial_cmp(&rotated_var[a]).unwrap());
    let mut ordered = DMatrix::zeros(p, n_components);
    for (jn, &jo) in order.iter().enumerate() {
        ordered.set_column(jn, &loadings.column(jo).into_owned());
    }
    loadings = ordered;
    rotated_var = order.iter().map(|&j| rotated_var[j]).collect();

    // sign convention: largest-magnitude loading per component positive
    for j in 0..n_components {
        let (mut best, mut best_abs) = (0.0, 0.0);
        for i in 0..p {
            if loadings[(i, j)].abs() > best_abs {
                best_abs = loadings[(i, j)].abs();
                best = loadings[(i, j)];
            }
        }
        if best < 0.0 {
            for i in 0..p {
                loadings[(i, j)] = -loadings[(i, j)];
            }
        }
    }

    // scores: standardized data projected on rotated loadings, rescaled so
    // each column variance equals the rotated eigenvalue
    let mut scores = &z * &loadings;
    for j in 0..n_components {
        let col = scores.column(j);
        let var = col.iter().map(|x| x * x).sum::<f64>() / (n as f64 - 1.0);
        if var > 0.0 {
            let scale = (rotated_var[j] / var).sqrt();
            for i in 0..n {
                scores[(i, j)] *= scale;
            }
        }
    }

    let variance_explained = rotated_var.iter().map(|v| v / p as f64).collect();
    Ok(PcaResult {
        loadings,
        scores,
        variance_explained,
        eigenvalues,
        dropped_columns: dropped,
        rotated: true,
    })
}

/// Parallel analysis: number of leading components whose observed
/// eigenvalue exceeds the mean eigenvalue of same-shape standard-normal
/// matrices.
pub fn parallel_analysis(matrix: &DMatrix<f64>, replicates: usize, seed: u64) -> Result<usize> {
    if replicates < 50 {
        return Err(Error::Config("parallel analysis needs >= 50 replicates".into()));
    }
    let (z, _) = standardize(matrix);
    let (observed, _) = sorted_eigen(&correlation_from_standardized(&z));
    let n = matrix.nrows();
    let p = z.ncols();
    if p == 0 {
        return Ok(0);
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut mean_random = vec![0.0; p];
    for _ in 0..replicates {
        let random = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let (zr, _) = standardize(&random);
        if zr.ncols() != p {
            continue;
        }
        let (vals, _) = sorted_eigen(&correlation_from_standardized(&zr));
        for (acc, v) in mean_random.iter_mut().zip(vals) {
            *acc += v / replicates as f64;
        }
    }

    let mut retained = 0;
    for i in 0..p.min(observed.len()) {
        if observed[i] > mean_random[i] {
            retained += 1;
        } else {
            break;
        }
    }
    Ok(retained)
}
