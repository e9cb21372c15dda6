//! Dense linear algebra used by the estimators: PCA with a variance
//! retention rule, SVD-based least squares and Haar-random rotations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_MAX_COMPONENTS: usize = 20;
pub const DEFAULT_LSQ_TOLERANCE: f64 = 1e-12;

/// Thin SVD with singular values sorted in decreasing order.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

pub(crate) fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Ok(ThinSvd {
            u: DMatrix::zeros(rows, 0),
            singular_values: Vec::new(),
            v_t: DMatrix::zeros(0, cols),
        });
    }
    let svd = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)])
        .thin_svd()
        .map_err(|_| Error::NoConvergence)?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    Ok(ThinSvd {
        u: DMatrix::from_fn(rows, k, |i, j| u[(i, j)]),
        singular_values: (0..k).map(|i| s[i]).collect(),
        v_t: DMatrix::from_fn(k, cols, |i, j| v[(j, i)]),
    })
}

/// Principal component model of a genes × samples matrix.
#[derive(Debug, Clone)]
pub struct PcaModel {
    /// Per-gene mean removed before decomposition.
    pub mean: DVector<f64>,
    /// Orthonormal principal axes, one per column (n_genes × k).
    pub basis: DMatrix<f64>,
    /// Sample variance along each retained axis, nonincreasing.
    pub variances: Vec<f64>,
    /// Fraction of the total variance captured by the retained axes.
    pub retained_fraction: f64,
    /// True when `max_components` stopped the retention rule early.
    pub truncated_by_cap: bool,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.basis.ncols()
    }
}

/// Reduces `data` (genes × samples) to the fewest principal components whose
/// variance reaches `1 - epsilon` of the total, capped at `max_components`
/// and at `n_samples - 1`. Returns the model and the component scores
/// (k × n_samples).
///
/// Each axis is signed so that its largest-magnitude entry is positive.
pub fn pca_reduce(
    data: &DMatrix<f64>,
    epsilon: f64,
    max_components: usize,
) -> Result<(PcaModel, DMatrix<f64>)> {
    let (n_genes, n_samples) = data.shape();
    if n_samples < 2 {
        return Err(Error::InvalidParameter(format!(
            "PCA needs at least 2 samples, got {n_samples}"
        )));
    }
    if n_genes == 0 {
        return Err(Error::EmptyMatrix("PCA input has no rows".into()));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in [0, 1), got {epsilon}"
        )));
    }
    if max_components == 0 {
        return Err(Error::InvalidParameter("max_components must be >= 1".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PCA input"));
    }

    let mean = data.column_mean();
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let raw_ss = data.norm_squared();
    let svd = thin_svd(&centered)?;
    let sq: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    let total: f64 = sq.iter().sum();
    if total <= 1e-26 * raw_ss.max(f64::MIN_POSITIVE) || total == 0.0 {
        return Err(Error::ZeroVariance);
    }

    let s_max = svd.singular_values[0];
    let usable = svd
        .singular_values
        .iter()
        .take(n_samples - 1)
        .take_while(|&&s| s > 1e-12 * s_max)
        .count()
        .max(1);
    let target = 1.0 - epsilon;
    let mut k = usable;
    let mut acc = 0.0;
    for (i, v) in sq.iter().take(usable).enumerate() {
        acc += v;
        if acc / total >= target - 1e-12 {
            k = i + 1;
            break;
        }
    }
    let truncated_by_cap = k > max_components;
    let k = k.min(max_components);

    let mut basis = svd.u.columns(0, k).into_owned();
    let mut scores = DMatrix::zeros(k, n_samples);
    for c in 0..k {
        let (imax, _) = basis
            .column(c)
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best });
        let sign = if basis[(imax, c)] < 0.0 { -1.0 } else { 1.0 };
        let mut col = basis.column_mut(c);
        col *= sign;
        let s = svd.singular_values[c] * sign;
        for j in 0..n_samples {
            scores[(c, j)] = s * svd.v_t[(c, j)];
        }
    }
    let denom = (n_samples - 1) as f64;
    let variances = sq[..k].iter().map(|v| v / denom).collect();
    let retained_fraction = (sq[..k].iter().sum::<f64>() / total).min(1.0);
    Ok((
        PcaModel {
            mean,
            basis,
            variances,
            retained_fraction,
            truncated_by_cap,
        },
        scores,
    ))
}

#[derive(Debug, Clone)]
pub struct LinearSolveReport {
    /// q × r coefficient matrix.
    pub coefficients: DMatrix<f64>,
    pub rank: usize,
    /// Absolute singular-value cutoff actually applied.
    pub tolerance_used: f64,
}

/// Minimum-norm least-squares solution of `design · B ≈ targets`.
///
/// Singular values below `tol × σ_max` are treated as zero, which gives
/// pseudo-inverse behaviour for rank-deficient systems.
pub fn solve_least_squares(
    design: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    tol: f64,
) -> Result<LinearSolveReport> {
    if design.nrows() != targets.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, targets have {}",
            design.nrows(),
            targets.nrows()
        )));
    }
    if design.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares system"));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let q = design.ncols();
    let r = targets.ncols();
    if design.nrows() == 0 || q == 0 {
        return Ok(LinearSolveReport {
            coefficients: DMatrix::zeros(q, r),
            rank: 0,
            tolerance_used: tol,
        });
    }
    let svd = thin_svd(design)?;
    let s_max = svd.singular_values[0];
    let cutoff = if s_max > 0.0 { tol * s_max } else { tol };
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let mut coefficients = DMatrix::zeros(q, r);
    if rank > 0 {
        let u = svd.u.columns(0, rank);
        let v_t = svd.v_t.rows(0, rank);
        let mut proj = u.transpose() * targets;
        for (i, mut row) in proj.row_iter_mut().enumerate() {
            row /= svd.singular_values[i];
        }
        coefficients = v_t.transpose() * proj;
    }
    Ok(LinearSolveReport {
        coefficients,
        rank,
        tolerance_used: cutoff,
    })
}

/// Draws a Haar-distributed orthogonal matrix by QR-factorizing a standard
/// Gaussian matrix and fixing the signs of R's diagonal.
pub fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if dim < 1 {
        return Err(Error::InvalidParameter("rotation dimension must be >= 1".into()));
    }
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col *= -1.0;
        }
    }
    Ok(q)
}
