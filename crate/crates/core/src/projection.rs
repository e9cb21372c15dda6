//! Sample coordinates along characteristic directions: single projections,
//! a hierarchy of mutually orthogonal directions obtained by deflation, and
//! Gaussian kernel density curves of the projected classes.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::chdir::{chdir_lr1, CharacteristicDirection, Lr1Params};
use crate::error::{Error, Result};
use crate::expr_data::{canonical_gene_id, ClassSplit, ExpressionMatrix};
use crate::linalg::pca_reduce;

pub const DEFAULT_DEPTH: usize = 2;
pub const GRID_POINTS: usize = 256;
/// Bandwidth used when the automatic rule sees zero spread.
pub const FALLBACK_BANDWIDTH: f64 = 1.0;

/// Coordinates b · x_j for every column x_j of `data` (genes × samples).
pub fn project_columns(coefficients: &[f64], data: &DMatrix<f64>) -> Result<Vec<f64>> {
    if coefficients.len() != data.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "direction has {} genes, data has {}",
            coefficients.len(),
            data.nrows()
        )));
    }
    let b = DVector::from_column_slice(coefficients);
    Ok((data.transpose() * b).iter().copied().collect())
}

/// Projects every sample of `matrix` onto `direction`. The two gene lists
/// must agree in order.
pub fn project(direction: &CharacteristicDirection, matrix: &ExpressionMatrix) -> Result<Vec<f64>> {
    let same = direction.gene_ids.len() == matrix.n_genes()
        && direction
            .gene_ids
            .iter()
            .zip(matrix.gene_ids())
            .all(|(a, b)| canonical_gene_id(a) == canonical_gene_id(b));
    if !same {
        return Err(Error::DimensionMismatch(
            "direction and matrix list different genes".into(),
        ));
    }
    project_columns(&direction.coefficients, matrix.values())
}

#[derive(Debug, Clone)]
pub struct ProjectionHierarchy {
    /// Mutually orthogonal, one per level.
    pub directions: Vec<CharacteristicDirection>,
    /// levels × samples; row i holds each sample's coordinate on direction i
    /// after deflation by the earlier directions.
    pub coords: DMatrix<f64>,
    /// Class 1 samples first, then class 2.
    pub sample_ids: Vec<String>,
    /// 1 or 2 per sample.
    pub class_of_sample: Vec<u8>,
    /// Set when fewer levels than requested could be fitted.
    pub diagnostic: Option<String>,
}

impl ProjectionHierarchy {
    pub fn depth(&self) -> usize {
        self.directions.len()
    }
}

fn centered_pooled(split: &ClassSplit) -> DMatrix<f64> {
    let mut data = split.pooled();
    let mean = data.column_mean();
    for mut col in data.column_iter_mut() {
        col -= &mean;
    }
    data
}

/// Fits `depth` characteristic directions in turn, each on the data with
/// the earlier directions projected out. Data are mean-centred once up
/// front. If the signal runs out before `depth` levels, the hierarchy is
/// truncated and `diagnostic` says why.
pub fn project_hierarchy(split: &ClassSplit, depth: usize, params: Lr1Params) -> Result<ProjectionHierarchy> {
    split.check()?;
    let n = split.n1() + split.n2();
    let max_depth = (n - 2).min(split.n_genes());
    if depth == 0 || depth > max_depth {
        return Err(Error::InvalidParameter(format!(
            "depth must lie in 1..={max_depth}, got {depth}"
        )));
    }
    let n1 = split.n1();
    let mut data = centered_pooled(split);
    let mut directions = Vec::with_capacity(depth);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(depth);
    let mut diagnostic = None;
    for level in 0..depth {
        let current = ClassSplit {
            gene_ids: split.gene_ids.clone(),
            class1_samples: split.class1_samples.clone(),
            class2_samples: split.class2_samples.clone(),
            x1: data.columns(0, n1).into_owned(),
            x2: data.columns(n1, n - n1).into_owned(),
        };
        let dir = match chdir_lr1(&current, params) {
            Ok(d) => d,
            Err(e @ (Error::NoDifferentialSignal | Error::ZeroVariance)) if level > 0 => {
                diagnostic = Some(format!("stopped after {level} level(s): {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let coords = project_columns(&dir.coefficients, &data)?;
        let b = dir.as_vector();
        data -= &b * DMatrix::from_row_slice(1, n, &coords);
        rows.push(coords);
        directions.push(dir);
    }
    let coords = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    let class_of_sample = (0..n).map(|j| if j < n1 { 1 } else { 2 }).collect();
    Ok(ProjectionHierarchy {
        directions,
        coords,
        sample_ids: split.pooled_sample_ids(),
        class_of_sample,
        diagnostic,
    })
}

/// Bandwidth choice for [`density_estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Silverman's rule, 1.06 σ n^(−1/5).
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub diagnostic: Option<String>,
}

fn resolve_bandwidth(points: &[f64], bandwidth: Bandwidth) -> Result<(f64, Option<String>)> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "density estimation needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("density input"));
    }
    match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok((h, None)),
        Bandwidth::Fixed(h) => Err(Error::InvalidParameter(format!(
            "bandwidth must be positive, got {h}"
        ))),
        Bandwidth::Auto => {
            let n = points.len() as f64;
            let mean = points.iter().sum::<f64>() / n;
            let sd = (points.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
            if sd > 0.0 {
                Ok((1.06 * sd * n.powf(-0.2), None))
            } else {
                Ok((
                    FALLBACK_BANDWIDTH,
                    Some(format!("all points equal; bandwidth set to {FALLBACK_BANDWIDTH}")),
                ))
            }
        }
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let step = (hi - lo) / (k - 1) as f64;
    (0..k).map(|i| lo + step * i as f64).collect()
}

/// Gaussian kernel density of `points` with bandwidth `h`, sampled on
/// `grid` and rescaled so its trapezoid integral over the grid is 1. The
/// rescaling absorbs the kernel mass that falls outside a finite grid.
fn kde_on_grid(points: &[f64], h: f64, grid: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (points.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut f: Vec<f64> = grid
        .iter()
        .map(|&x| {
            norm * points
                .iter()
                .map(|&p| {
                    let z = (x - p) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
        })
        .collect();
    let mass = trapezoid(grid, &f);
    if mass > 0.0 {
        f.iter_mut().for_each(|v| *v /= mass);
    }
    f
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// Gaussian kernel density on a 256-point grid spanning three bandwidths
/// beyond the data on either side.
pub fn density_estimate(points: &[f64], bandwidth: Bandwidth) -> Result<DensityCurve> {
    let (h, diagnostic) = resolve_bandwidth(points, bandwidth)?;
    let lo = points.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = points.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let grid = linspace(lo, hi, GRID_POINTS);
    let density = kde_on_grid(points, h, &grid);
    Ok(DensityCurve { grid, density, bandwidth: h, diagnostic })
}

/// Densities of two groups sampled on one shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDensity {
    pub grid: Vec<f64>,
    pub class1: Vec<f64>,
    pub class2: Vec<f64>,
    pub diagnostics: Vec<String>,
}

pub fn paired_density(class1: &[f64], class2: &[f64], bandwidth: Bandwidth) -> Result<PairedDensity> {
    let (h1, d1) = resolve_bandwidth(class1, bandwidth)?;
    let (h2, d2) = resolve_bandwidth(class2, bandwidth)?;
    let h = h1.max(h2);
    let all = class1.iter().chain(class2);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let grid = linspace(lo, hi, GRID_POINTS);
    Ok(PairedDensity {
        class1: kde_on_grid(class1, h1, &grid),
        class2: kde_on_grid(class2, h2, &grid),
        grid,
        diagnostics: [d1.map(|d| format!("class 1: {d}")), d2.map(|d| format!("class 2: {d}"))]
            .into_iter()
            .flatten()
            .collect(),
    })
}

/// First two principal component scores of the pooled samples (fewer if
/// the data have rank one).
pub fn pca_scores_2d(split: &ClassSplit) -> Result<DMatrix<f64>> {
    let (_, scores) = pca_reduce(&split.pooled(), 0.0, 2)?;
    Ok(scores)
}

pub const HIERARCHY_TSV_HEADER_PREFIX: &str = "sample_id\tclass";

pub fn hierarchy_to_tsv(h: &ProjectionHierarchy) -> String {
    let mut out = String::from(HIERARCHY_TSV_HEADER_PREFIX);
    for i in 0..h.depth() {
        let _ = write!(out, "\tcd{}", i + 1);
    }
    out.push('\n');
    for (j, id) in h.sample_ids.iter().enumerate() {
        let _ = write!(out, "{}\t{}", id, h.class_of_sample[j]);
        for i in 0..h.depth() {
            let _ = write!(out, "\t{}", h.coords[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub const DENSITY_TSV_HEADER: &str = "grid_x\tdensity_class1\tdensity_class2";

pub fn density_to_tsv(d: &PairedDensity) -> String {
    let mut out = String::from(DENSITY_TSV_HEADER);
    out.push('\n');
    for i in 0..d.grid.len() {
        let _ = writeln!(out, "{}\t{}\t{}", d.grid[i], d.class1[i], d.class2[i]);
    }
    out
}

pub fn pca_to_tsv(sample_ids: &[String], n1: usize, scores: &DMatrix<f64>) -> String {
    let mut out = String::from("sample_id\tclass");
    for i in 0..scores.nrows() {
        let _ = write!(out, "\tpc{}", i + 1);
    }
    out.push('\n');
    for (j, id) in sample_ids.iter().enumerate() {
        let _ = write!(out, "{}\t{}", id, if j < n1 { 1 } else { 2 });
        for i in 0..scores.nrows() {
            let _ = write!(out, "\t{}", scores[(i, j)]);
        }
        out.push('\n');
    }
    out
}
