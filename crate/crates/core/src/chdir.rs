//! Characteristic Direction estimators.
//!
//! Both estimators return a unit vector over genes whose squared components
//! sum to one, so each squared component reads as that gene's share of the
//! total differential expression. The sign is fixed so the direction points
//! from the class 1 centroid toward the class 2 centroid.
//!
//! * [`chdir_lr1`] regresses a −1/+1 class contrast on the PCA scores of the
//!   pooled samples and maps the hyperplane normal back to gene space.
//! * [`chdir_np1`] rescales the observed centroid difference by the
//!   per-component spread of a label-permutation null.

use std::cmp::Ordering;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr_data::ClassSplit;
use crate::linalg::{self, pca_reduce, solve_least_squares};
use crate::rng::{derive_seed, seeded_rng};

pub const DEFAULT_PERMUTATIONS: usize = 200;
pub const MIN_PERMUTATIONS: usize = 100;
pub const DEFAULT_ALPHA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "LR1")]
    Lr1,
    #[serde(rename = "NP1")]
    Np1,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lr1 => "LR1",
            Method::Np1 => "NP1",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr1" => Ok(Method::Lr1),
            "np1" => Ok(Method::Np1),
            _ => Err(Error::InvalidParameter(format!("unknown method {s:?}"))),
        }
    }
}

/// Unit-norm direction over genes characterizing a two-class difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicDirection {
    pub gene_ids: Vec<String>,
    pub coefficients: Vec<f64>,
    pub method: Method,
    /// Euclidean norm of the class 2 − class 1 centroid difference.
    pub magnitude: f64,
}

impl CharacteristicDirection {
    /// Wraps externally supplied coefficients, rescaling them to unit norm.
    pub fn from_coefficients(
        gene_ids: Vec<String>,
        coefficients: Vec<f64>,
        method: Method,
        magnitude: f64,
    ) -> Result<Self> {
        if gene_ids.len() != coefficients.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} gene ids for {} coefficients",
                gene_ids.len(),
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("direction coefficients"));
        }
        let norm = coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::NoDifferentialSignal);
        }
        Ok(Self {
            gene_ids,
            coefficients: coefficients.iter().map(|c| c / norm).collect(),
            method,
            magnitude,
        })
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn squared(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c * c).collect()
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }
}

/// Parameters of the regression estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lr1Params {
    pub epsilon: f64,
    pub max_components: usize,
}

impl Default for Lr1Params {
    fn default() -> Self {
        Self {
            epsilon: linalg::DEFAULT_EPSILON,
            max_components: linalg::DEFAULT_MAX_COMPONENTS,
        }
    }
}

fn centroid_difference(split: &ClassSplit) -> DVector<f64> {
    split.x2.column_mean() - split.x1.column_mean()
}

/// Unit-normalizes `b` and orients it along `diff`.
fn finish(
    split: &ClassSplit,
    mut b: DVector<f64>,
    diff: &DVector<f64>,
    method: Method,
) -> Result<CharacteristicDirection> {
    let norm = b.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::NoDifferentialSignal);
    }
    b /= norm;
    if b.dot(diff) < 0.0 {
        b = -b;
    }
    Ok(CharacteristicDirection {
        gene_ids: split.gene_ids.clone(),
        coefficients: b.iter().copied().collect(),
        method,
        magnitude: diff.norm(),
    })
}

/// Regression estimator: a centered −1/+1 class contrast is regressed on the
/// PCA scores of the pooled samples; the coefficient vector is the normal of
/// the separating hyperplane in PCA coordinates and is carried back to gene
/// space through the PCA basis.
pub fn chdir_lr1(split: &ClassSplit, params: Lr1Params) -> Result<CharacteristicDirection> {
    split.check()?;
    let pooled = split.pooled();
    let (model, scores) = pca_reduce(&pooled, params.epsilon, params.max_components)?;

    let n1 = split.n1();
    let n = pooled.ncols();
    let target_mean = (split.n2() as f64 - n1 as f64) / n as f64;
    let y = DMatrix::from_fn(n, 1, |j, _| if j < n1 { -1.0 } else { 1.0 } - target_mean);
    let design = scores.transpose();

    // With centered scores, design' y vanishes exactly when the class
    // centroids coincide inside the retained subspace.
    let signal = (design.transpose() * &y).norm();
    if signal <= 1e-12 * design.norm() * y.norm() {
        return Err(Error::NoDifferentialSignal);
    }

    let fit = solve_least_squares(&design, &y, linalg::DEFAULT_LSQ_TOLERANCE)?;
    let normal = &model.basis * fit.coefficients.column(0);
    finish(split, normal, &centroid_difference(split), Method::Lr1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Np1Params {
    pub n_permutations: usize,
    pub seed: u64,
}

impl Np1Params {
    pub fn new(seed: u64) -> Self {
        Self {
            n_permutations: DEFAULT_PERMUTATIONS,
            seed,
        }
    }
}

/// Per-sample weights turning pooled columns into a class 2 − class 1
/// centroid difference for the labelling `order` (first `n1` are class 1).
fn contrast_weights(order: &[usize], n1: usize) -> DVector<f64> {
    let n = order.len();
    let n2 = n - n1;
    let mut w = DVector::zeros(n);
    for (pos, &col) in order.iter().enumerate() {
        w[col] = if pos < n1 {
            -1.0 / n1 as f64
        } else {
            1.0 / n2 as f64
        };
    }
    w
}

/// Permutation estimator.
///
/// Class labels are shuffled `n_permutations` times (class sizes kept) to
/// build a null set of centroid differences. The observed difference is
/// expressed in the principal axes of that null set, each coordinate divided
/// by the null standard deviation along its axis, and mapped back to gene
/// space. Permutation `i` draws from its own stream keyed by `(seed, i)`, so
/// the result does not depend on the rayon worker count.
pub fn chdir_np1(split: &ClassSplit, params: Np1Params) -> Result<CharacteristicDirection> {
    split.check()?;
    if params.n_permutations < MIN_PERMUTATIONS {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_PERMUTATIONS} permutations are required, got {}",
            params.n_permutations
        )));
    }
    let diff = centroid_difference(split);
    if diff.norm() == 0.0 {
        return Err(Error::NoDifferentialSignal);
    }

    let pooled = split.pooled();
    let n1 = split.n1();
    let n = pooled.ncols();
    let mean = pooled.column_mean();
    let mut centered = pooled;
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }

    // Every centroid difference lies in the column space of the centered
    // pooled data, so the null set is handled in those coordinates.
    let svd = linalg::thin_svd(&centered)?;
    let s_max = svd.singular_values[0];
    if s_max == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let rank = svd
        .singular_values
        .iter()
        .take_while(|&&s| s > 1e-12 * s_max)
        .count();
    let u = svd.u.columns(0, rank).into_owned();
    // to_coords · w gives the coordinates of centered · w in the basis u.
    let mut to_coords = svd.v_t.rows(0, rank).into_owned();
    for (i, mut row) in to_coords.row_iter_mut().enumerate() {
        row *= svd.singular_values[i];
    }

    let observed_order: Vec<usize> = (0..n).collect();
    let observed = &to_coords * contrast_weights(&observed_order, n1);

    let null_columns: Vec<DVector<f64>> = (0..params.n_permutations)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded_rng(derive_seed(params.seed, i as u64));
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            &to_coords * contrast_weights(&order, n1)
        })
        .collect();
    let mut null = DMatrix::from_columns(&null_columns);
    let null_mean = null.column_mean();
    for mut col in null.column_iter_mut() {
        col -= &null_mean;
    }

    let null_svd = linalg::thin_svd(&null)?;
    let denom = ((params.n_permutations - 1) as f64).sqrt();
    let sds: Vec<f64> = null_svd.singular_values.iter().map(|s| s / denom).collect();
    let floor = 1e-12 * sds[0];
    if sds[0].is_nan() || sds[0] <= 0.0 {
        return Err(Error::NoDifferentialSignal);
    }

    let axes = &null_svd.u;
    let mut z = axes.transpose() * &observed;
    for (i, zi) in z.iter_mut().enumerate() {
        *zi /= sds[i].max(floor);
    }
    let b = &u * (axes * z);
    finish(split, b, &diff, Method::Np1)
}

/// Dispatches to the estimator named by `method`.
pub fn estimate(
    split: &ClassSplit,
    method: Method,
    lr1: Lr1Params,
    np1: Np1Params,
) -> Result<CharacteristicDirection> {
    match method {
        Method::Lr1 => chdir_lr1(split, lr1),
        Method::Np1 => chdir_np1(split, np1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedGene {
    pub gene_id: String,
    pub coefficient: f64,
    pub squared_coefficient: f64,
    pub cumulative_fraction: f64,
    /// 1-based.
    pub rank: usize,
    /// +1 positively discriminant (up in class 2), −1 negatively, 0 neither.
    pub discriminant_sign: i8,
    pub significant: bool,
}

/// Genes ranked by squared coefficient with the smallest prefix whose
/// cumulative share reaches `alpha` marked significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificantGeneCall {
    pub ranked_genes: Vec<RankedGene>,
    pub alpha: f64,
    pub selected_count: usize,
}

impl SignificantGeneCall {
    pub fn selected(&self) -> &[RankedGene] {
        &self.ranked_genes[..self.selected_count]
    }

    pub fn positively_discriminant(&self) -> impl Iterator<Item = &RankedGene> {
        self.selected().iter().filter(|g| g.discriminant_sign > 0)
    }

    pub fn negatively_discriminant(&self) -> impl Iterator<Item = &RankedGene> {
        self.selected().iter().filter(|g| g.discriminant_sign < 0)
    }

    pub const TSV_HEADER: &'static str = "gene_id\tcoefficient\tsquared_coefficient\tcumulative_fraction\trank\tdiscriminant_sign\tsignificant";

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(Self::TSV_HEADER);
        out.push('\n');
        for g in &self.ranked_genes {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                g.gene_id,
                g.coefficient,
                g.squared_coefficient,
                g.cumulative_fraction,
                g.rank,
                g.discriminant_sign,
                u8::from(g.significant)
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ranked genes serialize")
    }
}

pub fn call_significant(direction: &CharacteristicDirection, alpha: f64) -> Result<SignificantGeneCall> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    let mut order: Vec<usize> = (0..direction.len()).collect();
    let sq = direction.squared();
    order.sort_by(|&a, &b| {
        sq[b].partial_cmp(&sq[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| direction.gene_ids[a].cmp(&direction.gene_ids[b]))
    });
    let mut cumulative = 0.0;
    let mut selected_count = None;
    let mut ranked_genes = Vec::with_capacity(order.len());
    for (pos, &i) in order.iter().enumerate() {
        cumulative += sq[i];
        if selected_count.is_none() && cumulative >= alpha - 1e-12 {
            selected_count = Some(pos + 1);
        }
        let c = direction.coefficients[i];
        ranked_genes.push(RankedGene {
            gene_id: direction.gene_ids[i].clone(),
            coefficient: c,
            squared_coefficient: sq[i],
            cumulative_fraction: cumulative,
            rank: pos + 1,
            discriminant_sign: if c > 0.0 {
                1
            } else if c < 0.0 {
                -1
            } else {
                0
            },
            significant: false,
        });
    }
    let selected_count = selected_count.unwrap_or(ranked_genes.len());
    for g in ranked_genes.iter_mut().take(selected_count) {
        g.significant = true;
    }
    Ok(SignificantGeneCall {
        ranked_genes,
        alpha,
        selected_count,
    })
}
