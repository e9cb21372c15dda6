//! Top-n overlap of two rankings with a target gene set.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr_data::{canonical_gene_id, GeneSet};
use crate::numeric::mean_stderr;

/// count_a / count_b, keeping the zero-denominator cases apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Ratio {
    Finite(f64),
    /// count_a > 0 and count_b = 0.
    Infinite,
    /// 0 / 0.
    Undefined,
}

impl Ratio {
    fn of(a: usize, b: usize) -> Self {
        match (a, b) {
            (0, 0) => Ratio::Undefined,
            (_, 0) => Ratio::Infinite,
            _ => Ratio::Finite(a as f64 / b as f64),
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Ratio::Finite(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapPoint {
    pub n: usize,
    pub count_a: usize,
    pub count_b: usize,
    pub ratio: Ratio,
}

/// For n = 1..=n_max, how many of the top-n genes of each ranking fall in
/// `target`.
pub fn overlap_curve(
    ranking_a: &[String],
    ranking_b: &[String],
    target: &GeneSet,
    n_max: usize,
) -> Result<Vec<OverlapPoint>> {
    let a: Vec<String> = ranking_a.iter().map(|g| canonical_gene_id(g)).collect();
    let b: Vec<String> = ranking_b.iter().map(|g| canonical_gene_id(g)).collect();
    let set_a: HashSet<&String> = a.iter().collect();
    let set_b: HashSet<&String> = b.iter().collect();
    if set_a.len() != a.len() || set_b.len() != b.len() {
        return Err(Error::InvalidParameter("rankings contain duplicate genes".into()));
    }
    if set_a != set_b {
        return Err(Error::DimensionMismatch(
            "the two rankings cover different gene universes".into(),
        ));
    }
    if n_max == 0 || n_max > a.len() {
        return Err(Error::InvalidParameter(format!(
            "n_max must lie in 1..={}, got {n_max}",
            a.len()
        )));
    }
    let (mut ca, mut cb) = (0, 0);
    Ok((0..n_max)
        .map(|i| {
            ca += usize::from(target.contains(&a[i]));
            cb += usize::from(target.contains(&b[i]));
            OverlapPoint {
                n: i + 1,
                count_a: ca,
                count_b: cb,
                ratio: Ratio::of(ca, cb),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregatedRatio {
    pub n: usize,
    /// Mean over experiments with a finite ratio at this n; NaN if none.
    pub mean: f64,
    pub stderr: f64,
    pub n_defined: usize,
    /// Experiments whose ratio had a zero denominator at this n.
    pub n_excluded: usize,
}

/// Per-n mean ratio and standard error across experiments. Curves may have
/// different lengths; each n uses the curves that reach it.
pub fn aggregate_ratios(curves: &[Vec<OverlapPoint>]) -> Vec<AggregatedRatio> {
    let n_max = curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..n_max)
        .map(|i| {
            let points: Vec<&OverlapPoint> = curves.iter().filter_map(|c| c.get(i)).collect();
            let values: Vec<f64> = points.iter().filter_map(|p| p.ratio.value()).collect();
            let (mean, stderr) = mean_stderr(&values);
            AggregatedRatio {
                n: i + 1,
                mean,
                stderr,
                n_defined: values.len(),
                n_excluded: points.len() - values.len(),
            }
        })
        .collect()
}

pub const AGGREGATE_TSV_HEADER: &str = "n\tmean_ratio\tstderr\tn_defined\tn_excluded";

pub fn aggregate_to_tsv(rows: &[AggregatedRatio]) -> String {
    let fmt = |v: f64| if v.is_nan() { "NA".to_string() } else { v.to_string() };
    let mut out = String::from(AGGREGATE_TSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", r.n, fmt(r.mean), fmt(r.stderr), r.n_defined, r.n_excluded);
    }
    out
}
