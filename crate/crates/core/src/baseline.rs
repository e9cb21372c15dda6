//! Per-gene Welch t-test with Benjamini–Hochberg correction.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr_data::ClassSplit;
use crate::special::student_t_two_sided;

pub const DEFAULT_FDR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
    /// Both samples have zero variance but different means; `t` is infinite
    /// and `p` is 0 by convention.
    pub zero_variance: bool,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t-test of mean(x1) − mean(x2).
pub fn welch_test(x1: &[f64], x2: &[f64]) -> Result<WelchTest> {
    if x1.len() < 2 || x2.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "each sample needs at least 2 values, got {} and {}",
            x1.len(),
            x2.len()
        )));
    }
    if x1.iter().chain(x2).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-test samples"));
    }
    let (n1, n2) = (x1.len() as f64, x2.len() as f64);
    let (m1, v1) = mean_var(x1);
    let (m2, v2) = mean_var(x2);
    let a = v1 / n1;
    let b = v2 / n2;
    let se2 = a + b;
    if se2 == 0.0 {
        if m1 == m2 {
            return Err(Error::UndefinedStatistic);
        }
        return Ok(WelchTest {
            t: if m1 > m2 { f64::INFINITY } else { f64::NEG_INFINITY },
            df: n1 + n2 - 2.0,
            p: 0.0,
            zero_variance: true,
        });
    }
    let t = (m1 - m2) / se2.sqrt();
    let df = se2 * se2 / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0));
    Ok(WelchTest {
        t,
        df,
        p: student_t_two_sided(t, df),
        zero_variance: false,
    })
}

/// Benjamini–Hochberg step-up q-values, returned in input order.
pub fn bh_fdr(pvals: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidParameter(format!(
            "p-values must lie in [0, 1], got {bad}"
        )));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        let candidate = pvals[i] * (m as f64 / (rank + 1) as f64);
        running = running.min(candidate).min(1.0);
        q[i] = running;
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelchResult {
    pub gene_id: String,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub q: f64,
    pub significant: bool,
    pub diagnostic: Option<String>,
}

/// Runs the Welch test on every gene (class 1 vs class 2) and applies BH
/// across genes. Genes whose statistic is undefined get p = 1 and a
/// diagnostic instead of failing the screen.
pub fn ttest_screen(split: &ClassSplit, fdr_threshold: f64) -> Result<Vec<WelchResult>> {
    split.check()?;
    if !(fdr_threshold > 0.0 && fdr_threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "FDR threshold must lie in (0, 1], got {fdr_threshold}"
        )));
    }
    // (t, df, p, defined, diagnostic)
    let rows: Vec<(f64, f64, f64, bool, Option<String>)> = (0..split.n_genes())
        .into_par_iter()
        .map(|i| {
            let x1: Vec<f64> = split.x1.row(i).iter().copied().collect();
            let x2: Vec<f64> = split.x2.row(i).iter().copied().collect();
            match welch_test(&x1, &x2) {
                Ok(w) if w.zero_variance => (
                    w.t,
                    w.df,
                    w.p,
                    true,
                    Some("zero variance in both classes; p set to 0".to_string()),
                ),
                Ok(w) => (w.t, w.df, w.p, true, None),
                Err(e) => (f64::NAN, f64::NAN, 1.0, false, Some(e.to_string())),
            }
        })
        .collect();
    let p: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let q = bh_fdr(&p)?;
    Ok(rows
        .into_iter()
        .zip(q)
        .zip(&split.gene_ids)
        .map(|(((t, df, p, defined, diagnostic), q), gene)| WelchResult {
            gene_id: gene.clone(),
            t,
            df,
            p,
            q,
            significant: defined && q <= fdr_threshold,
            diagnostic,
        })
        .collect())
}

pub const WELCH_TSV_HEADER: &str = "gene_id\tt\tdf\tp\tq\tsignificant";

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v}")
    }
}

pub fn welch_to_tsv(results: &[WelchResult]) -> String {
    let mut out = String::from("# Welch t-test, two-sided p-values, Benjamini-Hochberg q-values\n");
    for r in results {
        if let Some(d) = &r.diagnostic {
            let _ = writeln!(out, "# diagnostic\t{}\t{}", r.gene_id, d);
        }
    }
    out.push_str(WELCH_TSV_HEADER);
    out.push('\n');
    for r in results {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.gene_id,
            fmt_num(r.t),
            fmt_num(r.df),
            r.p,
            r.q,
            u8::from(r.significant)
        );
    }
    out
}
