//! Hypergeometric over-representation.
//!
//! The point mass uses Loader's saddle-point expansion (`stirlerr` / `bd0`),
//! which keeps full relative precision for large universes; the tail is
//! summed from the side of the distribution where terms shrink
//! geometrically.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::Serialize;

use crate::baseline::bh_fdr;
use crate::error::{Error, Result};
use crate::expr_data::{canonical_gene_id, GeneSetLibrary};

/// stirlerr(n) for n = 0..=15.
const STIRLERR_SMALL: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_26,
    0.041_340_695_955_409_3,
    0.027_677_925_684_998_34,
    0.020_790_672_103_765_093,
    0.016_644_691_189_821_192,
    0.013_876_128_823_070_748,
    0.011_896_709_945_891_77,
    0.010_411_265_261_972_096,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_87,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_53,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
];

/// ln(n!) − [(n + ½) ln n − n + ½ ln 2π] for integer n ≥ 0.
fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return STIRLERR_SMALL[n as usize];
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term x ln(x / np) + np − x, evaluated stably near x = np.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        return s;
    }
    x * (x / np).ln() + np - x
}

/// Binomial point mass with p + q = 1 passed separately.
fn dbinom_raw(x: f64, n: f64, p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return if x == 0.0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if x == n { 1.0 } else { 0.0 };
    }
    if x == 0.0 {
        if n == 0.0 {
            return 1.0;
        }
        let lc = if p < 0.1 {
            -bd0(n, n * q) - n * p
        } else {
            n * q.ln()
        };
        return lc.exp();
    }
    if x == n {
        let lc = if q < 0.1 {
            -bd0(n, n * p) - n * q
        } else {
            n * p.ln()
        };
        return lc.exp();
    }
    if x < 0.0 || x > n {
        return 0.0;
    }
    let lc = stirlerr(n) - stirlerr(x) - stirlerr(n - x) - bd0(x, n * p) - bd0(n - x, n * q);
    let lf = (2.0 * PI).ln() + x.ln() + (-x / n).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// P(X = x) for X the number of white balls in `n` draws from an urn with
/// `r` white and `b` black balls.
fn dhyper(x: f64, r: f64, b: f64, n: f64) -> f64 {
    if x < 0.0 || x > r || n - x > b || x > n {
        return 0.0;
    }
    if n == 0.0 {
        return if x == 0.0 { 1.0 } else { 0.0 };
    }
    let p = n / (r + b);
    let q = (r + b - n) / (r + b);
    let p1 = dbinom_raw(x, r, p, q);
    let p2 = dbinom_raw(n - x, b, p, q);
    let p3 = dbinom_raw(n, r + b, p, q);
    p1 * p2 / p3
}

/// P(X ≤ x) / P(X = x), summed downward from x.
fn pdhyper(mut x: f64, r: f64, b: f64, n: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    while x > 0.0 && term >= f64::EPSILON * sum {
        term *= x * (b - n + x) / (n + 1.0 - x) / (r + 1.0 - x);
        sum += term;
        x -= 1.0;
    }
    1.0 + sum
}

/// P(X ≤ x) (or P(X > x) when `lower` is false).
fn phyper(x: f64, mut r: f64, mut b: f64, n: f64, mut lower: bool) -> f64 {
    let mut x = (x + 1e-7).floor();
    if x * (r + b) > n * r {
        std::mem::swap(&mut r, &mut b);
        x = n - x - 1.0;
        lower = !lower;
    }
    if x < 0.0 || x < n - b {
        return if lower { 0.0 } else { 1.0 };
    }
    if x >= r || x >= n {
        return if lower { 1.0 } else { 0.0 };
    }
    let d = dhyper(x, r, b, n);
    let pd = pdhyper(x, r, b, n);
    if lower {
        d * pd
    } else {
        0.5 - d * pd + 0.5
    }
}

/// Upper tail P(K ≥ k) where K counts significant genes among `set_size`
/// genes drawn from a universe of `universe` genes, `n_significant` of
/// which are significant.
pub fn hypergeom_tail(k: u64, n_significant: u64, set_size: u64, universe: u64) -> Result<f64> {
    if n_significant > universe || set_size > universe || k > n_significant.min(set_size) {
        return Err(Error::InvalidParameter(format!(
            "inconsistent hypergeometric counts: k={k}, significant={n_significant}, \
             set={set_size}, universe={universe}"
        )));
    }
    if k == 0 {
        return Ok(1.0);
    }
    let p = phyper(
        (k - 1) as f64,
        n_significant as f64,
        (universe - n_significant) as f64,
        set_size as f64,
        false,
    );
    Ok(p.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnrichmentResult {
    pub set_name: String,
    pub overlap: usize,
    pub set_size_in_universe: usize,
    pub p: f64,
    pub q: f64,
    /// Mean 1-based rank of the set's members in the supplied ranking; NaN
    /// when no member is ranked.
    pub mean_rank: f64,
    pub diagnostic: Option<String>,
}

/// Hypergeometric over-representation of `selected` genes in every set of
/// `library`, restricted to `universe`. Results are sorted by p, then name.
pub fn hypergeom_enrich(
    selected: &[String],
    universe: &[String],
    library: &GeneSetLibrary,
    ranking: Option<&[String]>,
) -> Result<Vec<EnrichmentResult>> {
    if library.is_empty() {
        return Err(Error::InvalidParameter("gene set library is empty".into()));
    }
    let universe: HashSet<String> = universe.iter().map(|g| canonical_gene_id(g)).collect();
    if universe.is_empty() {
        return Err(Error::InvalidParameter("gene universe is empty".into()));
    }
    let selected: HashSet<String> = selected
        .iter()
        .map(|g| canonical_gene_id(g))
        .filter(|g| universe.contains(g))
        .collect();
    let rank_of: HashMap<String, usize> = ranking
        .unwrap_or(&[])
        .iter()
        .enumerate()
        .map(|(i, g)| (canonical_gene_id(g), i + 1))
        .collect();

    let mut results = Vec::with_capacity(library.len());
    for set in library.sets() {
        let in_universe: Vec<&String> = set.members().iter().filter(|g| universe.contains(*g)).collect();
        let overlap = in_universe.iter().filter(|g| selected.contains(**g)).count();
        let ranks: Vec<usize> = in_universe.iter().filter_map(|g| rank_of.get(*g).copied()).collect();
        let mean_rank = if ranks.is_empty() {
            f64::NAN
        } else {
            ranks.iter().sum::<usize>() as f64 / ranks.len() as f64
        };
        let (p, diagnostic) = if in_universe.is_empty() {
            (1.0, Some("no members in the gene universe".to_string()))
        } else {
            (
                hypergeom_tail(
                    overlap as u64,
                    selected.len() as u64,
                    in_universe.len() as u64,
                    universe.len() as u64,
                )?,
                None,
            )
        };
        results.push(EnrichmentResult {
            set_name: set.name.clone(),
            overlap,
            set_size_in_universe: in_universe.len(),
            p,
            q: f64::NAN,
            mean_rank,
            diagnostic,
        });
    }
    let q = bh_fdr(&results.iter().map(|r| r.p).collect::<Vec<_>>())?;
    for (r, q) in results.iter_mut().zip(q) {
        r.q = q;
    }
    // Equal p-values are ordered by how high the set sits in the ranking.
    let rank_key = |r: &EnrichmentResult| if r.mean_rank.is_nan() { f64::INFINITY } else { r.mean_rank };
    results.sort_by(|a, b| {
        a.p.total_cmp(&b.p)
            .then_with(|| rank_key(a).total_cmp(&rank_key(b)))
            .then_with(|| a.set_name.cmp(&b.set_name))
    });
    Ok(results)
}

pub const HYPERGEOM_TSV_HEADER: &str = "set_name\toverlap\tset_size\tp\tq\tmean_rank\tsignificant\tdiagnostic";

pub fn hypergeom_to_tsv(results: &[EnrichmentResult], fdr: f64) -> String {
    let mut out = String::from(HYPERGEOM_TSV_HEADER);
    out.push('\n');
    for r in results {
        let mean_rank = if r.mean_rank.is_nan() {
            "NA".to_string()
        } else {
            r.mean_rank.to_string()
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.set_name,
            r.overlap,
            r.set_size_in_universe,
            r.p,
            r.q,
            mean_rank,
            u8::from(r.diagnostic.is_none() && r.q <= fdr),
            r.diagnostic.as_deref().unwrap_or("")
        );
    }
    out
}
