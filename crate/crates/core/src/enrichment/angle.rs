//! Principal angles between a characteristic direction and gene-set
//! coordinate subspaces, with isotropic null distributions.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use super::quadrature::integrate;
use crate::baseline::bh_fdr;
use crate::chdir::CharacteristicDirection;
use crate::error::{Error, Result};
use crate::expr_data::{canonical_gene_id, GeneSet, GeneSetLibrary};
use crate::special::beta_reg;

const QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalAngle {
    /// Radians in [0, π/2].
    pub theta: f64,
    /// Set members found among the direction's genes.
    pub n_present: usize,
    /// Set members absent from the direction's genes (dropped).
    pub n_missing: usize,
}

/// First principal angle between the direction and the coordinate subspace
/// spanned by the set's genes.
pub fn principal_angle(direction: &CharacteristicDirection, set: &GeneSet) -> Result<PrincipalAngle> {
    let index: HashMap<String, usize> = direction
        .gene_ids
        .iter()
        .enumerate()
        .map(|(i, g)| (canonical_gene_id(g), i))
        .collect();
    let mut inside = vec![false; direction.len()];
    let mut n_present = 0;
    for m in set.members() {
        if let Some(&i) = index.get(m) {
            if !inside[i] {
                inside[i] = true;
                n_present += 1;
            }
        }
    }
    if n_present == 0 {
        return Err(Error::EmptyIntersection(set.name.clone()));
    }
    let (mut on, mut off) = (0.0, 0.0);
    for (c, &is_in) in direction.coefficients.iter().zip(&inside) {
        if is_in {
            on += c * c;
        } else {
            off += c * c;
        }
    }
    // atan2 of the orthogonal and in-subspace norms stays exact at both ends,
    // where arccos of a rounded cosine would not.
    Ok(PrincipalAngle {
        theta: off.sqrt().atan2(on.sqrt()),
        n_present,
        n_missing: set.len() - n_present,
    })
}

fn check_angle_args(theta: f64, n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("dimension must be at least 3, got {n}")));
    }
    if !(0.0..=FRAC_PI_2).contains(&theta) {
        return Err(Error::InvalidParameter(format!("angle {theta} outside [0, pi/2]")));
    }
    Ok(())
}

/// ln ∫_0^{π/2} sin^{n−2} φ dφ.
fn ln_sine_power_integral(n: usize) -> f64 {
    let n = n as f64;
    0.5 * PI.ln() - 2f64.ln() + ln_gamma((n - 1.0) / 2.0) - ln_gamma(n / 2.0)
}

/// Density on [0, π/2] of the angle between two independent isotropic lines
/// in n dimensions: proportional to sin^{n−2} φ, normalized over the
/// quarter turn.
pub fn angle_null_density(phi: f64, n: usize) -> Result<f64> {
    check_angle_args(phi, n)?;
    Ok(density_unchecked(phi, n, ln_sine_power_integral(n)))
}

fn density_unchecked(phi: f64, n: usize, ln_norm: f64) -> f64 {
    let s = phi.sin();
    if s <= 0.0 {
        return 0.0;
    }
    ((n - 2) as f64 * s.ln() - ln_norm).exp()
}

fn integrate_density(lo: f64, hi: f64, n: usize) -> f64 {
    let ln_norm = ln_sine_power_integral(n);
    // The mass crowds into a band of width ~1/sqrt(n) below π/2; cut there so
    // the adaptive rule sees the peak.
    let w = 1.0 / (n as f64).sqrt();
    let breaks: Vec<f64> = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
        .iter()
        .map(|j| FRAC_PI_2 - j * w)
        .collect();
    integrate(|phi| density_unchecked(phi, n, ln_norm), lo, hi, &breaks, QUAD_TOL)
}

/// Probability that an isotropic line makes an angle of at least `theta`
/// with a fixed line in n dimensions (mass of the null density on
/// [theta, π/2]).
pub fn angle_null_pvalue(theta: f64, n: usize) -> Result<f64> {
    check_angle_args(theta, n)?;
    if theta == 0.0 {
        return Ok(1.0);
    }
    if theta == FRAC_PI_2 {
        return Ok(0.0);
    }
    Ok(integrate_density(theta, FRAC_PI_2, n).clamp(0.0, 1.0))
}

/// Probability that an isotropic line in n dimensions comes within `theta`
/// of a fixed m-dimensional coordinate subspace. Small values mean the
/// direction is unusually aligned with the subspace. A subspace covering
/// every coordinate always contains the line, so m ≥ n gives 1.
pub fn subspace_angle_pvalue(theta: f64, m: usize, n: usize) -> Result<f64> {
    check_angle_args(theta, n)?;
    if m == 0 {
        return Err(Error::InvalidParameter("subspace dimension must be positive".into()));
    }
    if m >= n {
        return Ok(1.0);
    }
    // sin²Θ of an isotropic line is Beta((n − m)/2, m/2)
    let s = theta.sin();
    Ok(beta_reg((n - m) as f64 / 2.0, m as f64 / 2.0, s * s).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleEnrichmentResult {
    pub set_name: String,
    /// NaN when the set shares no genes with the direction.
    pub theta: f64,
    pub set_size_in_universe: usize,
    pub p: f64,
    pub q: f64,
    pub diagnostic: Option<String>,
}

/// Scores every set by how closely the direction aligns with the set's
/// coordinate subspace. Results are sorted by p, then name.
pub fn angle_enrich(
    direction: &CharacteristicDirection,
    library: &GeneSetLibrary,
) -> Result<Vec<AngleEnrichmentResult>> {
    if library.is_empty() {
        return Err(Error::InvalidParameter("gene set library is empty".into()));
    }
    let n = direction.len();
    let mut results = Vec::with_capacity(library.len());
    for set in library.sets() {
        let r = match principal_angle(direction, set) {
            Ok(a) => AngleEnrichmentResult {
                set_name: set.name.clone(),
                theta: a.theta,
                set_size_in_universe: a.n_present,
                p: subspace_angle_pvalue(a.theta, a.n_present, n)?,
                q: f64::NAN,
                diagnostic: (a.n_missing > 0)
                    .then(|| format!("{} member(s) not in the direction's genes", a.n_missing)),
            },
            Err(Error::EmptyIntersection(_)) => AngleEnrichmentResult {
                set_name: set.name.clone(),
                theta: f64::NAN,
                set_size_in_universe: 0,
                p: 1.0,
                q: f64::NAN,
                diagnostic: Some("no members among the direction's genes".into()),
            },
            Err(e) => return Err(e),
        };
        results.push(r);
    }
    let q = bh_fdr(&results.iter().map(|r| r.p).collect::<Vec<_>>())?;
    for (r, q) in results.iter_mut().zip(q) {
        r.q = q;
    }
    results.sort_by(|a, b| a.p.total_cmp(&b.p).then_with(|| a.set_name.cmp(&b.set_name)));
    Ok(results)
}

pub const ANGLE_TSV_HEADER: &str = "set_name\ttheta\tp\tq\tset_size\tdiagnostic";

pub fn angle_to_tsv(results: &[AngleEnrichmentResult]) -> String {
    let mut out = String::from(ANGLE_TSV_HEADER);
    out.push('\n');
    for r in results {
        let theta = if r.theta.is_nan() {
            "NA".to_string()
        } else {
            r.theta.to_string()
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.set_name,
            theta,
            r.p,
            r.q,
            r.set_size_in_universe,
            r.diagnostic.as_deref().unwrap_or("")
        );
    }
    out
}
