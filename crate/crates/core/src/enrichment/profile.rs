//! Enrichment of significant genes along a list ordered by distance to the
//! nearest binding site.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use rayon::prelude::*;
use serde::Serialize;

use super::hypergeom::hypergeom_tail;
use crate::error::{Error, Result};
use crate::expr_data::canonical_gene_id;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Association {
    pub gene_id: String,
    /// Base pairs, nonnegative.
    pub distance: f64,
}

/// Reads `gene_id<TAB>distance` rows. A first row whose distance column is
/// not numeric is taken as a header; `#` lines are skipped.
pub fn parse_associations_tsv<R: BufRead>(reader: R) -> Result<Vec<Association>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: lineno,
                column: 1,
                message: "expected gene_id and distance columns".into(),
            });
        }
        let distance = match fields[1].trim().parse::<f64>() {
            Ok(d) => d,
            Err(_) if out.is_empty() => continue,
            Err(_) => {
                return Err(Error::Parse {
                    line: lineno,
                    column: 2,
                    message: format!("invalid distance {:?}", fields[1]),
                })
            }
        };
        if !distance.is_finite() || distance < 0.0 {
            return Err(Error::Parse {
                line: lineno,
                column: 2,
                message: format!("distance must be a nonnegative number, got {distance}"),
            });
        }
        out.push(Association {
            gene_id: canonical_gene_id(fields[0]),
            distance,
        });
    }
    Ok(out)
}

/// Keeps each gene's most proximal site and sorts by distance (ties by
/// gene id).
pub fn prepare_associations(entries: &[Association]) -> Vec<Association> {
    let mut best: HashMap<String, f64> = HashMap::new();
    for e in entries {
        let id = canonical_gene_id(&e.gene_id);
        best.entry(id)
            .and_modify(|d| *d = d.min(e.distance))
            .or_insert(e.distance);
    }
    let mut out: Vec<Association> = best
        .into_iter()
        .map(|(gene_id, distance)| Association { gene_id, distance })
        .collect();
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.gene_id.cmp(&b.gene_id)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub mean_distance: f64,
    pub overlap: usize,
    pub p: f64,
}

/// Hypergeometric enrichment of `significant` genes in every window of
/// `window` consecutive genes (stride 1).
pub fn sliding_window_profile(
    ordered: &[Association],
    significant: &HashSet<String>,
    window: usize,
    universe: usize,
) -> Result<Vec<ProfilePoint>> {
    if window == 0 || window > ordered.len() {
        return Err(Error::InvalidParameter(format!(
            "window must lie in 1..={}, got {window}",
            ordered.len()
        )));
    }
    if ordered.windows(2).any(|w| w[1].distance < w[0].distance) {
        return Err(Error::InvalidParameter("associations are not sorted by distance".into()));
    }
    let ids: Vec<String> = ordered.iter().map(|a| canonical_gene_id(&a.gene_id)).collect();
    if ids.iter().collect::<HashSet<_>>().len() != ids.len() {
        return Err(Error::InvalidParameter("associations contain duplicate genes".into()));
    }
    let significant: HashSet<String> = significant.iter().map(|g| canonical_gene_id(g)).collect();
    if universe < ordered.len() || universe < significant.len() {
        return Err(Error::InvalidParameter(format!(
            "universe of {universe} genes is smaller than the inputs"
        )));
    }
    let hits: Vec<bool> = ids.iter().map(|g| significant.contains(g)).collect();
    let n_sig = significant.len() as u64;
    (0..=ordered.len() - window)
        .into_par_iter()
        .map(|start| {
            let range = start..start + window;
            let overlap = hits[range.clone()].iter().filter(|&&h| h).count();
            let mean_distance =
                ordered[range].iter().map(|a| a.distance).sum::<f64>() / window as f64;
            let p = hypergeom_tail(overlap as u64, n_sig, window as u64, universe as u64)?;
            Ok(ProfilePoint { mean_distance, overlap, p })
        })
        .collect()
}

pub const PROFILE_TSV_HEADER: &str = "mean_distance\tminus_log10_p";

pub fn profile_to_tsv(points: &[ProfilePoint]) -> String {
    let mut out = String::from(PROFILE_TSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(out, "{}\t{}", p.mean_distance, -p.p.log10() + 0.0);
    }
    out
}
