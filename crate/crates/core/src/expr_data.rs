//! Expression matrices, two-class designs and gene-set libraries.
//!
//! Gene identifiers are canonicalized (trimmed, upper-cased) on the way in so
//! that expression rows and gene-set members match regardless of the source
//! file's casing. Sample identifiers are only trimmed.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Canonical form of a gene identifier.
pub fn canonical_gene_id(raw: &str) -> String {
    raw.trim().to_uppercase()
}

/// Genes × samples table of log-scale expression values.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    gene_ids: Vec<String>,
    sample_ids: Vec<String>,
    values: DMatrix<f64>,
    log_base: f64,
}

impl ExpressionMatrix {
    /// Builds a matrix, canonicalizing gene ids and checking every invariant.
    pub fn new(
        gene_ids: Vec<String>,
        sample_ids: Vec<String>,
        values: DMatrix<f64>,
        log_base: f64,
    ) -> Result<Self> {
        if values.nrows() != gene_ids.len() || values.ncols() != sample_ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "values are {}x{}, ids describe {}x{}",
                values.nrows(),
                values.ncols(),
                gene_ids.len(),
                sample_ids.len()
            )));
        }
        if gene_ids.is_empty() || sample_ids.is_empty() {
            return Err(Error::EmptyMatrix("no genes or no samples".into()));
        }
        if !(log_base.is_finite() && log_base > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "log base must be positive, got {log_base}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("expression values"));
        }
        let gene_ids: Vec<String> = gene_ids.iter().map(|g| canonical_gene_id(g)).collect();
        let mut seen = HashSet::new();
        for g in &gene_ids {
            if g.is_empty() {
                return Err(Error::InvalidParameter("empty gene id".into()));
            }
            if !seen.insert(g.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate gene id {g:?}")));
            }
        }
        let sample_ids: Vec<String> = sample_ids.iter().map(|s| s.trim().to_string()).collect();
        let mut seen = HashSet::new();
        for (column, s) in sample_ids.iter().enumerate() {
            if !seen.insert(s.as_str()) {
                return Err(Error::DuplicateSample {
                    id: s.clone(),
                    column: column + 1,
                });
            }
        }
        Ok(Self {
            gene_ids,
            sample_ids,
            values,
            log_base,
        })
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn log_base(&self) -> f64 {
        self.log_base
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn sample_index(&self, id: &str) -> Option<usize> {
        self.sample_ids.iter().position(|s| s == id)
    }

    /// Serializes as expression TSV. Values use the shortest representation
    /// that parses back to the same `f64`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("gene_id");
        for s in &self.sample_ids {
            out.push('\t');
            out.push_str(s);
        }
        out.push('\n');
        for (i, g) in self.gene_ids.iter().enumerate() {
            out.push_str(g);
            for j in 0..self.n_samples() {
                let _ = write!(out, "\t{}", self.values[(i, j)]);
            }
            out.push('\n');
        }
        out
    }
}

fn is_skippable(line: &str) -> bool {
    line.trim().is_empty() || line.starts_with('#')
}

/// Parses an expression TSV.
///
/// The header's first cell is ignored; the remaining cells are sample ids.
/// When `already_log` is false every value `x` is stored as
/// `log2(x + pseudocount)`. Rows sharing a canonical gene id are collapsed to
/// the one with the largest mean absolute (stored) value, kept at the position
/// of the first occurrence.
pub fn parse_expression_tsv<R: BufRead>(
    reader: R,
    already_log: bool,
    pseudocount: f64,
) -> Result<ExpressionMatrix> {
    if !(pseudocount.is_finite() && pseudocount >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "pseudocount must be nonnegative, got {pseudocount}"
        )));
    }
    let mut sample_ids: Option<Vec<String>> = None;
    let mut order: Vec<String> = Vec::new();
    // canonical id -> (row values, mean abs value)
    let mut rows: HashMap<String, (Vec<f64>, f64)> = HashMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if is_skippable(line) {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').collect();
        let Some(samples) = &sample_ids else {
            let ids: Vec<String> = cells[1..].iter().map(|c| c.trim().to_string()).collect();
            let mut seen = HashSet::new();
            for (k, id) in ids.iter().enumerate() {
                if id.is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        column: k + 2,
                        message: "empty sample id".into(),
                    });
                }
                if !seen.insert(id.clone()) {
                    return Err(Error::DuplicateSample {
                        id: id.clone(),
                        column: k + 2,
                    });
                }
            }
            sample_ids = Some(ids);
            continue;
        };
        if cells.len() != samples.len() + 1 {
            return Err(Error::Parse {
                line: line_no,
                column: cells.len(),
                message: format!(
                    "ragged row: expected {} cells, found {}",
                    samples.len() + 1,
                    cells.len()
                ),
            });
        }
        let gene = canonical_gene_id(cells[0]);
        if gene.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                column: 1,
                message: "empty gene id".into(),
            });
        }
        let mut values = Vec::with_capacity(samples.len());
        for (k, cell) in cells[1..].iter().enumerate() {
            let column = k + 2;
            let raw: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                column,
                message: format!("non-numeric value {cell:?}"),
            })?;
            if !raw.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    column,
                    message: format!("missing or non-finite value {cell:?}"),
                });
            }
            let v = if already_log {
                raw
            } else {
                (raw + pseudocount).log2()
            };
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    column,
                    message: format!("log2({raw} + {pseudocount}) is not finite"),
                });
            }
            values.push(v);
        }
        let score = values.iter().map(|v| v.abs()).sum::<f64>() / values.len().max(1) as f64;
        match rows.get_mut(&gene) {
            Some(existing) => {
                if score > existing.1 {
                    *existing = (values, score);
                }
            }
            None => {
                order.push(gene.clone());
                rows.insert(gene, (values, score));
            }
        }
    }

    let sample_ids = sample_ids.ok_or_else(|| Error::EmptyMatrix("no header row".into()))?;
    if sample_ids.is_empty() {
        return Err(Error::EmptyMatrix("header lists no samples".into()));
    }
    if order.is_empty() {
        return Err(Error::EmptyMatrix("no data rows".into()));
    }
    let n_samples = sample_ids.len();
    let values = DMatrix::from_fn(order.len(), n_samples, |i, j| rows[&order[i]].0[j]);
    ExpressionMatrix::new(order, sample_ids, values, 2.0)
}

/// A named gene set with canonicalized, deduplicated members.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneSet {
    pub name: String,
    pub description: String,
    members: Vec<String>,
}

impl GeneSet {
    pub fn new<I, S>(name: &str, description: &str, members: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::InvalidParameter("gene set name is empty".into()));
        }
        let mut seen = HashSet::new();
        let members: Vec<String> = members
            .into_iter()
            .map(|m| canonical_gene_id(m.as_ref()))
            .filter(|m| !m.is_empty() && seen.insert(m.clone()))
            .collect();
        if members.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "gene set {name:?} has no members"
            )));
        }
        Ok(Self {
            name: name.to_string(),
            description: description.to_string(),
            members,
        })
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, gene: &str) -> bool {
        self.members.iter().any(|m| m == gene)
    }
}

/// Ordered collection of gene sets with unique names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeneSetLibrary {
    sets: Vec<GeneSet>,
}

impl GeneSetLibrary {
    pub fn new(sets: Vec<GeneSet>) -> Result<Self> {
        let mut lib = Self::default();
        for s in sets {
            lib.push(s)?;
        }
        Ok(lib)
    }

    pub fn push(&mut self, set: GeneSet) -> Result<()> {
        if self.sets.iter().any(|s| s.name == set.name) {
            return Err(Error::DuplicateSetName(set.name));
        }
        self.sets.push(set);
        Ok(())
    }

    pub fn sets(&self) -> &[GeneSet] {
        &self.sets
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn to_gmt(&self) -> String {
        let mut out = String::new();
        for s in &self.sets {
            out.push_str(&s.name);
            out.push('\t');
            out.push_str(&s.description);
            for m in &s.members {
                out.push('\t');
                out.push_str(m);
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a GMT gene-set library: `name<TAB>description<TAB>gene...` per line.
pub fn parse_gmt<R: BufRead>(reader: R) -> Result<GeneSetLibrary> {
    let mut lib = GeneSetLibrary::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: idx + 1,
                column: fields.len(),
                message: format!("expected at least 3 fields, found {}", fields.len()),
            });
        }
        let set = GeneSet::new(fields[0], fields[1], &fields[2..]).map_err(|e| Error::Parse {
            line: idx + 1,
            column: 1,
            message: e.to_string(),
        })?;
        lib.push(set)?;
    }
    Ok(lib)
}

/// Partition of samples into class 1 (control) and class 2 (treatment).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoClassDesign {
    pub class1_samples: Vec<String>,
    pub class2_samples: Vec<String>,
}

impl TwoClassDesign {
    pub fn new(class1: Vec<String>, class2: Vec<String>) -> Result<Self> {
        let design = Self {
            class1_samples: class1.into_iter().map(|s| s.trim().to_string()).collect(),
            class2_samples: class2.into_iter().map(|s| s.trim().to_string()).collect(),
        };
        design.validate()?;
        Ok(design)
    }

    /// Builds a design from two comma-separated sample lists.
    pub fn from_lists(class1: &str, class2: &str) -> Result<Self> {
        let split = |s: &str| -> Vec<String> {
            s.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(String::from)
                .collect()
        };
        Self::new(split(class1), split(class2))
    }

    fn validate(&self) -> Result<()> {
        for (class, members) in [(1u8, &self.class1_samples), (2u8, &self.class2_samples)] {
            let unique: HashSet<&String> = members.iter().collect();
            if unique.len() < 2 {
                return Err(Error::ClassTooSmall {
                    class,
                    size: unique.len(),
                });
            }
            if unique.len() != members.len() {
                return Err(Error::InvalidParameter(format!(
                    "class {class} lists a sample more than once"
                )));
            }
        }
        let c1: HashSet<&String> = self.class1_samples.iter().collect();
        if let Some(s) = self.class2_samples.iter().find(|s| c1.contains(s)) {
            return Err(Error::OverlappingDesign(s.clone()));
        }
        Ok(())
    }
}

/// Parses a two-column design TSV (`sample_id<TAB>class`, class in {1, 2}).
/// A first line whose class cell is not 1 or 2 is treated as a header.
pub fn parse_design_tsv<R: BufRead>(reader: R) -> Result<TwoClassDesign> {
    let mut class1 = Vec::new();
    let mut class2 = Vec::new();
    let mut first = true;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if is_skippable(line) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: idx + 1,
                column: fields.len(),
                message: "design rows need exactly 2 columns".into(),
            });
        }
        match fields[1] {
            "1" => class1.push(fields[0].to_string()),
            "2" => class2.push(fields[0].to_string()),
            _ if first => {}
            other => {
                return Err(Error::Parse {
                    line: idx + 1,
                    column: 2,
                    message: format!("class must be 1 or 2, found {other:?}"),
                })
            }
        }
        first = false;
    }
    TwoClassDesign::new(class1, class2)
}

/// Expression data split by class, sharing gene rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSplit {
    pub gene_ids: Vec<String>,
    pub class1_samples: Vec<String>,
    pub class2_samples: Vec<String>,
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
}

impl ClassSplit {
    /// Builds a split from raw matrices, naming samples `c1_<j>` / `c2_<j>`.
    pub fn from_matrices(gene_ids: Vec<String>, x1: DMatrix<f64>, x2: DMatrix<f64>) -> Result<Self> {
        let class1_samples = (0..x1.ncols()).map(|j| format!("c1_{}", j + 1)).collect();
        let class2_samples = (0..x2.ncols()).map(|j| format!("c2_{}", j + 1)).collect();
        let split = Self {
            gene_ids,
            class1_samples,
            class2_samples,
            x1,
            x2,
        };
        split.check()?;
        Ok(split)
    }

    pub fn check(&self) -> Result<()> {
        if self.x1.nrows() != self.x2.nrows() || self.x1.nrows() != self.gene_ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "class matrices have {} and {} rows for {} genes",
                self.x1.nrows(),
                self.x2.nrows(),
                self.gene_ids.len()
            )));
        }
        if self.gene_ids.is_empty() {
            return Err(Error::EmptyMatrix("no genes".into()));
        }
        if self.x1.ncols() < 2 {
            return Err(Error::ClassTooSmall {
                class: 1,
                size: self.x1.ncols(),
            });
        }
        if self.x2.ncols() < 2 {
            return Err(Error::ClassTooSmall {
                class: 2,
                size: self.x2.ncols(),
            });
        }
        if self.x1.iter().chain(self.x2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("class matrices"));
        }
        Ok(())
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n1(&self) -> usize {
        self.x1.ncols()
    }

    pub fn n2(&self) -> usize {
        self.x2.ncols()
    }

    /// Class 1 columns followed by class 2 columns.
    pub fn pooled(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_genes(), self.n1() + self.n2());
        out.columns_mut(0, self.n1()).copy_from(&self.x1);
        out.columns_mut(self.n1(), self.n2()).copy_from(&self.x2);
        out
    }

    /// Sample ids in pooled column order.
    pub fn pooled_sample_ids(&self) -> Vec<String> {
        self.class1_samples
            .iter()
            .chain(&self.class2_samples)
            .cloned()
            .collect()
    }
}

/// Selects the class 1 and class 2 columns of `matrix`, in design order.
pub fn align_design(matrix: &ExpressionMatrix, design: &TwoClassDesign) -> Result<ClassSplit> {
    design.validate()?;
    let pick = |ids: &[String]| -> Result<DMatrix<f64>> {
        let idx = ids
            .iter()
            .map(|id| {
                matrix
                    .sample_index(id)
                    .ok_or_else(|| Error::UnknownSample(id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(matrix.values().select_columns(idx.iter()))
    };
    let x1 = pick(&design.class1_samples)?;
    let x2 = pick(&design.class2_samples)?;
    Ok(ClassSplit {
        gene_ids: matrix.gene_ids().to_vec(),
        class1_samples: design.class1_samples.clone(),
        class2_samples: design.class2_samples.clone(),
        x1,
        x2,
    })
}
