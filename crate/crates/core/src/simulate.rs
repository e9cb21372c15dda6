//! Synthetic two-class data with planted differential expression, ranking
//! scores against the planted truth, and the sample-size benchmark.
//!
//! Genes 0..c form the correlating block, whose covariance R S Rᵀ has d
//! inflated variances; the remaining genes are independent unit-variance
//! noise. The differential-expression vector is isotropic on the first
//! `round(frac_de · p)` genes of that block.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::ttest_screen;
use crate::chdir::{chdir_lr1, chdir_np1, Lr1Params, Np1Params, DEFAULT_PERMUTATIONS};
use crate::error::{Error, Result};
use crate::expr_data::{ClassSplit, ExpressionMatrix, GeneSet, TwoClassDesign};
use crate::linalg::random_rotation;
use crate::numeric::mean_stderr;
use crate::rng::{derive_seed, seeded_rng};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticSpec {
    pub n_genes: usize,
    pub intrinsic_dim: usize,
    pub variance_scale: f64,
    pub frac_correlating: f64,
    pub frac_de: f64,
    pub de_magnitude: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    fn standard_defaults(n_genes: usize, samples_per_class: usize, seed: u64) -> Self {
        Self {
            n_genes,
            intrinsic_dim: 2,
            variance_scale: 40.0,
            frac_correlating: 0.1,
            frac_de: 0.1,
            de_magnitude: 5.0,
            samples_per_class,
            seed,
        }
    }

    /// 100 genes; used for the ROC comparison.
    pub fn roc_preset(samples_per_class: usize, seed: u64) -> Self {
        Self::standard_defaults(100, samples_per_class, seed)
    }

    /// 50 genes; used for the sample-size sweep.
    pub fn sweep_preset(samples_per_class: usize, seed: u64) -> Self {
        Self::standard_defaults(50, samples_per_class, seed)
    }

    pub fn n_correlating(&self) -> usize {
        (self.frac_correlating * self.n_genes as f64).round() as usize
    }

    pub fn n_de(&self) -> usize {
        (self.frac_de * self.n_genes as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_genes == 0 {
            return bad("n_genes must be positive".into());
        }
        if !(self.frac_correlating > 0.0 && self.frac_correlating <= 1.0) {
            return bad(format!("frac_correlating must lie in (0, 1], got {}", self.frac_correlating));
        }
        if !(self.frac_de > 0.0 && self.frac_de <= 1.0) {
            return bad(format!("frac_de must lie in (0, 1], got {}", self.frac_de));
        }
        let c = self.n_correlating();
        if self.intrinsic_dim < 1 || self.intrinsic_dim > c {
            return bad(format!(
                "intrinsic_dim must lie in 1..={c} (the correlating block), got {}",
                self.intrinsic_dim
            ));
        }
        let nde = self.n_de();
        if nde < 1 || nde > c {
            return bad(format!(
                "{nde} differentially expressed genes do not fit the correlating block of {c}"
            ));
        }
        if !(self.variance_scale > 1.0 && self.variance_scale.is_finite()) {
            return bad(format!("variance_scale must exceed 1, got {}", self.variance_scale));
        }
        if !(self.de_magnitude >= 0.0 && self.de_magnitude.is_finite()) {
            return bad(format!("de_magnitude must be nonnegative, got {}", self.de_magnitude));
        }
        if self.samples_per_class < 2 {
            return bad(format!(
                "samples_per_class must be at least 2, got {}",
                self.samples_per_class
            ));
        }
        Ok(())
    }

    /// Sets one field from its textual `key = value` form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("invalid value {value:?} for {key}")))
        }
        match key.trim() {
            "n_genes" => self.n_genes = parse(key, value)?,
            "intrinsic_dim" => self.intrinsic_dim = parse(key, value)?,
            "variance_scale" => self.variance_scale = parse(key, value)?,
            "frac_correlating" => self.frac_correlating = parse(key, value)?,
            "frac_de" => self.frac_de = parse(key, value)?,
            "de_magnitude" => self.de_magnitude = parse(key, value)?,
            "samples_per_class" => self.samples_per_class = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(Error::InvalidParameter(format!("unknown simulation parameter {other:?}"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    /// genes × samples_per_class.
    pub x_control: DMatrix<f64>,
    pub x_perturbed: DMatrix<f64>,
    pub de_mask: Vec<bool>,
    /// Perturbed minus control mean.
    pub de_vector: Vec<f64>,
    /// Rotation applied to the correlating block (c × c).
    pub rotation: DMatrix<f64>,
    /// Diagonal of S on the correlating block.
    pub block_variances: Vec<f64>,
}

impl SimulationOutcome {
    pub fn n_genes(&self) -> usize {
        self.de_mask.len()
    }

    /// Population covariance shared by both classes.
    pub fn covariance(&self) -> DMatrix<f64> {
        let p = self.n_genes();
        let c = self.rotation.nrows();
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&self.block_variances));
        let block = &self.rotation * s * self.rotation.transpose();
        let mut cov = DMatrix::identity(p, p);
        cov.view_mut((0, 0), (c, c)).copy_from(&block);
        cov
    }

    pub fn gene_ids(&self) -> Vec<String> {
        (1..=self.n_genes()).map(|i| format!("G{i}")).collect()
    }

    pub fn class_split(&self) -> Result<ClassSplit> {
        ClassSplit::from_matrices(self.gene_ids(), self.x_control.clone(), self.x_perturbed.clone())
    }

    /// Expression matrix with control samples `ctrl_1..` followed by
    /// perturbed samples `pert_1..`, plus the matching design.
    pub fn to_expression(&self) -> Result<(ExpressionMatrix, TwoClassDesign)> {
        let n = self.x_control.ncols();
        let ctrl: Vec<String> = (1..=n).map(|j| format!("ctrl_{j}")).collect();
        let pert: Vec<String> = (1..=n).map(|j| format!("pert_{j}")).collect();
        let mut values = DMatrix::zeros(self.n_genes(), 2 * n);
        values.columns_mut(0, n).copy_from(&self.x_control);
        values.columns_mut(n, n).copy_from(&self.x_perturbed);
        let samples = ctrl.iter().chain(&pert).cloned().collect();
        let matrix = ExpressionMatrix::new(self.gene_ids(), samples, values, 2.0)?;
        Ok((matrix, TwoClassDesign::new(ctrl, pert)?))
    }

    pub fn planted_set(&self, name: &str) -> Result<GeneSet> {
        let ids = self.gene_ids();
        let members: Vec<&String> = ids.iter().zip(&self.de_mask).filter(|(_, &m)| m).map(|(g, _)| g).collect();
        GeneSet::new(name, "genes with planted differential expression", members)
    }
}

fn draw_column<R: Rng>(rng: &mut R, factor: &DMatrix<f64>, p: usize) -> DVector<f64> {
    let c = factor.ncols();
    let g = DVector::from_fn(c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let block = factor * g;
    DVector::from_fn(p, |i, _| if i < c { block[i] } else { rng.sample::<f64, _>(StandardNormal) })
}

/// Draws one data set. Random numbers are consumed in a fixed order
/// (rotation, DE direction, control columns, perturbed columns), so a spec
/// always yields the same outcome.
pub fn generate(spec: &SyntheticSpec) -> Result<SimulationOutcome> {
    spec.validate()?;
    let p = spec.n_genes;
    let c = spec.n_correlating();
    let nde = spec.n_de();
    let n = spec.samples_per_class;
    let mut rng = seeded_rng(spec.seed);

    let rotation = random_rotation(c, &mut rng)?;
    let block_variances: Vec<f64> = (0..c)
        .map(|i| if i < spec.intrinsic_dim { spec.variance_scale } else { 1.0 })
        .collect();
    let mut factor = rotation.clone();
    for (j, mut col) in factor.column_iter_mut().enumerate() {
        col *= block_variances[j].sqrt();
    }

    let raw: Vec<f64> = (0..nde).map(|_| rng.sample(StandardNormal)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut de_vector = vec![0.0; p];
    if spec.de_magnitude > 0.0 {
        for (d, r) in de_vector.iter_mut().zip(&raw) {
            *d = r / norm * spec.de_magnitude;
        }
    }
    let de_mask: Vec<bool> = (0..p).map(|i| i < nde).collect();

    let mut x_control = DMatrix::zeros(p, n);
    for j in 0..n {
        x_control.set_column(j, &draw_column(&mut rng, &factor, p));
    }
    let shift = DVector::from_column_slice(&de_vector);
    let mut x_perturbed = DMatrix::zeros(p, n);
    for j in 0..n {
        x_perturbed.set_column(j, &(draw_column(&mut rng, &factor, p) + &shift));
    }
    Ok(SimulationOutcome {
        x_control,
        x_perturbed,
        de_mask,
        de_vector,
        rotation,
        block_variances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryScore {
    pub auc: f64,
    /// 2 · auc − 1.
    pub gini: f64,
    /// (fpr, tpr) from (0, 0) to (1, 1), one point per distinct score.
    pub roc_points: Vec<(f64, f64)>,
}

/// ROC of ranking genes by `scores` (descending) against `truth`. Tied
/// scores form one threshold, so ties earn half credit in the AUC.
pub fn score_recovery(scores: &[f64], truth: &[bool]) -> Result<RecoveryScore> {
    if scores.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("ranking scores"));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidParameter(
            "truth mask needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut roc_points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        roc_points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = auc / (pos as f64 * neg as f64);
    Ok(RecoveryScore {
        auc,
        gini: 2.0 * auc - 1.0,
        roc_points,
    })
}

/// True-positive rate of a ROC curve at false-positive rate `fpr`,
/// interpolating linearly between thresholds; at a vertical step the upper
/// value is taken.
pub fn tpr_at(roc: &[(f64, f64)], fpr: f64) -> f64 {
    let after = roc.partition_point(|&(x, _)| x <= fpr);
    if after == 0 {
        return 0.0;
    }
    let (x0, y0) = roc[after - 1];
    if x0 == fpr || after == roc.len() {
        return y0;
    }
    let (x1, y1) = roc[after];
    y0 + (y1 - y0) * (fpr - x0) / (x1 - x0)
}

/// Evenly spaced false-positive rates 0, 1/(k−1), ..., 1.
pub fn fpr_grid(k: usize) -> Vec<f64> {
    (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum BenchMethod {
    Lr1,
    Np1,
    Welch,
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMethod::Lr1 => "LR1",
            BenchMethod::Np1 => "NP1",
            BenchMethod::Welch => "WELCH",
        })
    }
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LR1" => Ok(BenchMethod::Lr1),
            "NP1" => Ok(BenchMethod::Np1),
            "WELCH" | "TTEST" => Ok(BenchMethod::Welch),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

/// Settings shared by every run of a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub template: SyntheticSpec,
    pub methods: Vec<BenchMethod>,
    pub n_runs: usize,
    pub master_seed: u64,
    pub lr1: Lr1Params,
    pub n_permutations: usize,
}

impl BenchConfig {
    pub fn new(template: SyntheticSpec, methods: Vec<BenchMethod>, n_runs: usize, master_seed: u64) -> Self {
        Self {
            template,
            methods,
            n_runs,
            master_seed,
            lr1: Lr1Params::default(),
            n_permutations: DEFAULT_PERMUTATIONS,
        }
    }

    /// The spec run `run` simulates at the given class size.
    pub fn run_spec(&self, samples_per_class: usize, run: usize) -> SyntheticSpec {
        SyntheticSpec {
            samples_per_class,
            seed: derive_seed(self.master_seed, run as u64),
            ..self.template.clone()
        }
    }

    fn check(&self, sample_sizes: &[usize]) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::InvalidParameter("n_runs must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        if sample_sizes.is_empty() {
            return Err(Error::InvalidParameter("no sample sizes given".into()));
        }
        for &n in sample_sizes {
            self.run_spec(n, 0).validate()?;
        }
        Ok(())
    }
}

/// Per-gene ranking score of `method` on `split`: squared direction
/// coefficients, or −ln p for the t-test.
pub fn method_scores(method: BenchMethod, split: &ClassSplit, lr1: Lr1Params, np1: Np1Params) -> Result<Vec<f64>> {
    match method {
        BenchMethod::Lr1 => Ok(chdir_lr1(split, lr1)?.squared()),
        BenchMethod::Np1 => Ok(chdir_np1(split, np1)?.squared()),
        BenchMethod::Welch => Ok(ttest_screen(split, 1.0)?
            .iter()
            .map(|r| -r.p.ln() + 0.0)
            .collect()),
    }
}

/// Scores every method on one simulated data set; `None` marks an
/// estimator failure.
fn run_once(cfg: &BenchConfig, spec: &SyntheticSpec) -> Result<(SimulationOutcome, Vec<Option<RecoveryScore>>)> {
    let outcome = generate(spec)?;
    let split = outcome.class_split()?;
    let np1 = Np1Params {
        n_permutations: cfg.n_permutations,
        seed: derive_seed(spec.seed, u64::MAX),
    };
    let scores = cfg
        .methods
        .iter()
        .map(|&m| {
            method_scores(m, &split, cfg.lr1, np1)
                .ok()
                .map(|s| score_recovery(&s, &outcome.de_mask))
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((outcome, scores))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: BenchMethod,
    pub samples_per_class: usize,
    pub mean_gini: f64,
    pub stderr: f64,
    /// Runs that produced a score.
    pub n_runs: usize,
    /// Runs where the estimator failed; left out of the mean.
    pub n_excluded: usize,
}

/// Mean Gini coefficient and standard error per method and class size.
/// Run r at every size uses the seed derived from (master seed, r), and the
/// result does not depend on the number of worker threads.
pub fn benchmark_sweep(cfg: &BenchConfig, sample_sizes: &[usize]) -> Result<Vec<SweepRow>> {
    cfg.check(sample_sizes)?;
    let jobs: Vec<(usize, usize)> = sample_sizes
        .iter()
        .flat_map(|&n| (0..cfg.n_runs).map(move |r| (n, r)))
        .collect();
    let results: Vec<Vec<Option<f64>>> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let (_, scores) = run_once(cfg, &cfg.run_spec(n, r))?;
            Ok(scores.into_iter().map(|s| s.map(|s| s.gini)).collect())
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (si, &n) in sample_sizes.iter().enumerate() {
        let block = &results[si * cfg.n_runs..(si + 1) * cfg.n_runs];
        for (mi, &method) in cfg.methods.iter().enumerate() {
            let ginis: Vec<f64> = block.iter().filter_map(|r| r[mi]).collect();
            let (mean_gini, stderr) = mean_stderr(&ginis);
            rows.push(SweepRow {
                method,
                samples_per_class: n,
                mean_gini,
                stderr,
                n_runs: ginis.len(),
                n_excluded: cfg.n_runs - ginis.len(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanRoc {
    pub method: BenchMethod,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub n_runs: usize,
    pub n_excluded: usize,
}

/// ROC curves averaged over runs at one class size, sampled at `grid`.
pub fn benchmark_roc(cfg: &BenchConfig, samples_per_class: usize, grid: &[f64]) -> Result<Vec<MeanRoc>> {
    cfg.check(&[samples_per_class])?;
    let results: Vec<Vec<Option<Vec<f64>>>> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|r| {
            let (_, scores) = run_once(cfg, &cfg.run_spec(samples_per_class, r))?;
            Ok(scores
                .into_iter()
                .map(|s| s.map(|s| grid.iter().map(|&x| tpr_at(&s.roc_points, x)).collect()))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(cfg
        .methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let curves: Vec<&Vec<f64>> = results.iter().filter_map(|r| r[mi].as_ref()).collect();
            let tpr = (0..grid.len())
                .map(|k| mean_stderr(&curves.iter().map(|c| c[k]).collect::<Vec<_>>()).0)
                .collect();
            MeanRoc {
                method,
                fpr: grid.to_vec(),
                tpr,
                n_runs: curves.len(),
                n_excluded: cfg.n_runs - curves.len(),
            }
        })
        .collect())
}

pub const SWEEP_TSV_HEADER: &str = "method\tsamples_per_class\tmean_gini\tstderr\tn_runs\tn_excluded";

pub fn sweep_to_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_TSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.method, r.samples_per_class, r.mean_gini, r.stderr, r.n_runs, r.n_excluded
        );
    }
    out
}

pub const ROC_TSV_HEADER: &str = "method\tfpr\ttpr";

pub fn roc_to_tsv(curves: &[MeanRoc]) -> String {
    let mut out = String::from(ROC_TSV_HEADER);
    out.push('\n');
    for c in curves {
        for (x, y) in c.fpr.iter().zip(&c.tpr) {
            let _ = writeln!(out, "{}\t{}\t{}", c.method, x, y);
        }
    }
    out
}
