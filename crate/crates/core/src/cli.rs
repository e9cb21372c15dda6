//! Command-line front end.
//!
//! Every command reads plain-text inputs, writes its tables into `--out`
//! together with a `manifest.json` (parameters, input digests, seed, tool
//! version) and prints a short summary. Exit codes: 0 success, 1 analysis
//! failure, 2 usage error (bad flags, unreadable inputs).

use std::collections::{BTreeMap, HashSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::index::sample as sample_indices;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::baseline::{ttest_screen, welch_to_tsv, DEFAULT_FDR};
use crate::chdir::{
    call_significant, estimate, CharacteristicDirection, Lr1Params, Method, Np1Params, DEFAULT_ALPHA,
    DEFAULT_PERMUTATIONS,
};
use crate::enrichment::{angle_enrich, angle_to_tsv, hypergeom_enrich, hypergeom_to_tsv};
use crate::error::Error;
use crate::expr_data::{
    align_design, canonical_gene_id, parse_design_tsv, parse_expression_tsv, parse_gmt, ClassSplit, GeneSet,
    GeneSetLibrary,
};
use crate::linalg::{DEFAULT_EPSILON, DEFAULT_MAX_COMPONENTS};
use crate::projection::{
    density_to_tsv, hierarchy_to_tsv, paired_density, pca_scores_2d, pca_to_tsv, project_hierarchy, Bandwidth,
    DEFAULT_DEPTH,
};
use crate::rng::{derive_seed, seeded_rng};
use crate::simulate::{
    benchmark_roc, benchmark_sweep, fpr_grid, generate, roc_to_tsv, sweep_to_tsv, BenchConfig, BenchMethod,
    SyntheticSpec,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failed(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "chardir", version, about = "Characteristic Direction analysis of two-class expression data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the characteristic direction and rank genes.
    #[command(args_override_self = true)]
    Chdir(ChdirArgs),
    /// Per-gene Welch t-test with Benjamini-Hochberg q-values.
    #[command(args_override_self = true)]
    Ttest(TtestArgs),
    /// Gene-set enrichment of a ranked or significant gene list.
    #[command(args_override_self = true)]
    Enrich(EnrichArgs),
    /// Sample coordinates on a hierarchy of characteristic directions.
    #[command(args_override_self = true)]
    Project(ProjectArgs),
    /// Write one synthetic data set with a planted differential signal.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Compare gene-ranking methods on repeated synthetic data sets.
    #[command(args_override_self = true)]
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Debug, Serialize)]
struct Common {
    /// Output directory, created if missing.
    #[arg(long, default_value = "chardir_out")]
    out: PathBuf,
    /// Master seed; drawn at random and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// File of `key = value` lines supplying flag defaults.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ExpressionInput {
    /// Expression TSV: gene_id column followed by one column per sample.
    #[arg(long)]
    expression: PathBuf,
    /// Design TSV: sample_id and class (1 or 2).
    #[arg(long)]
    design: PathBuf,
    /// Apply log2(x + pseudocount) to the values on input.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    log_transform: bool,
    #[arg(long, default_value_t = 1.0)]
    pseudocount: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Lr1,
    Np1,
}

#[derive(Args, Debug, Serialize)]
struct ChdirArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: ExpressionInput,
    #[arg(long, value_enum, default_value_t = MethodArg::Lr1)]
    method: MethodArg,
    /// Share of the total squared signal the significant prefix must reach.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// PCA keeps components up to 1 - epsilon of the variance.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_COMPONENTS)]
    max_components: usize,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    permutations: usize,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct TtestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: ExpressionInput,
    #[arg(long, default_value_t = DEFAULT_FDR)]
    fdr: f64,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum EnrichMode {
    Hypergeom,
    Angle,
}

#[derive(Args, Debug, Serialize)]
struct EnrichArgs {
    /// Ranked-gene TSV from `chdir`, Welch TSV from `ttest`, or one gene
    /// id per line.
    #[arg(long)]
    genes: PathBuf,
    /// Gene-set library in GMT format.
    #[arg(long)]
    gmt: PathBuf,
    #[arg(long, value_enum, default_value_t = EnrichMode::Hypergeom)]
    mode: EnrichMode,
    /// Gene universe, one id per line (first column). Defaults to every
    /// gene in --genes.
    #[arg(long)]
    universe: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FDR)]
    fdr: f64,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct ProjectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: ExpressionInput,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_COMPONENTS)]
    max_components: usize,
    /// Kernel bandwidth: `auto` (Silverman) or a positive number.
    #[arg(long, default_value = "auto")]
    bandwidth: String,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Preset {
    /// 100 genes.
    Roc,
    /// 50 genes.
    Sweep,
}

#[derive(Args, Debug, Serialize)]
struct SpecArgs {
    /// Starting parameter set; the flags below override single fields.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    n_genes: Option<usize>,
    #[arg(long)]
    intrinsic_dim: Option<usize>,
    #[arg(long)]
    variance_scale: Option<f64>,
    #[arg(long)]
    frac_correlating: Option<f64>,
    #[arg(long)]
    frac_de: Option<f64>,
    #[arg(long)]
    de_magnitude: Option<f64>,
    #[arg(long)]
    samples_per_class: Option<usize>,
}

impl SpecArgs {
    fn build(&self, default_preset: Preset, default_samples: usize, seed: u64) -> SyntheticSpec {
        let mut spec = match self.preset.unwrap_or(default_preset) {
            Preset::Roc => SyntheticSpec::roc_preset(default_samples, seed),
            Preset::Sweep => SyntheticSpec::sweep_preset(default_samples, seed),
        };
        if let Some(v) = self.n_genes {
            spec.n_genes = v;
        }
        if let Some(v) = self.intrinsic_dim {
            spec.intrinsic_dim = v;
        }
        if let Some(v) = self.variance_scale {
            spec.variance_scale = v;
        }
        if let Some(v) = self.frac_correlating {
            spec.frac_correlating = v;
        }
        if let Some(v) = self.frac_de {
            spec.frac_de = v;
        }
        if let Some(v) = self.de_magnitude {
            spec.de_magnitude = v;
        }
        if let Some(v) = self.samples_per_class {
            spec.samples_per_class = v;
        }
        spec
    }
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    spec: SpecArgs,
    /// Random gene sets written to truth.gmt next to the planted set.
    #[arg(long, default_value_t = 20)]
    decoys: usize,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
struct BenchmarkArgs {
    #[command(flatten)]
    #[serde(flatten)]
    spec: SpecArgs,
    /// Samples per class to sweep.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6,8,10")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Any of LR1, NP1, WELCH.
    #[arg(long, value_delimiter = ',', default_value = "LR1,WELCH")]
    methods: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    permutations: usize,
    /// Samples per class for the mean ROC table; no ROC table without it.
    #[arg(long)]
    roc_size: Option<usize>,
    #[arg(long, default_value_t = 101)]
    roc_points: usize,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    parameters: BTreeMap<String, String>,
    input_digests: BTreeMap<String, String>,
    seed: u64,
    tool_version: String,
}

/// Per-command bookkeeping: inputs read, files written, summary lines.
struct Session {
    command: &'static str,
    out: PathBuf,
    seed: u64,
    digests: BTreeMap<String, String>,
    summary: Vec<String>,
}

impl Session {
    fn new(command: &'static str, common: &Common) -> CliResult<Self> {
        let seed = match common.seed {
            Some(s) => s,
            None => {
                let s: u64 = rand::random();
                println!("seed: {s}");
                s
            }
        };
        fs::create_dir_all(&common.out)
            .map_err(|e| CliError::Failed(format!("cannot create {}: {e}", common.out.display())))?;
        Ok(Self {
            command,
            out: common.out.clone(),
            seed,
            digests: BTreeMap::new(),
            summary: Vec::new(),
        })
    }

    /// Reads an input file, recording its digest. Missing or unreadable
    /// files are usage errors naming the flag.
    fn read(&mut self, flag: &str, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| {
            CliError::Usage(format!("--{flag}: cannot read {}: {e}", path.display()))
        })?;
        self.digests.insert(
            path.display().to_string(),
            format!("sha256:{}", hex::encode(Sha256::digest(&bytes))),
        );
        Ok(bytes)
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Failed(format!("cannot write {}: {e}", path.display())))
    }

    fn note(&mut self, line: String) {
        self.summary.push(line);
    }

    fn finish<A: Serialize>(self, args: &A) -> CliResult<()> {
        let mut parameters = BTreeMap::new();
        if let serde_json::Value::Object(map) = serde_json::to_value(args).expect("arguments serialize") {
            for (k, v) in map {
                let text = match v {
                    serde_json::Value::Null => continue,
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Array(items) => items
                        .iter()
                        .map(|i| i.as_str().map(str::to_string).unwrap_or_else(|| i.to_string()))
                        .collect::<Vec<_>>()
                        .join(","),
                    other => other.to_string(),
                };
                parameters.insert(k, text);
            }
        }
        parameters.insert("seed".into(), self.seed.to_string());
        let manifest = RunManifest {
            command: self.command.to_string(),
            parameters,
            input_digests: self.digests.clone(),
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        json.push('\n');
        self.write(MANIFEST_FILE, &json)?;
        for line in &self.summary {
            println!("{line}");
        }
        println!("outputs written to {}", self.out.display());
        Ok(())
    }
}

fn load_split(session: &mut Session, input: &ExpressionInput) -> CliResult<ClassSplit> {
    let expr = session.read("expression", &input.expression)?;
    let design = session.read("design", &input.design)?;
    let matrix = parse_expression_tsv(Cursor::new(expr), !input.log_transform, input.pseudocount)?;
    let design = parse_design_tsv(Cursor::new(design))?;
    Ok(align_design(&matrix, &design)?)
}

fn cmd_chdir(args: &ChdirArgs) -> CliResult<()> {
    let mut session = Session::new("chdir", &args.common)?;
    let split = load_split(&mut session, &args.input)?;
    let method = match args.method {
        MethodArg::Lr1 => Method::Lr1,
        MethodArg::Np1 => Method::Np1,
    };
    let lr1 = Lr1Params {
        epsilon: args.epsilon,
        max_components: args.max_components,
    };
    let np1 = Np1Params {
        n_permutations: args.permutations,
        seed: session.seed,
    };
    let direction = estimate(&split, method, lr1, np1)?;
    let call = call_significant(&direction, args.alpha)?;
    session.write("ranked_genes.tsv", &call.to_tsv())?;
    session.write("ranked_genes.json", &call.to_json())?;
    session.note(format!(
        "{method}: {} of {} genes carry {:.0}% of the signal ({} up, {} down in class 2); centroid distance {:.4}",
        call.selected_count,
        direction.len(),
        args.alpha * 100.0,
        call.positively_discriminant().count(),
        call.negatively_discriminant().count(),
        direction.magnitude
    ));
    session.finish(args)
}

fn cmd_ttest(args: &TtestArgs) -> CliResult<()> {
    let mut session = Session::new("ttest", &args.common)?;
    let split = load_split(&mut session, &args.input)?;
    let results = ttest_screen(&split, args.fdr)?;
    session.write("welch.tsv", &welch_to_tsv(&results))?;
    let significant = results.iter().filter(|r| r.significant).count();
    session.note(format!(
        "Welch t-test: {significant} of {} genes significant at FDR {}",
        results.len(),
        args.fdr
    ));
    let diagnosed = results.iter().filter(|r| r.diagnostic.is_some()).count();
    if diagnosed > 0 {
        session.note(format!("{diagnosed} gene(s) carry a diagnostic, see welch.tsv"));
    }
    session.finish(args)
}

/// Gene list read by `enrich`.
struct GeneList {
    /// All genes in file order (ranked files are already ordered).
    ranking: Vec<String>,
    selected: Vec<String>,
    /// Present only for ranked characteristic-direction tables.
    coefficients: Option<Vec<f64>>,
    plain: bool,
}

fn parse_gene_list(text: &str) -> CliResult<GeneList> {
    let mut lines = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .peekable();
    let header = lines.peek().copied().unwrap_or("");
    let columns: Vec<&str> = header.split('\t').collect();
    let bad = |line: &str| CliError::Failed(format!("malformed gene table row: {line:?}"));
    if columns.len() > 2 && columns[0] == "gene_id" && columns[1] == "coefficient" {
        lines.next();
        let (mut ranking, mut selected, mut coefs) = (Vec::new(), Vec::new(), Vec::new());
        for line in lines {
            let f: Vec<&str> = line.split('\t').collect();
            let coef: f64 = f.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| bad(line))?;
            let flag = *f.last().ok_or_else(|| bad(line))?;
            ranking.push(f[0].to_string());
            coefs.push(coef);
            if flag == "1" {
                selected.push(f[0].to_string());
            }
        }
        return Ok(GeneList { ranking, selected, coefficients: Some(coefs), plain: false });
    }
    if columns.len() > 2 && columns[0] == "gene_id" && columns[1] == "t" {
        lines.next();
        let mut rows: Vec<(String, f64, bool)> = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split('\t').collect();
            let p: f64 = f.get(3).and_then(|v| v.parse().ok()).ok_or_else(|| bad(line))?;
            rows.push((f[0].to_string(), p, f.last() == Some(&"1")));
        }
        let selected = rows.iter().filter(|r| r.2).map(|r| r.0.clone()).collect();
        rows.sort_by(|a, b| a.1.total_cmp(&b.1));
        let ranking = rows.into_iter().map(|r| r.0).collect();
        return Ok(GeneList { ranking, selected, coefficients: None, plain: false });
    }
    let ids: Vec<String> = lines
        .map(|l| l.split('\t').next().unwrap_or("").trim().to_string())
        .filter(|g| !g.is_empty() && g != "gene_id")
        .collect();
    Ok(GeneList { ranking: ids.clone(), selected: ids, coefficients: None, plain: true })
}

fn parse_id_column(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| l.split('\t').next().unwrap_or("").trim().to_string())
        .filter(|g| !g.is_empty() && g != "gene_id")
        .collect()
}

fn cmd_enrich(args: &EnrichArgs) -> CliResult<()> {
    let mut session = Session::new("enrich", &args.common)?;
    let genes = session.read("genes", &args.genes)?;
    let gmt = session.read("gmt", &args.gmt)?;
    let list = parse_gene_list(&String::from_utf8_lossy(&genes))?;
    let library: GeneSetLibrary = parse_gmt(Cursor::new(gmt))?;
    let universe = match &args.universe {
        Some(path) => parse_id_column(&String::from_utf8_lossy(&session.read("universe", path)?)),
        None if list.plain => {
            return Err(CliError::Usage(
                "--universe is required when --genes is a plain gene list".into(),
            ))
        }
        None => list.ranking.clone(),
    };
    let top = match args.mode {
        EnrichMode::Hypergeom => {
            let ranking = (!list.plain).then_some(list.ranking.as_slice());
            let res = hypergeom_enrich(&list.selected, &universe, &library, ranking)?;
            session.write("enrichment.tsv", &hypergeom_to_tsv(&res, args.fdr))?;
            session.note(format!(
                "hypergeometric test of {} selected genes against {} sets",
                list.selected.len(),
                library.len()
            ));
            res.first().map(|r| (r.set_name.clone(), r.p, r.q))
        }
        EnrichMode::Angle => {
            let coefs = list.coefficients.clone().ok_or_else(|| {
                CliError::Usage("--mode angle needs the ranked-gene table written by `chdir`".into())
            })?;
            // Restrict to the universe when one was given.
            let keep: HashSet<String> = universe.iter().map(|g| canonical_gene_id(g)).collect();
            let (ids, coefs): (Vec<String>, Vec<f64>) = list
                .ranking
                .iter()
                .cloned()
                .zip(coefs)
                .filter(|(g, _)| keep.contains(&canonical_gene_id(g)))
                .unzip();
            let direction = CharacteristicDirection::from_coefficients(ids, coefs, Method::Lr1, f64::NAN)?;
            let res = angle_enrich(&direction, &library)?;
            session.write("enrichment.tsv", &angle_to_tsv(&res))?;
            session.note(format!(
                "principal-angle scoring of {} sets in {} dimensions",
                library.len(),
                direction.len()
            ));
            res.first().map(|r| (r.set_name.clone(), r.p, r.q))
        }
    };
    if let Some((name, p, q)) = top {
        session.note(format!("top set: {name} (p = {p:.3e}, q = {q:.3e})"));
    }
    session.finish(args)
}

fn cmd_project(args: &ProjectArgs) -> CliResult<()> {
    let bandwidth = match args.bandwidth.trim() {
        "auto" => Bandwidth::Auto,
        v => Bandwidth::Fixed(
            v.parse()
                .map_err(|_| CliError::Usage(format!("--bandwidth: expected `auto` or a number, got {v:?}")))?,
        ),
    };
    let mut session = Session::new("project", &args.common)?;
    let split = load_split(&mut session, &args.input)?;
    let params = Lr1Params {
        epsilon: args.epsilon,
        max_components: args.max_components,
    };
    let hierarchy = project_hierarchy(&split, args.depth, params)?;
    session.write("hierarchy.tsv", &hierarchy_to_tsv(&hierarchy))?;
    let n1 = split.n1();
    let level1: Vec<f64> = hierarchy.coords.row(0).iter().copied().collect();
    let density = paired_density(&level1[..n1], &level1[n1..], bandwidth)?;
    session.write("density.tsv", &density_to_tsv(&density))?;
    let scores = pca_scores_2d(&split)?;
    session.write("pca.tsv", &pca_to_tsv(&split.pooled_sample_ids(), n1, &scores))?;
    session.note(format!("fitted {} characteristic direction(s)", hierarchy.depth()));
    for d in hierarchy.diagnostic.iter().chain(&density.diagnostics) {
        session.note(format!("note: {d}"));
    }
    session.finish(args)
}

/// GMT with the planted set first, then `decoys` random sets of equal size
/// drawn from the genes outside the planted set.
fn truth_library(planted: GeneSet, gene_ids: &[String], decoys: usize, seed: u64) -> CliResult<GeneSetLibrary> {
    let size = planted.len();
    let pool: Vec<&String> = gene_ids.iter().filter(|g| !planted.contains(g)).collect();
    let mut lib = GeneSetLibrary::new(vec![planted])?;
    let mut rng = seeded_rng(derive_seed(seed, 1 << 40));
    let width = decoys.to_string().len().max(3);
    for k in 0..decoys {
        let members: Vec<&String> = sample_indices(&mut rng, pool.len(), size.min(pool.len()))
            .into_iter()
            .map(|i| pool[i])
            .collect();
        lib.push(GeneSet::new(&format!("DECOY_{:0width$}", k + 1), "random genes", members)?)?;
    }
    Ok(lib)
}

pub const DEFAULT_SIM_SAMPLES: usize = 10;

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut session = Session::new("simulate", &args.common)?;
    let spec = args.spec.build(Preset::Roc, DEFAULT_SIM_SAMPLES, session.seed);
    let outcome = generate(&spec)?;
    let (matrix, design) = outcome.to_expression()?;
    session.write("expression.tsv", &matrix.to_tsv())?;
    let mut d = String::from("sample_id\tclass\n");
    for s in &design.class1_samples {
        let _ = writeln!(d, "{s}\t1");
    }
    for s in &design.class2_samples {
        let _ = writeln!(d, "{s}\t2");
    }
    session.write("design.tsv", &d)?;
    let ids = outcome.gene_ids();
    let lib = truth_library(outcome.planted_set("PLANTED_DE")?, &ids, args.decoys, session.seed)?;
    session.write("truth.gmt", &lib.to_gmt())?;
    let mut de = String::from("gene_id\tde_value\tplanted\n");
    for ((g, v), m) in ids.iter().zip(&outcome.de_vector).zip(&outcome.de_mask) {
        let _ = writeln!(de, "{g}\t{v}\t{}", u8::from(*m));
    }
    session.write("de_vector.tsv", &de)?;
    session.note(format!(
        "{} genes x {} samples per class, {} planted differentially expressed genes",
        spec.n_genes,
        spec.samples_per_class,
        spec.n_de()
    ));
    session.finish(args)
}

fn cmd_benchmark(args: &BenchmarkArgs) -> CliResult<()> {
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse::<BenchMethod>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("--methods: {e}")))?;
    if args.roc_points < 2 {
        return Err(CliError::Usage("--roc-points must be at least 2".into()));
    }
    let mut session = Session::new("benchmark", &args.common)?;
    let template = args.spec.build(Preset::Sweep, args.sizes.first().copied().unwrap_or(2), 0);
    let mut cfg = BenchConfig::new(template, methods, args.runs, session.seed);
    cfg.n_permutations = args.permutations;
    let rows = benchmark_sweep(&cfg, &args.sizes)?;
    session.write("sweep.tsv", &sweep_to_tsv(&rows))?;
    for r in &rows {
        session.note(format!(
            "{:<6} N={:<3} gini {:.4} +/- {:.4} ({} runs, {} excluded)",
            r.method.to_string(),
            r.samples_per_class,
            r.mean_gini,
            r.stderr,
            r.n_runs,
            r.n_excluded
        ));
    }
    if let Some(n) = args.roc_size {
        let curves = benchmark_roc(&cfg, n, &fpr_grid(args.roc_points))?;
        session.write("roc.tsv", &roc_to_tsv(&curves))?;
    }
    session.finish(args)
}

/// Reads `key = value` lines into `--key value` flag pairs.
fn config_flags(path: &Path) -> CliResult<Vec<OsString>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("--config: cannot read {}: {e}", path.display())))?;
    let mut flags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--config: line {} is not `key = value`", i + 1))
        })?;
        let key = k.trim().replace('_', "-");
        if key == "config" {
            return Err(CliError::Usage("--config: config files cannot nest".into()));
        }
        flags.push(OsString::from(format!("--{key}")));
        flags.push(OsString::from(v.trim()));
    }
    Ok(flags)
}

/// Splices config-file flags in front of the command-line flags of the
/// subcommand, so explicit flags win.
fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            match args.get(i + 1) {
                Some(p) => path = Some(PathBuf::from(p)),
                None => return Ok(args),
            }
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let Some(sub) = args.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')) else {
        return Ok(args);
    };
    let at = sub + 2;
    let mut out = args[..at].to_vec();
    out.extend(config_flags(&path)?);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let (threads, run): (Option<usize>, Box<dyn Fn() -> CliResult<()> + Send + Sync + '_>) = match &cli.command {
        Command::Chdir(a) => (a.common.threads, Box::new(move || cmd_chdir(a))),
        Command::Ttest(a) => (a.common.threads, Box::new(move || cmd_ttest(a))),
        Command::Enrich(a) => (a.common.threads, Box::new(move || cmd_enrich(a))),
        Command::Project(a) => (a.common.threads, Box::new(move || cmd_project(a))),
        Command::Simulate(a) => (a.common.threads, Box::new(move || cmd_simulate(a))),
        Command::Benchmark(a) => (a.common.threads, Box::new(move || cmd_benchmark(a))),
    };
    match threads {
        None => run(),
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Failed(format!("cannot start worker threads: {e}")))?
            .install(run),
    }
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let outcome = expand_config(args).and_then(|args| match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(&cli).map(|()| 0),
        Err(e) => {
            // --help and --version also arrive here, on stdout with code 0
            let _ = e.print();
            Ok(if e.use_stderr() { 2 } else { 0 })
        }
    });
    match outcome {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
