use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn chardir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chardir"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = chardir(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = path(dir, name);
    fs::write(&p, text).unwrap();
    p
}

/// Rows of a TSV file without comment lines and header, split on tabs.
fn rows(file: impl AsRef<Path>) -> Vec<Vec<String>> {
    fs::read_to_string(file)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

fn manifest(dir: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.as_ref().join("manifest.json")).unwrap()).unwrap()
}

/// Two genes, three samples per class; only gene 1 separates the classes.
fn toy_inputs(dir: &TempDir) -> (String, String) {
    let expr = write(
        dir,
        "toy.tsv",
        "gene_id\ta1\ta2\ta3\tb1\tb2\tb3\n\
         G1\t0\t0.1\t0\t5\t5.1\t5\n\
         G2\t0\t0\t0.1\t0\t0.1\t0\n",
    );
    let design = write(dir, "toy_design.tsv", "sample_id\tclass\na1\t1\na2\t1\na3\t1\nb1\t2\nb2\t2\nb3\t2\n");
    (expr, design)
}

fn design_for(dir: &TempDir, n1: usize, n2: usize) -> String {
    let mut text = String::from("sample_id\tclass\n");
    for j in 0..n1 {
        text += &format!("a{j}\t1\n");
    }
    for j in 0..n2 {
        text += &format!("b{j}\t2\n");
    }
    write(dir, "design.tsv", &text)
}

fn matrix_tsv(dir: &TempDir, genes: &[(&str, Vec<f64>)], n1: usize) -> String {
    let n = genes[0].1.len();
    let mut text = String::from("gene_id");
    for j in 0..n {
        text += &if j < n1 { format!("\ta{j}") } else { format!("\tb{}", j - n1) };
    }
    text.push('\n');
    for (id, v) in genes {
        text += id;
        for x in v {
            text += &format!("\t{x}");
        }
        text.push('\n');
    }
    write(dir, "expr.tsv", &text)
}

#[test]
fn chdir_toy_ranks_separating_gene_first() {
    let dir = TempDir::new().unwrap();
    let (expr, design) = toy_inputs(&dir);
    let out = path(&dir, "cd");
    ok(&["chdir", "--expression", &expr, "--design", &design, "--alpha", "0.99", "--seed", "1", "--out", &out]);
    let r = rows(Path::new(&out).join("ranked_genes.tsv"));
    assert_eq!(r[0][0], "G1");
    assert_eq!(r[0][6], "1");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&out).join("ranked_genes.json")).unwrap()).unwrap();
    assert!(json.to_string().contains("G1"));
}

#[test]
fn chdir_alpha_one_flags_every_gene() {
    let dir = TempDir::new().unwrap();
    let (expr, design) = toy_inputs(&dir);
    let out = path(&dir, "cd");
    ok(&["chdir", "--expression", &expr, "--design", &design, "--alpha", "1", "--seed", "1", "--out", &out]);
    assert!(rows(Path::new(&out).join("ranked_genes.tsv")).iter().all(|r| r[6] == "1"));
}

#[test]
fn chdir_np1_runs() {
    let dir = TempDir::new().unwrap();
    let (expr, design) = toy_inputs(&dir);
    let out = path(&dir, "cd");
    ok(&[
        "chdir", "--expression", &expr, "--design", &design, "--method", "np1", "--permutations", "100",
        "--seed", "3", "--out", &out,
    ]);
    assert_eq!(rows(Path::new(&out).join("ranked_genes.tsv"))[0][0], "G1");
}

#[test]
fn missing_design_is_a_usage_error_naming_the_flag() {
    let dir = TempDir::new().unwrap();
    let (expr, _) = toy_inputs(&dir);
    let out = chardir(&["chdir", "--expression", &expr, "--design", &path(&dir, "nope.tsv"), "--seed", "1", "--out", &path(&dir, "o")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--design"));
}

#[test]
fn unknown_subcommand_and_bad_values_exit_two() {
    assert_eq!(chardir(&["frobnicate"]).status.code(), Some(2));
    let dir = TempDir::new().unwrap();
    let (expr, design) = toy_inputs(&dir);
    let out = chardir(&["chdir", "--expression", &expr, "--design", &design, "--alpha", "0", "--seed", "1", "--out", &path(&dir, "o")]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn ttest_identical_classes_flag_nothing() {
    let dir = TempDir::new().unwrap();
    let genes: Vec<(&str, Vec<f64>)> = vec![
        ("G1", vec![1.0, 2.0, 3.0, 4.0, 4.0, 3.0, 2.0, 1.0]),
        ("G2", vec![0.5, 0.7, 0.2, 0.9, 0.9, 0.2, 0.7, 0.5]),
    ];
    let expr = matrix_tsv(&dir, &genes, 4);
    let design = design_for(&dir, 4, 4);
    let out = path(&dir, "t");
    ok(&["ttest", "--expression", &expr, "--design", &design, "--seed", "1", "--out", &out]);
    assert!(rows(Path::new(&out).join("welch.tsv")).iter().all(|r| r[5] == "0"));
    let out1 = path(&dir, "t1");
    ok(&["ttest", "--expression", &expr, "--design", &design, "--fdr", "1", "--seed", "1", "--out", &out1]);
    assert!(rows(Path::new(&out1).join("welch.tsv")).iter().all(|r| r[5] == "1"));
}

#[test]
fn ttest_flags_exactly_the_shifted_gene() {
    let dir = TempDir::new().unwrap();
    let base = [1.0, 2.0, 3.0, 4.0];
    let mut genes: Vec<(&str, Vec<f64>)> = ["G1", "G2", "G3", "G4", "G5"]
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let v: Vec<f64> = base.iter().map(|x| x * (i + 1) as f64).collect();
            let mut row = v.clone();
            row.extend(v.iter().rev());
            (*id, row)
        })
        .collect();
    genes.push(("SHIFTED", vec![1.0, 2.0, 3.0, 4.0, 101.0, 102.0, 103.0, 104.0]));
    let expr = matrix_tsv(&dir, &genes, 4);
    let design = design_for(&dir, 4, 4);
    let out = path(&dir, "t");
    ok(&["ttest", "--expression", &expr, "--design", &design, "--seed", "1", "--out", &out]);
    let flagged: Vec<String> = rows(Path::new(&out).join("welch.tsv"))
        .into_iter()
        .filter(|r| r[5] == "1")
        .map(|r| r[0].clone())
        .collect();
    assert_eq!(flagged, vec!["SHIFTED".to_string()]);
}

fn choose(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Share of all `size`-subsets of a 10-gene universe meeting the selected
/// genes (the first `sig` genes) in at least `k` places, by listing subsets.
fn enumerated_tail(sig: u32, size: u32, k: u32) -> f64 {
    let sig_mask = (1u32 << sig) - 1;
    let (mut hit, mut total) = (0u64, 0u64);
    for subset in 0u32..(1 << 10) {
        if subset.count_ones() == size {
            total += 1;
            if (subset & sig_mask).count_ones() >= k {
                hit += 1;
            }
        }
    }
    assert_eq!(total, choose(10, size as u64));
    hit as f64 / total as f64
}

#[test]
fn enrich_small_universe_matches_enumeration() {
    let dir = TempDir::new().unwrap();
    let universe: Vec<String> = (1..=10).map(|i| format!("G{i}")).collect();
    let uni = write(&dir, "universe.txt", &(universe.join("\n") + "\n"));
    let genes = write(&dir, "genes.txt", "G1\nG2\nG3\n");
    let gmt = write(
        &dir,
        "sets.gmt",
        "EXACT\tsame as list\tG1\tG2\tG3\n\
         PARTIAL\tsome\tG1\tG2\tG4\tG5\n\
         ONE\tone hit\tG3\tG6\tG7\tG8\tG9\n\
         NONE\tno hit\tG8\tG9\tG10\n\
         OUTSIDE\tnot in universe\tX1\tX2\n",
    );
    let out = path(&dir, "e");
    ok(&["enrich", "--genes", &genes, "--gmt", &gmt, "--universe", &uni, "--seed", "1", "--out", &out]);
    let r = rows(Path::new(&out).join("enrichment.tsv"));
    assert_eq!(r[0][0], "EXACT");
    let expect = [("EXACT", 3, 3), ("PARTIAL", 4, 2), ("ONE", 5, 1), ("NONE", 3, 0)];
    for (name, size, k) in expect {
        let row = r.iter().find(|row| row[0] == name).unwrap();
        let p: f64 = row[3].parse().unwrap();
        let oracle = enumerated_tail(3, size, k);
        assert!((p - oracle).abs() < 1e-12, "{name}: {p} vs {oracle}");
    }
    let outside = r.iter().find(|row| row[0] == "OUTSIDE").unwrap();
    assert_eq!(outside[3], "1");
    assert!(!outside[7].is_empty());
}

#[test]
fn enrich_plain_list_without_universe_is_rejected() {
    let dir = TempDir::new().unwrap();
    let genes = write(&dir, "genes.txt", "G1\nG2\n");
    let gmt = write(&dir, "sets.gmt", "S\t-\tG1\tG2\n");
    let out = chardir(&["enrich", "--genes", &genes, "--gmt", &gmt, "--seed", "1", "--out", &path(&dir, "e")]);
    assert_eq!(out.status.code(), Some(2));
}

fn simulate(dir: &TempDir, name: &str, seed: &str) -> PathBuf {
    let out = path(dir, name);
    ok(&["simulate", "--seed", seed, "--out", &out]);
    PathBuf::from(out)
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let dir = TempDir::new().unwrap();
    let a = simulate(&dir, "a", "11");
    let b = simulate(&dir, "b", "11");
    let c = simulate(&dir, "c", "12");
    for f in ["expression.tsv", "design.tsv", "truth.gmt", "de_vector.tsv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("expression.tsv")).unwrap(), fs::read(c.join("expression.tsv")).unwrap());
    let planted: Vec<String> = rows(a.join("de_vector.tsv")).into_iter().filter(|r| r[2] == "1").map(|r| r[0].clone()).collect();
    let gmt = fs::read_to_string(a.join("truth.gmt")).unwrap();
    let first: Vec<&str> = gmt.lines().next().unwrap().split('\t').skip(2).collect();
    assert_eq!(first, planted);
}

#[test]
fn angle_mode_ranks_planted_set_first() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(&dir, "sim", "5");
    let cd = path(&dir, "cd");
    ok(&[
        "chdir", "--expression", sim.join("expression.tsv").to_str().unwrap(), "--design",
        sim.join("design.tsv").to_str().unwrap(), "--seed", "5", "--out", &cd,
    ]);
    let en = path(&dir, "en");
    ok(&[
        "enrich", "--mode", "angle", "--genes", &format!("{cd}/ranked_genes.tsv"), "--gmt",
        sim.join("truth.gmt").to_str().unwrap(), "--seed", "5", "--out", &en,
    ]);
    assert_eq!(rows(Path::new(&en).join("enrichment.tsv"))[0][0], "PLANTED_DE");
}

#[test]
fn ttest_output_feeds_enrich() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(&dir, "sim", "6");
    let tt = path(&dir, "tt");
    ok(&[
        "ttest", "--expression", sim.join("expression.tsv").to_str().unwrap(), "--design",
        sim.join("design.tsv").to_str().unwrap(), "--fdr", "0.2", "--seed", "6", "--out", &tt,
    ]);
    let en = path(&dir, "en");
    ok(&[
        "enrich", "--genes", &format!("{tt}/welch.tsv"), "--gmt", sim.join("truth.gmt").to_str().unwrap(),
        "--seed", "6", "--out", &en,
    ]);
    assert_eq!(rows(Path::new(&en).join("enrichment.tsv")).len(), 21);
}

#[test]
fn project_writes_coordinates_and_densities() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(&dir, "sim", "8");
    let out = path(&dir, "p");
    ok(&[
        "project", "--expression", sim.join("expression.tsv").to_str().unwrap(), "--design",
        sim.join("design.tsv").to_str().unwrap(), "--seed", "8", "--out", &out,
    ]);
    let h = rows(Path::new(&out).join("hierarchy.tsv"));
    assert_eq!(h.len(), 20);
    assert_eq!(h[0].len(), 4);
    let d = rows(Path::new(&out).join("density.tsv"));
    assert_eq!(d.len(), 256);
    let grid: Vec<f64> = d.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(grid.windows(2).all(|w| w[0] < w[1]));
    assert!(d.iter().all(|r| r[1].parse::<f64>().unwrap() >= 0.0 && r[2].parse::<f64>().unwrap() >= 0.0));
    assert_eq!(rows(Path::new(&out).join("pca.tsv")).len(), 20);
}

#[test]
fn manifest_records_parameters_digests_and_seed() {
    let dir = TempDir::new().unwrap();
    let (expr, design) = toy_inputs(&dir);
    let out = path(&dir, "cd");
    ok(&["chdir", "--expression", &expr, "--design", &design, "--seed", "99", "--out", &out]);
    let m = manifest(&out);
    assert_eq!(m["command"], "chdir");
    assert_eq!(m["seed"], 99);
    assert_eq!(m["parameters"]["alpha"], "0.3");
    let digests = m["input_digests"].as_object().unwrap();
    assert_eq!(digests.len(), 2);
    assert!(digests.values().all(|d| d.as_str().unwrap().starts_with("sha256:")));
    assert!(m["tool_version"].as_str().is_some());
}

#[test]
fn unseeded_runs_record_the_drawn_seed() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "s");
    let o = ok(&["simulate", "--n-genes", "20", "--out", &out]);
    let seed = manifest(&out)["seed"].as_u64().unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains(&seed.to_string()));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let (expr, design) = toy_inputs(&dir);
    let cfg = write(&dir, "run.conf", "# chdir settings\nalpha = 0.9\nmax_components = 5\n");
    let out = path(&dir, "cd");
    ok(&[
        "chdir", "--config", &cfg, "--expression", &expr, "--design", &design, "--alpha", "0.5", "--seed", "1",
        "--out", &out,
    ]);
    let m = manifest(&out);
    assert_eq!(m["parameters"]["alpha"], "0.5");
    assert_eq!(m["parameters"]["max_components"], "5");
}

#[test]
fn benchmark_writes_sweep_and_roc_tables() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "b");
    ok(&[
        "benchmark", "--runs", "3", "--sizes", "3,5", "--roc-size", "4", "--roc-points", "11", "--seed", "2",
        "--out", &out,
    ]);
    let sweep = rows(Path::new(&out).join("sweep.tsv"));
    assert_eq!(sweep.len(), 4);
    assert!(sweep.iter().all(|r| r[4] == "3"));
    assert_eq!(rows(Path::new(&out).join("roc.tsv")).len(), 22);
}
