//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::FRAC_PI_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use chardir::baseline::{bh_fdr, welch_test};
use chardir::chdir::{chdir_lr1, chdir_np1, Lr1Params, Np1Params};
use chardir::enrichment::{
    aggregate_ratios, angle_null_density, angle_null_pvalue, hypergeom_tail, overlap_curve,
};
use chardir::expr_data::ClassSplit;
use chardir::linalg::pca_reduce;
use chardir::projection::{project_columns, project_hierarchy};
use chardir::rng::{derive_seed, seeded_rng};
use chardir::simulate::{
    benchmark_roc, benchmark_sweep, fpr_grid, generate, method_scores, score_recovery, BenchConfig,
    BenchMethod, SyntheticSpec,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn split_of(x1: DMatrix<f64>, x2: DMatrix<f64>) -> ClassSplit {
    let genes = (0..x1.nrows()).map(|i| format!("G{i}")).collect();
    ClassSplit::from_matrices(genes, x1, x2).unwrap()
}

fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = m.column_mean();
    let mut c = m.clone();
    for mut col in c.column_iter_mut() {
        col -= &mean;
    }
    c
}

// 1. Sample-size sweep on 50 genes.
fn sweep_gini() -> Outcome {
    let sizes = [3, 4, 5, 6, 8, 10];
    let cfg = BenchConfig::new(
        SyntheticSpec::sweep_preset(3, 0),
        vec![BenchMethod::Lr1, BenchMethod::Welch],
        200,
        20_240_501,
    );
    let rows = benchmark_sweep(&cfg, &sizes).map_err(|e| e.to_string())?;
    let gini = |m: BenchMethod, n: usize| {
        rows.iter()
            .find(|r| r.method == m && r.samples_per_class == n)
            .map(|r| r.mean_gini)
            .unwrap()
    };
    let gaps: Vec<f64> = sizes.iter().map(|&n| gini(BenchMethod::Lr1, n) - gini(BenchMethod::Welch, n)).collect();
    let excluded: usize = rows.iter().map(|r| r.n_excluded).sum();
    let detail = sizes
        .iter()
        .map(|&n| format!("N={n}: {:.3} vs {:.3}", gini(BenchMethod::Lr1, n), gini(BenchMethod::Welch, n)))
        .collect::<Vec<_>>()
        .join(", ");
    check(
        gaps.iter().all(|&g| g > 0.0) && gaps[0] > gaps[5],
        format!("LR1 vs Welch mean Gini over 200 runs: {detail}; gap at 3 = {:.3}, at 10 = {:.3}; {excluded} excluded", gaps[0], gaps[5]),
    )
}

// 2. Mean ROC on 100 genes.
fn roc_dominance() -> Outcome {
    let cfg = BenchConfig::new(
        SyntheticSpec::roc_preset(5, 0),
        vec![BenchMethod::Lr1, BenchMethod::Welch],
        100,
        7_000_001,
    );
    let grid = fpr_grid(101);
    let curves = benchmark_roc(&cfg, 5, &grid).map_err(|e| e.to_string())?;
    let (lr1, welch) = (&curves[0], &curves[1]);
    let region: Vec<usize> = (0..grid.len()).filter(|&k| grid[k] <= 0.3 + 1e-12).collect();
    let dominated = region.iter().all(|&k| lr1.tpr[k] >= welch.tpr[k]);
    let at = grid.iter().position(|&x| (x - 0.1).abs() < 1e-12).unwrap();
    let min_gap = region.iter().map(|&k| lr1.tpr[k] - welch.tpr[k]).fold(f64::INFINITY, f64::min);
    check(
        dominated && lr1.tpr[at] > welch.tpr[at],
        format!(
            "100 runs at 5 samples/class: tpr at fpr 0.1 = {:.3} (LR1) vs {:.3} (Welch); smallest gap on [0, 0.3] = {min_gap:.3}",
            lr1.tpr[at], welch.tpr[at]
        ),
    )
}

// 3a. Hypergeometric tail against exact counting.
fn hypergeom_exact() -> Outcome {
    let max_n = 60;
    let mut pascal = vec![vec![0u128; max_n + 1]; max_n + 1];
    for n in 0..=max_n {
        pascal[n][0] = 1;
        for k in 1..=n {
            pascal[n][k] = pascal[n - 1][k - 1] + if k < n { pascal[n - 1][k] } else { 0 };
        }
    }
    let c = |n: usize, k: usize| if k > n { 0 } else { pascal[n][k] };
    let (mut worst, mut count) = (0.0f64, 0usize);
    for universe in 1..=max_n {
        let total_draws = |set: usize| c(universe, set);
        for sig in 0..=universe {
            for set in 0..=universe {
                let kmax = sig.min(set);
                let mut tail = 0u128;
                for k in (0..=kmax).rev() {
                    tail += c(sig, k) * c(universe - sig, set - k);
                    let exact = tail as f64 / total_draws(set) as f64;
                    let got = hypergeom_tail(k as u64, sig as u64, set as u64, universe as u64)
                        .map_err(|e| e.to_string())?;
                    worst = worst.max((got - exact).abs() / exact);
                    count += 1;
                }
            }
        }
    }
    check(
        worst <= 1e-12,
        format!("{count} (k, significant, set, universe) cases up to universe 60; max relative error {worst:.2e}"),
    )
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

// 3b. Regression estimator against the normal equations in gene space.
fn lr1_normal_equations() -> Outcome {
    let mut rng = seeded_rng(303);
    let mut worst = 1.0f64;
    for _ in 0..100 {
        let g = rng.random_range(1..=5usize);
        let n1 = rng.random_range(2..=6usize);
        let n2 = (g + 2).saturating_sub(n1).max(2) + rng.random_range(0..4usize);
        let x1 = normal_matrix(&mut rng, g, n1);
        let x2 = normal_matrix(&mut rng, g, n2) + DMatrix::from_element(g, n2, rng.random_range(0.5..2.0));
        let split = split_of(x1, x2);
        let params = Lr1Params { epsilon: 0.0, max_components: 100 };
        let b = chdir_lr1(&split, params).map_err(|e| e.to_string())?;

        let z = centered(&split.pooled()).transpose();
        let n = n1 + n2;
        let y: Vec<f64> = (0..n)
            .map(|j| if j < n1 { -1.0 } else { 1.0 } - (n2 as f64 - n1 as f64) / n as f64)
            .collect();
        let ztz: Vec<Vec<f64>> = (0..g).map(|i| (0..g).map(|k| z.column(i).dot(&z.column(k))).collect()).collect();
        let zty: Vec<f64> = (0..g).map(|i| z.column(i).iter().zip(&y).map(|(a, b)| a * b).sum()).collect();
        let beta = DVector::from_vec(solve_dense(ztz, zty));
        let cos = (beta.dot(&b.as_vector()) / beta.norm()).abs();
        worst = worst.min(cos);
    }
    check(
        worst > 1.0 - 1e-8,
        format!("100 random instances with up to 5 genes; smallest cosine similarity 1 - {:.2e}", 1.0 - worst),
    )
}

/// Two-sided Student-t tail by direct quadrature: with t = sqrt(ν) tan u the
/// density becomes proportional to cos^(ν−1) u on [0, π/2]. The substitution
/// π/2 − u = w³ removes the endpoint singularity for small ν.
fn t_tail_oracle(t: f64, nu: f64) -> f64 {
    let g = |w: f64| {
        let s = w * w * w;
        s.sin().powf(nu - 1.0) * 3.0 * w * w
    };
    let simpson = |a: f64, b: f64| {
        let k = 20_000;
        let h = (b - a) / k as f64;
        let mut acc = g(a) + g(b);
        for i in 1..k {
            acc += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let u0 = (t.abs() / nu.sqrt()).atan();
    let wmax = FRAC_PI_2.cbrt();
    simpson(0.0, (FRAC_PI_2 - u0).cbrt()) / simpson(0.0, wmax)
}

// 3c. Welch p-values against the quadrature oracle.
fn welch_oracle() -> Outcome {
    let mut rng = seeded_rng(404);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n1 = rng.random_range(2..=10usize);
        let n2 = rng.random_range(2..=10usize);
        let (s1, s2) = (rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
        let shift = rng.random_range(-3.0..3.0);
        let x1: Vec<f64> = (0..n1).map(|_| s1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let x2: Vec<f64> = (0..n2).map(|_| shift + s2 * rng.sample::<f64, _>(StandardNormal)).collect();
        let w = welch_test(&x1, &x2).map_err(|e| e.to_string())?;
        worst = worst.max((w.p - t_tail_oracle(w.t, w.df)).abs());
    }
    check(worst < 1e-6, format!("1000 random two-sample cases; max |p - oracle| = {worst:.2e}"))
}

// 3d. Angle null in three dimensions.
fn angle_closed_form() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..=200 {
        let theta = FRAC_PI_2 * i as f64 / 200.0;
        let p = angle_null_pvalue(theta, 3).map_err(|e| e.to_string())?;
        worst = worst.max((p - theta.cos()).abs());
    }
    check(worst < 1e-9, format!("201 angles in [0, pi/2]; max |p - cos theta| = {worst:.2e}"))
}

// 4. Invariant suites.
fn invariants() -> Outcome {
    let mut rng = seeded_rng(505);
    let mut norm_err = 0.0f64;
    for i in 0..100 {
        let g = rng.random_range(2..40usize);
        let n1 = rng.random_range(2..7usize);
        let n2 = rng.random_range(2..7usize);
        let x1 = normal_matrix(&mut rng, g, n1);
        let x2 = normal_matrix(&mut rng, g, n2) + DMatrix::from_element(g, n2, 1.0);
        let split = split_of(x1, x2);
        for b in [
            chdir_lr1(&split, Lr1Params::default()),
            chdir_np1(&split, Np1Params::new(i as u64)),
        ] {
            let b = b.map_err(|e| e.to_string())?;
            norm_err = norm_err.max((b.squared().iter().sum::<f64>() - 1.0).abs());
        }
    }

    let (mut ortho_err, mut recon_excess) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let g = rng.random_range(3..60usize);
        let n = rng.random_range(3..25usize);
        let data = normal_matrix(&mut rng, g, n);
        let eps = 1e-3;
        let (model, scores) = pca_reduce(&data, eps, 20).map_err(|e| e.to_string())?;
        let k = model.n_components();
        ortho_err = ortho_err.max((model.basis.transpose() * &model.basis - DMatrix::identity(k, k)).abs().max());
        let c = centered(&data);
        let resid = (&c - &model.basis * &scores).norm_squared();
        let bound = if model.truncated_by_cap { f64::INFINITY } else { eps * c.norm_squared() };
        recon_excess = recon_excess.max(resid - bound - 1e-9 * c.norm_squared());
    }

    let mut deflation_err = 0.0f64;
    for _ in 0..20 {
        let x1 = normal_matrix(&mut rng, 25, 6);
        let x2 = normal_matrix(&mut rng, 25, 6) + DMatrix::from_element(25, 6, 0.8);
        let split = split_of(x1, x2);
        let h = project_hierarchy(&split, 3, Lr1Params::default()).map_err(|e| e.to_string())?;
        let mut data = centered(&split.pooled());
        for (level, d) in h.directions.iter().enumerate() {
            let c = project_columns(&d.coefficients, &data).map_err(|e| e.to_string())?;
            for (j, cj) in c.iter().enumerate() {
                deflation_err = deflation_err.max((cj - h.coords[(level, j)]).abs());
            }
            data -= d.as_vector() * DMatrix::from_row_slice(1, c.len(), &c);
            let after = project_columns(&d.coefficients, &data).map_err(|e| e.to_string())?;
            deflation_err = deflation_err.max(after.iter().fold(0.0, |m, v| m.max(v.abs())));
            for e in &h.directions[..level] {
                deflation_err = deflation_err.max(e.as_vector().dot(&d.as_vector()).abs());
            }
        }
    }

    let mut gini_exact = true;
    let mut bh_ok = true;
    for _ in 0..200 {
        let m = rng.random_range(2..60usize);
        let scores: Vec<f64> = (0..m).map(|_| (rng.random::<f64>() * 10.0).floor()).collect();
        let mut truth: Vec<bool> = (0..m).map(|_| rng.random::<bool>()).collect();
        truth[0] = true;
        truth[1] = false;
        let s = score_recovery(&scores, &truth).map_err(|e| e.to_string())?;
        gini_exact &= s.gini == 2.0 * s.auc - 1.0;
        let p: Vec<f64> = (0..m).map(|_| rng.random::<f64>().powi(3)).collect();
        let q = bh_fdr(&p).map_err(|e| e.to_string())?;
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
        bh_ok &= q.iter().zip(&p).all(|(q, p)| q >= p && *q <= 1.0);
        bh_ok &= order.windows(2).all(|w| q[w[0]] <= q[w[1]]);
    }

    let mut mass_err = 0.0f64;
    for n in [3usize, 10, 100, 1000] {
        let k = 40_000;
        let h = FRAC_PI_2 / k as f64;
        let mut s = 0.0;
        for i in 0..=k {
            let w = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * angle_null_density(i as f64 * h, n).map_err(|e| e.to_string())?;
        }
        mass_err = mass_err.max((s * h / 3.0 - 1.0).abs());
    }

    let ok = norm_err <= 1e-10
        && ortho_err <= 1e-10
        && recon_excess <= 0.0
        && deflation_err <= 1e-8
        && gini_exact
        && bh_ok
        && mass_err <= 1e-6;
    check(
        ok,
        format!(
            "unit norm err {norm_err:.1e}; PCA orthonormality err {ortho_err:.1e}, reconstruction within bound: {}; \
             deflation/orthogonality err {deflation_err:.1e}; gini = 2 auc - 1 exactly: {gini_exact}; \
             BH monotone: {bh_ok}; angle density mass err {mass_err:.1e}",
            recon_excess <= 0.0
        ),
    )
}

// 5. Monte-Carlo check of the angle null.
fn angle_monte_carlo() -> Outcome {
    let n = 20;
    let mut rng = seeded_rng(606);
    let mut angles: Vec<f64> = (0..100_000)
        .map(|_| {
            let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let rest: f64 = g[1..].iter().map(|v| v * v).sum();
            rest.sqrt().atan2(g[0].abs())
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    let m = angles.len() as f64;
    let mut ks = 0.0f64;
    for (i, &a) in angles.iter().enumerate() {
        let cdf = 1.0 - angle_null_pvalue(a, n).map_err(|e| e.to_string())?;
        ks = ks.max((cdf - i as f64 / m).abs()).max(((i + 1) as f64 / m - cdf).abs());
    }
    check(ks < 0.01, format!("10^5 isotropic directions in 20 dimensions, one-gene set; KS distance {ks:.4}"))
}

fn run_cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_chardir"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

// 6. Benchmark output is reproducible across runs and worker counts.
fn benchmark_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "4"), ("c", "4")] {
        let out = dir.path().join(tag);
        let (code, err) = run_cli(&[
            "benchmark", "--runs", "12", "--sizes", "3,6", "--methods", "LR1,NP1,WELCH", "--roc-size", "4",
            "--permutations", "100", "--seed", "77", "--threads", threads, "--out", out.to_str().unwrap(),
        ]);
        if code != 0 {
            return Err(format!("benchmark exited {code}: {err}"));
        }
        let read = |f: &str| std::fs::read(out.join(f)).unwrap();
        outputs.push((read("sweep.tsv"), read("roc.tsv")));
    }
    check(
        outputs.windows(2).all(|w| w[0] == w[1]),
        "sweep.tsv and roc.tsv byte-identical for 1, 4 and 4 worker threads with seed 77".into(),
    )
}

// 7. Planted-set recovery along the two rankings.
fn overlap_ratio() -> Outcome {
    let runs = 50;
    let mut curves = Vec::with_capacity(runs);
    for r in 0..runs {
        let spec = SyntheticSpec {
            n_genes: 1000,
            seed: derive_seed(7_777, r as u64),
            ..SyntheticSpec::roc_preset(5, 0)
        };
        let out = generate(&spec).map_err(|e| e.to_string())?;
        let split = out.class_split().map_err(|e| e.to_string())?;
        let ids = out.gene_ids();
        let rank = |method| -> Result<Vec<String>, String> {
            let s = method_scores(method, &split, Lr1Params::default(), Np1Params::new(0)).map_err(|e| e.to_string())?;
            let mut order: Vec<usize> = (0..s.len()).collect();
            order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
            Ok(order.into_iter().map(|i| ids[i].clone()).collect())
        };
        let planted = out.planted_set("planted").map_err(|e| e.to_string())?;
        curves.push(
            overlap_curve(&rank(BenchMethod::Lr1)?, &rank(BenchMethod::Welch)?, &planted, 500)
                .map_err(|e| e.to_string())?,
        );
    }
    let agg = aggregate_ratios(&curves);
    let window = &agg[49..500];
    let min = window.iter().map(|a| a.mean).fold(f64::INFINITY, f64::min);
    let mean = window.iter().map(|a| a.mean).sum::<f64>() / window.len() as f64;
    let excluded: usize = window.iter().map(|a| a.n_excluded).sum();
    check(
        min > 1.0,
        format!(
            "1000 genes, 5 samples/class, 50 runs: LR1/Welch planted-overlap ratio over n in [50, 500] \
             has min {min:.3}, average {mean:.3}; {excluded} zero-denominator points excluded"
        ),
    )
}

// 8. simulate -> chdir -> enrich on default parameters.
fn pipeline() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    let mut tops = Vec::new();
    let seeds: Vec<String> = (1..=20).map(|s| s.to_string()).collect();
    for seed in &seeds {
        let seed = seed.as_str();
        let steps: [Vec<String>; 3] = [
            vec!["simulate".into(), "--seed".into(), seed.into(), "--out".into(), p("sim")],
            vec![
                "chdir".into(), "--expression".into(), p("sim/expression.tsv"), "--design".into(),
                p("sim/design.tsv"), "--seed".into(), seed.into(), "--out".into(), p("cd"),
            ],
            vec![
                "enrich".into(), "--genes".into(), p("cd/ranked_genes.tsv"), "--gmt".into(),
                p("sim/truth.gmt"), "--seed".into(), seed.into(), "--out".into(), p("en"),
            ],
        ];
        for step in &steps {
            let args: Vec<&str> = step.iter().map(String::as_str).collect();
            let (code, err) = run_cli(&args);
            if code != 0 {
                return Err(format!("`{}` exited {code}: {err}", step[0]));
            }
        }
        let table = std::fs::read_to_string(Path::new(&p("en/enrichment.tsv"))).map_err(|e| e.to_string())?;
        let top = table.lines().nth(1).unwrap_or("").split('\t').next().unwrap_or("").to_string();
        tops.push(top);
    }
    let hits = tops.iter().filter(|t| *t == "PLANTED_DE").count();
    check(
        hits == tops.len(),
        format!("all steps exit 0 for seeds 1..=20; planted set is the top hypergeometric hit in {hits}/{}", tops.len()),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 sample-size sweep (LR1 beats Welch, gap shrinks with N)", sweep_gini),
        ("2 mean ROC dominance on [0, 0.3]", roc_dominance),
        ("3a hypergeometric tail vs exact enumeration", hypergeom_exact),
        ("3b LR1 vs normal-equation oracle", lr1_normal_equations),
        ("3c Welch p vs Student-t quadrature oracle", welch_oracle),
        ("3d angle p-value equals cos(theta) for n = 3", angle_closed_form),
        ("4 invariant suites", invariants),
        ("5 Monte-Carlo angle null (KS < 0.01)", angle_monte_carlo),
        ("6 benchmark determinism", benchmark_determinism),
        ("7 planted-set overlap ratio > 1", overlap_ratio),
        ("8 simulate -> chdir -> enrich pipeline", pipeline),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {name}: PASS ({d}) [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {name}: FAIL ({d}) [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
