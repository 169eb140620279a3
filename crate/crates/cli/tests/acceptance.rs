//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::path::Path;
use std::process::Command;

use corrsep::data::{AttributeRange, Dataset};
use corrsep::distance::{euclidean, ranked_distance, DistanceCache};
use corrsep::eval::{accuracy_improvement, imputation_quality, trial_rng, GaussianBenchmark, RocPoint, SyntheticSuite};
use corrsep::famodel::{fa_bruteforce, fa_recursion, FaModelParams};
use corrsep::separate::localization_mask;
use corrsep::simulate::{corrupt, CorruptionSpec, SmoothGaussian};
use corrsep::tree::NodeId;
use corrsep::{
    separate_and_impute, tcs_separate, AnomalyParams, ImputeMethod, ImputeParams, NeighborhoodSize, NodeScoreContext,
    ReferenceModel,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("two Gaussian imputation table", table_two),
        ("false alarm recursion equals enumeration", cfar_oracle),
        ("node-level false alarm rate on uniform data", node_cfar),
        ("classification improvement arithmetic", improvement_arithmetic),
        ("synthetic detection and localization", synthetic_suite),
        ("invariant suites", invariants),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn table_two() -> Outcome {
    const MSE: [f64; 5] = [2.90, 2.31, 2.19, 2.14, 2.12];
    const ACC: [f64; 5] = [79.49, 80.13, 80.45, 80.74, 80.86];
    let bench = GaussianBenchmark::default();
    let rows = match bench.run() {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut pass = rows.len() == 5;
    let mut detail = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let ok = (r.mse - MSE[i]).abs() <= 0.15 && (r.accuracy - ACC[i]).abs() <= 1.5;
        pass &= ok;
        detail.push(format!(
            "K={} mse {:.3} (want {:.2}) acc {:.2} (want {:.2}){}",
            r.k,
            r.mse,
            MSE[i],
            r.accuracy,
            ACC[i],
            if ok { "" } else { " off" }
        ));
    }
    let monotone = rows.windows(2).all(|w| w[1].mse <= w[0].mse);
    pass &= monotone;
    detail.push(format!("mse nonincreasing: {monotone}"));
    outcome(pass, detail.join("; "))
}

fn cfar_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut exact = true;
    for theta in [0.0, 0.5, 0.75, 1.0] {
        for tau in [0.01, 0.05, 0.128] {
            for depth in [2, 3] {
                let p = FaModelParams::uniform(tau, theta, depth).unwrap();
                let (a, b) = (fa_recursion(&p).unwrap(), fa_bruteforce(&p).unwrap());
                worst = worst.max((a - b).abs());
                if theta == 1.0 {
                    exact &= a == tau && (b - tau).abs() <= 1e-12;
                }
            }
        }
    }
    outcome(
        worst <= 1e-10 && exact,
        format!("max |recursion - enumeration| = {worst:.2e}; theta=1 gives tau: {exact}"),
    )
}

fn node_cfar() -> Outcome {
    let mut rng = trial_rng(2024, 0);
    let mut uniform = |n: usize| {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen::<f64>()]).collect();
        Dataset::from_rows(&rows).unwrap()
    };
    let reference = uniform(2000);
    let queries = uniform(2000);
    let ctx = NodeScoreContext::build(&reference, AttributeRange::full(1), 8, 1.0).unwrap();
    let scores: Vec<f64> = (0..queries.rows())
        .map(|i| ctx.score_query(&reference, queries.row(i)).unwrap())
        .collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for tau in [0.02, 0.05, 0.1] {
        let rate = scores.iter().filter(|&&p| p <= tau).count() as f64 / scores.len() as f64;
        let rel = (rate - tau).abs() / tau;
        pass &= rel <= 0.25;
        detail.push(format!("tau {tau}: rate {rate:.4} ({:+.1}%)", 100.0 * (rate - tau) / tau));
    }
    outcome(pass, detail.join("; "))
}

fn improvement_arithmetic() -> Outcome {
    let r = accuracy_improvement(99.71, 90.57, 96.85).unwrap();
    outcome((r - 68.7).abs() <= 0.1, format!("{r:.4}%"))
}

fn rates(p: &RocPoint) -> [f64; 4] {
    [p.detection_fa, p.detection_tp, p.localization_fa, p.localization_tp].map(|v| v.unwrap_or(f64::NAN))
}

fn synthetic_suite() -> Outcome {
    let full = SyntheticSuite::default();
    let ranked = SyntheticSuite { alpha: 0.5, ..full.clone() };
    let (a, b) = match (full.run(), ranked.run()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e.to_string()),
    };
    let at = |pts: &[RocPoint], tau: f64| *pts.iter().find(|p| p.tau == tau).unwrap();
    let gap = |pts: &[RocPoint]| {
        let p = at(pts, 0.05);
        p.detection_tp.unwrap() - p.detection_fa.unwrap()
    };
    let part_a = gap(&a) >= 0.4;
    let part_b = a
        .iter()
        .all(|p| p.localization_tp.unwrap() > p.localization_fa.unwrap());
    let monotone = |pts: &[RocPoint]| pts.windows(2).all(|w| (0..4).all(|j| rates(&w[0])[j] <= rates(&w[1])[j]));
    let part_c = monotone(&a) && monotone(&b);
    let part_d = a
        .iter()
        .zip(&b)
        .all(|(x, y)| y.localization_fa.unwrap() <= x.localization_fa.unwrap());
    let fmt = |pts: &[RocPoint]| {
        pts.iter()
            .map(|p| {
                let r = rates(p);
                format!("{}:{:.3}/{:.3}/{:.3}/{:.3}", p.tau, r[0], r[1], r[2], r[3])
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let detail = format!(
        "(a) tp-fa at 0.05 = {:.3} [{}] (b) loc tp > fa [{}] (c) monotone [{}] (d) alpha 0.5 loc fa <= alpha 1 [{}]; \
         tau:det_fa/det_tp/loc_fa/loc_tp alpha=1 {} | alpha=0.5 {}",
        gap(&a),
        part_a,
        part_b,
        part_c,
        part_d,
        fmt(&a),
        fmt(&b)
    );
    outcome(part_a && part_b && part_c && part_d, detail)
}

/// Named invariant checks; each returns the first violation, if any.
fn invariants() -> Outcome {
    let checks: [(&str, fn() -> Result<(), String>); 5] = [
        ("distance", distance_invariants),
        ("score", score_invariants),
        ("search", search_invariants),
        ("impute", impute_invariants),
        ("simulate", simulate_invariants),
    ];
    let mut failures = Vec::new();
    for (name, check) in checks {
        if let Err(e) = check() {
            failures.push(format!("{name}: {e}"));
        }
    }
    if failures.is_empty() {
        outcome(true, "distance, score, search, impute and simulate suites hold")
    } else {
        outcome(false, failures.join("; "))
    }
}

fn random_rows(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = trial_rng(seed, 0);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
    Dataset::from_rows(&rows).unwrap()
}

fn smooth(rows: usize, stream: u64) -> Dataset {
    SmoothGaussian::default().sample(rows, &mut trial_rng(77, stream)).unwrap()
}

fn distance_invariants() -> Result<(), String> {
    let data = random_rows(30, 12, 1);
    let cache = DistanceCache::build(&data);
    let alphas = [0.25, 0.5, 0.75, 1.0];
    for i in 0..data.rows() {
        for j in 0..data.rows() {
            let (x, y) = (data.row(i), data.row(j));
            let h: Vec<f64> = alphas.iter().map(|&a| ranked_distance(x, y, a).unwrap()).collect();
            if h.windows(2).any(|w| w[0] > w[1]) {
                return Err(format!("alpha monotonicity fails for rows {i}, {j}"));
            }
            if h[3] != ranked_distance(y, x, 1.0).unwrap() || h[1] != ranked_distance(y, x, 0.5).unwrap() {
                return Err(format!("asymmetric for rows {i}, {j}"));
            }
            for (s, e) in [(0, 12), (0, 6), (6, 12), (3, 9), (5, 6)] {
                let range = AttributeRange::new(s, e, 12).unwrap();
                let fast = cache.interval_distance(i, j, range).unwrap();
                let direct = euclidean(&x[s..e], &y[s..e]);
                if (fast - direct).abs() > 1e-9 * direct.max(1e-12) && (fast - direct).abs() > 1e-12 {
                    return Err(format!("cache {fast} vs direct {direct} on [{s}, {e})"));
                }
            }
        }
    }
    Ok(())
}

fn score_invariants() -> Result<(), String> {
    let reference = random_rows(60, 8, 2);
    let queries = random_rows(40, 8, 3);
    let range = AttributeRange::new(2, 8, 8).unwrap();
    let (k, alpha) = (5, 0.75);
    let ctx = NodeScoreContext::build(&reference, range, k, alpha).map_err(|e| e.to_string())?;
    let n = reference.rows() as f64;
    // Oracle radii by full sort of every distance.
    let radius = |q: &[f64], skip: Option<usize>| {
        let mut d: Vec<f64> = (0..reference.rows())
            .filter(|&r| Some(r) != skip)
            .map(|r| ranked_distance(q, reference.slice(r, range), alpha).unwrap())
            .collect();
        d.sort_by(f64::total_cmp);
        d[k - 1]
    };
    let radii: Vec<f64> = (0..reference.rows()).map(|i| radius(reference.slice(i, range), Some(i))).collect();
    for i in 0..queries.rows() {
        let q = queries.slice(i, range);
        let p = ctx.score_query(&reference, q).map_err(|e| e.to_string())?;
        let r = radius(q, None);
        let oracle = radii.iter().filter(|&&x| x >= r).count() as f64 / n;
        if p != oracle {
            return Err(format!("query {i}: score {p} vs sorted oracle {oracle}"));
        }
        if (p * n - (p * n).round()).abs() > 1e-9 {
            return Err(format!("score {p} is not a multiple of 1/{n}"));
        }
    }
    for i in 0..reference.rows() {
        let oracle = radii.iter().filter(|&&x| x >= radii[i]).count() as f64 / n;
        if ctx.reference_score(i) != oracle || oracle < 1.0 / n {
            return Err(format!("reference row {i}: {} vs {oracle}", ctx.reference_score(i)));
        }
    }
    Ok(())
}

fn search_invariants() -> Result<(), String> {
    let reference = smooth(300, 0);
    let (test, _) = corrupt(&smooth(60, 1), &CorruptionSpec::intervals(0.6, (0.25, 0.5), 4)).unwrap();
    let model = ReferenceModel::build(reference.clone(), 3, AnomalyParams::new(8, 0.05, 0.75).unwrap()).unwrap();
    for i in 0..test.rows() {
        let result = tcs_separate(&model, test.row(i)).map_err(|e| e.to_string())?;
        let mask = localization_mask(&result, test.dims()).map_err(|e| e.to_string())?;
        let mut union = vec![false; test.dims()];
        for &node in &result.declared {
            if node == NodeId::ROOT {
                return Err(format!("row {i}: root declared"));
            }
            let r = model.tree().range(node);
            union[r.start..r.end].iter_mut().for_each(|c| *c = true);
            // Declaring stops the search: nothing two levels below is scored.
            for grandchild in [node.left().left(), node.left().right(), node.right().left(), node.right().right()] {
                if result.labels.contains_key(&grandchild) {
                    return Err(format!("row {i}: search continued below {node}"));
                }
            }
        }
        if union != mask {
            return Err(format!("row {i}: localization is not the union of declared cells"));
        }
        if result.detected != !result.declared.is_empty() {
            return Err(format!("row {i}: detection flag disagrees with declarations"));
        }
        for node in result.labels.keys() {
            if let Some(parent) = node.parent() {
                if !result.labels.contains_key(&parent) {
                    return Err(format!("row {i}: {node} scored without its parent"));
                }
            }
        }
    }
    // No corruption, rows drawn from the reference: nothing changes.
    let copies = reference.select(&(0..50).collect::<Vec<_>>());
    let (same, masks) = corrupt(&copies, &CorruptionSpec::intervals(0.0, (0.25, 0.5), 4)).unwrap();
    let strict = ReferenceModel::build(reference, 3, AnomalyParams::new(8, 0.003, 0.75).unwrap()).unwrap();
    if same != copies || masks.iter().any(|m| m.is_corrupted()) {
        return Err("pi = 0 altered the data".into());
    }
    for i in 0..same.rows() {
        let (result, imputed) =
            separate_and_impute(&strict, same.row(i), &ImputeParams::matching(&strict)).map_err(|e| e.to_string())?;
        if result.detected || imputed.values != same.row(i) {
            return Err(format!("pi = 0 pipeline changed row {i}"));
        }
    }
    Ok(())
}

fn impute_invariants() -> Result<(), String> {
    let reference = smooth(300, 2);
    let (test, _) = corrupt(&smooth(60, 3), &CorruptionSpec::intervals(0.7, (0.25, 0.5), 8)).unwrap();
    let model = ReferenceModel::build(reference.clone(), 3, AnomalyParams::new(8, 0.05, 0.75).unwrap()).unwrap();
    let map1 = ImputeParams {
        neighborhood: NeighborhoodSize::Fixed(1),
        alpha: 0.75,
        method: ImputeMethod::Map,
    };
    let nn = ImputeParams {
        neighborhood: NeighborhoodSize::Fixed(8),
        method: ImputeMethod::Nn,
        ..map1
    };
    let mut imputed_any = false;
    for i in 0..test.rows() {
        let (result, out) =
            separate_and_impute(&model, test.row(i), &ImputeParams::matching(&model)).map_err(|e| e.to_string())?;
        for &node in &result.declared {
            let r = model.tree().range(node);
            let src = out.source_rows[&node];
            if out.values[r.start..r.end] != *reference.slice(src, r) {
                return Err(format!("row {i}: imputed cell {node} is not a reference slice"));
            }
            imputed_any = true;
        }
        let mask = localization_mask(&result, test.dims()).map_err(|e| e.to_string())?;
        if (0..test.dims()).any(|j| !mask[j] && out.values[j] != test.row(i)[j]) {
            return Err(format!("row {i}: a cell outside the localization changed"));
        }
        let a = separate_and_impute(&model, test.row(i), &map1).map_err(|e| e.to_string())?.1;
        let b = separate_and_impute(&model, test.row(i), &nn).map_err(|e| e.to_string())?.1;
        if a != b {
            return Err(format!("row {i}: MAP over one candidate differs from NN"));
        }
    }
    if !imputed_any {
        return Err("no corruption was imputed".into());
    }
    Ok(())
}

fn simulate_invariants() -> Result<(), String> {
    let clean = random_rows(200, 20, 5);
    let spec = CorruptionSpec {
        noise: (5.0, 6.0),
        ..CorruptionSpec::intervals(0.5, (0.2, 0.4), 6)
    };
    let (lo, hi) = spec.length_bounds(20).map_err(|e| e.to_string())?;
    let (corrupted, masks) = corrupt(&clean, &spec).map_err(|e| e.to_string())?;
    for (i, m) in masks.iter().enumerate() {
        for j in 0..20 {
            let (a, b) = (clean.row(i)[j], corrupted.row(i)[j]);
            if m.0[j] != (a != b) || (m.0[j] && !(5.0..6.0).contains(&b)) {
                return Err(format!("row {i}, attribute {j}: mask disagrees with the data"));
            }
        }
        if m.is_corrupted() {
            let iv = m.intervals();
            if iv.len() != 1 || !(lo..=hi).contains(&(iv[0].1 - iv[0].0)) {
                return Err(format!("row {i}: intervals {iv:?} outside length bounds [{lo}, {hi}]"));
            }
        }
    }
    let full = imputation_quality(&clean, &corrupted, &clean).map_err(|e| e.to_string())?;
    let none = imputation_quality(&clean, &corrupted, &corrupted).map_err(|e| e.to_string())?;
    if full.quality != Some(1.0) || none.quality != Some(0.0) {
        return Err(format!("quality endpoints {:?} and {:?}", full.quality, none.quality));
    }
    Ok(())
}

fn run(dir: &Path, threads: &str, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_corrsep"))
        .current_dir(dir)
        .env("CORRSEP_THREADS", threads)
        .arg("--no-timestamp")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    std::fs::write(dir.join(format!("{}.stdout", args[0])), out.stdout).map_err(|e| e.to_string())
}

fn pipeline(dir: &Path, threads: &str) -> Result<(), String> {
    let steps: [&[&str]; 8] = [
        &["simulate", "--rows", "300", "--pi", "0", "--seed", "3", "--out", "ref.csv", "--summary", "ref.json"],
        &[
            "simulate", "--rows", "40", "--seed", "4", "--out", "test.csv", "--mask", "truth.csv", "--clean-out", "clean.csv",
            "--summary", "sim.json",
        ],
        &["detect", "--reference", "ref.csv", "--test", "test.csv", "--out", "det.jsonl", "--mask", "loc.csv", "--summary", "det.json"],
        &[
            "impute", "--reference", "ref.csv", "--test", "test.csv", "--out", "imp.csv", "--sources", "src.jsonl", "--summary",
            "imp.json",
        ],
        &[
            "evaluate", "--reference", "ref.csv", "--test", "test.csv", "--mask", "truth.csv", "--original", "clean.csv", "--out",
            "roc.csv", "--summary", "eval.json",
        ],
        &["evaluate", "--trials", "4", "--seed", "9", "--out", "suite.csv", "--summary", "suite.json"],
        &["famodel", "--out", "fa.csv"],
        &["gaussian", "--trials", "3", "--seed", "5", "--out", "gauss.csv", "--summary", "gauss.json"],
    ];
    steps.iter().try_for_each(|args| run(dir, threads, args))
}

fn cli_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    if let Err(e) = pipeline(a.path(), "1").and_then(|_| pipeline(b.path(), "3")) {
        return outcome(false, e);
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let differing: Vec<String> = names
        .iter()
        .filter(|n| std::fs::read(a.path().join(n)).ok() != std::fs::read(b.path().join(n)).ok())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    outcome(
        differing.is_empty(),
        format!(
            "{} output files compared across reruns with 1 and 3 threads; differing: {:?}",
            names.len(),
            differing
        ),
    )
}
