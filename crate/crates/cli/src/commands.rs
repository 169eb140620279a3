use std::io::Write;
use std::path::{Path, PathBuf};

use corrsep::data::{write_csv, CsvLayout, CsvTable, Dataset, ScalingParams};
use corrsep::eval::{
    accuracy_improvement, imputation_quality, impute_all, roc_counts, train_linear_classifier, trial_rng, GaussianBenchmark,
    RocPoint, SyntheticSuite,
};
use corrsep::separate::localization_mask;
use corrsep::famodel::{fa_bruteforce, fa_recursion, FaModelParams, BRUTEFORCE_MAX_DEPTH};
use corrsep::simulate::{corrupt, CorruptionShape, CorruptionSpec, SmoothGaussian};
use corrsep::{
    tcs_separate, AnomalyParams, ImputeMethod, ImputeParams, ImputedInstance, NeighborhoodSize,
    ReferenceModel, SeparationResult,
};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::Config;
use crate::io::{read_masks, read_table, sink, summary, write_json, write_masks};
use crate::{DetectArgs, EvaluateArgs, Failure, FamodelArgs, GaussianArgs, Globals, ImputeArgs, SimulateArgs};

const DEFAULT_K: usize = 8;
const DEFAULT_TAU: f64 = 0.016;
const DEFAULT_ALPHA: f64 = 0.75;
const MAX_DEFAULT_DEPTH: usize = 6;
const DEFAULT_TAUS: [f64; 6] = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2];

/// Deepest tree, at most six levels, whose narrowest leaf still keeps one
/// attribute under `alpha`.
fn default_depth(dims: usize, alpha: f64) -> usize {
    let deepest = (usize::BITS - 1 - dims.max(1).leading_zeros()) as usize;
    (1..=deepest.min(MAX_DEFAULT_DEPTH))
        .rev()
        .find(|&l| ((dims >> l) as f64 * alpha + 1e-9).floor() >= 1.0)
        .unwrap_or(1)
}

struct ModelSettings {
    reference: PathBuf,
    params: AnomalyParams,
    depth: Option<usize>,
    header: bool,
    labels: bool,
    scale: bool,
}

impl ModelSettings {
    fn read(cfg: &mut Config) -> Result<Self, Failure> {
        let reference = cfg.path("reference")?;
        let k = cfg.usize_or("k", DEFAULT_K)?;
        let tau = cfg.f64_or("tau", DEFAULT_TAU)?;
        let alpha = cfg.f64_or("alpha", DEFAULT_ALPHA)?;
        let params = AnomalyParams::new(k, tau, alpha)?;
        Ok(Self {
            reference,
            params,
            depth: cfg.usize_opt("depth")?,
            header: cfg.bool_or("header", false)?,
            labels: cfg.bool_or("labels", false)?,
            scale: cfg.bool_or("scale", true)?,
        })
    }
}

/// Raw tables plus the model and test set in model coordinates.
struct Loaded {
    reference: CsvTable,
    test: CsvTable,
    scaled_test: Dataset,
    model: ReferenceModel,
    depth: usize,
}

fn load(settings: &ModelSettings, test: &Path) -> Result<Loaded, Failure> {
    let reference = read_table(&settings.reference, settings.header, settings.labels)?;
    let test = read_table(test, settings.header, settings.labels)?;
    let dims = reference.data.dims();
    if test.data.dims() != dims {
        return Err(Failure::Data(format!(
            "test rows have {} attributes, reference rows have {dims}",
            test.data.dims()
        )));
    }
    let (scaled_reference, scaled_test) = if settings.scale {
        let scaling = ScalingParams::fit(&reference.data)?;
        (scaling.transform(&reference.data)?, scaling.transform(&test.data)?)
    } else {
        (reference.data.clone(), test.data.clone())
    };
    let depth = settings.depth.unwrap_or_else(|| default_depth(dims, settings.params.alpha));
    let model = ReferenceModel::build(scaled_reference, depth, settings.params)?;
    Ok(Loaded {
        reference,
        test,
        scaled_test,
        model,
        depth,
    })
}

/// Test row `i` in input units with every imputed node copied from the raw
/// reference row, so untouched cells keep their exact input text value.
fn raw_imputed(loaded: &Loaded, i: usize, instance: &ImputedInstance) -> Vec<f64> {
    let mut values = loaded.test.data.row(i).to_vec();
    for (&node, &row) in &instance.source_rows {
        let range = loaded.model.tree().range(node);
        values[range.start..range.end].copy_from_slice(loaded.reference.data.slice(row, range));
    }
    values
}

fn write_table(path: Option<&PathBuf>, data: &Dataset, layout: &CsvLayout) -> Result<(), Failure> {
    let w = sink(path)?;
    write_csv(w, data, layout).map_err(Failure::from)
}

fn write_lines(path: Option<&PathBuf>, lines: &[Value]) -> Result<(), Failure> {
    let mut w = sink(path)?;
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn write_localization(path: &Path, results: &[SeparationResult], dims: usize) -> Result<(), Failure> {
    let masks = results
        .iter()
        .map(|r| localization_mask(r, dims).map(corrsep::simulate::CorruptionMask))
        .collect::<Result<Vec<_>, _>>()?;
    write_masks(path, &masks)
}

fn result_line(row: usize, result: &SeparationResult) -> Value {
    let mut v = serde_json::to_value(result.to_wire()).expect("result serializes");
    v.as_object_mut().expect("object").insert("row".into(), row.into());
    v
}

fn separation_metrics(results: &[SeparationResult], loaded: &Loaded) -> Value {
    json!({
        "rows": results.len(),
        "detected": results.iter().filter(|r| r.detected).count(),
        "flagged_attributes": results.iter().map(|r| r.corrupted.len()).sum::<usize>(),
        "depth": loaded.depth,
    })
}

pub fn detect(args: &DetectArgs, globals: &Globals) -> Result<(), Failure> {
    let mut cfg = Config::load(args.config.as_deref(), args)?;
    let settings = ModelSettings::read(&mut cfg)?;
    let test = cfg.path("test")?;
    let out = cfg.path_opt("out")?;
    let mask = cfg.path_opt("mask")?;
    let summary_path = cfg.path_opt("summary")?;
    let effective = cfg.finish()?;

    let loaded = load(&settings, &test)?;
    let results: Vec<SeparationResult> = (0..loaded.scaled_test.rows())
        .into_par_iter()
        .map(|i| tcs_separate(&loaded.model, loaded.scaled_test.row(i)))
        .collect::<Result<_, _>>()?;

    let lines: Vec<Value> = results.iter().enumerate().map(|(i, r)| result_line(i, r)).collect();
    write_lines(out.as_ref(), &lines)?;
    if let Some(p) = &mask {
        write_localization(p, &results, loaded.scaled_test.dims())?;
    }
    if let Some(p) = &summary_path {
        let metrics = separation_metrics(&results, &loaded);
        write_json(Some(p), &summary("detect", effective, metrics, globals))?;
    }
    Ok(())
}

/// Imputation settings; `gamma` and `impute_alpha` are read only when
/// `tunable`, otherwise the neighborhood alpha follows the model.
fn read_impute_params(cfg: &mut Config, model: &AnomalyParams, tunable: bool) -> Result<ImputeParams, Failure> {
    let method = match cfg.string_or("method", "map")?.as_str() {
        "map" => ImputeMethod::Map,
        "nn" => ImputeMethod::Nn,
        other => {
            return Err(Failure::Usage(format!(
                "config key \"method\": expected \"map\" or \"nn\", got \"{other}\""
            )))
        }
    };
    let fixed = cfg.usize_opt("neighborhood")?.map(NeighborhoodSize::Fixed);
    let scaled = if tunable {
        cfg.f64_opt("gamma")?.map(|gamma| NeighborhoodSize::SqrtScaled { gamma })
    } else {
        None
    };
    let neighborhood = match (fixed, scaled) {
        (Some(_), Some(_)) => {
            return Err(Failure::Usage(
                "config keys \"neighborhood\" and \"gamma\" are mutually exclusive".into(),
            ))
        }
        (Some(n), None) | (None, Some(n)) => n,
        (None, None) => NeighborhoodSize::Fixed(model.k_neighbors),
    };
    let alpha = if tunable {
        cfg.f64_or("impute_alpha", model.alpha)?
    } else {
        model.alpha
    };
    Ok(ImputeParams {
        neighborhood,
        alpha,
        method,
    })
}

pub fn impute(args: &ImputeArgs, globals: &Globals) -> Result<(), Failure> {
    let mut cfg = Config::load(args.config.as_deref(), args)?;
    let settings = ModelSettings::read(&mut cfg)?;
    let test = cfg.path("test")?;
    let out = cfg.path_opt("out")?;
    let sources = cfg.path_opt("sources")?;
    let mask = cfg.path_opt("mask")?;
    let summary_path = cfg.path_opt("summary")?;
    let params = read_impute_params(&mut cfg, &settings.params, true)?;
    let effective = cfg.finish()?;

    let loaded = load(&settings, &test)?;
    let pairs = impute_all(&loaded.model, &loaded.scaled_test, &params)?;
    let values: Vec<f64> = pairs
        .iter()
        .enumerate()
        .flat_map(|(i, (_, inst))| raw_imputed(&loaded, i, inst))
        .collect();
    let imputed = loaded.test.data.with_values(values)?;
    write_table(out.as_ref(), &imputed, &loaded.test.layout)?;

    if let Some(p) = &sources {
        let lines: Vec<Value> = pairs
            .iter()
            .enumerate()
            .map(|(i, (_, inst))| json!({ "row": i, "sources": inst.source_rows_by_path() }))
            .collect();
        write_lines(Some(p), &lines)?;
    }
    let results: Vec<SeparationResult> = pairs.into_iter().map(|(r, _)| r).collect();
    if let Some(p) = &mask {
        write_localization(p, &results, loaded.scaled_test.dims())?;
    }
    if let Some(p) = &summary_path {
        let metrics = separation_metrics(&results, &loaded);
        write_json(Some(p), &summary("impute", effective, metrics, globals))?;
    }
    Ok(())
}

fn read_spec(cfg: &mut Config, seed: u64) -> Result<CorruptionSpec, Failure> {
    let pi = cfg.f64_or("pi", 0.5)?;
    let lo = cfg.f64_or("fraction_lo", 0.25)?;
    let hi = cfg.f64_or("fraction_hi", 0.5)?;
    Ok(CorruptionSpec {
        pi,
        fraction: (lo, hi),
        shape: CorruptionShape::Intervals {
            min_count: 1,
            max_count: 1,
        },
        noise: (0.0, 1.0),
        seed,
    })
}

pub fn simulate(args: &SimulateArgs, globals: &Globals) -> Result<(), Failure> {
    let mut cfg = Config::load(args.config.as_deref(), args)?;
    let input = cfg.path_opt("input")?;
    let out = cfg.path_opt("out")?;
    let mask = cfg.path_opt("mask")?;
    let clean_out = cfg.path_opt("clean_out")?;
    let summary_path = cfg.path_opt("summary")?;
    let seed = cfg.u64_or("seed", 0)?;
    let mut spec = read_spec(&mut cfg, seed)?;
    let square = (cfg.usize_opt("square_height")?, cfg.usize_opt("square_width")?);
    spec.shape = match square {
        (Some(height), Some(width)) => CorruptionShape::Square { height, width },
        (None, None) => CorruptionShape::Intervals {
            min_count: cfg.usize_or("intervals_min", 1)?,
            max_count: cfg.usize_or("intervals_max", 1)?,
        },
        _ => {
            return Err(Failure::Usage(
                "config keys \"square_height\" and \"square_width\" must be given together".into(),
            ))
        }
    };
    spec.noise = (cfg.f64_or("noise_lo", 0.0)?, cfg.f64_or("noise_hi", 1.0)?);

    let clean = match &input {
        Some(path) => {
            let header = cfg.bool_or("header", false)?;
            let labels = cfg.bool_or("labels", false)?;
            read_table(path, header, labels)?
        }
        None => {
            let source = SmoothGaussian {
                dims: cfg.usize_or("dims", 16)?,
                mean: cfg.f64_or("mean", 0.5)?,
                std: cfg.f64_or("std", 0.1)?,
                rho: cfg.f64_or("rho", 0.9)?,
            };
            let rows = cfg.usize_or("rows", 100)?;
            source.validate()?;
            // Stream 0 of the seed drives the corruption; the sample uses stream 1.
            let data = source.sample(rows, &mut trial_rng(seed, 1))?;
            CsvTable {
                data,
                layout: CsvLayout {
                    header: None,
                    label_column: None,
                },
            }
        }
    };
    let effective = cfg.finish()?;
    spec.validate(clean.data.dims())?;

    let (corrupted, masks) = corrupt(&clean.data, &spec)?;
    write_table(out.as_ref(), &corrupted, &clean.layout)?;
    if let Some(p) = &mask {
        write_masks(p, &masks)?;
    }
    if let Some(p) = &clean_out {
        write_table(Some(p), &clean.data, &clean.layout)?;
    }
    if let Some(p) = &summary_path {
        let metrics = json!({
            "rows": corrupted.rows(),
            "dims": corrupted.dims(),
            "corrupted_rows": masks.iter().filter(|m| m.is_corrupted()).count(),
            "corrupted_cells": masks.iter().map(|m| m.count()).sum::<usize>(),
        });
        write_json(Some(p), &summary("simulate", effective, metrics, globals))?;
    }
    Ok(())
}

fn write_roc(path: &PathBuf, points: &[RocPoint]) -> Result<(), Failure> {
    let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    let mut w = sink(Some(path))?;
    writeln!(w, "tau,detection_fa,detection_tp,localization_fa,localization_tp")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{}",
            p.tau,
            cell(p.detection_fa),
            cell(p.detection_tp),
            cell(p.localization_fa),
            cell(p.localization_tp)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs, globals: &Globals) -> Result<(), Failure> {
    let mut cfg = Config::load(args.config.as_deref(), args)?;
    let out = cfg.path_opt("out")?;
    let summary_path = cfg.path_opt("summary")?;
    let taus = cfg.f64_list_or("taus", &DEFAULT_TAUS)?;
    if let Some(t) = taus.iter().find(|t| !(0.0..1.0).contains(*t)) {
        return Err(Failure::Usage(format!("config key \"taus\": {t} is not in [0, 1)")));
    }
    let (points, mut metrics, effective) = if cfg.path_opt("reference")?.is_some() {
        evaluate_files(cfg, &taus)?
    } else {
        evaluate_synthetic(cfg, &taus)?
    };
    if let Some(p) = &out {
        write_roc(p, &points)?;
    }
    metrics.insert("roc".into(), serde_json::to_value(&points).expect("points serialize"));
    write_json(
        summary_path.as_ref(),
        &summary("evaluate", effective, Value::Object(metrics), globals),
    )
}

type Evaluation = (Vec<RocPoint>, Map<String, Value>, Map<String, Value>);

fn evaluate_files(mut cfg: Config, taus: &[f64]) -> Result<Evaluation, Failure> {
    let settings = ModelSettings::read(&mut cfg)?;
    let test = cfg.path("test")?;
    let mask = cfg.path("mask")?;
    let original = cfg.path_opt("original")?;
    let params = read_impute_params(&mut cfg, &settings.params, false)?;
    let ridge = cfg.f64_or("ridge", 1e-3)?;
    let effective = cfg.finish()?;

    let loaded = load(&settings, &test)?;
    let masks = read_masks(&mask, loaded.scaled_test.dims())?;
    let counts = roc_counts(&loaded.model, &loaded.scaled_test, &masks, taus)?;
    let points: Vec<RocPoint> = counts.iter().zip(taus).map(|(c, &t)| c.point(t)).collect();

    let mut metrics = Map::new();
    metrics.insert("depth".into(), loaded.depth.into());
    if let Some(original) = &original {
        let original = read_table(original, settings.header, settings.labels)?;
        let pairs = impute_all(&loaded.model, &loaded.scaled_test, &params)?;
        let values: Vec<f64> = pairs
            .iter()
            .enumerate()
            .flat_map(|(i, (_, inst))| raw_imputed(&loaded, i, inst))
            .collect();
        let imputed = loaded.test.data.with_values(values)?;
        let quality = imputation_quality(&original.data, &loaded.test.data, &imputed)?;
        metrics.insert("imputation".into(), serde_json::to_value(quality).expect("report serializes"));
        if loaded.reference.data.labels().is_some() && original.data.labels().is_some() {
            let classifier = train_linear_classifier(&loaded.reference.data, ridge)?;
            let clean = classifier.accuracy(&original.data)?;
            let corrupted = classifier.accuracy(&loaded.test.data)?;
            let repaired = classifier.accuracy(&imputed)?;
            metrics.insert(
                "classification".into(),
                json!({
                    "accuracy_clean": clean,
                    "accuracy_corrupted": corrupted,
                    "accuracy_imputed": repaired,
                    "improvement_percent": accuracy_improvement(clean, corrupted, repaired),
                }),
            );
        }
    }
    Ok((points, metrics, effective))
}

fn evaluate_synthetic(mut cfg: Config, taus: &[f64]) -> Result<Evaluation, Failure> {
    let defaults = SyntheticSuite::default();
    let seed = cfg.u64_or("seed", defaults.seed)?;
    let spec = read_spec(&mut cfg, 0)?;
    let source = SmoothGaussian {
        dims: cfg.usize_or("dims", defaults.source.dims)?,
        rho: cfg.f64_or("rho", defaults.source.rho)?,
        std: cfg.f64_or("std", defaults.source.std)?,
        ..defaults.source
    };
    let k = cfg.usize_or("k", DEFAULT_K)?;
    let alpha = cfg.f64_or("alpha", DEFAULT_ALPHA)?;
    AnomalyParams::new(k, DEFAULT_TAU, alpha)?;
    let depth = cfg.usize_or("depth", default_depth(source.dims, alpha))?;
    let suite = SyntheticSuite {
        source,
        reference_rows: cfg.usize_or("reference_rows", defaults.reference_rows)?,
        test_rows: cfg.usize_or("test_rows", defaults.test_rows)?,
        corruption: spec,
        depth,
        k_neighbors: k,
        alpha,
        taus: taus.to_vec(),
        trials: cfg.usize_or("trials", defaults.trials)?,
        seed,
    };
    let effective = cfg.finish()?;
    let points = suite.run()?;
    Ok((points, Map::new(), effective))
}

pub fn famodel(args: &FamodelArgs, _globals: &Globals) -> Result<(), Failure> {
    let mut cfg = Config::load(args.config.as_deref(), args)?;
    let taus = cfg.f64_list_or("taus", &[0.005, 0.01, 0.02, 0.05, 0.1, 0.128, 0.2])?;
    let thetas = cfg.f64_list_or("thetas", &[0.0, 0.5, 0.75, 1.0])?;
    let depths = cfg.usize_list_or("depths", &[1, 2, 3, 4, 5, 6])?;
    let out = cfg.path_opt("out")?;
    cfg.finish()?;

    let mut w = sink(out.as_ref())?;
    writeln!(w, "tau,theta,L,C_tau_analytic,C_tau_bruteforce")?;
    for &tau in &taus {
        for &theta in &thetas {
            for &depth in &depths {
                let params = FaModelParams::uniform(tau, theta, depth)?;
                let analytic = fa_recursion(&params)?;
                let brute = if depth <= BRUTEFORCE_MAX_DEPTH {
                    format!("{}", fa_bruteforce(&params)?)
                } else {
                    String::new()
                };
                writeln!(w, "{tau},{theta},{depth},{analytic},{brute}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn gaussian(args: &GaussianArgs, globals: &Globals) -> Result<(), Failure> {
    let mut cfg = Config::load(args.config.as_deref(), args)?;
    let defaults = GaussianBenchmark::default();
    let bench = GaussianBenchmark {
        k_grid: cfg.usize_list_or("k_grid", &defaults.k_grid)?,
        trials: cfg.usize_or("trials", defaults.trials)?,
        seed: cfg.u64_or("seed", defaults.seed)?,
        per_class: cfg.usize_or("per_class", defaults.per_class)?,
        score_k: cfg.usize_opt("score_k")?,
        ridge: cfg.f64_or("ridge", defaults.ridge)?,
    };
    let out = cfg.path_opt("out")?;
    let summary_path = cfg.path_opt("summary")?;
    let effective = cfg.finish()?;
    bench.validate()?;

    let rows = bench.run()?;
    let mut w = sink(out.as_ref())?;
    writeln!(w, "K,mse,accuracy")?;
    for r in &rows {
        writeln!(w, "{},{},{}", r.k, r.mse, r.accuracy)?;
    }
    w.flush()?;
    if let Some(p) = &summary_path {
        let metrics = serde_json::to_value(&rows).expect("rows serialize");
        write_json(Some(p), &summary("gaussian", effective, metrics, globals))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::default_depth;

    #[test]
    fn default_depth_keeps_an_attribute_per_leaf() {
        assert_eq!(default_depth(256, 0.75), 6);
        assert_eq!(default_depth(16, 1.0), 4);
        assert_eq!(default_depth(16, 0.75), 3);
        assert_eq!(default_depth(16, 0.5), 3);
        assert_eq!(default_depth(16, 0.25), 2);
        assert_eq!(default_depth(3, 0.75), 1);
    }
}
