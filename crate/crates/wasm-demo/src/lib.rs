//! Browser bindings behind `www/index.html`: a false alarm curve, a
//! synthetic corrupted instance, and separation plus imputation of an
//! instance against a synthetic reference set.

use std::collections::BTreeMap;

use corrsep::eval::trial_rng;
use corrsep::famodel::{fa_recursion, FaModelParams};
use corrsep::impute::separate_and_impute_at;
use corrsep::separate::localization_mask;
use corrsep::simulate::{corrupt, CorruptionSpec, SmoothGaussian};
use corrsep::{AnomalyParams, ImputeParams, QueryScan, ReferenceModel};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct CurvePoint {
    tau: f64,
    c_tau: f64,
}

/// `C_tau` on `points` evenly spaced `tau` in `(0, max_tau]`, as JSON.
pub fn false_alarm_curve_json(theta: f64, depth: usize, max_tau: f64, points: usize) -> Result<String, String> {
    if !(max_tau > 0.0 && max_tau <= 1.0) || points == 0 {
        return Err(format!("need 0 < max_tau <= 1 and points > 0, got {max_tau} and {points}"));
    }
    let curve = (1..=points)
        .map(|i| {
            let tau = max_tau * i as f64 / points as f64;
            let params = FaModelParams::uniform(tau, theta, depth).map_err(|e| e.to_string())?;
            let c_tau = fa_recursion(&params).map_err(|e| e.to_string())?;
            Ok(CurvePoint { tau, c_tau })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(serde_json::to_string(&curve).expect("curve serializes"))
}

#[wasm_bindgen(js_name = falseAlarmCurve)]
pub fn false_alarm_curve(theta: f64, depth: usize, max_tau: f64, points: usize) -> Result<String, JsError> {
    false_alarm_curve_json(theta, depth, max_tau, points).map_err(|e| JsError::new(&e))
}

#[derive(Serialize)]
struct Sample {
    clean: Vec<f64>,
    corrupted: Vec<f64>,
    mask: Vec<bool>,
}

#[derive(Serialize)]
struct Repair {
    detected: bool,
    corrupted_attributes: Vec<usize>,
    localized: Vec<bool>,
    node_labels: BTreeMap<String, i8>,
    /// Attribute ranges of the tree nodes, keyed like `node_labels`.
    node_ranges: BTreeMap<String, (usize, usize)>,
    imputed: Vec<f64>,
    sources: BTreeMap<String, usize>,
}

/// Reference model over smooth synthetic curves.
#[wasm_bindgen]
pub struct Demo {
    source: SmoothGaussian,
    model: ReferenceModel,
}

impl Demo {
    pub fn build(seed: u32, dims: usize, reference_rows: usize, k: usize, alpha: f64, depth: usize) -> Result<Demo, String> {
        let source = SmoothGaussian {
            dims,
            ..SmoothGaussian::default()
        };
        let reference = source
            .sample(reference_rows, &mut trial_rng(u64::from(seed), 0))
            .map_err(|e| e.to_string())?;
        let params = AnomalyParams::new(k, 0.05, alpha).map_err(|e| e.to_string())?;
        let model = ReferenceModel::build(reference, depth, params).map_err(|e| e.to_string())?;
        Ok(Demo { source, model })
    }

    /// One fresh curve with a single corrupted interval of `length` cells.
    pub fn sample_json(&self, seed: u32, length: usize) -> Result<String, String> {
        let dims = self.source.dims;
        let clean = self
            .source
            .sample(1, &mut trial_rng(u64::from(seed), 1))
            .map_err(|e| e.to_string())?;
        let (corrupted, mask) = if length == 0 {
            (clean.clone(), vec![false; dims])
        } else {
            let share = length as f64 / dims as f64;
            let spec = CorruptionSpec::intervals(1.0, (share, share), u64::from(seed));
            let (data, masks) = corrupt(&clean, &spec).map_err(|e| e.to_string())?;
            (data, masks[0].0.clone())
        };
        let sample = Sample {
            clean: clean.row(0).to_vec(),
            corrupted: corrupted.row(0).to_vec(),
            mask,
        };
        Ok(serde_json::to_string(&sample).expect("sample serializes"))
    }

    /// Separation at `tau` followed by MAP imputation.
    pub fn repair_json(&self, values: &[f64], tau: f64) -> Result<String, String> {
        let mut scan = QueryScan::new(&self.model, values).map_err(|e| e.to_string())?;
        let params = ImputeParams::matching(&self.model);
        let (result, imputed) = separate_and_impute_at(&mut scan, &self.model, tau, &params).map_err(|e| e.to_string())?;
        let tree = self.model.tree();
        let repair = Repair {
            detected: result.detected,
            corrupted_attributes: result.corrupted.clone(),
            localized: localization_mask(&result, values.len()).map_err(|e| e.to_string())?,
            node_labels: result.to_wire().node_labels,
            node_ranges: tree
                .nodes()
                .map(|n| {
                    let r = tree.range(n);
                    (n.path(), (r.start, r.end))
                })
                .collect(),
            sources: imputed.source_rows_by_path(),
            imputed: imputed.values,
        };
        Ok(serde_json::to_string(&repair).expect("repair serializes"))
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, dims: usize, reference_rows: usize, k: usize, alpha: f64, depth: usize) -> Result<Demo, JsError> {
        Self::build(seed, dims, reference_rows, k, alpha, depth).map_err(|e| JsError::new(&e))
    }

    pub fn dims(&self) -> usize {
        self.source.dims
    }

    pub fn sample(&self, seed: u32, length: usize) -> Result<String, JsError> {
        self.sample_json(seed, length).map_err(|e| JsError::new(&e))
    }

    pub fn repair(&self, values: &[f64], tau: f64) -> Result<String, JsError> {
        self.repair_json(values, tau).map_err(|e| JsError::new(&e))
    }
}
