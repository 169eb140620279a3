//! Evaluation: ROC sweeps, imputation quality, a ridge linear classifier,
//! classification improvement, projected class separation and the two
//! Gaussian imputation benchmark.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AttributeRange, Dataset};
use crate::distance::euclidean;
use crate::error::{invalid, Error, Result};
use crate::impute::{nearest_rows, select_source, separate_and_impute, ImputeMethod, ImputeParams, ImputedInstance};
use crate::score::{AnomalyParams, NodeScoreContext};
use crate::separate::{QueryScan, ReferenceModel, SeparationResult};
use crate::simulate::{corrupt, two_gaussians, CorruptionMask, CorruptionSpec, SmoothGaussian};

/// Independent generator for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Maps `f` over `0..n`, in parallel when the feature is on; results keep
/// index order.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Detection and localization rates at one `tau`. A rate is `None` when
/// its denominator is empty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub tau: f64,
    pub detection_fa: Option<f64>,
    pub detection_tp: Option<f64>,
    pub localization_fa: Option<f64>,
    pub localization_tp: Option<f64>,
}

/// Raw counts behind a [`RocPoint`]; counts from separate runs add up.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RocCounts {
    pub corrupted_instances: usize,
    pub clean_instances: usize,
    pub detected_corrupted: usize,
    pub detected_clean: usize,
    pub corrupted_attributes: usize,
    pub clean_attributes: usize,
    pub flagged_corrupted: usize,
    pub flagged_clean: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl RocCounts {
    pub fn record(&mut self, truth: &CorruptionMask, result: &SeparationResult) {
        if truth.is_corrupted() {
            self.corrupted_instances += 1;
            self.detected_corrupted += result.detected as usize;
        } else {
            self.clean_instances += 1;
            self.detected_clean += result.detected as usize;
        }
        let mut flagged = vec![false; truth.0.len()];
        for &a in &result.corrupted {
            flagged[a] = true;
        }
        for (&t, &f) in truth.0.iter().zip(&flagged) {
            if t {
                self.corrupted_attributes += 1;
                self.flagged_corrupted += f as usize;
            } else {
                self.clean_attributes += 1;
                self.flagged_clean += f as usize;
            }
        }
    }

    pub fn add(&mut self, other: &RocCounts) {
        self.corrupted_instances += other.corrupted_instances;
        self.clean_instances += other.clean_instances;
        self.detected_corrupted += other.detected_corrupted;
        self.detected_clean += other.detected_clean;
        self.corrupted_attributes += other.corrupted_attributes;
        self.clean_attributes += other.clean_attributes;
        self.flagged_corrupted += other.flagged_corrupted;
        self.flagged_clean += other.flagged_clean;
    }

    pub fn point(&self, tau: f64) -> RocPoint {
        RocPoint {
            tau,
            detection_fa: ratio(self.detected_clean, self.clean_instances),
            detection_tp: ratio(self.detected_corrupted, self.corrupted_instances),
            localization_fa: ratio(self.flagged_clean, self.clean_attributes),
            localization_tp: ratio(self.flagged_corrupted, self.corrupted_attributes),
        }
    }
}

fn check_masks(test: &Dataset, masks: &[CorruptionMask]) -> Result<()> {
    if masks.len() != test.rows() {
        return Err(Error::LengthMismatch {
            left: masks.len(),
            right: test.rows(),
        });
    }
    if let Some(m) = masks.iter().find(|m| m.0.len() != test.dims()) {
        return Err(Error::LengthMismatch {
            left: m.0.len(),
            right: test.dims(),
        });
    }
    Ok(())
}

/// Counts at every `tau` of `taus` against an already built model. Each
/// test row is scored once; the searches at different `tau` share scores.
/// `tau = 0` disables the test and yields empty results.
pub fn roc_counts(model: &ReferenceModel, test: &Dataset, masks: &[CorruptionMask], taus: &[f64]) -> Result<Vec<RocCounts>> {
    check_masks(test, masks)?;
    if let Some(t) = taus.iter().find(|t| !(0.0..1.0).contains(*t)) {
        return Err(invalid("tau", format!("{t} is not in [0, 1)")));
    }
    let per_row = map_indexed(test.rows(), |i| {
        let mut scan = QueryScan::new(model, test.row(i))?;
        taus.iter()
            .map(|&tau| {
                let mut c = RocCounts::default();
                let result = if tau == 0.0 {
                    SeparationResult::nothing(test.dims())
                } else {
                    scan.separate_at(tau)?
                };
                c.record(&masks[i], &result);
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut total = vec![RocCounts::default(); taus.len()];
    for row in &per_row {
        for (t, c) in total.iter_mut().zip(row) {
            t.add(c);
        }
    }
    Ok(total)
}

/// Builds the model from `reference` and sweeps `taus` over `test`.
pub fn roc_sweep(
    reference: &Dataset,
    test: &Dataset,
    masks: &[CorruptionMask],
    base: AnomalyParams,
    taus: &[f64],
    depth: usize,
) -> Result<Vec<RocPoint>> {
    let model = ReferenceModel::build(reference.clone(), depth, base)?;
    let counts = roc_counts(&model, test, masks, taus)?;
    Ok(counts.iter().zip(taus).map(|(c, &t)| c.point(t)).collect())
}

/// Separates and imputes every row of `test`, in row order.
pub fn impute_all(model: &ReferenceModel, test: &Dataset, params: &ImputeParams) -> Result<Vec<(SeparationResult, ImputedInstance)>> {
    params.validate(model.reference().rows())?;
    map_indexed(test.rows(), |i| separate_and_impute(model, test.row(i), params))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// Mean relative distance reduction; `None` if every instance was
    /// excluded.
    pub quality: Option<f64>,
    pub used: usize,
    /// Instances whose corrupted copy equals the original.
    pub excluded: usize,
}

/// Mean of `(|x0 - x| - |x0 - x_hat|) / |x0 - x|` over aligned originals
/// `x0`, corrupted `x` and imputed `x_hat`. Negative when imputation moves
/// instances further away.
pub fn imputation_quality(originals: &Dataset, corrupted: &Dataset, imputed: &Dataset) -> Result<QualityReport> {
    for other in [corrupted, imputed] {
        if other.rows() != originals.rows() || other.dims() != originals.dims() {
            return Err(Error::LengthMismatch {
                left: other.rows() * other.dims(),
                right: originals.rows() * originals.dims(),
            });
        }
    }
    let (mut sum, mut used, mut excluded) = (0.0, 0, 0);
    for i in 0..originals.rows() {
        let before = euclidean(originals.row(i), corrupted.row(i));
        if before == 0.0 {
            excluded += 1;
            continue;
        }
        let after = euclidean(originals.row(i), imputed.row(i));
        sum += (before - after) / before;
        used += 1;
    }
    Ok(QualityReport {
        quality: (used > 0).then(|| sum / used as f64),
        used,
        excluded,
    })
}

/// One-vs-rest ridge least squares on `+1/-1` targets with an unpenalized
/// bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub classes: Vec<i64>,
    /// Row `c` holds the weights of class `c`, bias last.
    pub weights: Vec<Vec<f64>>,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| {
                let (bias, w) = w.split_last().expect("bias");
                w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias
            })
            .collect()
    }

    /// Class with the largest decision value; ties go to the smaller label.
    pub fn predict(&self, x: &[f64]) -> i64 {
        let d = self.decision(x);
        let mut best = 0;
        for c in 1..d.len() {
            if d[c] > d[best] {
                best = c;
            }
        }
        self.classes[best]
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let labels = data.labels().ok_or(Error::MissingLabels)?;
        if data.is_empty() {
            return Err(Error::Empty);
        }
        let hits = data.iter_rows().zip(labels).filter(|(x, &y)| self.predict(x) == y).count();
        Ok(hits as f64 / data.rows() as f64)
    }
}

pub fn train_linear_classifier(train: &Dataset, ridge: f64) -> Result<LinearModel> {
    let labels = train.labels().ok_or(Error::MissingLabels)?;
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(invalid("ridge", format!("{ridge} must be finite and non-negative")));
    }
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let (n, d) = (train.rows(), train.dims());
    let x = DMatrix::from_fn(n, d + 1, |i, j| if j < d { train.row(i)[j] } else { 1.0 });
    let mut gram = x.transpose() * &x;
    for j in 0..d {
        gram[(j, j)] += ridge;
    }
    let y = DMatrix::from_fn(n, classes.len(), |i, c| if labels[i] == classes[c] { 1.0 } else { -1.0 });
    let rhs = x.transpose() * y;
    let w = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram.lu().solve(&rhs).ok_or(Error::Singular)?,
    };
    let weights = (0..classes.len()).map(|c| w.column(c).iter().copied().collect()).collect();
    Ok(LinearModel { classes, weights })
}

/// Share of the clean-vs-corrupted accuracy gap recovered by imputation, in
/// percent. `None` when the gap is zero.
pub fn accuracy_improvement(acc_clean: f64, acc_corrupt: f64, acc_imputed: f64) -> Option<f64> {
    let gap = acc_clean - acc_corrupt;
    (gap != 0.0).then(|| 100.0 * (acc_imputed - acc_corrupt) / gap)
}

/// Projection onto the two leading principal directions of a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    pub mean: Vec<f64>,
    pub directions: [Vec<f64>; 2],
}

impl Projector {
    pub fn fit(train: &Dataset) -> Result<Self> {
        let (n, d) = (train.rows(), train.dims());
        if n < 2 || d < 2 {
            return Err(invalid("train", "needs at least two rows and two attributes"));
        }
        let mean: Vec<f64> = (0..d).map(|j| train.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let centered = DMatrix::from_fn(n, d, |i, j| train.row(i)[j] - mean[j]);
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let dir = |k: usize| eig.eigenvectors.column(order[k]).iter().copied().collect::<Vec<f64>>();
        Ok(Self {
            mean,
            directions: [dir(0), dir(1)],
        })
    }

    pub fn project(&self, x: &[f64]) -> [f64; 2] {
        let c: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.directions.clone().map(|d| d.iter().zip(&c).map(|(a, b)| a * b).sum())
    }
}

/// Distance between the two class means of `test` after projection.
pub fn mean_separation(test: &Dataset, projector: &Projector) -> Result<f64> {
    let labels = test.labels().ok_or(Error::MissingLabels)?;
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    match classes.len() {
        0 | 1 => return Err(Error::SingleClass),
        2 => {}
        n => return Err(invalid("labels", format!("expected 2 classes, found {n}"))),
    }
    let mut sums = [[0.0; 2]; 2];
    let mut counts = [0usize; 2];
    for (x, &y) in test.iter_rows().zip(labels) {
        let c = (y == classes[1]) as usize;
        let p = projector.project(x);
        sums[c][0] += p[0];
        sums[c][1] += p[1];
        counts[c] += 1;
    }
    let m = |c: usize| [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
    let (a, b) = (m(0), m(1));
    Ok(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
}

/// Settings of the two Gaussian imputation benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBenchmark {
    pub k_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub per_class: usize,
    /// Neighbor rank of the score used to rank candidates; `None` uses the
    /// neighborhood size.
    pub score_k: Option<usize>,
    pub ridge: f64,
}

impl Default for GaussianBenchmark {
    fn default() -> Self {
        Self {
            k_grid: vec![1, 4, 8, 12, 16],
            trials: 100,
            seed: 0,
            per_class: 500,
            score_k: None,
            ridge: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianRow {
    pub k: usize,
    pub mse: f64,
    /// Percent.
    pub accuracy: f64,
}

impl GaussianBenchmark {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.per_class < 2 {
            return Err(invalid("per_class", "must be at least 2"));
        }
        if let Some(&k) = self.k_grid.iter().find(|&&k| k == 0 || k + 1 >= 2 * self.per_class) {
            return Err(invalid("k", format!("{k} is not in [1, {}]", 2 * self.per_class - 2)));
        }
        if self.score_k == Some(0) {
            return Err(invalid("score_k", "must be at least 1"));
        }
        Ok(())
    }

    /// Per trial: draw both classes, hide the second attribute of every
    /// sample and fill it from the other samples. Candidates are the `K`
    /// nearest on the first attribute; the one with the highest score on
    /// both attributes is copied. Returns `(K, MSE, accuracy)` averaged
    /// over trials, the accuracy of a classifier trained on the clean
    /// samples and evaluated on the imputed ones.
    pub fn run(&self) -> Result<Vec<GaussianRow>> {
        self.validate()?;
        let per_trial = map_indexed(self.trials, |t| self.trial(t as u64))?;
        Ok(self
            .k_grid
            .iter()
            .enumerate()
            .map(|(g, &k)| {
                let n = self.trials as f64;
                GaussianRow {
                    k,
                    mse: per_trial.iter().map(|r| r[g].0).sum::<f64>() / n,
                    accuracy: 100.0 * per_trial.iter().map(|r| r[g].1).sum::<f64>() / n,
                }
            })
            .collect())
    }

    fn trial(&self, t: u64) -> Result<Vec<(f64, f64)>> {
        let mut rng = trial_rng(self.seed, t);
        let data = two_gaussians(self.per_class, &mut rng);
        let classifier = train_linear_classifier(&data, self.ridge)?;
        let n = data.rows();
        let full = AttributeRange::full(2);
        let score_ks: Vec<usize> = self.k_grid.iter().map(|&k| self.score_k.unwrap_or(k)).collect();
        let kmax = *score_ks.iter().max().expect("non-empty grid");

        // Nearest `kmax` distances of every row to the other rows, ascending;
        // the K-th entry is the row's reference radius for any K <= kmax.
        let mut nearest = Vec::with_capacity(n);
        let mut dists = Vec::with_capacity(n - 1);
        for i in 0..n {
            dists.clear();
            dists.extend((0..n).filter(|&j| j != i).map(|j| euclidean(data.row(i), data.row(j))));
            dists.select_nth_unstable_by(kmax - 1, f64::total_cmp);
            let mut head = dists[..kmax].to_vec();
            head.sort_by(f64::total_cmp);
            nearest.push(head);
        }
        let context = |k: usize| NodeScoreContext::from_radii(full, k, 1.0, nearest.iter().map(|r| r[k - 1]).collect());

        // Rows ordered by the observed attribute; the K nearest of a row on
        // it lie within K positions on either side.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| data.row(a)[0].total_cmp(&data.row(b)[0]).then(a.cmp(&b)));
        let mut position = vec![0; n];
        for (p, &i) in order.iter().enumerate() {
            position[i] = p;
        }

        let mut out = Vec::with_capacity(self.k_grid.len());
        for (&k, &score_k) in self.k_grid.iter().zip(&score_ks) {
            let parent = context(score_k);
            let mut values = data.values().to_vec();
            let mut sq = 0.0;
            for i in 0..n {
                let p = position[i];
                let pool: Vec<usize> = order[p.saturating_sub(k)..(p + k + 1).min(n)].to_vec();
                let d: Vec<f64> = pool.iter().map(|&j| (data.row(j)[0] - data.row(i)[0]).abs()).collect();
                let own = pool.iter().position(|&j| j == i);
                let mut candidates: Vec<usize> = nearest_rows(&d, k, own).into_iter().map(|q| pool[q]).collect();
                // Equal distances are ordered by row index, as on the full set.
                candidates.sort_by(|&a, &b| {
                    let (da, db) = ((data.row(a)[0] - data.row(i)[0]).abs(), (data.row(b)[0] - data.row(i)[0]).abs());
                    da.total_cmp(&db).then(a.cmp(&b))
                });
                let src = select_source(&parent, &candidates, ImputeMethod::Map).expect("non-empty");
                let fill = data.row(src)[1];
                sq += (fill - data.row(i)[1]).powi(2);
                values[2 * i + 1] = fill;
            }
            let imputed = data.with_values(values)?;
            out.push((sq / n as f64, classifier.accuracy(&imputed)?));
        }
        Ok(out)
    }
}

/// Repeated ROC experiment on smooth synthetic data: per trial a fresh
/// reference set and a test set in which each row is corrupted with
/// probability `corruption.pi`. Counts are pooled over trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSuite {
    pub source: SmoothGaussian,
    pub reference_rows: usize,
    pub test_rows: usize,
    pub corruption: CorruptionSpec,
    pub depth: usize,
    pub k_neighbors: usize,
    pub alpha: f64,
    pub taus: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SyntheticSuite {
    fn default() -> Self {
        Self {
            source: SmoothGaussian::default(),
            reference_rows: 500,
            test_rows: 40,
            corruption: CorruptionSpec::intervals(0.5, (0.5, 0.5), 0),
            depth: 2,
            k_neighbors: 8,
            alpha: 1.0,
            taus: vec![0.005, 0.01, 0.02, 0.05, 0.1, 0.2],
            trials: 200,
            seed: 0,
        }
    }
}

impl SyntheticSuite {
    pub fn run(&self) -> Result<Vec<RocPoint>> {
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        self.source.validate()?;
        self.corruption.validate(self.source.dims)?;
        let params = AnomalyParams::new(self.k_neighbors, *self.taus.first().ok_or_else(|| invalid("taus", "empty grid"))?, self.alpha)?;
        let per_trial = map_indexed(self.trials, |t| {
            let mut rng = trial_rng(self.seed, t as u64);
            let reference = self.source.sample(self.reference_rows, &mut rng)?;
            let clean = self.source.sample(self.test_rows, &mut rng)?;
            let spec = CorruptionSpec {
                seed: rand::Rng::gen(&mut rng),
                ..self.corruption
            };
            let (test, masks) = corrupt(&clean, &spec)?;
            let model = ReferenceModel::build(reference, self.depth, params)?;
            roc_counts(&model, &test, &masks, &self.taus)
        })?;
        let mut total = vec![RocCounts::default(); self.taus.len()];
        for counts in &per_trial {
            for (t, c) in total.iter_mut().zip(counts) {
                t.add(c);
            }
        }
        Ok(total.iter().zip(&self.taus).map(|(c, &t)| c.point(t)).collect())
    }
}
