//! Synthetic corruption and synthetic data.
//!
//! A corrupted instance has one or more non-overlapping attribute intervals
//! overwritten by i.i.d. uniform noise. For image data stored column-major a
//! square region can be corrupted instead, which covers several intervals.

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};

/// Geometry of the corrupted region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CorruptionShape {
    /// `count` intervals, each covering a share of the attributes drawn
    /// from the fraction range.
    Intervals { min_count: usize, max_count: usize },
    /// A square covering a share of the area of a `height x width` image
    /// vectorized column by column.
    Square { height: usize, width: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Probability that an instance is corrupted.
    pub pi: f64,
    /// Bounds on the corrupted share of the attributes (of the area for a
    /// square), per interval.
    pub fraction: (f64, f64),
    pub shape: CorruptionShape,
    /// Support of the uniform noise.
    pub noise: (f64, f64),
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn intervals(pi: f64, fraction: (f64, f64), seed: u64) -> Self {
        Self {
            pi,
            fraction,
            shape: CorruptionShape::Intervals {
                min_count: 1,
                max_count: 1,
            },
            noise: (0.0, 1.0),
            seed,
        }
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(invalid("pi", format!("{} is not in [0, 1]", self.pi)));
        }
        let (lo, hi) = self.fraction;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(invalid("fraction", format!("({lo}, {hi}) needs 0 <= lo <= hi <= 1")));
        }
        let (a, b) = self.noise;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(invalid("noise", format!("({a}, {b}) is not a proper interval")));
        }
        match self.shape {
            CorruptionShape::Intervals { min_count, max_count } => {
                if min_count == 0 || min_count > max_count {
                    return Err(invalid("num_intervals", format!("[{min_count}, {max_count}] is empty or zero")));
                }
                let (lmin, _) = self.length_bounds(dims)?;
                if min_count * lmin > dims {
                    return Err(invalid(
                        "num_intervals",
                        format!("{min_count} intervals of length {lmin} do not fit in {dims} attributes"),
                    ));
                }
            }
            CorruptionShape::Square { height, width } => {
                if height * width != dims {
                    return Err(invalid(
                        "shape",
                        format!("{height} x {width} image does not have {dims} attributes"),
                    ));
                }
                self.side_bounds(height, width)?;
            }
        }
        Ok(())
    }

    /// Integer interval lengths covered by the fraction range.
    pub fn length_bounds(&self, dims: usize) -> Result<(usize, usize)> {
        let (lo, hi) = self.fraction;
        let min = ((lo * dims as f64 - 1e-9).ceil() as usize).max(1);
        let max = (hi * dims as f64 + 1e-9).floor() as usize;
        if max < min {
            return Err(invalid(
                "fraction",
                format!("({lo}, {hi}) of {dims} attributes contains no length of at least one attribute"),
            ));
        }
        Ok((min, max))
    }

    fn side_bounds(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let (lo, hi) = self.fraction;
        let area = (height * width) as f64;
        let min = (((lo * area).sqrt() - 1e-9).ceil() as usize).max(1);
        let max = (((hi * area).sqrt() + 1e-9).floor() as usize).min(height.min(width));
        if max < min {
            return Err(invalid("fraction", format!("({lo}, {hi}) admits no square side")));
        }
        Ok((min, max))
    }
}

/// Ground truth for one instance: `true` marks a corrupted attribute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionMask(pub Vec<bool>);

impl CorruptionMask {
    pub fn clean(dims: usize) -> Self {
        Self(vec![false; dims])
    }

    pub fn is_corrupted(&self) -> bool {
        self.0.iter().any(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Maximal runs of corrupted attributes as `[start, end)` pairs.
    pub fn intervals(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, &b) in self.0.iter().chain(std::iter::once(&false)).enumerate() {
            match (b, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    out.push((s, i));
                    start = None;
                }
                _ => {}
            }
        }
        out
    }
}

const MAX_PLACEMENT_TRIES: usize = 10_000;

fn draw_mask<R: Rng>(spec: &CorruptionSpec, dims: usize, rng: &mut R) -> Result<CorruptionMask> {
    let mut mask = vec![false; dims];
    match spec.shape {
        CorruptionShape::Intervals { min_count, max_count } => {
            let (lmin, lmax) = spec.length_bounds(dims)?;
            let count = rng.gen_range(min_count..=max_count);
            let mut placed: Vec<(usize, usize)> = Vec::with_capacity(count);
            let mut tries = 0;
            while placed.len() < count {
                tries += 1;
                if tries > MAX_PLACEMENT_TRIES {
                    return Err(invalid(
                        "num_intervals",
                        format!("could not place {count} non-overlapping intervals in {dims} attributes"),
                    ));
                }
                let len = rng.gen_range(lmin..=lmax);
                let start = rng.gen_range(0..=dims - len);
                let end = start + len;
                if placed.iter().all(|&(s, e)| end <= s || start >= e) {
                    placed.push((start, end));
                }
            }
            for (s, e) in placed {
                mask[s..e].iter_mut().for_each(|m| *m = true);
            }
        }
        CorruptionShape::Square { height, width } => {
            let (smin, smax) = spec.side_bounds(height, width)?;
            let side = rng.gen_range(smin..=smax);
            let top = rng.gen_range(0..=height - side);
            let left = rng.gen_range(0..=width - side);
            for col in left..left + side {
                for row in top..top + side {
                    mask[col * height + row] = true;
                }
            }
        }
    }
    Ok(CorruptionMask(mask))
}

/// Corrupts each row independently with probability `pi`.
pub fn corrupt(data: &Dataset, spec: &CorruptionSpec) -> Result<(Dataset, Vec<CorruptionMask>)> {
    let dims = data.dims();
    spec.validate(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Uniform::new(spec.noise.0, spec.noise.1);
    let mut out = data.clone();
    let mut masks = Vec::with_capacity(data.rows());
    for i in 0..data.rows() {
        let hit = rng.gen::<f64>() < spec.pi;
        if !hit {
            masks.push(CorruptionMask::clean(dims));
            continue;
        }
        let mask = draw_mask(spec, dims, &mut rng)?;
        for (v, &m) in out.row_mut(i).iter_mut().zip(&mask.0) {
            if m {
                *v = noise.sample(&mut rng);
            }
        }
        masks.push(mask);
    }
    Ok((out, masks))
}

/// Multivariate Gaussian with a constant mean and stationary AR(1)
/// correlation across attributes: `corr(x_i, x_j) = rho^|i - j|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothGaussian {
    pub dims: usize,
    pub mean: f64,
    pub std: f64,
    pub rho: f64,
}

impl Default for SmoothGaussian {
    fn default() -> Self {
        Self {
            dims: 16,
            mean: 0.5,
            std: 0.1,
            rho: 0.9,
        }
    }
}

impl SmoothGaussian {
    pub fn validate(&self) -> Result<()> {
        if self.dims == 0 {
            return Err(Error::Empty);
        }
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(invalid("std", format!("{} must be positive", self.std)));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(invalid("rho", format!("{} is not in (-1, 1)", self.rho)));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rows: usize, rng: &mut R) -> Result<Dataset> {
        self.validate()?;
        let innovation = (1.0 - self.rho * self.rho).sqrt();
        let mut values = Vec::with_capacity(rows * self.dims);
        for _ in 0..rows {
            let mut z: f64 = rng.sample(StandardNormal);
            values.push(self.mean + self.std * z);
            for _ in 1..self.dims {
                z = self.rho * z + innovation * rng.sample::<f64, _>(StandardNormal);
                values.push(self.mean + self.std * z);
            }
        }
        Dataset::new(rows, self.dims, values, None)
    }
}

/// Two equally sized 2-D Gaussian classes with identity covariance and
/// means `[1, -1]` (label 0) and `[-1, 1]` (label 1).
pub fn two_gaussians<R: Rng>(per_class: usize, rng: &mut R) -> Dataset {
    let mut values = Vec::with_capacity(4 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for (label, sign) in [(0i64, 1.0), (1, -1.0)] {
        for _ in 0..per_class {
            values.push(sign + rng.sample::<f64, _>(StandardNormal));
            values.push(-sign + rng.sample::<f64, _>(StandardNormal));
            labels.push(label);
        }
    }
    Dataset::new(2 * per_class, 2, values, Some(labels)).expect("finite samples")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(rows: usize, dims: usize) -> Dataset {
        let v: Vec<f64> = (0..rows * dims).map(|i| (i % 97) as f64 / 97.0 + 2.0).collect();
        Dataset::new(rows, dims, v, None).unwrap()
    }

    #[test]
    fn no_corruption_is_identity() {
        let x = grid(30, 10);
        let (y, masks) = corrupt(&x, &CorruptionSpec::intervals(0.0, (0.1, 0.5), 1)).unwrap();
        assert_eq!(y, x);
        assert!(masks.iter().all(|m| !m.is_corrupted()));
    }

    #[test]
    fn fixed_half_interval() {
        let x = grid(40, 10);
        let (y, masks) = corrupt(&x, &CorruptionSpec::intervals(1.0, (0.5, 0.5), 2)).unwrap();
        for (i, m) in masks.iter().enumerate() {
            assert_eq!(m.count(), 5);
            assert_eq!(m.intervals().len(), 1);
            for a in 0..10 {
                if m.0[a] {
                    assert!((0.0..1.0).contains(&y.row(i)[a]));
                }
            }
        }
    }

    #[test]
    fn square_covers_several_intervals() {
        let x = grid(50, 256);
        let spec = CorruptionSpec {
            shape: CorruptionShape::Square { height: 16, width: 16 },
            ..CorruptionSpec::intervals(1.0, (0.1, 0.5), 3)
        };
        let (_, masks) = corrupt(&x, &spec).unwrap();
        for m in &masks {
            let side = (m.count() as f64).sqrt() as usize;
            assert_eq!(side * side, m.count());
            assert!((6..=11).contains(&side));
            assert_eq!(m.intervals().len(), side);
        }
    }

    #[test]
    fn multiple_intervals_do_not_overlap() {
        let x = grid(100, 32);
        let spec = CorruptionSpec {
            shape: CorruptionShape::Intervals {
                min_count: 2,
                max_count: 3,
            },
            ..CorruptionSpec::intervals(1.0, (0.1, 0.2), 4)
        };
        let (_, masks) = corrupt(&x, &spec).unwrap();
        for m in &masks {
            let runs = m.intervals();
            assert!(!runs.is_empty() && runs.len() <= 3);
            assert!(m.count() >= 2 * 4 && m.count() <= 3 * 6);
        }
    }

    #[test]
    fn spec_errors() {
        let x = grid(5, 10);
        assert!(corrupt(&x, &CorruptionSpec::intervals(0.5, (0.01, 0.05), 0)).is_err());
        assert!(corrupt(&x, &CorruptionSpec::intervals(1.5, (0.1, 0.5), 0)).is_err());
        assert!(corrupt(&x, &CorruptionSpec::intervals(0.5, (0.6, 0.5), 0)).is_err());
        let crowded = CorruptionSpec {
            shape: CorruptionShape::Intervals {
                min_count: 3,
                max_count: 3,
            },
            ..CorruptionSpec::intervals(1.0, (0.4, 0.5), 0)
        };
        assert!(corrupt(&x, &crowded).is_err());
    }

    #[test]
    fn seeded_runs_repeat() {
        let x = grid(20, 12);
        let spec = CorruptionSpec::intervals(0.5, (0.1, 0.5), 9);
        assert_eq!(corrupt(&x, &spec).unwrap(), corrupt(&x, &spec).unwrap());
    }

    #[test]
    fn smooth_gaussian_moments() {
        let g = SmoothGaussian::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = g.sample(4000, &mut rng).unwrap();
        let n = s.rows() as f64;
        let m0 = s.iter_rows().map(|r| r[0]).sum::<f64>() / n;
        let m15 = s.iter_rows().map(|r| r[15]).sum::<f64>() / n;
        let c01 = s.iter_rows().map(|r| (r[0] - 0.5) * (r[1] - 0.5)).sum::<f64>() / n;
        assert!((m0 - 0.5).abs() < 0.01 && (m15 - 0.5).abs() < 0.01);
        assert!((c01 / 0.01 - 0.9).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn corruption_is_mask_faithful(pi in 0.0f64..=1.0, lo in 0.05f64..0.5, span in 0.05f64..0.5, seed in any::<u64>()) {
            let x = grid(25, 20);
            let spec = CorruptionSpec::intervals(pi, (lo, lo + span), seed);
            let (y, masks) = corrupt(&x, &spec).unwrap();
            let (lmin, lmax) = spec.length_bounds(20).unwrap();
            for (i, m) in masks.iter().enumerate() {
                for a in 0..20 {
                    if !m.0[a] {
                        prop_assert_eq!(y.row(i)[a].to_bits(), x.row(i)[a].to_bits());
                    } else {
                        prop_assert!((0.0..1.0).contains(&y.row(i)[a]));
                    }
                }
                if m.is_corrupted() {
                    prop_assert!(m.count() >= lmin && m.count() <= lmax);
                    prop_assert_eq!(m.intervals().len(), 1);
                }
            }
        }
    }
}
