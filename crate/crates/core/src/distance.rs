//! Ranked Euclidean distance and the pairwise prefix-sum ("integral image")
//! distance cache.
//!
//! `h_alpha(x, y)` keeps only the `floor(m * alpha)` smallest squared
//! attribute deviations, so a corruption must cover more than a
//! `1 - alpha` share of a slice before it can move the distance. With
//! `alpha = 1` it is the Euclidean distance. For `alpha < 1` it is not a
//! metric: `h_alpha(x, y) = 0` does not imply `x = y`.

use crate::data::{AttributeRange, Dataset};
use crate::error::{invalid, Error, Result};

/// Number of deviations kept by `h_alpha` on a slice of `len` attributes.
///
/// A tiny slack absorbs products such as `0.7 * 10 = 6.999...`.
pub fn ranked_count(len: usize, alpha: f64) -> usize {
    ((len as f64) * alpha + 1e-9).floor() as usize
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("{alpha} is not in (0, 1]")))
    }
}

pub fn ranked_distance(x: &[f64], y: &[f64], alpha: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    check_alpha(alpha)?;
    let keep = ranked_count(x.len(), alpha);
    if keep == 0 {
        return Err(invalid(
            "alpha",
            format!("floor({} * {alpha}) = 0 keeps no attributes", x.len()),
        ));
    }
    let mut scratch = Vec::with_capacity(x.len());
    Ok(ranked_distance_with(x, y, keep, &mut scratch))
}

/// `h_alpha` with a precomputed keep count and reusable scratch buffer.
///
/// Squared deviations are sorted ascending (ties keep attribute order) and
/// summed in that order, so the result is monotone in `keep` bit for bit.
pub fn ranked_distance_with(x: &[f64], y: &[f64], keep: usize, scratch: &mut Vec<f64>) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    scratch.clear();
    scratch.extend(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)));
    scratch.sort_by(f64::total_cmp);
    scratch[..keep].iter().sum::<f64>().sqrt()
}

/// Plain Euclidean distance, summed in attribute order.
pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Running sums of squared deviations between `x` and `y`:
/// `out[k] = sum_{h < k} (x_h - y_h)^2`, `out[0] = 0`.
pub fn prefix_volumes_into(x: &[f64], y: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.reserve(x.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for (a, b) in x.iter().zip(y) {
        acc += (a - b) * (a - b);
        out.push(acc);
    }
}

/// Euclidean distance over `range` from a prefix-volume row.
#[inline]
pub fn volume_distance(volumes: &[f64], range: AttributeRange) -> f64 {
    (volumes[range.end] - volumes[range.start]).max(0.0).sqrt()
}

/// Pairwise prefix sums `D(i, j, k) = sum_{h < k} (s_ih - s_jh)^2` over a
/// reference set. Only pairs `i < j` are stored; the diagonal is zero.
///
/// Memory is `N (N - 1) / 2 * (d + 1)` reals, which is the limiting factor at
/// large `N * d`.
#[derive(Clone, Debug)]
pub struct DistanceCache {
    rows: usize,
    dims: usize,
    volumes: Vec<f64>,
}

impl DistanceCache {
    pub fn build(reference: &Dataset) -> Self {
        let (n, d) = (reference.rows(), reference.dims());
        let pairs = n * n.saturating_sub(1) / 2;
        let mut volumes = Vec::with_capacity(pairs * (d + 1));
        let mut row = Vec::with_capacity(d + 1);
        for i in 0..n {
            for j in i + 1..n {
                prefix_volumes_into(reference.row(i), reference.row(j), &mut row);
                volumes.extend_from_slice(&row);
            }
        }
        Self {
            rows: n,
            dims: d,
            volumes,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    fn pair_offset(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let n = self.rows;
        (i * (2 * n - i - 1) / 2 + (j - i - 1)) * (self.dims + 1)
    }

    /// `D(i, j, k)`; symmetric in `i, j` and zero on the diagonal.
    pub fn volume(&self, i: usize, j: usize, k: usize) -> f64 {
        assert!(i < self.rows && j < self.rows && k <= self.dims);
        if i == j {
            0.0
        } else {
            self.volumes[self.pair_offset(i, j) + k]
        }
    }

    /// The full prefix row `D(i, j, 0..=d)`.
    pub fn volumes(&self, i: usize, j: usize) -> Option<&[f64]> {
        if i == j || i >= self.rows || j >= self.rows {
            return None;
        }
        let off = self.pair_offset(i, j);
        Some(&self.volumes[off..off + self.dims + 1])
    }

    pub fn interval_distance(&self, i: usize, j: usize, range: AttributeRange) -> Result<f64> {
        let range = AttributeRange::new(range.start, range.end, self.dims)?;
        if i >= self.rows || j >= self.rows {
            return Err(Error::NeighborOutOfRange {
                k: i.max(j),
                available: self.rows,
            });
        }
        if i == j {
            return Ok(0.0);
        }
        let off = self.pair_offset(i, j);
        Ok(volume_distance(&self.volumes[off..off + self.dims + 1], range))
    }
}

pub fn build_prefix_cache(reference: &Dataset) -> DistanceCache {
    DistanceCache::build(reference)
}

pub fn interval_distance(cache: &DistanceCache, i: usize, j: usize, range: AttributeRange) -> Result<f64> {
    cache.interval_distance(i, j, range)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranked_examples() {
        let x = [0.3, 0.9, 0.1];
        assert_eq!(ranked_distance(&x, &x, 0.4).unwrap(), 0.0);
        let d = ranked_distance(&[0.0; 4], &[1.0, 1.0, 1.0, 0.5], 0.5).unwrap();
        assert!((d - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(ranked_distance(&[0.0, 3.0], &[4.0, 0.0], 1.0).unwrap(), 5.0);
    }

    #[test]
    fn ranked_rejects_bad_input() {
        assert!(matches!(
            ranked_distance(&[0.0; 3], &[0.0; 2], 1.0),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(ranked_distance(&[0.0; 3], &[0.0; 3], 0.2).is_err());
        assert!(ranked_distance(&[0.0; 3], &[0.0; 3], 0.0).is_err());
        assert!(ranked_distance(&[0.0; 3], &[0.0; 3], 1.5).is_err());
    }

    #[test]
    fn ranked_count_absorbs_rounding() {
        assert_eq!(ranked_count(10, 0.7), 7);
        assert_eq!(ranked_count(4, 0.375), 1);
        assert_eq!(ranked_count(256, 0.75), 192);
    }

    #[test]
    fn prefix_cache_examples() {
        let s = Dataset::from_rows(&[vec![1.0, 2.0], vec![1.0, 3.0]]).unwrap();
        let c = build_prefix_cache(&s);
        assert_eq!(c.volumes(0, 1).unwrap(), &[0.0, 0.0, 1.0]);
        for k in 0..=2 {
            assert_eq!(c.volume(1, 1, k), 0.0);
        }

        let s = Dataset::from_rows(&[vec![1.0, 2.0, 3.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let c = build_prefix_cache(&s);
        let r = AttributeRange::new(1, 3, 3).unwrap();
        assert_eq!(interval_distance(&c, 0, 1, r).unwrap(), 13f64.sqrt());
        assert!(c.interval_distance(0, 1, AttributeRange { start: 2, end: 2 }).is_err());
    }

    #[test]
    fn prefix_cache_matches_direct_squared_distance() {
        // 5x4 fixture; oracle is the direct pairwise sum.
        let rows = vec![
            vec![0.12, 0.93, 0.44, 0.05],
            vec![0.71, 0.18, 0.66, 0.39],
            vec![0.27, 0.55, 0.02, 0.88],
            vec![0.90, 0.31, 0.77, 0.14],
            vec![0.48, 0.62, 0.29, 0.51],
        ];
        let s = Dataset::from_rows(&rows).unwrap();
        let c = DistanceCache::build(&s);
        for i in 0..5 {
            for j in 0..5 {
                let direct: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                assert!((c.volume(i, j, 4) - direct).abs() <= 1e-12);
            }
        }
    }

    fn vec_pair(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-2.0f64..2.0, len),
            prop::collection::vec(-2.0f64..2.0, len),
        )
    }

    proptest! {
        #[test]
        fn ranked_is_monotone_symmetric_and_dominated((x, y) in (1usize..24).prop_flat_map(vec_pair)) {
            let m = x.len();
            let full = ranked_distance(&x, &y, 1.0).unwrap();
            let mut prev = 0.0;
            for keep in 1..=m {
                let alpha = keep as f64 / m as f64;
                let h = ranked_distance(&x, &y, alpha).unwrap();
                prop_assert!(h >= prev);
                prop_assert_eq!(h, ranked_distance(&y, &x, alpha).unwrap());
                prop_assert!(h <= full);
                prev = h;
            }
            prop_assert!((full - euclidean(&x, &y)).abs() <= 1e-9 * full.max(1.0));
        }

        #[test]
        fn cache_matches_direct_slices(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 7), 2..6),
            a in 0usize..7, b in 1usize..8,
        ) {
            prop_assume!(a < b);
            let s = Dataset::from_rows(&rows).unwrap();
            let c = DistanceCache::build(&s);
            let r = AttributeRange::new(a, b, 7).unwrap();
            for i in 0..rows.len() {
                for j in 0..rows.len() {
                    let got = c.interval_distance(i, j, r).unwrap();
                    let want = euclidean(&rows[i][a..b], &rows[j][a..b]);
                    prop_assert!((got - want).abs() <= 1e-9 * want.max(1e-12) + 1e-15);
                    prop_assert_eq!(got, c.interval_distance(j, i, r).unwrap());
                }
                for k in 1..=7 {
                    prop_assert!(c.volume(i, (i + 1) % rows.len(), k) >= c.volume(i, (i + 1) % rows.len(), k - 1));
                }
            }
            let full = c.interval_distance(0, 1, AttributeRange::full(7)).unwrap();
            let ranked = ranked_distance(&rows[0], &rows[1], 1.0).unwrap();
            prop_assert!((full - ranked).abs() <= 1e-9 * ranked.max(1e-12) + 1e-15);
        }
    }
}
