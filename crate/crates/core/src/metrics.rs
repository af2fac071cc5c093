//! Two-sample distances between sets of grids.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::parallel;
use crate::rng::{self, Purpose};

/// Jackknife blocks used for the energy-distance standard error.
pub const JACKKNIFE_BLOCKS: usize = 20;

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn flat<'a>(set: &'a [Grid], name: &'static str) -> Result<Vec<&'a [f64]>> {
    let first = set.first().ok_or(Error::Empty(name))?;
    for g in set {
        first.check_same_shape(g)?;
    }
    Ok(set.iter().map(Grid::values).collect())
}

fn block_bounds(n: usize, blocks: usize) -> Vec<usize> {
    (0..=blocks).map(|k| k * n / blocks).collect()
}

/// Sums of pairwise distances between every block of `a` and every block of `b`.
fn block_sums(a: &[&[f64]], ba: &[usize], b: &[&[f64]], bb: &[usize], symmetric: bool) -> Result<Vec<Vec<f64>>> {
    let (ka, kb) = (ba.len() - 1, bb.len() - 1);
    let cells = parallel::map_indexed(ka * kb, |c| {
        let (k, l) = (c / kb, c % kb);
        if symmetric && l < k {
            return Ok(0.0);
        }
        let mut s = 0.0;
        for x in &a[ba[k]..ba[k + 1]] {
            let mut row = 0.0;
            for y in &b[bb[l]..bb[l + 1]] {
                row += euclid(x, y);
            }
            s += row;
        }
        Ok(s)
    })?;
    let mut m: Vec<Vec<f64>> = cells.chunks(kb).map(<[f64]>::to_vec).collect();
    if symmetric {
        #[allow(clippy::needless_range_loop)]
        for k in 0..ka {
            for l in 0..k {
                m[k][l] = m[l][k];
            }
        }
    }
    Ok(m)
}

/// Precomputed within-set block sums of one sample, reusable across comparisons.
#[derive(Debug, Clone)]
pub struct EnergyReference {
    points: Vec<Vec<f64>>,
    bounds: Vec<usize>,
    within: Vec<Vec<f64>>,
}

impl EnergyReference {
    pub fn new(set: &[Grid]) -> Result<Self> {
        let views = flat(set, "reference set")?;
        let blocks = JACKKNIFE_BLOCKS.min(views.len());
        let bounds = block_bounds(views.len(), blocks);
        let within = block_sums(&views, &bounds, &views, &bounds, true)?;
        Ok(Self {
            points: views.iter().map(|v| v.to_vec()).collect(),
            bounds,
            within,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Energy distance of `set` to the reference, with a paired delete-a-block
    /// jackknife standard error (block `k` of both samples removed together).
    pub fn distance(&self, set: &[Grid]) -> Result<Estimate> {
        let (value, loo) = self.jackknife(set)?;
        Ok(Estimate {
            value,
            stderr: jackknife_se(&loo),
        })
    }

    /// `d(a) - d(b)` with the jackknife run on the difference, so shared
    /// reference blocks and common random numbers cancel.
    pub fn difference(&self, a: &[Grid], b: &[Grid]) -> Result<Estimate> {
        let (va, la) = self.jackknife(a)?;
        let (vb, lb) = self.jackknife(b)?;
        if la.len() != lb.len() {
            return Err(Error::InvalidArgument("sets split into different block counts".into()));
        }
        let diff: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| x - y).collect();
        Ok(Estimate {
            value: va - vb,
            stderr: jackknife_se(&diff),
        })
    }

    /// Full-sample value and the leave-one-block-out values.
    fn jackknife(&self, set: &[Grid]) -> Result<(f64, Vec<f64>)> {
        let a = flat(set, "sample set")?;
        if a[0].len() != self.points[0].len() {
            return Err(Error::ShapeMismatch {
                left: format!("{} values", a[0].len()),
                right: format!("{} values", self.points[0].len()),
            });
        }
        let b: Vec<&[f64]> = self.points.iter().map(Vec::as_slice).collect();
        let own_blocks = self.bounds.len() - 1;
        let blocks = own_blocks.min(a.len());
        let ba = block_bounds(a.len(), blocks);
        let (bb, bb_within) = if blocks == own_blocks {
            (self.bounds.clone(), self.within.clone())
        } else {
            let bb = block_bounds(b.len(), blocks);
            let w = block_sums(&b, &bb, &b, &bb, true)?;
            (bb, w)
        };
        let aa = block_sums(&a, &ba, &a, &ba, true)?;
        let ab = block_sums(&a, &ba, &b, &bb, false)?;
        let size = |bounds: &[usize], k: usize| (bounds[k + 1] - bounds[k]) as f64;
        let total = |m: &[Vec<f64>]| m.iter().flatten().sum::<f64>();
        let row = |m: &[Vec<f64>], k: usize| m[k].iter().sum::<f64>();
        let col = |m: &[Vec<f64>], k: usize| m.iter().map(|r| r[k]).sum::<f64>();
        let (sab, saa, sbb) = (total(&ab), total(&aa), total(&bb_within));
        let (n, m) = (a.len() as f64, b.len() as f64);
        let value = 2.0 * sab / (n * m) - saa / (n * n) - sbb / (m * m);
        if blocks < 2 {
            return Ok((value, Vec::new()));
        }
        let loo = (0..blocks)
            .map(|k| {
                let (nk, mk) = (n - size(&ba, k), m - size(&bb, k));
                let s_ab = sab - row(&ab, k) - col(&ab, k) + ab[k][k];
                let s_aa = saa - 2.0 * row(&aa, k) + aa[k][k];
                let s_bb = sbb - 2.0 * row(&bb_within, k) + bb_within[k][k];
                2.0 * s_ab / (nk * mk) - s_aa / (nk * nk) - s_bb / (mk * mk)
            })
            .collect();
        Ok((value, loo))
    }
}

/// `sqrt((B - 1) / B * sum (theta_k - mean)^2)`; NaN with fewer than two blocks.
fn jackknife_se(loo: &[f64]) -> f64 {
    if loo.len() < 2 {
        return f64::NAN;
    }
    let kf = loo.len() as f64;
    let mean = loo.iter().sum::<f64>() / kf;
    ((kf - 1.0) / kf * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

/// V-statistic energy distance `2 E|A - B| - E|A - A'| - E|B - B'|` on flattened grids.
pub fn energy_distance(a: &[Grid], b: &[Grid]) -> Result<f64> {
    Ok(energy_distance_with_se(a, b)?.value)
}

pub fn energy_distance_with_se(a: &[Grid], b: &[Grid]) -> Result<Estimate> {
    EnergyReference::new(b)?.distance(a)
}

/// Exact Wasserstein-1 distance between two empirical 1-D distributions.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("1-d sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    // integrate |F_a^-1(u) - F_b^-1(u)| over the merged quantile breakpoints
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0f64;
    let mut total = 0.0;
    while i < n && j < m {
        let next_a = (i + 1) as f64 / n as f64;
        let next_b = (j + 1) as f64 / m as f64;
        let next = next_a.min(next_b);
        total += (next - u) * (a[i] - b[j]).abs();
        u = next;
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
    }
    Ok(total)
}

/// Unit directions drawn from the projection stream of `seed`.
pub fn projection_directions(dim: usize, n_proj: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n_proj as u64)
        .map(|p| {
            let mut r = rng::stream(seed, p, 0, Purpose::Projection);
            let mut v = rng::normal_vec(&mut r, dim);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            v
        })
        .collect()
}

/// Mean 1-D Wasserstein-1 distance over the given projection directions.
pub fn sliced_wasserstein_along(a: &[Grid], b: &[Grid], dirs: &[Vec<f64>]) -> Result<f64> {
    let (fa, fb) = (flat(a, "sample set")?, flat(b, "reference set")?);
    if dirs.is_empty() {
        return Err(Error::InvalidArgument("need at least one projection".into()));
    }
    if fa[0].len() != fb[0].len() || dirs.iter().any(|d| d.len() != fa[0].len()) {
        return Err(Error::ShapeMismatch {
            left: format!("{} values", fa[0].len()),
            right: format!("{} values", fb[0].len()),
        });
    }
    let project = |set: &[&[f64]], d: &[f64]| -> Vec<f64> {
        set.iter().map(|x| x.iter().zip(d).map(|(u, v)| u * v).sum()).collect()
    };
    let per_dir = parallel::map_indexed(dirs.len(), |k| wasserstein_1d(&project(&fa, &dirs[k]), &project(&fb, &dirs[k])))?;
    Ok(per_dir.iter().sum::<f64>() / dirs.len() as f64)
}

pub fn sliced_wasserstein(a: &[Grid], b: &[Grid], n_proj: usize, seed: u64) -> Result<f64> {
    if n_proj == 0 {
        return Err(Error::InvalidArgument("n_proj must be >= 1".into()));
    }
    let dim = a.first().ok_or(Error::Empty("sample set"))?.dim();
    sliced_wasserstein_along(a, b, &projection_directions(dim, n_proj, seed))
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric_name: String,
    pub value: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub seed: u64,
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from("metric_name,value,n_a,n_b,seed\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.metric_name, r.value, r.n_a, r.n_b, r.seed);
    }
    s
}
