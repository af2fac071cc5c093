//! Two-stage grid search for the correction strengths.
//!
//! The low-band coefficient `lambda_l` is searched first with the high band
//! off, then the high band is searched with `lambda_l` fixed. Each stage runs a
//! coarse grid from zero, then a fine grid around the coarse minimum. The high
//! band is parameterized by its strength `h = 1 - lambda_h`, so both grids start
//! at "no correction" and the baseline is always a candidate. Every grid point
//! reuses the same chain seed and the same reference draws.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::config::SearchConfig;
use crate::correction::{CorrectionConfig, CorrectionMode};
use crate::denoiser::{Denoiser, GaussianMixture};
use crate::error::{Error, Result};
use crate::grid::{Grid, Shape};
use crate::metrics::{self, EnergyReference, Estimate};
use crate::parallel;
use crate::sampler::{self, RecordFlags};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    CoarseLow,
    FineLow,
    CoarseHigh,
    FineHigh,
    CoarseJoint,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::CoarseLow => "coarse_low",
            Stage::FineLow => "fine_low",
            Stage::CoarseHigh => "coarse_high",
            Stage::FineHigh => "fine_high",
            Stage::CoarseJoint => "coarse_joint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchPoint {
    pub stage: Stage,
    pub lambda_l: f64,
    /// Strength of the high-band correction, `1 - lambda_h`.
    pub high_strength: f64,
    pub lambda_h: f64,
    pub objective: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub lambda_l_star: f64,
    pub lambda_h_star: f64,
    pub best: SearchPoint,
    pub baseline: SearchPoint,
    /// `objective(best) - objective(baseline)` with a paired jackknife error.
    pub improvement: Estimate,
    pub sliced_wasserstein_best: f64,
    pub sliced_wasserstein_baseline: f64,
    /// Stages whose sorted trace is not first-decreasing-then-increasing.
    pub non_unimodal: Vec<Stage>,
    /// Stages whose coarse minimum sits on the upper grid edge.
    pub boundary_minimum: Vec<Stage>,
    pub trace: Vec<SearchPoint>,
}

impl SearchOutcome {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("stage,lambda_l,lambda_h,high_strength,objective,stderr\n");
        for p in &self.trace {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                p.stage.as_str(),
                p.lambda_l,
                p.lambda_h,
                p.high_strength,
                p.objective,
                p.stderr
            );
        }
        s
    }
}

/// The search objective: energy distance between corrected terminal samples
/// and a fixed set of data draws.
pub struct Benchmark<'a> {
    pub model: &'a dyn Denoiser,
    pub sched: &'a NoiseSchedule,
    pub shape: Shape,
    pub mode: CorrectionMode,
    pub n_chains: usize,
    pub chain_seed: u64,
    pub reference_set: Vec<Grid>,
    pub reference: EnergyReference,
    pub n_proj: usize,
    pub projection_seed: u64,
}

impl<'a> Benchmark<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &'a dyn Denoiser,
        sched: &'a NoiseSchedule,
        data: &GaussianMixture,
        mode: CorrectionMode,
        n_chains: usize,
        chain_seed: u64,
        n_data: usize,
        data_seed: u64,
    ) -> Result<Self> {
        let reference_set: Vec<Grid> = parallel::map_indexed(n_data, |i| Ok(data.sample(data_seed, i as u64)))?;
        let reference = EnergyReference::new(&reference_set)?;
        Ok(Self {
            model,
            sched,
            shape: data.shape(),
            mode,
            n_chains,
            chain_seed,
            reference_set,
            reference,
            n_proj: 50,
            projection_seed: data_seed,
        })
    }

    pub fn correction(&self, lambda_l: f64, high_strength: f64) -> Result<CorrectionConfig> {
        if lambda_l == 0.0 && high_strength == 0.0 {
            return Ok(CorrectionConfig::none());
        }
        CorrectionConfig::variance(self.mode, lambda_l, 1.0 - high_strength)
    }

    pub fn samples(&self, lambda_l: f64, high_strength: f64) -> Result<Vec<Grid>> {
        let corr = self.correction(lambda_l, high_strength)?;
        let trajs = sampler::run_reverse(self.model, self.shape, self.sched, &corr, self.n_chains, self.chain_seed, RecordFlags::none())?;
        Ok(trajs.into_iter().map(|mut t| t.states.pop().expect("terminal state").1).collect())
    }

    pub fn objective(&self, lambda_l: f64, high_strength: f64) -> Result<Estimate> {
        self.reference.distance(&self.samples(lambda_l, high_strength)?)
    }
}

/// Grid values in integer units of `step`, so `7 * 0.01` comes out as `0.07`.
fn grid_value(units: i64, step: f64) -> f64 {
    let inv = (1.0 / step).round();
    if (inv * step - 1.0).abs() < 1e-12 {
        units as f64 / inv
    } else {
        units as f64 * step
    }
}

fn coarse_units(max: f64, step: f64) -> Vec<i64> {
    let top = (max / step + 1e-9).floor() as i64;
    (0..=top).collect()
}

/// Index of the minimum, earliest (smallest strength) among ties.
fn argmin(points: &[SearchPoint], key: impl Fn(&SearchPoint) -> f64) -> usize {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|a, b| key(&points[*a]).total_cmp(&key(&points[*b])));
    let mut best = order[0];
    for &i in &order[1..] {
        if points[i].objective < points[best].objective {
            best = i;
        }
    }
    best
}

/// True when some interior point exceeds a lower point on each side.
fn is_non_unimodal(values: &[f64]) -> bool {
    let n = values.len();
    if n < 3 {
        return false;
    }
    let mut prefix_min = vec![f64::INFINITY; n];
    for i in 1..n {
        prefix_min[i] = prefix_min[i - 1].min(values[i - 1]);
    }
    let mut suffix_min = f64::INFINITY;
    for j in (1..n - 1).rev() {
        suffix_min = suffix_min.min(values[j + 1]);
        if values[j] > prefix_min[j] && values[j] > suffix_min {
            return true;
        }
    }
    false
}

struct Evaluator<'b, 'a> {
    bench: &'b Benchmark<'a>,
    /// Objective by `(lambda_l, high_strength)` bit patterns.
    cache: BTreeMap<(u64, u64), Estimate>,
    trace: Vec<SearchPoint>,
}

impl Evaluator<'_, '_> {
    /// Evaluates new points in parallel and appends them to the trace in input order.
    fn eval(&mut self, stage: Stage, points: &[(f64, f64)]) -> Result<Vec<SearchPoint>> {
        let fresh: Vec<(f64, f64)> = points
            .iter()
            .copied()
            .filter(|(l, h)| !self.cache.contains_key(&(l.to_bits(), h.to_bits())))
            .collect();
        let values = parallel::map_indexed(fresh.len(), |i| self.bench.objective(fresh[i].0, fresh[i].1))?;
        for ((l, h), v) in fresh.iter().zip(values) {
            self.cache.insert((l.to_bits(), h.to_bits()), v);
        }
        let out: Vec<SearchPoint> = points
            .iter()
            .map(|(l, h)| {
                let e = self.cache[&(l.to_bits(), h.to_bits())];
                SearchPoint {
                    stage,
                    lambda_l: *l,
                    high_strength: *h,
                    lambda_h: 1.0 - *h,
                    objective: e.value,
                    stderr: e.stderr,
                }
            })
            .collect();
        self.trace.extend(out.iter().filter(|p| fresh.iter().any(|(l, h)| *l == p.lambda_l && *h == p.high_strength)));
        Ok(out)
    }
}

/// Coarse-then-fine search along one axis. Returns the chosen value.
fn one_axis(
    ev: &mut Evaluator,
    stages: (Stage, Stage),
    cfg: &SearchConfig,
    max: f64,
    upper: Option<f64>,
    at: impl Fn(f64) -> (f64, f64),
    flags: (&mut Vec<Stage>, &mut Vec<Stage>),
) -> Result<f64> {
    let coarse: Vec<f64> = coarse_units(max, cfg.coarse_step).into_iter().map(|u| grid_value(u, cfg.coarse_step)).collect();
    let pts: Vec<(f64, f64)> = coarse.iter().map(|v| at(*v)).collect();
    let coarse_pts = ev.eval(stages.0, &pts)?;
    let axis = |p: &SearchPoint| if stages.0 == Stage::CoarseLow { p.lambda_l } else { p.high_strength };
    let c = argmin(&coarse_pts, axis);
    if is_non_unimodal(&coarse_pts.iter().map(|p| p.objective).collect::<Vec<_>>()) {
        flags.0.push(stages.0);
    }
    if c + 1 == coarse_pts.len() && coarse_pts.len() > 1 {
        flags.1.push(stages.0);
    }
    let ratio = (cfg.coarse_step / cfg.fine_step).round() as i64;
    let center = (axis(&coarse_pts[c]) / cfg.fine_step).round() as i64;
    let fine: Vec<f64> = (center - ratio..=center + ratio)
        .filter(|u| *u >= 0)
        .map(|u| grid_value(u, cfg.fine_step))
        .filter(|v| upper.is_none_or(|m| *v <= m))
        .collect();
    let pts: Vec<(f64, f64)> = fine.iter().map(|v| at(*v)).collect();
    let fine_pts = ev.eval(stages.1, &pts)?;
    if is_non_unimodal(&fine_pts.iter().map(|p| p.objective).collect::<Vec<_>>()) {
        flags.0.push(stages.1);
    }
    let mut all: Vec<SearchPoint> = coarse_pts;
    all.extend(fine_pts);
    let b = argmin(&all, axis);
    Ok(axis(&all[b]))
}

pub fn two_stage_search(bench: &Benchmark, cfg: &SearchConfig) -> Result<SearchOutcome> {
    if bench.mode == CorrectionMode::None {
        return Err(Error::InvalidArgument("search needs a correction mode".into()));
    }
    let mut ev = Evaluator {
        bench,
        cache: BTreeMap::new(),
        trace: Vec::new(),
    };
    let mut non_unimodal = Vec::new();
    let mut boundary = Vec::new();
    let uses_low = bench.mode != CorrectionMode::Dh;
    let uses_high = matches!(bench.mode, CorrectionMode::Dh | CorrectionMode::Dcw);

    let (lambda_l, high) = if cfg.joint && uses_low && uses_high {
        let ls: Vec<f64> = coarse_units(cfg.lambda_l_max, cfg.coarse_step).into_iter().map(|u| grid_value(u, cfg.coarse_step)).collect();
        let hs: Vec<f64> = coarse_units(cfg.high_strength_max, cfg.coarse_step).into_iter().map(|u| grid_value(u, cfg.coarse_step)).collect();
        let pts: Vec<(f64, f64)> = ls.iter().flat_map(|l| hs.iter().map(move |h| (*l, *h))).collect();
        let joint = ev.eval(Stage::CoarseJoint, &pts)?;
        let b = argmin(&joint, |p| p.lambda_l + p.high_strength);
        let (l0, h0) = (joint[b].lambda_l, joint[b].high_strength);
        let l = one_axis(&mut ev, (Stage::CoarseLow, Stage::FineLow), cfg, l0, None, |v| (v, h0), (&mut non_unimodal, &mut boundary))?;
        let h = one_axis(&mut ev, (Stage::CoarseHigh, Stage::FineHigh), cfg, h0, Some(1.0), |v| (l, v), (&mut non_unimodal, &mut boundary))?;
        (l, h)
    } else {
        let l = if uses_low {
            one_axis(&mut ev, (Stage::CoarseLow, Stage::FineLow), cfg, cfg.lambda_l_max, None, |v| (v, 0.0), (&mut non_unimodal, &mut boundary))?
        } else {
            0.0
        };
        let h = if uses_high {
            one_axis(&mut ev, (Stage::CoarseHigh, Stage::FineHigh), cfg, cfg.high_strength_max, Some(1.0), |v| (l, v), (&mut non_unimodal, &mut boundary))?
        } else {
            0.0
        };
        (l, h)
    };

    let find = |l: f64, h: f64| -> SearchPoint {
        *ev.trace
            .iter()
            .find(|p| p.lambda_l == l && p.high_strength == h)
            .expect("evaluated point")
    };
    let best = find(lambda_l, high);
    let baseline = find(0.0, 0.0);
    let best_samples = bench.samples(lambda_l, high)?;
    let base_samples = bench.samples(0.0, 0.0)?;
    let improvement = bench.reference.difference(&best_samples, &base_samples)?;
    let sw = |set: &[Grid]| metrics::sliced_wasserstein(set, &bench.reference_set, bench.n_proj, bench.projection_seed);
    Ok(SearchOutcome {
        lambda_l_star: lambda_l,
        lambda_h_star: 1.0 - high,
        best,
        baseline,
        improvement,
        sliced_wasserstein_best: sw(&best_samples)?,
        sliced_wasserstein_baseline: sw(&base_samples)?,
        non_unimodal,
        boundary_minimum: boundary,
        trace: ev.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{ExactDenoiser, MeanSpec};
    use crate::schedule::SigmaMode;

    #[test]
    fn grid_values_are_round() {
        assert_eq!(grid_value(7, 0.01), 0.07);
        assert_eq!(grid_value(52, 0.001), 0.052);
        assert_eq!(coarse_units(0.2, 0.01).len(), 21);
        assert_eq!(coarse_units(0.0, 0.01), vec![0]);
    }

    #[test]
    fn unimodality() {
        assert!(!is_non_unimodal(&[3.0, 2.0, 1.0, 2.0, 5.0]));
        assert!(!is_non_unimodal(&[1.0, 1.0, 2.0]));
        assert!(is_non_unimodal(&[3.0, 1.0, 2.0, 0.5, 4.0]));
    }

    #[test]
    fn ties_go_to_smaller_strength() {
        let p = |l: f64, o: f64| SearchPoint { stage: Stage::CoarseLow, lambda_l: l, high_strength: 0.0, lambda_h: 1.0, objective: o, stderr: 0.0 };
        let pts = vec![p(0.02, 1.0), p(0.0, 1.0), p(0.01, 1.0)];
        assert_eq!(argmin(&pts, |x| x.lambda_l), 1);
        let pts = vec![p(0.0, 2.0), p(0.01, 1.0), p(0.02, 1.0)];
        assert_eq!(argmin(&pts, |x| x.lambda_l), 1);
    }

    #[test]
    fn small_search_runs_and_never_regresses() {
        let sched = NoiseSchedule::desk(30, SigmaMode::Small).unwrap();
        let shape = Shape::new(1, 4, 4).unwrap();
        let data = GaussianMixture::single(MeanSpec::Checker { amplitude: 0.5, cell: 1 }.build(shape).unwrap(), 0.25).unwrap();
        let model = ExactDenoiser::new(data.clone());
        let bench = Benchmark::new(&model, &sched, &data, CorrectionMode::Dcw, 200, 1, 200, 2).unwrap();
        let cfg = SearchConfig {
            mode: CorrectionMode::Dcw,
            lambda_l_max: 0.03,
            high_strength_max: 0.02,
            coarse_step: 0.01,
            fine_step: 0.005,
            joint: false,
        };
        let out = two_stage_search(&bench, &cfg).unwrap();
        assert!(out.best.objective <= out.baseline.objective);
        assert_eq!(out.baseline.lambda_l, 0.0);
        assert!(out.trace.iter().any(|p| p.stage == Stage::FineHigh));
        // the trace alone reproduces the optimum of each stage
        let low = out.trace.iter().filter(|p| p.high_strength == 0.0).min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.lambda_l.total_cmp(&b.lambda_l))).unwrap();
        assert_eq!(low.lambda_l, out.lambda_l_star);
        let csv = out.trace_csv();
        assert_eq!(csv.lines().count(), out.trace.len() + 1);
        let again = two_stage_search(&bench, &cfg).unwrap();
        assert_eq!(again.trace_csv(), csv);
    }
}
