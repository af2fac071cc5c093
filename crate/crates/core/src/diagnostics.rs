//! Monte-Carlo diagnostics of the reverse process: timestep mismatch of the
//! noise prediction, forward vs reverse prediction norms, reconstruction
//! shrinkage and teacher-forced estimates of the one-step law.
//!
//! All norms are reported per dimension, `|x|^2 / dim`. Forward samples reuse
//! one `(x0, eps)` pair per sample index across every timestep, so curves are
//! compared under common random numbers.

use std::fmt::Write as _;

use serde::Serialize;

use crate::correction::CorrectionConfig;
use crate::denoiser::{BiasProfile, Denoiser, GaussianMixture};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarStats};
use crate::parallel;
use crate::rng::{self, Purpose};
use crate::sampler::{self, RecordFlags};
use crate::schedule::NoiseSchedule;
use crate::theory;

#[allow(clippy::ptr_arg)]
fn merge_all(a: &mut Vec<ScalarStats>, b: Vec<ScalarStats>) -> Result<()> {
    for (x, y) in a.iter_mut().zip(&b) {
        x.merge(y);
    }
    Ok(())
}

fn forward_noise(seed: u64, index: u64, dim: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, index, 0, Purpose::ForwardNoise);
    rng::normal_vec(&mut r, dim)
}

fn forward_sample(data: &GaussianMixture, sched: &NoiseSchedule, seed: u64, index: u64, t: usize) -> Result<(Grid, Grid)> {
    let x0 = data.sample(seed, index);
    let eps = Grid::new(x0.shape(), forward_noise(seed, index, x0.dim()))?;
    let x_t = sampler::forward_perturb(&x0, t, &eps, sched)?;
    Ok((x0, x_t))
}

/// Mean and standard error of one Monte-Carlo cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

impl From<&ScalarStats> for Cell {
    fn from(s: &ScalarStats) -> Self {
        Self {
            mean: s.mean(),
            stderr: s.stderr(),
            n: s.count(),
        }
    }
}

/// `E|eps_hat(x_t, s)|^2 / dim` with forward samples `x_t` and model timestep `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlidingWindow {
    pub s_list: Vec<usize>,
    pub t_list: Vec<usize>,
    /// Row-major: `cells[i * t_list.len() + j]` is `(s_list[i], t_list[j])`.
    pub cells: Vec<Cell>,
}

impl SlidingWindow {
    pub fn cell(&self, s_index: usize, t_index: usize) -> Cell {
        self.cells[s_index * self.t_list.len() + t_index]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,t,mean,stderr,n\n");
        for (i, s) in self.s_list.iter().enumerate() {
            for (j, t) in self.t_list.iter().enumerate() {
                let c = self.cell(i, j);
                let _ = writeln!(out, "{},{},{},{},{}", s, t, c.mean, c.stderr, c.n);
            }
        }
        out
    }
}

pub fn sliding_window<D: Denoiser + ?Sized>(
    model: &D,
    sched: &NoiseSchedule,
    data: &GaussianMixture,
    s_list: &[usize],
    t_list: &[usize],
    n: usize,
    seed: u64,
) -> Result<SlidingWindow> {
    if s_list.is_empty() || t_list.is_empty() {
        return Err(Error::Empty("step list"));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    for t in s_list.iter().chain(t_list) {
        sched.check_step(*t)?;
    }
    let cols = t_list.len();
    let acc = parallel::chunked_reduce(
        n,
        || vec![ScalarStats::new(); s_list.len() * cols],
        |acc, i| {
            let i = i as u64;
            let x0 = data.sample(seed, i);
            let eps = Grid::new(x0.shape(), forward_noise(seed, i, x0.dim()))?;
            for (j, t) in t_list.iter().enumerate() {
                let x_t = sampler::forward_perturb(&x0, *t, &eps, sched)?;
                for (k, s) in s_list.iter().enumerate() {
                    let mut bias = rng::stream(seed, i, *s as u64, Purpose::BiasNoise);
                    let e = model.predict_eps(&x_t, *s, sched, &mut bias)?;
                    acc[k * cols + j].push(e.mean_sq());
                }
            }
            Ok(())
        },
        merge_all,
    )?;
    Ok(SlidingWindow {
        s_list: s_list.to_vec(),
        t_list: t_list.to_vec(),
        cells: acc.iter().map(Cell::from).collect(),
    })
}

/// Closed form of one sliding-window cell for single-Gaussian data
/// `N(mu, s0^2 I)` under the exact denoiser, with `mean_sq = |mu|^2 / dim`:
/// `(1 - ab_s) (v_t + (sqrt(ab_t) - sqrt(ab_s))^2 mean_sq) / v_s^2`, `v = ab s0^2 + 1 - ab`.
pub fn sliding_window_exact(sched: &NoiseSchedule, s0_sq: f64, mean_sq: f64, s: usize, t: usize) -> Result<f64> {
    let (abs, abt) = (sched.alpha_bar(s)?, sched.alpha_bar(t)?);
    let (vs, vt) = (abs * s0_sq + 1.0 - abs, abt * s0_sq + 1.0 - abt);
    let drift = (abt.sqrt() - abs.sqrt()).powi(2) * mean_sq;
    Ok((1.0 - abs) * (vt + drift) / (vs * vs))
}

/// Prediction-norm curves keyed by ascending `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardReverse {
    pub t: Vec<usize>,
    /// `E|eps_theta(x_t, t)|^2 / dim` over forward samples.
    pub forward: Vec<Cell>,
    /// `E|eps_theta(x_hat_t, t)|^2 / dim` along reverse chains.
    pub reverse: Vec<Cell>,
}

impl ForwardReverse {
    /// Fraction of timesteps with `reverse >= forward`.
    pub fn dominance_fraction(&self) -> f64 {
        let hits = self.forward.iter().zip(&self.reverse).filter(|(f, r)| r.mean >= f.mean).count();
        hits as f64 / self.t.len() as f64
    }

    /// Number of timesteps where the curves differ by more than `k` combined standard errors.
    pub fn separated(&self, k: f64) -> usize {
        self.forward
            .iter()
            .zip(&self.reverse)
            .filter(|(f, r)| (r.mean - f.mean).abs() > k * f.stderr.hypot(r.stderr))
            .count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,forward,reverse,stderr_f,stderr_r\n");
        for i in 0..self.t.len() {
            let (f, r) = (self.forward[i], self.reverse[i]);
            let _ = writeln!(out, "{},{},{},{},{}", self.t[i], f.mean, r.mean, f.stderr, r.stderr);
        }
        out
    }
}

/// Per-t forward statistics of `f(model, x0, x_t, t)`, for `t = 1..=T`.
fn forward_curve<D, F>(model: &D, sched: &NoiseSchedule, data: &GaussianMixture, n: usize, seed: u64, f: F) -> Result<Vec<ScalarStats>>
where
    D: Denoiser + ?Sized,
    F: Fn(&D, &Grid, &Grid, usize, &mut rng::StreamRng) -> Result<f64> + Sync + Send,
{
    let steps = sched.steps();
    parallel::chunked_reduce(
        n,
        || vec![ScalarStats::new(); steps],
        |acc, i| {
            let i = i as u64;
            let x0 = data.sample(seed, i);
            let eps = Grid::new(x0.shape(), forward_noise(seed, i, x0.dim()))?;
            for t in 1..=steps {
                let x_t = sampler::forward_perturb(&x0, t, &eps, sched)?;
                let mut bias = rng::stream(seed, i, t as u64, Purpose::BiasNoise);
                acc[t - 1].push(f(model, &x0, &x_t, t, &mut bias)?);
            }
            Ok(())
        },
        merge_all,
    )
}

/// Reverse per-step statistics reordered to ascending `t`.
fn ascending(stats: Vec<(usize, ScalarStats)>) -> Vec<Cell> {
    let mut v: Vec<(usize, ScalarStats)> = stats;
    v.sort_by_key(|(t, _)| *t);
    v.iter().map(|(_, s)| Cell::from(s)).collect()
}

/// Seeds for the forward and reverse halves, kept apart so that sample `i`
/// never shares bias noise with chain `i`.
fn split_seed(seed: u64) -> (u64, u64) {
    (rng::child_seed(seed, 1), rng::child_seed(seed, 2))
}

pub fn forward_vs_reverse<D: Denoiser + ?Sized>(
    model: &D,
    sched: &NoiseSchedule,
    data: &GaussianMixture,
    corr: &CorrectionConfig,
    n: usize,
    seed: u64,
) -> Result<ForwardReverse> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let (fs, rs) = split_seed(seed);
    let forward = forward_curve(model, sched, data, n, fs, |m, _, x_t, t, bias| {
        Ok(m.predict_eps(x_t, t, sched, bias)?.mean_sq())
    })?;
    let trajs = sampler::run_reverse(model, data.shape(), sched, corr, n, rs, RecordFlags::none())?;
    Ok(ForwardReverse {
        t: (1..=sched.steps()).collect(),
        forward: forward.iter().map(Cell::from).collect(),
        reverse: ascending(sampler::eps_norm_stats(&trajs)?),
    })
}

/// Reconstruction-norm curves keyed by ascending `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconNorms {
    pub t: Vec<usize>,
    /// `E|x0_theta(x_t, t)|^2 / dim` over forward samples.
    pub forward: Vec<Cell>,
    /// `E|x0_theta(x_hat_t, t)|^2 / dim` along reverse chains.
    pub reverse: Vec<Cell>,
    /// `E|x0|^2 / dim` of the forward samples' clean draws.
    pub data: Cell,
    /// Paired `E(|x0_theta(x_t, t)|^2 - |x0|^2) / dim` on the same draws.
    pub gap: Vec<Cell>,
}

impl ReconNorms {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,forward,reverse,data,gap,stderr_f,stderr_r,stderr_d,stderr_gap\n");
        for i in 0..self.t.len() {
            let (f, r, d, g) = (self.forward[i], self.reverse[i], self.data, self.gap[i]);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.t[i], f.mean, r.mean, d.mean, g.mean, f.stderr, r.stderr, d.stderr, g.stderr
            );
        }
        out
    }
}

pub fn reconstruction_norms<D: Denoiser + ?Sized>(
    model: &D,
    sched: &NoiseSchedule,
    data: &GaussianMixture,
    n: usize,
    seed: u64,
) -> Result<ReconNorms> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let (fs, rs) = split_seed(seed);
    let forward = forward_curve(model, sched, data, n, fs, |m, _, x_t, t, bias| {
        Ok(m.predict_x0(x_t, t, sched, bias)?.mean_sq())
    })?;
    let gap = forward_curve(model, sched, data, n, fs, |m, x0, x_t, t, bias| {
        Ok(m.predict_x0(x_t, t, sched, bias)?.mean_sq() - x0.mean_sq())
    })?;
    let clean = parallel::chunked_reduce(
        n,
        ScalarStats::new,
        |acc, i| {
            acc.push(data.sample(fs, i as u64).mean_sq());
            Ok(())
        },
        |a, b| {
            a.merge(&b);
            Ok(())
        },
    )?;
    let trajs = sampler::run_reverse(model, data.shape(), sched, &CorrectionConfig::none(), n, rs, RecordFlags::none())?;
    Ok(ReconNorms {
        t: (1..=sched.steps()).collect(),
        forward: forward.iter().map(Cell::from).collect(),
        reverse: ascending(sampler::x0_norm_stats(&trajs)?),
        data: Cell::from(&clean),
        gap: gap.iter().map(Cell::from).collect(),
    })
}

/// Teacher-forced estimate of the one-step law at `t` next to its closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaPsiEstimate {
    pub t: usize,
    pub n: u64,
    pub gamma_hat: f64,
    pub gamma_hat_stderr: f64,
    pub coef_x0: f64,
    pub coef_x0_stderr: f64,
    pub noise_std: f64,
    pub noise_std_stderr: f64,
    /// `coef_x0^2 / noise_std^2`.
    pub snr: f64,
    /// Delta-method error of `snr`, ignoring the coef/noise covariance.
    pub snr_stderr: f64,
    pub theory: theory::StepLaw,
    pub gamma_hat_theory: f64,
    pub snr_theory: f64,
}

/// One biased posterior step from exact forward draws.
///
/// Draw `x0`, form `x_t`, reconstruct `x0_hat = gamma_t x0 + phi_t xi`, step with
/// the schedule's sigma. The signal coefficient is the per-coordinate
/// covariance of `x_hat_{t-1}` with `x0` divided by `s0^2`, averaged over
/// coordinates; the noise scale comes from the regression residual. The
/// closed form assumes `sigma_t = sqrt(beta_tilde_t)`.
pub fn estimate_gamma_psi(
    sched: &NoiseSchedule,
    data: &GaussianMixture,
    profile: &BiasProfile,
    t: usize,
    n: usize,
    seed: u64,
) -> Result<GammaPsiEstimate> {
    if data.modes() != 1 {
        return Err(Error::Mixture("the step-law estimate needs single-mode data".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("n must be >= 2".into()));
    }
    sched.check_step(t)?;
    let s0_sq = data.variances()[0];
    let (gamma, phi) = (profile.gamma(t)?, profile.phi(t)?);
    let dim = data.shape().len();
    let pair = |i: u64| -> Result<(Grid, Grid)> {
        let (x0, x_t) = forward_sample(data, sched, seed, i, t)?;
        let mut bias = rng::stream(seed, i, t as u64, Purpose::BiasNoise);
        let xi = Grid::new(x0.shape(), rng::normal_vec(&mut bias, dim))?;
        let x0_hat = crate::denoiser::biased_x0(&x0, gamma, phi, &xi)?;
        let mut zr = rng::stream(seed, i, t as u64, Purpose::StepNoise);
        let z = Grid::new(x0.shape(), rng::normal_vec(&mut zr, dim))?;
        Ok((x0, sampler::posterior_step(&x_t, &x0_hat, &z, t, sched)?))
    };

    // pass 1: per-coordinate means
    let sums = parallel::chunked_reduce(
        n,
        || vec![0.0; 2 * dim],
        |acc, i| {
            let (x0, xh) = pair(i as u64)?;
            for k in 0..dim {
                acc[k] += x0.values()[k];
                acc[dim + k] += xh.values()[k];
            }
            Ok(())
        },
        |a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            Ok(())
        },
    )?;
    let nf = n as f64;
    let (mean0, meanh): (Vec<f64>, Vec<f64>) = ((0..dim).map(|k| sums[k] / nf).collect(), (0..dim).map(|k| sums[dim + k] / nf).collect());

    // pass 2: per-sample covariance contributions
    let cov = parallel::chunked_reduce(
        n,
        ScalarStats::new,
        |acc, i| {
            let (x0, xh) = pair(i as u64)?;
            let c: f64 = (0..dim).map(|k| (xh.values()[k] - meanh[k]) * (x0.values()[k] - mean0[k])).sum();
            acc.push(c / dim as f64);
            Ok(())
        },
        |a, b| {
            a.merge(&b);
            Ok(())
        },
    )?;
    let coef = cov.mean() / s0_sq;

    // pass 3: residual variance
    let resid = parallel::chunked_reduce(
        n,
        ScalarStats::new,
        |acc, i| {
            let (x0, xh) = pair(i as u64)?;
            let q: f64 = (0..dim)
                .map(|k| {
                    let e = xh.values()[k] - meanh[k] - coef * (x0.values()[k] - mean0[k]);
                    e * e
                })
                .sum();
            acc.push(q / dim as f64);
            Ok(())
        },
        |a, b| {
            a.merge(&b);
            Ok(())
        },
    )?;
    let noise_var = resid.mean();
    let noise_std = noise_var.sqrt();
    let (coef_se, noise_se) = (cov.stderr() / s0_sq, resid.stderr() / (2.0 * noise_std));
    let snr = coef * coef / noise_var;
    let ab_prev = sched.alpha_bar(t - 1)?;
    let law = theory::biased_step_law(gamma, phi, t, sched)?;
    let gh_theory = theory::gamma_hat_step(gamma, t, sched)?;
    let snr_theory = law.coef_x0 * law.coef_x0 / (law.noise_std * law.noise_std);
    Ok(GammaPsiEstimate {
        t,
        n: n as u64,
        gamma_hat: coef / ab_prev.sqrt(),
        gamma_hat_stderr: cov.stderr() / s0_sq / ab_prev.sqrt(),
        coef_x0: coef,
        coef_x0_stderr: coef_se,
        noise_std,
        noise_std_stderr: noise_se,
        snr,
        snr_stderr: 2.0 * snr * (coef_se / coef).hypot(noise_se / noise_std),
        theory: law,
        gamma_hat_theory: gh_theory,
        snr_theory,
    })
}

pub fn gamma_psi_csv(rows: &[GammaPsiEstimate]) -> String {
    let mut out = String::from(
        "t,n,gamma_hat,gamma_hat_stderr,gamma_hat_theory,coef_x0,coef_x0_stderr,coef_x0_theory,noise_std,noise_std_stderr,noise_std_theory,snr,snr_stderr,snr_theory\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.n,
            r.gamma_hat,
            r.gamma_hat_stderr,
            r.gamma_hat_theory,
            r.coef_x0,
            r.coef_x0_stderr,
            r.theory.coef_x0,
            r.noise_std,
            r.noise_std_stderr,
            r.theory.noise_std,
            r.snr,
            r.snr_stderr,
            r.snr_theory
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{BiasedDenoiser, ExactDenoiser, MeanSpec};
    use crate::grid::Shape;
    use crate::schedule::SigmaMode;

    fn shape() -> Shape {
        Shape::new(1, 8, 8).unwrap()
    }

    fn gaussian(amplitude: f64, var: f64) -> GaussianMixture {
        GaussianMixture::single(MeanSpec::Checker { amplitude, cell: 2 }.build(shape()).unwrap(), var).unwrap()
    }

    #[test]
    fn sliding_window_closed_form() {
        let s = NoiseSchedule::desk(100, SigmaMode::Small).unwrap();
        let data = gaussian(0.0, 0.25);
        let model = ExactDenoiser::new(data.clone());
        let ts = [10, 30, 50, 70, 90];
        let w = sliding_window(&model, &s, &data, &[50], &ts, 3000, 4).unwrap();
        let mut prev = 0.0;
        for (j, t) in ts.iter().enumerate() {
            let exact = sliding_window_exact(&s, 0.25, 0.0, 50, *t).unwrap();
            assert!(exact > prev);
            prev = exact;
            let c = w.cell(0, j);
            assert!((c.mean - exact).abs() < 3.0 * c.stderr, "t={t}: {} vs {exact}", c.mean);
        }
        let diag = sliding_window_exact(&s, 0.25, 0.0, 50, 50).unwrap();
        let ab = s.alpha_bar(50).unwrap();
        assert!((diag - (1.0 - ab) / (ab * 0.25 + 1.0 - ab)).abs() < 1e-14);
        for t in [1, 40, 100] {
            assert!((sliding_window_exact(&s, 1.0, 0.0, 50, t).unwrap() - (1.0 - ab)).abs() < 1e-14);
        }
        assert_eq!(w.to_csv().lines().count(), 6);
        assert!(sliding_window(&model, &s, &data, &[], &ts, 10, 4).is_err());
    }

    #[test]
    fn sliding_window_with_mean() {
        let s = NoiseSchedule::desk(100, SigmaMode::Small).unwrap();
        let data = gaussian(1.0, 0.25);
        let model = ExactDenoiser::new(data.clone());
        let w = sliding_window(&model, &s, &data, &[20, 80], &[5, 60], 3000, 6).unwrap();
        for (i, sv) in [20, 80].iter().enumerate() {
            for (j, tv) in [5, 60].iter().enumerate() {
                let exact = sliding_window_exact(&s, 0.25, 1.0, *sv, *tv).unwrap();
                let c = w.cell(i, j);
                assert!((c.mean - exact).abs() < 3.0 * c.stderr, "({sv},{tv})");
            }
        }
    }

    #[test]
    fn recon_shrinkage_closed_form() {
        let s = NoiseSchedule::desk(50, SigmaMode::Small).unwrap();
        let data = gaussian(0.0, 1.0);
        let model = ExactDenoiser::new(data.clone());
        let r = reconstruction_norms(&model, &s, &data, 2000, 3).unwrap();
        for (i, t) in r.t.iter().enumerate() {
            let ab = s.alpha_bar(*t).unwrap();
            let exact = ab / (ab + 1.0 - ab);
            let c = r.forward[i];
            assert!(exact <= 1.0);
            assert!((c.mean - exact).abs() < 4.0 * c.stderr, "t={t}");
        }
        assert_eq!(r.to_csv().lines().count(), 51);
    }

    #[test]
    fn recon_point_mass() {
        let s = NoiseSchedule::desk(30, SigmaMode::Small).unwrap();
        let data = gaussian(1.0, 1e-6);
        let model = ExactDenoiser::new(data.clone());
        let r = reconstruction_norms(&model, &s, &data, 20, 1).unwrap();
        for (f, rv) in r.forward.iter().zip(&r.reverse) {
            assert!((f.mean - 1.0).abs() < 1e-4 && (rv.mean - 1.0).abs() < 1e-4);
        }
        assert!((r.data.mean - 1.0).abs() < 1e-4);
    }

    #[test]
    fn biased_reverse_recon_below_forward() {
        let s = NoiseSchedule::desk(50, SigmaMode::Small).unwrap();
        let data = gaussian(1.0, 0.25);
        let model = BiasedDenoiser::new(ExactDenoiser::new(data.clone()), BiasProfile::constant(0.9, 0.0).unwrap());
        let r = reconstruction_norms(&model, &s, &data, 1000, 2).unwrap();
        let below = r.forward.iter().zip(&r.reverse).filter(|(f, rv)| rv.mean <= f.mean + 3.0 * f.stderr.hypot(rv.stderr)).count();
        assert_eq!(below, 50);
    }

    #[test]
    fn exact_curves_track() {
        // T = 1000 with sigma = sqrt(beta) keeps chain discretization error below MC
        // noise, so an unbiased model shows no separated timesteps beyond chance.
        let s = NoiseSchedule::desk(1000, SigmaMode::Large).unwrap();
        let data = gaussian(0.0, 0.25);
        let model = ExactDenoiser::new(data.clone());
        let fr = forward_vs_reverse(&model, &s, &data, &CorrectionConfig::none(), 400, 5).unwrap();
        assert!(fr.separated(3.0) <= 10, "{}", fr.separated(3.0));
        assert_eq!(fr.to_csv().lines().count(), 1001);
    }

    #[test]
    fn gamma_psi_identity_and_mean_invariance() {
        let s = NoiseSchedule::desk(100, SigmaMode::Small).unwrap();
        let id = estimate_gamma_psi(&s, &gaussian(1.0, 0.25), &BiasProfile::identity(), 50, 20_000, 7).unwrap();
        assert!((id.gamma_hat - 1.0).abs() < 3.0 * id.gamma_hat_stderr);
        let target = (1.0 - s.alpha_bar(49).unwrap()).sqrt();
        assert!((id.noise_std - target).abs() < 3.0 * id.noise_std_stderr);

        let p = BiasProfile::constant(0.98, 0.1).unwrap();
        let a = estimate_gamma_psi(&s, &gaussian(1.0, 0.25), &p, 50, 5000, 8).unwrap();
        let b = estimate_gamma_psi(&s, &gaussian(-3.0, 0.25), &p, 50, 5000, 8).unwrap();
        assert!((a.gamma_hat - b.gamma_hat).abs() < 1e-9);
        assert!((a.noise_std - b.noise_std).abs() < 1e-9);
        assert!(estimate_gamma_psi(&s, &gaussian(1.0, 0.25), &p, 50, 1, 8).is_err());
        assert_eq!(gamma_psi_csv(&[a, b]).lines().count(), 3);
    }
}
