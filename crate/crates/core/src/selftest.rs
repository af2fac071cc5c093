//! Invariant suite behind `snrlab selftest`.

use std::fmt::Write as _;

use rand::Rng;

use crate::correction::{self, BandLambdas, CorrectionConfig, CorrectionMode};
use crate::denoiser::{self, BiasProfile, BiasedDenoiser, ExactDenoiser, GaussianMixture};
use crate::error::Result;
use crate::grid::{Grid, Shape};
use crate::parallel;
use crate::rng::{self, Purpose, StreamRng};
use crate::sampler::{self, RecordFlags};
use crate::schedule::{NoiseSchedule, SigmaMode};
use crate::theory;
use crate::wavelet;

const SEED: u64 = 0x5e1f_7e57;

#[derive(Debug, Clone, Copy)]
pub struct SelftestOptions {
    /// Haar normalisation used by the energy check; anything but 0.5 should fail.
    pub haar_scale: f64,
    pub trials: usize,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self { haar_scale: 0.5, trials: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestSummary {
    pub checks: Vec<Check>,
}

impl SelftestSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    /// One `PASS`/`FAIL` line per check; contains no timings so reruns compare equal.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let n_pass = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(s, "{n_pass}/{} checks passed", self.checks.len());
        s
    }
}

fn random_grid(rng: &mut StreamRng, shape: Shape) -> Grid {
    Grid::new(shape, rng::normal_vec(rng, shape.len())).expect("shape matches")
}

fn check(name: &'static str, worst: f64, tol: f64) -> Check {
    Check {
        name,
        passed: worst.is_finite() && worst <= tol,
        detail: format!("worst={worst:.3e} tol={tol:.0e}"),
    }
}

fn run_check(name: &'static str, tol: f64, f: impl FnOnce() -> Result<f64>) -> Check {
    match f() {
        Ok(worst) => check(name, worst, tol),
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

pub fn selftest(opts: SelftestOptions) -> SelftestSummary {
    let shape = Shape::new(1, 8, 8).expect("valid shape");
    let other = Shape::new(3, 4, 6).expect("valid shape");
    let n = opts.trials.max(1);
    let mut checks = Vec::new();

    checks.push(run_check("wavelet_round_trip", 1e-12, || {
        let mut rng = rng::stream(SEED, 0, 0, Purpose::Data);
        let mut worst = 0.0f64;
        for i in 0..n {
            let x = random_grid(&mut rng, if i % 2 == 0 { shape } else { other });
            worst = worst.max(wavelet::idwt_haar(&wavelet::dwt_haar(&x)?)?.max_abs_diff(&x)?);
        }
        Ok(worst)
    }));

    checks.push(run_check("wavelet_energy", 1e-10, || {
        let mut rng = rng::stream(SEED, 1, 0, Purpose::Data);
        let mut worst = 0.0f64;
        for _ in 0..n {
            let x = random_grid(&mut rng, shape);
            let e = wavelet::dwt_haar_scaled(&x, opts.haar_scale)?.energy();
            worst = worst.max((e / x.sq_norm() - 1.0).abs());
        }
        Ok(worst)
    }));

    checks.push(run_check("dcw_equal_lambda_is_dc", 1e-10, || {
        let mut rng = rng::stream(SEED, 2, 0, Purpose::Data);
        let mut worst = 0.0f64;
        for _ in 0..n {
            let x = random_grid(&mut rng, shape);
            let x0 = random_grid(&mut rng, shape);
            let lambda: f64 = rng.random_range(-1.0..1.0);
            let a = correction::dcw_apply(&x, &x0, BandLambdas::uniform(lambda))?;
            worst = worst.max(a.max_abs_diff(&correction::dc_pixel(&x, &x0, lambda)?)?);
        }
        Ok(worst)
    }));

    checks.push(run_check("step_form_equivalence", 1e-10, || {
        let sched = NoiseSchedule::linear(100, 1e-4, 0.02, SigmaMode::Small)?;
        let mut rng = rng::stream(SEED, 3, 0, Purpose::Data);
        let mut worst = 0.0f64;
        for t in 1..=sched.steps() {
            let x = random_grid(&mut rng, shape);
            let x0 = random_grid(&mut rng, shape);
            let z = random_grid(&mut rng, shape);
            let eps = denoiser::x0_to_eps(&x, &x0, t, &sched)?;
            let a = sampler::ancestral_step(&x, &eps, &z, t, &sched)?;
            let b = sampler::posterior_step(&x, &x0, &z, t, &sched)?;
            worst = worst.max(a.max_abs_diff(&b)?);
        }
        Ok(worst)
    }));

    checks.push(run_check("duality_round_trip", 1e-10, || {
        let sched = NoiseSchedule::linear(100, 1e-4, 0.02, SigmaMode::Small)?;
        let mut rng = rng::stream(SEED, 4, 0, Purpose::Data);
        let mut worst = 0.0f64;
        for t in 1..=sched.steps() {
            let x = random_grid(&mut rng, shape);
            let x0 = random_grid(&mut rng, shape);
            let back = denoiser::eps_to_x0(&x, &denoiser::x0_to_eps(&x, &x0, t, &sched)?, t, &sched)?;
            worst = worst.max(back.max_abs_diff(&x0)? / (1.0 + x0.values().iter().fold(0.0f64, |m, v| m.max(v.abs()))));
        }
        Ok(worst)
    }));

    checks.push(run_check("zero_lambda_identity", 0.0, || {
        let sched = NoiseSchedule::linear(100, 1e-4, 0.02, SigmaMode::Small)?;
        let mut rng = rng::stream(SEED, 5, 0, Purpose::Data);
        let mut worst = 0.0f64;
        let configs = [
            CorrectionConfig::none(),
            CorrectionConfig::variance(CorrectionMode::Dcw, 0.0, 1.0)?,
            CorrectionConfig::variance(CorrectionMode::Dc, 0.0, 1.0)?,
            CorrectionConfig::constant(CorrectionMode::Dcw, 0.0, 0.0)?,
        ];
        for t in 1..=sched.steps() {
            let x = random_grid(&mut rng, shape);
            let x0 = random_grid(&mut rng, shape);
            for c in &configs {
                let y = c.apply(t, &sched, &x, &x0)?;
                if y.values() != x.values() {
                    worst = worst.max(y.max_abs_diff(&x)?.max(f64::MIN_POSITIVE));
                }
            }
        }
        Ok(worst)
    }));

    checks.push(run_check("theorem_degeneracy", 1e-12, || {
        let sched = NoiseSchedule::linear(100, 1e-4, 0.02, SigmaMode::Small)?;
        let mut worst = 0.0f64;
        for t in 1..sched.steps() {
            let s = sched.snr(t)?;
            worst = worst.max((theory::snr_theorem(1.0, 0.0, t, &sched)? - s).abs() / s);
            worst = worst.max((theory::gamma_hat_step(1.0, t, &sched)? - 1.0).abs());
        }
        Ok(worst)
    }));

    checks.push(run_check("theorem_strict_drop", 0.0, || {
        let sched = NoiseSchedule::linear(100, 1e-4, 0.02, SigmaMode::Small)?;
        let mut rng = rng::stream(SEED, 6, 0, Purpose::Data);
        let mut violations = 0.0;
        for _ in 0..n {
            let t = rng.random_range(1..sched.steps());
            let g: f64 = rng.random_range(0.5..1.0);
            let phi: f64 = rng.random_range(0.0..0.5);
            let (g, phi) = if rng.random_bool(0.5) { (g, 0.0) } else { (1.0, phi.max(1e-3)) };
            if theory::snr_theorem(g, phi, t, &sched)? >= sched.snr(t)? {
                violations += 1.0;
            }
        }
        Ok(violations)
    }));

    checks.push(run_check("psi_consistency", 1e-12, || {
        let sched = NoiseSchedule::linear(100, 1e-4, 0.02, SigmaMode::Small)?;
        let mut rng = rng::stream(SEED, 7, 0, Purpose::Data);
        let mut worst = 0.0f64;
        for _ in 0..n {
            let t = rng.random_range(2..=sched.steps());
            let g: f64 = rng.random_range(0.5..1.0);
            let phi: f64 = rng.random_range(0.0..0.5);
            let law = theory::biased_step_law(g, phi, t, &sched)?;
            let gh = theory::gamma_hat_step(g, t, &sched)?;
            let ab = sched.alpha_bar(t - 1)?;
            let psi = theory::psi(gh, phi, t, &sched)?;
            // Total noise variance splits into the ideal part plus ψ².
            worst = worst.max((law.noise_std.powi(2) - (gh * gh * (1.0 - ab) + psi * psi)).abs());
        }
        Ok(worst)
    }));

    checks.push(run_check("worker_determinism", 0.0, || {
        let sched = NoiseSchedule::linear(30, 1e-3, 0.2, SigmaMode::Small)?;
        let data = GaussianMixture::single(Grid::filled(shape, 0.3)?, 0.25)?;
        let model = BiasedDenoiser::new(ExactDenoiser::new(data), BiasProfile::constant(0.98, 0.1)?);
        let corr = CorrectionConfig::variance(CorrectionMode::Dcw, 0.05, 0.95)?;
        let run = |threads| {
            parallel::with_threads(Some(threads), || sampler::run_reverse(&model, shape, &sched, &corr, 100, SEED, RecordFlags::none()))?
        };
        let a = sampler::trajectories_csv(&run(1)?);
        let b = sampler::trajectories_csv(&run(3)?);
        Ok(if a == b { 0.0 } else { 1.0 })
    }));

    SelftestSummary { checks }
}
