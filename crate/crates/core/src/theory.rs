//! Closed-form quantities of the biased one-step reverse law.
//!
//! Everything is evaluated teacher-forced: the current sample `x_t` is taken to
//! be an exact forward draw and only the reconstruction is biased,
//! `x0_hat = gamma_t x0 + phi_t eps`. Variances are combined internally and
//! standard deviations are exposed.

use std::fmt::Write as _;

use serde::Serialize;

use crate::denoiser::BiasProfile;
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;

/// Coefficient of `x0_hat` in the posterior-mean form of step `t`.
fn x0_coef(t: usize, sched: &NoiseSchedule) -> Result<f64> {
    let ab_prev = sched.alpha_bar(t - 1)?;
    Ok(ab_prev.sqrt() * sched.beta(t)? / (1.0 - sched.alpha_bar(t)?))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::Profile(format!("gamma {gamma} outside (0, 1]")))
    }
}

/// `gamma_hat_{t-1} = ((1 - alpha_t) gamma_t + alpha_t (1 - ab_{t-1})) / (1 - ab_t)`.
pub fn gamma_hat_step(gamma_t: f64, t: usize, sched: &NoiseSchedule) -> Result<f64> {
    check_gamma(gamma_t)?;
    sched.check_step(t)?;
    // same value as the ratio above, written so that gamma_t = 1 gives exactly 1
    Ok(1.0 - sched.beta(t)? * (1.0 - gamma_t) / (1.0 - sched.alpha_bar(t)?))
}

/// Signal coefficient on `x0` and total noise standard deviation of `x_hat_{t-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepLaw {
    pub coef_x0: f64,
    pub noise_std: f64,
}

/// Law of `x_hat_{t-1}` after one posterior step from an exact `x_t`, where
/// the posterior noise is the small-sigma `sqrt(beta_tilde_t)`.
pub fn biased_step_law(gamma_t: f64, phi_t: f64, t: usize, sched: &NoiseSchedule) -> Result<StepLaw> {
    let gh = gamma_hat_step(gamma_t, t, sched)?;
    let ab_prev = sched.alpha_bar(t - 1)?;
    let injected = x0_coef(t, sched)? * phi_t;
    Ok(StepLaw {
        coef_x0: gh * ab_prev.sqrt(),
        noise_std: (1.0 - ab_prev + injected * injected).sqrt(),
    })
}

/// `psi_{t-1}`: noise left after writing `x_hat_{t-1} = gamma_hat x_{t-1} + psi eps`.
pub fn psi(gamma_hat_prev: f64, phi_t: f64, t: usize, sched: &NoiseSchedule) -> Result<f64> {
    check_gamma(gamma_hat_prev)?;
    sched.check_step(t)?;
    let injected = x0_coef(t, sched)? * phi_t;
    let shrink = (1.0 - gamma_hat_prev * gamma_hat_prev) * (1.0 - sched.alpha_bar(t - 1)?);
    Ok((injected * injected + shrink).sqrt())
}

/// SNR of `x_hat_t` produced by step `t + 1` with shrinkage `gamma_hat_t`
/// and reconstruction noise `phi_{t+1}`.
pub fn snr_theorem(gamma_hat_t: f64, phi_next: f64, t: usize, sched: &NoiseSchedule) -> Result<f64> {
    if t == 0 || t >= sched.steps() {
        return Err(Error::StepOutOfRange { t, max: sched.steps() - 1 });
    }
    let ab = sched.alpha_bar(t)?;
    let injected = ab.sqrt() * sched.beta(t + 1)? / (1.0 - sched.alpha_bar(t + 1)?) * phi_next;
    Ok(gamma_hat_t * gamma_hat_t * ab / (1.0 - ab + injected * injected))
}

/// Noise scale of the differential signal `x_hat_{t-1} - x0_hat`.
pub fn eta(phi_t: f64, psi_prev: f64) -> f64 {
    phi_t.hypot(psi_prev)
}

/// Per-step theory columns for rows `t = 1..T-1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryCurves {
    pub t: Vec<usize>,
    /// `gamma_hat_t`, produced by step `t + 1`.
    pub gamma_hat: Vec<f64>,
    /// `psi_t`, produced by step `t + 1`.
    pub psi: Vec<f64>,
    pub snr_forward: Vec<f64>,
    pub snr_reverse: Vec<f64>,
    /// `eta_t = sqrt(phi_t^2 + psi_{t-1}^2)`.
    pub eta: Vec<f64>,
}

impl TheoryCurves {
    pub fn compute(profile: &BiasProfile, sched: &NoiseSchedule) -> Result<Self> {
        profile.check_covers(sched)?;
        let steps = sched.steps();
        let mut out = Self {
            t: Vec::with_capacity(steps),
            gamma_hat: Vec::new(),
            psi: Vec::new(),
            snr_forward: Vec::new(),
            snr_reverse: Vec::new(),
            eta: Vec::new(),
        };
        for t in 1..steps {
            let (gamma_next, phi_next) = (profile.gamma(t + 1)?, profile.phi(t + 1)?);
            let gh = gamma_hat_step(gamma_next, t + 1, sched)?;
            let gh_prev = gamma_hat_step(profile.gamma(t)?, t, sched)?;
            let phi = profile.phi(t)?;
            out.t.push(t);
            out.gamma_hat.push(gh);
            out.psi.push(psi(gh, phi_next, t + 1, sched)?);
            out.snr_forward.push(sched.snr(t)?);
            out.snr_reverse.push(snr_theorem(gh, phi_next, t, sched)?);
            out.eta.push(eta(phi, psi(gh_prev, phi, t, sched)?));
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,gamma_hat,psi,snr_forward,snr_reverse,eta\n");
        for i in 0..self.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                self.t[i], self.gamma_hat[i], self.psi[i], self.snr_forward[i], self.snr_reverse[i], self.eta[i]
            );
        }
        s
    }
}
