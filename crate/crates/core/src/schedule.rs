//! Discrete-time variance-preserving noise schedules.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reverse-process noise convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    /// sigma_t^2 = beta_t
    Large,
    /// sigma_t^2 = beta_tilde_t (the posterior variance)
    Small,
}

impl FromStr for SigmaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "large" => Ok(SigmaMode::Large),
            "small" => Ok(SigmaMode::Small),
            other => Err(Error::Schedule(format!("unknown sigma mode `{other}`"))),
        }
    }
}

impl SigmaMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SigmaMode::Large => "large",
            SigmaMode::Small => "small",
        }
    }
}

pub const DEFAULT_COSINE_OFFSET: f64 = 0.008;
pub const DEFAULT_COSINE_CLIP: f64 = 0.999;

/// All per-timestep scalars of a schedule with `T` steps.
///
/// Arrays are stored with length `T + 1` so that index `t` is timestep `t`.
/// Index 0 holds the conventions `alpha_bar_0 = 1`, `beta_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    beta_tilde: Vec<f64>,
    sigma_mode: SigmaMode,
}

impl NoiseSchedule {
    /// Builds every derived array from `beta_1..beta_T`.
    pub fn from_betas(betas: &[f64], sigma_mode: SigmaMode) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Schedule("step count must be at least 1".into()));
        }
        if let Some((i, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, b)| !(b.is_finite() && **b > 0.0 && **b < 1.0))
        {
            return Err(Error::Schedule(format!("beta_{} = {b} outside (0, 1)", i + 1)));
        }
        let steps = betas.len();
        let mut beta = Vec::with_capacity(steps + 1);
        let mut alpha = Vec::with_capacity(steps + 1);
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        let mut beta_tilde = Vec::with_capacity(steps + 1);
        beta.push(0.0);
        alpha.push(1.0);
        alpha_bar.push(1.0);
        beta_tilde.push(0.0);
        for &b in betas {
            let a = 1.0 - b;
            let prev = *alpha_bar.last().unwrap();
            let cur = prev * a;
            beta.push(b);
            alpha.push(a);
            alpha_bar.push(cur);
            beta_tilde.push((1.0 - prev) / (1.0 - cur) * b);
        }
        Ok(Self {
            beta,
            alpha,
            alpha_bar,
            beta_tilde,
            sigma_mode,
        })
    }

    /// Betas linearly spaced from `beta_start` to `beta_end` inclusive.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64, sigma_mode: SigmaMode) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Schedule("step count must be at least 1".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Schedule(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let betas: Vec<f64> = if steps == 1 {
            vec![beta_start]
        } else {
            let span = (beta_end - beta_start) / (steps - 1) as f64;
            (0..steps).map(|i| beta_start + span * i as f64).collect()
        };
        Self::from_betas(&betas, sigma_mode)
    }

    /// Cosine schedule: `alpha_bar_t = f(t)/f(0)` with
    /// `f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2)`, betas clipped to `clip`.
    ///
    /// `alpha_bar` is rebuilt from the clipped betas, so it matches `f(t)/f(0)`
    /// wherever the clip is inactive (every step but the last for typical `s`).
    pub fn cosine(steps: usize, offset: f64, clip: f64, sigma_mode: SigmaMode) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Schedule("step count must be at least 1".into()));
        }
        if !(offset > 0.0 && offset.is_finite()) {
            return Err(Error::Schedule(format!("cosine offset must be > 0, got {offset}")));
        }
        if !(clip > 0.0 && clip < 1.0) {
            return Err(Error::Schedule(format!("cosine clip must be in (0, 1), got {clip}")));
        }
        let f = |t: usize| {
            let x = (t as f64 / steps as f64 + offset) / (1.0 + offset) * std::f64::consts::FRAC_PI_2;
            x.cos().powi(2)
        };
        let f0 = f(0);
        let betas: Vec<f64> = (1..=steps)
            .map(|t| {
                let prev = f(t - 1) / f0;
                let cur = f(t) / f0;
                (1.0 - cur / prev).min(clip)
            })
            .collect();
        Self::from_betas(&betas, sigma_mode)
    }

    /// Short-horizon linear schedule: `beta` from `1e-4 * 1000/T` to `0.02 * 1000/T`,
    /// keeping the terminal noise level of the 1000-step schedule. Needs `T > 20`.
    pub fn desk(steps: usize, sigma_mode: SigmaMode) -> Result<Self> {
        let scale = 1000.0 / steps.max(1) as f64;
        Self::linear(steps, 1e-4 * scale, 0.02 * scale, sigma_mode)
    }

    pub fn steps(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn sigma_mode(&self) -> SigmaMode {
        self.sigma_mode
    }

    pub fn with_sigma_mode(mut self, sigma_mode: SigmaMode) -> Self {
        self.sigma_mode = sigma_mode;
        self
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::StepOutOfRange { t, max: self.steps() })
        } else {
            Ok(())
        }
    }

    fn check_index(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            Err(Error::StepOutOfRange { t, max: self.steps() })
        } else {
            Ok(())
        }
    }

    /// `beta_t` for `1 <= t <= T`.
    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.beta[t])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.alpha[t])
    }

    /// `alpha_bar_t` for `0 <= t <= T`; `alpha_bar_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check_index(t)?;
        Ok(self.alpha_bar[t])
    }

    /// Posterior variance `beta_tilde_t`; zero at `t = 1`.
    pub fn beta_tilde(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.beta_tilde[t])
    }

    /// `SNR(t) = alpha_bar_t / (1 - alpha_bar_t)`.
    pub fn snr(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        let ab = self.alpha_bar[t];
        Ok(ab / (1.0 - ab))
    }

    /// Reverse-step noise scale under the schedule's sigma mode.
    pub fn sigma(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(match self.sigma_mode {
            SigmaMode::Large => self.beta[t].sqrt(),
            SigmaMode::Small => self.beta_tilde[t].sqrt(),
        })
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta[1..]
    }

    /// CSV dump with header `t,beta,alpha_bar,beta_tilde,sigma,snr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,beta,alpha_bar,beta_tilde,sigma,snr\n");
        for t in 1..=self.steps() {
            let _ = writeln!(
                out,
                "{t},{},{},{},{},{}",
                self.beta[t],
                self.alpha_bar[t],
                self.beta_tilde[t],
                self.sigma(t).unwrap(),
                self.snr(t).unwrap()
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn single_step_product() {
        let s = NoiseSchedule::linear(1, 0.5, 0.5, SigmaMode::Large).unwrap();
        assert_eq!(s.betas(), &[0.5]);
        assert_eq!(s.alpha_bar(1).unwrap(), 0.5);
        assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
    }

    #[test]
    fn canonical_linear_terminal_alpha_bar() {
        // Oracle: direct product of (1 - beta_i) written out independently.
        let steps = 1000;
        let mut prod = 1.0f64;
        for i in 0..steps {
            let b = 1e-4 + (0.02 - 1e-4) * i as f64 / 999.0;
            prod *= 1.0 - b;
        }
        let s = NoiseSchedule::linear(steps, 1e-4, 0.02, SigmaMode::Large).unwrap();
        assert!(rel(s.alpha_bar(steps).unwrap(), prod) < 1e-12);
        // Frozen value of the oracle above.
        assert!(rel(prod, 4.035_829_765_375_675e-5) < 1e-9, "{prod:e}");
    }

    #[test]
    fn cosine_matches_closed_form_before_clip() {
        let steps = 100;
        let s = NoiseSchedule::cosine(steps, 0.008, 0.999, SigmaMode::Large).unwrap();
        let f = |t: f64| (((t / 100.0 + 0.008) / 1.008) * std::f64::consts::FRAC_PI_2).cos().powi(2);
        for t in 1..steps {
            let direct = f(t as f64) / f(0.0);
            assert!(rel(s.alpha_bar(t).unwrap(), direct) < 1e-10, "t={t}");
        }
        // The last step is clipped: f(T) = cos^2(pi/2) underflows to ~0.
        assert_eq!(s.beta(steps).unwrap(), 0.999);
        let expected = f(99.0) / f(0.0) * 0.001;
        assert!(rel(s.alpha_bar(steps).unwrap(), expected) < 1e-10);
        assert!(s.betas().iter().all(|&b| b > 0.0 && b <= 0.999));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(NoiseSchedule::linear(0, 0.1, 0.2, SigmaMode::Large).is_err());
        assert!(NoiseSchedule::linear(10, 0.0, 0.2, SigmaMode::Large).is_err());
        assert!(NoiseSchedule::linear(10, 0.3, 0.2, SigmaMode::Large).is_err());
        assert!(NoiseSchedule::linear(10, 0.1, 1.0, SigmaMode::Large).is_err());
        assert!(NoiseSchedule::cosine(0, 0.008, 0.999, SigmaMode::Large).is_err());
        assert!(NoiseSchedule::from_betas(&[0.1, f64::NAN], SigmaMode::Large).is_err());
    }

    #[test]
    fn snr_examples() {
        let s = NoiseSchedule::from_betas(&[0.5], SigmaMode::Large).unwrap();
        assert_eq!(s.snr(1).unwrap(), 1.0);
        let s = NoiseSchedule::from_betas(&[0.2], SigmaMode::Large).unwrap();
        assert!((s.snr(1).unwrap() - 4.0).abs() < 1e-12);
        assert!(s.snr(0).is_err());
        assert!(s.snr(2).is_err());
    }

    #[test]
    fn sigma_modes() {
        let large = NoiseSchedule::desk(100, SigmaMode::Large).unwrap();
        let small = large.clone().with_sigma_mode(SigmaMode::Small);
        assert_eq!(small.sigma(1).unwrap(), 0.0);
        for t in 1..=100 {
            assert_eq!(large.sigma(t).unwrap(), large.beta(t).unwrap().sqrt());
            assert!(small.sigma(t).unwrap() <= large.sigma(t).unwrap());
        }
    }

    #[test]
    fn invariants_hold_for_builders() {
        let schedules = [
            NoiseSchedule::desk(100, SigmaMode::Small).unwrap(),
            NoiseSchedule::linear(1000, 1e-4, 0.02, SigmaMode::Small).unwrap(),
            NoiseSchedule::cosine(250, 0.008, 0.999, SigmaMode::Small).unwrap(),
        ];
        for s in &schedules {
            for t in 1..=s.steps() {
                let ab = s.alpha_bar(t).unwrap();
                let prev = s.alpha_bar(t - 1).unwrap();
                assert!(rel(ab, prev * s.alpha(t).unwrap()) <= 1e-12);
                assert!(ab < prev);
                assert!(s.beta_tilde(t).unwrap() <= s.beta(t).unwrap());
                let snr = s.snr(t).unwrap();
                assert!(rel(snr * (1.0 - ab), ab) <= 1e-12);
                if t > 1 {
                    assert!(snr < s.snr(t - 1).unwrap());
                }
            }
        }
    }

    #[test]
    fn csv_header() {
        let s = NoiseSchedule::desk(40, SigmaMode::Small).unwrap();
        let csv = s.to_csv();
        assert!(csv.starts_with("t,beta,alpha_bar,beta_tilde,sigma,snr\n1,"));
        assert_eq!(csv.lines().count(), 41);
        // 0.02 * 1000 / T reaches 1 at T = 20
        assert!(NoiseSchedule::desk(20, SigmaMode::Small).is_err());
    }
}
