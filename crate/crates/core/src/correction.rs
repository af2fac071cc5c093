//! Differential correction of the reverse-step output, in pixel space and
//! per Haar subband, with the three weight schedules.
//!
//! Every variant has the form `x <- x + lambda * (x - x0_hat)` where `x` is the
//! freshly computed `x_{t-1}` and `x0_hat` the reconstruction that produced it.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::schedule::NoiseSchedule;
use crate::wavelet::{dwt_haar, idwt_haar, Band};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrectionMode {
    None,
    /// Pixel-space correction with the low weight.
    Dc,
    /// Detail subbands (lh, hl, hh) only, with the high weight.
    Dh,
    /// Approximation subband (ll) only, with the low weight.
    Dl,
    /// Low weight on ll, high weight on the detail subbands.
    Dcw,
}

impl FromStr for CorrectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "dc" => Ok(Self::Dc),
            "dh" => Ok(Self::Dh),
            "dl" => Ok(Self::Dl),
            "dcw" => Ok(Self::Dcw),
            _ => Err(Error::InvalidArgument(format!("unknown correction mode `{s}`"))),
        }
    }
}

impl CorrectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Dc => "DC",
            Self::Dh => "DH",
            Self::Dl => "DL",
            Self::Dcw => "DCW",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    /// `low = lambda_l * sigma_t`, `high = (1 - lambda_h) * sigma_t`.
    Variance,
    /// `low = w_l * [t >= t_s]`, `high = w_h * [t < t_s]`.
    Piecewise,
    /// `low = w_l`, `high = w_h` at every step.
    Constant,
}

impl FromStr for WeightKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance" => Ok(Self::Variance),
            "piecewise" => Ok(Self::Piecewise),
            "constant" => Ok(Self::Constant),
            _ => Err(Error::InvalidArgument(format!("unknown weight kind `{s}`"))),
        }
    }
}

impl WeightKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Variance => "variance",
            Self::Piecewise => "piecewise",
            Self::Constant => "constant",
        }
    }
}

/// Correction strengths at one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SubbandWeights {
    pub low: f64,
    pub high: f64,
}

/// One coefficient per Haar subband.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BandLambdas {
    pub ll: f64,
    pub lh: f64,
    pub hl: f64,
    pub hh: f64,
}

impl BandLambdas {
    pub fn uniform(lambda: f64) -> Self {
        Self {
            ll: lambda,
            lh: lambda,
            hl: lambda,
            hh: lambda,
        }
    }

    pub fn split(low: f64, high: f64) -> Self {
        Self {
            ll: low,
            lh: high,
            hl: high,
            hh: high,
        }
    }

    pub fn get(&self, band: Band) -> f64 {
        match band {
            Band::Ll => self.ll,
            Band::Lh => self.lh,
            Band::Hl => self.hl,
            Band::Hh => self.hh,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.ll == 0.0 && self.lh == 0.0 && self.hl == 0.0 && self.hh == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionConfig {
    pub mode: CorrectionMode,
    pub weight_kind: WeightKind,
    pub lambda_l: f64,
    pub lambda_h: f64,
    pub t_s: usize,
    pub w_l: f64,
    pub w_h: f64,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self::none()
    }
}

impl CorrectionConfig {
    pub fn none() -> Self {
        Self {
            mode: CorrectionMode::None,
            weight_kind: WeightKind::Variance,
            lambda_l: 0.0,
            lambda_h: 1.0,
            t_s: 0,
            w_l: 0.0,
            w_h: 0.0,
        }
    }

    /// Variance-scheduled correction: `low = lambda_l sigma_t`, `high = (1 - lambda_h) sigma_t`.
    pub fn variance(mode: CorrectionMode, lambda_l: f64, lambda_h: f64) -> Result<Self> {
        Self {
            mode,
            weight_kind: WeightKind::Variance,
            lambda_l,
            lambda_h,
            ..Self::none()
        }
        .validated()
    }

    pub fn piecewise(mode: CorrectionMode, t_s: usize, w_l: f64, w_h: f64) -> Result<Self> {
        Self {
            mode,
            weight_kind: WeightKind::Piecewise,
            t_s,
            w_l,
            w_h,
            ..Self::none()
        }
        .validated()
    }

    pub fn constant(mode: CorrectionMode, w_l: f64, w_h: f64) -> Result<Self> {
        Self {
            mode,
            weight_kind: WeightKind::Constant,
            w_l,
            w_h,
            ..Self::none()
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.lambda_l.is_finite() && self.lambda_l >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda_l = {} must be >= 0", self.lambda_l)));
        }
        if !(0.0..=1.0).contains(&self.lambda_h) {
            return Err(Error::InvalidArgument(format!("lambda_h = {} must lie in [0, 1]", self.lambda_h)));
        }
        for (name, w) in [("w_l", self.w_l), ("w_h", self.w_h)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} = {w} must be >= 0")));
            }
        }
        Ok(self)
    }

    /// Low/high strengths applied after step `t`.
    pub fn weights(&self, t: usize, sched: &NoiseSchedule) -> Result<SubbandWeights> {
        match self.weight_kind {
            WeightKind::Variance => weights_variance(t, sched, self.lambda_l, self.lambda_h),
            WeightKind::Piecewise => {
                sched.check_step(t)?;
                Ok(weights_piecewise(t, self.t_s, self.w_l, self.w_h))
            }
            WeightKind::Constant => Ok(weights_constant(self.w_l, self.w_h)),
        }
    }

    /// Corrects `x_next` (the output of step `t`) using that step's reconstruction.
    pub fn apply(&self, t: usize, sched: &NoiseSchedule, x_next: &Grid, x0_hat: &Grid) -> Result<Grid> {
        if self.mode == CorrectionMode::None {
            return Ok(x_next.clone());
        }
        let w = self.weights(t, sched)?;
        apply_variant(self.mode, x_next, x0_hat, w)
    }
}

/// `x <- (1 + lambda) x - lambda x0_hat`.
pub fn dc_pixel(x_next: &Grid, x0_hat: &Grid, lambda: f64) -> Result<Grid> {
    x_next.check_same_shape(x0_hat)?;
    if lambda == 0.0 {
        return Ok(x_next.clone());
    }
    crate::grid::axpy(1.0 + lambda, x_next, -lambda, x0_hat)
}

/// Per-subband correction followed by the inverse transform.
pub fn dcw_apply(x_next: &Grid, x0_hat: &Grid, lambdas: BandLambdas) -> Result<Grid> {
    x_next.check_same_shape(x0_hat)?;
    let mut xs = dwt_haar(x_next)?;
    let rs = dwt_haar(x0_hat)?;
    for band in Band::ALL {
        let lambda = lambdas.get(band);
        if lambda == 0.0 {
            continue;
        }
        let target = xs.band_mut(band);
        for (x, r) in target.values.iter_mut().zip(&rs.band(band).values) {
            *x += lambda * (*x - r);
        }
    }
    idwt_haar(&xs)
}

pub fn weights_variance(t: usize, sched: &NoiseSchedule, lambda_l: f64, lambda_h: f64) -> Result<SubbandWeights> {
    let sigma = sched.sigma(t)?;
    Ok(SubbandWeights {
        low: lambda_l * sigma,
        high: (1.0 - lambda_h) * sigma,
    })
}

/// Low weight is active in the early phase `t >= t_s`, high in `t < t_s`.
pub fn weights_piecewise(t: usize, t_s: usize, w_l: f64, w_h: f64) -> SubbandWeights {
    SubbandWeights {
        low: if t >= t_s { w_l } else { 0.0 },
        high: if t < t_s { w_h } else { 0.0 },
    }
}

pub fn weights_constant(w_l: f64, w_h: f64) -> SubbandWeights {
    SubbandWeights { low: w_l, high: w_h }
}

/// Routes the step weights to the subbands each ablation variant touches.
/// A variant whose effective coefficients are all zero returns `x_next` as is.
pub fn apply_variant(mode: CorrectionMode, x_next: &Grid, x0_hat: &Grid, weights: SubbandWeights) -> Result<Grid> {
    x_next.check_same_shape(x0_hat)?;
    let lambdas = match mode {
        CorrectionMode::None => return Ok(x_next.clone()),
        CorrectionMode::Dc => return dc_pixel(x_next, x0_hat, weights.low),
        CorrectionMode::Dl => BandLambdas::split(weights.low, 0.0),
        CorrectionMode::Dh => BandLambdas::split(0.0, weights.high),
        CorrectionMode::Dcw => BandLambdas::split(weights.low, weights.high),
    };
    if lambdas.is_zero() {
        return Ok(x_next.clone());
    }
    dcw_apply(x_next, x0_hat, lambdas)
}
