//! Closed-form denoisers for Gaussian-mixture data.
//!
//! The exact denoiser returns the posterior mean `E[x_0 | x_t]`. The biased
//! wrapper turns any inner reconstruction into `gamma_t * inner + phi_t * noise`,
//! the controllable shrink-plus-noise error model used throughout the crate.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, Shape};
use crate::rng::{self, Purpose, StreamRng};
use crate::schedule::NoiseSchedule;

/// Isotropic Gaussian mixture over grids.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Grid>,
    variances: Vec<f64>,
    log_weights: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Grid>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Mixture("at least one mode is required".into()));
        }
        if weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::Mixture(format!(
                "{} weights, {} means and {} variances",
                weights.len(),
                means.len(),
                variances.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Mixture(format!("weight {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Mixture(format!("weights sum to {total}, not 1")));
        }
        if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Mixture(format!("variance {v} is not positive")));
        }
        for m in &means[1..] {
            means[0].check_same_shape(m)?;
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            means,
            variances,
            log_weights,
        })
    }

    pub fn single(mean: Grid, variance: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    pub fn shape(&self) -> Shape {
        self.means[0].shape()
    }

    pub fn modes(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Grid] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// `E||x_0||^2 / dim`.
    pub fn mean_sq_norm(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, m), v)| w * (m.mean_sq() + v))
            .sum()
    }

    /// Draws sample `index` of the data stream keyed by `seed`.
    pub fn sample(&self, seed: u64, index: u64) -> Grid {
        let k = if self.modes() == 1 {
            0
        } else {
            let u: f64 = rng::stream(seed, index, 0, Purpose::Component).random();
            let mut acc = 0.0;
            let mut pick = self.modes() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            pick
        };
        let mut r = rng::stream(seed, index, 0, Purpose::Data);
        let sd = self.variances[k].sqrt();
        let mean = self.means[k].values();
        let values = mean
            .iter()
            .map(|m| {
                let z: f64 = r.sample(rand_distr::StandardNormal);
                m + sd * z
            })
            .collect();
        Grid::from_parts(self.shape(), values)
    }

    /// Exact posterior mean `E[x_0 | x_t = x]`.
    ///
    /// Given mode k, `x_t ~ N(sqrt(ab) mu_k, (ab s_k^2 + 1 - ab) I)` and the
    /// conjugate posterior mean is `mu_k + sqrt(ab) s_k^2 / v_k (x - sqrt(ab) mu_k)`.
    /// Responsibilities are normalized in log space.
    pub fn posterior_x0(&self, x: &Grid, t: usize, sched: &NoiseSchedule) -> Result<Grid> {
        self.means[0].check_same_shape(x)?;
        let ab = sched.alpha_bar(t)?;
        sched.check_step(t)?;
        let sqrt_ab = ab.sqrt();
        let dim = x.dim() as f64;
        let xv = x.values();

        if self.modes() == 1 {
            let (mu, s2) = (self.means[0].values(), self.variances[0]);
            let gain = sqrt_ab * s2 / (ab * s2 + 1.0 - ab);
            let values = mu.iter().zip(xv).map(|(m, xi)| m + gain * (xi - sqrt_ab * m)).collect();
            return Grid::from_computed(x.shape(), values);
        }

        let mut log_r = Vec::with_capacity(self.modes());
        for k in 0..self.modes() {
            let v = ab * self.variances[k] + 1.0 - ab;
            let dist: f64 = self.means[k]
                .values()
                .iter()
                .zip(xv)
                .map(|(m, xi)| (xi - sqrt_ab * m).powi(2))
                .sum();
            log_r.push(self.log_weights[k] - 0.5 * dim * v.ln() - dist / (2.0 * v));
        }
        let max = log_r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut resp: Vec<f64> = log_r.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = resp.iter().sum();
        resp.iter_mut().for_each(|r| *r /= z);

        let mut out = vec![0.0; x.dim()];
        for (k, r) in resp.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            let s2 = self.variances[k];
            let gain = sqrt_ab * s2 / (ab * s2 + 1.0 - ab);
            for ((o, m), xi) in out.iter_mut().zip(self.means[k].values()).zip(xv) {
                *o += r * (m + gain * (xi - sqrt_ab * m));
            }
        }
        Grid::from_computed(x.shape(), out)
    }
}

/// Per-timestep or constant sequence, indexed by `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub enum StepValues {
    Constant(f64),
    PerStep(Vec<f64>),
}

impl StepValues {
    pub fn at(&self, t: usize) -> Result<f64> {
        match self {
            StepValues::Constant(v) => Ok(*v),
            StepValues::PerStep(v) => {
                if t == 0 || t > v.len() {
                    Err(Error::StepOutOfRange { t, max: v.len() })
                } else {
                    Ok(v[t - 1])
                }
            }
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            StepValues::Constant(v) => std::slice::from_ref(v),
            StepValues::PerStep(v) => v,
        }
    }
}

/// Shrinkage `gamma_t` and noise scale `phi_t` of the biased reconstruction
/// `gamma_t * x0 + phi_t * eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasProfile {
    gamma: StepValues,
    phi: StepValues,
}

impl BiasProfile {
    pub fn new(gamma: StepValues, phi: StepValues) -> Result<Self> {
        if let Some(g) = gamma.values().iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
            return Err(Error::Profile(format!("gamma {g} outside (0, 1]")));
        }
        if let Some(p) = phi.values().iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Profile(format!("phi {p} must be finite and non-negative")));
        }
        if gamma.values().is_empty() || phi.values().is_empty() {
            return Err(Error::Profile("empty sequence".into()));
        }
        Ok(Self { gamma, phi })
    }

    pub fn constant(gamma: f64, phi: f64) -> Result<Self> {
        Self::new(StepValues::Constant(gamma), StepValues::Constant(phi))
    }

    pub fn identity() -> Self {
        Self {
            gamma: StepValues::Constant(1.0),
            phi: StepValues::Constant(0.0),
        }
    }

    pub fn gamma(&self, t: usize) -> Result<f64> {
        self.gamma.at(t)
    }

    pub fn phi(&self, t: usize) -> Result<f64> {
        self.phi.at(t)
    }

    /// Uniform bound `M = max_t phi_t`.
    pub fn phi_bound(&self) -> f64 {
        self.phi.values().iter().copied().fold(0.0, f64::max)
    }

    /// Checks that per-step sequences cover every step of `sched`.
    pub fn check_covers(&self, sched: &NoiseSchedule) -> Result<()> {
        for (name, seq) in [("gamma", &self.gamma), ("phi", &self.phi)] {
            if let StepValues::PerStep(v) = seq {
                if v.len() != sched.steps() {
                    return Err(Error::Profile(format!(
                        "{name} has {} entries, schedule has {} steps",
                        v.len(),
                        sched.steps()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `gamma * inner + phi * noise`; returns `inner` untouched for the identity pair.
pub fn biased_x0(inner: &Grid, gamma: f64, phi: f64, noise: &Grid) -> Result<Grid> {
    inner.check_same_shape(noise)?;
    if gamma == 1.0 && phi == 0.0 {
        return Ok(inner.clone());
    }
    let values = inner
        .values()
        .iter()
        .zip(noise.values())
        .map(|(x, n)| gamma * x + phi * n)
        .collect();
    Grid::from_computed(inner.shape(), values)
}

/// `eps = (x - sqrt(ab_t) x0) / sqrt(1 - ab_t)`.
pub fn x0_to_eps(x: &Grid, x0_hat: &Grid, t: usize, sched: &NoiseSchedule) -> Result<Grid> {
    x.check_same_shape(x0_hat)?;
    let ab = sched.alpha_bar(t)?;
    if ab >= 1.0 {
        return Err(Error::InvalidArgument(format!("alpha_bar_{t} = 1 has no noise component")));
    }
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let values = x.values().iter().zip(x0_hat.values()).map(|(xi, x0)| (xi - a * x0) / b).collect();
    Grid::from_computed(x.shape(), values)
}

/// `x0 = (x - sqrt(1 - ab_t) eps) / sqrt(ab_t)`.
pub fn eps_to_x0(x: &Grid, eps_hat: &Grid, t: usize, sched: &NoiseSchedule) -> Result<Grid> {
    x.check_same_shape(eps_hat)?;
    let ab = sched.alpha_bar(t)?;
    if ab <= 0.0 {
        return Err(Error::InvalidArgument(format!("alpha_bar_{t} = 0 carries no signal")));
    }
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let values = x.values().iter().zip(eps_hat.values()).map(|(xi, e)| (xi - b * e) / a).collect();
    Grid::from_computed(x.shape(), values)
}

/// A reconstruction model `x0_theta(x, t)`.
///
/// `bias_rng` is the caller's `(chain, t, BiasNoise)` stream; deterministic
/// models never touch it.
pub trait Denoiser: Send + Sync {
    fn predict_x0(&self, x: &Grid, t: usize, sched: &NoiseSchedule, bias_rng: &mut StreamRng) -> Result<Grid>;

    /// The same prediction in noise parameterization.
    fn predict_eps(&self, x: &Grid, t: usize, sched: &NoiseSchedule, bias_rng: &mut StreamRng) -> Result<Grid> {
        let x0 = self.predict_x0(x, t, sched, bias_rng)?;
        x0_to_eps(x, &x0, t, sched)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict_x0(&self, x: &Grid, t: usize, sched: &NoiseSchedule, bias_rng: &mut StreamRng) -> Result<Grid> {
        (**self).predict_x0(x, t, sched, bias_rng)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict_x0(&self, x: &Grid, t: usize, sched: &NoiseSchedule, bias_rng: &mut StreamRng) -> Result<Grid> {
        (**self).predict_x0(x, t, sched, bias_rng)
    }
}

/// Bayes-optimal posterior-mean denoiser.
#[derive(Debug, Clone)]
pub struct ExactDenoiser {
    pub data: GaussianMixture,
}

impl ExactDenoiser {
    pub fn new(data: GaussianMixture) -> Self {
        Self { data }
    }
}

impl Denoiser for ExactDenoiser {
    fn predict_x0(&self, x: &Grid, t: usize, sched: &NoiseSchedule, _bias_rng: &mut StreamRng) -> Result<Grid> {
        self.data.posterior_x0(x, t, sched)
    }
}

/// `gamma_t * inner(x, t) + phi_t * noise` with noise from the bias stream.
#[derive(Debug, Clone)]
pub struct BiasedDenoiser<D> {
    pub inner: D,
    pub profile: BiasProfile,
}

impl<D: Denoiser> BiasedDenoiser<D> {
    pub fn new(inner: D, profile: BiasProfile) -> Self {
        Self { inner, profile }
    }
}

impl<D: Denoiser> Denoiser for BiasedDenoiser<D> {
    fn predict_x0(&self, x: &Grid, t: usize, sched: &NoiseSchedule, bias_rng: &mut StreamRng) -> Result<Grid> {
        let inner = self.inner.predict_x0(x, t, sched, bias_rng)?;
        let (gamma, phi) = (self.profile.gamma(t)?, self.profile.phi(t)?);
        if phi == 0.0 {
            if gamma == 1.0 {
                return Ok(inner);
            }
            return inner.scale(gamma);
        }
        let noise = Grid::from_parts(inner.shape(), rng::normal_vec(bias_rng, inner.dim()));
        biased_x0(&inner, gamma, phi, &noise)
    }
}

/// How a mode's mean grid is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanSpec {
    Constant(f64),
    /// `amplitude * (-1)^(h / cell + w / cell)`, identical across channels.
    Checker { amplitude: f64, cell: usize },
    Explicit(Grid),
}

impl MeanSpec {
    pub fn build(&self, shape: Shape) -> Result<Grid> {
        match self {
            MeanSpec::Constant(c) => Grid::filled(shape, *c),
            MeanSpec::Checker { amplitude, cell } => {
                if *cell == 0 {
                    return Err(Error::InvalidArgument("checker cell size must be positive".into()));
                }
                Grid::from_fn(shape, |_, h, w| {
                    if (h / cell + w / cell) % 2 == 0 {
                        *amplitude
                    } else {
                        -*amplitude
                    }
                })
            }
            MeanSpec::Explicit(g) => {
                if g.shape() != shape {
                    return Err(Error::ShapeMismatch {
                        left: g.shape().to_string(),
                        right: shape.to_string(),
                    });
                }
                Ok(g.clone())
            }
        }
    }
}
