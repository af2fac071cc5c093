//! Python module `snrlab`: schedules, grids, wavelets, corrections, theory
//! curves, metrics and the experiment runner.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use snrlab_core::correction::{self, CorrectionConfig, CorrectionMode, WeightKind};
use snrlab_core::denoiser::{BiasProfile, BiasedDenoiser, ExactDenoiser, GaussianMixture};
use snrlab_core::grid::{self, Shape};
use snrlab_core::metrics;
use snrlab_core::sampler::{self, RecordFlags};
use snrlab_core::schedule::{self, SigmaMode};
use snrlab_core::selftest::{self, SelftestOptions};
use snrlab_core::theory::{self as th, TheoryCurves};
use snrlab_core::wavelet::{self, Subband, SubbandSet};
use snrlab_core::{config, experiment, parallel};

fn err(e: snrlab_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sigma_mode(s: &str) -> PyResult<SigmaMode> {
    s.parse::<SigmaMode>().map_err(err)
}

#[pyclass(name = "NoiseSchedule", module = "snrlab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySchedule(schedule::NoiseSchedule);

#[pymethods]
impl PySchedule {
    #[staticmethod]
    #[pyo3(signature = (steps, beta_start=1e-4, beta_end=0.02, sigma_mode="small"))]
    fn linear(steps: usize, beta_start: f64, beta_end: f64, sigma_mode: &str) -> PyResult<Self> {
        schedule::NoiseSchedule::linear(steps, beta_start, beta_end, self::sigma_mode(sigma_mode)?).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (steps, offset=0.008, clip=0.999, sigma_mode="small"))]
    fn cosine(steps: usize, offset: f64, clip: f64, sigma_mode: &str) -> PyResult<Self> {
        schedule::NoiseSchedule::cosine(steps, offset, clip, self::sigma_mode(sigma_mode)?).map(Self).map_err(err)
    }

    /// Linear schedule with betas rescaled so that `steps` reaches the same final alpha-bar as 1000 steps.
    #[staticmethod]
    #[pyo3(signature = (steps, sigma_mode="small"))]
    fn desk(steps: usize, sigma_mode: &str) -> PyResult<Self> {
        schedule::NoiseSchedule::desk(steps, self::sigma_mode(sigma_mode)?).map(Self).map_err(err)
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps()
    }

    fn beta(&self, t: usize) -> PyResult<f64> {
        self.0.beta(t).map_err(err)
    }

    fn alpha_bar(&self, t: usize) -> PyResult<f64> {
        self.0.alpha_bar(t).map_err(err)
    }

    fn beta_tilde(&self, t: usize) -> PyResult<f64> {
        self.0.beta_tilde(t).map_err(err)
    }

    fn sigma(&self, t: usize) -> PyResult<f64> {
        self.0.sigma(t).map_err(err)
    }

    fn snr(&self, t: usize) -> PyResult<f64> {
        self.0.snr(t).map_err(err)
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    fn __repr__(&self) -> String {
        format!("NoiseSchedule(steps={}, sigma_mode={:?})", self.0.steps(), self.0.sigma_mode().as_str())
    }
}

#[pyclass(name = "Grid", module = "snrlab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(grid::Grid);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(shape: (usize, usize, usize), values: Vec<f64>) -> PyResult<Self> {
        let s = Shape::new(shape.0, shape.1, shape.2).map_err(err)?;
        grid::Grid::new(s, values).map(Self).map_err(err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.0.channels(), self.0.height(), self.0.width())
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn mean_sq(&self) -> f64 {
        self.0.mean_sq()
    }

    fn max_abs_diff(&self, other: &PyGrid) -> PyResult<f64> {
        self.0.max_abs_diff(&other.0).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.dim()
    }

    fn __repr__(&self) -> String {
        format!("Grid(shape={})", self.0.shape())
    }
}

fn band_tuple(b: &Subband) -> ((usize, usize, usize), Vec<f64>) {
    ((b.channels, b.height, b.width), b.values.clone())
}

fn band_from(t: ((usize, usize, usize), Vec<f64>)) -> PyResult<Subband> {
    let ((channels, height, width), values) = t;
    if values.len() != channels * height * width {
        return Err(PyValueError::new_err("subband values do not match its shape"));
    }
    Ok(Subband { channels, height, width, values })
}

type BandTuple = ((usize, usize, usize), Vec<f64>);

/// Orthonormal one-level Haar transform; returns a dict `{ll, lh, hl, hh}` of `(shape, values)`.
#[pyfunction]
fn dwt_haar<'py>(py: Python<'py>, x: &PyGrid) -> PyResult<Bound<'py, PyDict>> {
    let s = wavelet::dwt_haar(&x.0).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("ll", band_tuple(&s.ll))?;
    d.set_item("lh", band_tuple(&s.lh))?;
    d.set_item("hl", band_tuple(&s.hl))?;
    d.set_item("hh", band_tuple(&s.hh))?;
    Ok(d)
}

#[pyfunction]
fn idwt_haar(ll: BandTuple, lh: BandTuple, hl: BandTuple, hh: BandTuple) -> PyResult<PyGrid> {
    let s = SubbandSet {
        ll: band_from(ll)?,
        lh: band_from(lh)?,
        hl: band_from(hl)?,
        hh: band_from(hh)?,
    };
    wavelet::idwt_haar(&s).map(PyGrid).map_err(err)
}

#[pyclass(name = "Correction", module = "snrlab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCorrection(CorrectionConfig);

#[pymethods]
impl PyCorrection {
    #[staticmethod]
    fn none() -> Self {
        Self(CorrectionConfig::none())
    }

    /// Variance-scaled weights: low bands `lambda_l * sigma_t`, high bands `(1 - lambda_h) * sigma_t`.
    #[staticmethod]
    #[pyo3(signature = (mode, lambda_l, lambda_h=1.0))]
    fn variance(mode: &str, lambda_l: f64, lambda_h: f64) -> PyResult<Self> {
        let mode: CorrectionMode = mode.parse().map_err(err)?;
        CorrectionConfig::variance(mode, lambda_l, lambda_h).map(Self).map_err(err)
    }

    #[staticmethod]
    fn piecewise(mode: &str, t_s: usize, w_l: f64, w_h: f64) -> PyResult<Self> {
        let mode: CorrectionMode = mode.parse().map_err(err)?;
        CorrectionConfig::piecewise(mode, t_s, w_l, w_h).map(Self).map_err(err)
    }

    #[staticmethod]
    fn constant(mode: &str, w_l: f64, w_h: f64) -> PyResult<Self> {
        let mode: CorrectionMode = mode.parse().map_err(err)?;
        CorrectionConfig::constant(mode, w_l, w_h).map(Self).map_err(err)
    }

    /// `(low, high)` weights at step `t`.
    fn weights(&self, t: usize, sched: &PySchedule) -> PyResult<(f64, f64)> {
        let w = self.0.weights(t, &sched.0).map_err(err)?;
        Ok((w.low, w.high))
    }

    fn apply(&self, t: usize, sched: &PySchedule, x_next: &PyGrid, x0_hat: &PyGrid) -> PyResult<PyGrid> {
        self.0.apply(t, &sched.0, &x_next.0, &x0_hat.0).map(PyGrid).map_err(err)
    }

    fn __repr__(&self) -> String {
        let c = &self.0;
        match c.weight_kind {
            WeightKind::Variance => format!("Correction({}, variance, lambda_l={}, lambda_h={})", c.mode.as_str(), c.lambda_l, c.lambda_h),
            WeightKind::Piecewise => format!("Correction({}, piecewise, t_s={}, w_l={}, w_h={})", c.mode.as_str(), c.t_s, c.w_l, c.w_h),
            WeightKind::Constant => format!("Correction({}, constant, w_l={}, w_h={})", c.mode.as_str(), c.w_l, c.w_h),
        }
    }
}

#[pyfunction]
fn dc_pixel(x_next: &PyGrid, x0_hat: &PyGrid, lam: f64) -> PyResult<PyGrid> {
    correction::dc_pixel(&x_next.0, &x0_hat.0, lam).map(PyGrid).map_err(err)
}

#[pyfunction]
fn gamma_hat_step(gamma_t: f64, t: usize, sched: &PySchedule) -> PyResult<f64> {
    th::gamma_hat_step(gamma_t, t, &sched.0).map_err(err)
}

/// `(coef_x0, noise_std)` of x_{t-1} given x_0 after one biased step.
#[pyfunction]
fn biased_step_law(gamma_t: f64, phi_t: f64, t: usize, sched: &PySchedule) -> PyResult<(f64, f64)> {
    let l = th::biased_step_law(gamma_t, phi_t, t, &sched.0).map_err(err)?;
    Ok((l.coef_x0, l.noise_std))
}

#[pyfunction]
fn psi(gamma_hat_prev: f64, phi_t: f64, t: usize, sched: &PySchedule) -> PyResult<f64> {
    th::psi(gamma_hat_prev, phi_t, t, &sched.0).map_err(err)
}

#[pyfunction]
fn snr_theorem(gamma_hat_t: f64, phi_next: f64, t: usize, sched: &PySchedule) -> PyResult<f64> {
    th::snr_theorem(gamma_hat_t, phi_next, t, &sched.0).map_err(err)
}

/// Closed-form curves under a constant bias profile, as a dict of columns.
#[pyfunction]
fn theory_curves<'py>(py: Python<'py>, gamma: f64, phi: f64, sched: &PySchedule) -> PyResult<Bound<'py, PyDict>> {
    let profile = BiasProfile::constant(gamma, phi).map_err(err)?;
    let c = TheoryCurves::compute(&profile, &sched.0).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("t", c.t)?;
    d.set_item("gamma_hat", c.gamma_hat)?;
    d.set_item("psi", c.psi)?;
    d.set_item("snr_forward", c.snr_forward)?;
    d.set_item("snr_reverse", c.snr_reverse)?;
    d.set_item("eta", c.eta)?;
    Ok(d)
}

fn grids(v: &[PyRef<'_, PyGrid>]) -> Vec<grid::Grid> {
    v.iter().map(|g| g.0.clone()).collect()
}

/// Energy distance of `a` against reference `b`: `(value, jackknife stderr)`.
#[pyfunction]
fn energy_distance(a: Vec<PyRef<'_, PyGrid>>, b: Vec<PyRef<'_, PyGrid>>) -> PyResult<(f64, f64)> {
    let e = metrics::energy_distance_with_se(&grids(&a), &grids(&b)).map_err(err)?;
    Ok((e.value, e.stderr))
}

#[pyfunction]
#[pyo3(signature = (a, b, n_proj=50, seed=0))]
fn sliced_wasserstein(a: Vec<PyRef<'_, PyGrid>>, b: Vec<PyRef<'_, PyGrid>>, n_proj: usize, seed: u64) -> PyResult<f64> {
    metrics::sliced_wasserstein(&grids(&a), &grids(&b), n_proj, seed).map_err(err)
}

/// Draw `n` samples from a single Gaussian `N(mean, var I)`.
#[pyfunction]
fn sample_data(mean: &PyGrid, var: f64, n: usize, seed: u64) -> PyResult<Vec<PyGrid>> {
    let data = GaussianMixture::single(mean.0.clone(), var).map_err(err)?;
    Ok((0..n as u64).map(|i| PyGrid(data.sample(seed, i))).collect())
}

/// Terminal samples of reverse chains over single-Gaussian data with an
/// optionally biased exact denoiser.
#[pyfunction]
#[pyo3(signature = (mean, var, sched, n_chains, seed=0, gamma=1.0, phi=0.0, correction=None, threads=None))]
#[allow(clippy::too_many_arguments)]
fn sample(
    py: Python<'_>,
    mean: &PyGrid,
    var: f64,
    sched: &PySchedule,
    n_chains: usize,
    seed: u64,
    gamma: f64,
    phi: f64,
    correction: Option<&PyCorrection>,
    threads: Option<usize>,
) -> PyResult<Vec<PyGrid>> {
    let data = GaussianMixture::single(mean.0.clone(), var).map_err(err)?;
    let shape = data.shape();
    let model = BiasedDenoiser::new(ExactDenoiser::new(data), BiasProfile::constant(gamma, phi).map_err(err)?);
    let corr = correction.map(|c| c.0).unwrap_or_else(CorrectionConfig::none);
    let sched = sched.0.clone();
    let trajs = py
        .detach(|| {
            parallel::with_threads(threads, || sampler::run_reverse(&model, shape, &sched, &corr, n_chains, seed, RecordFlags::none()))?
        })
        .map_err(err)?;
    Ok(trajs.iter().map(|t| PyGrid(t.terminal().clone())).collect())
}

/// Run the experiment described by the config file; returns the JSON report.
#[pyfunction]
#[pyo3(signature = (path, threads=None))]
fn run_experiment(py: Python<'_>, path: PathBuf, threads: Option<usize>) -> PyResult<String> {
    let report = py
        .detach(|| {
            let cfg = config::Config::from_path(&path)?;
            experiment::run_experiment(&cfg, threads)
        })
        .map_err(err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// `(passed, summary text)` of the invariant suite.
#[pyfunction]
#[pyo3(signature = (trials=200, haar_scale=0.5))]
fn run_selftest(trials: usize, haar_scale: f64) -> (bool, String) {
    let s = selftest::selftest(SelftestOptions { haar_scale, trials });
    (s.passed(), s.render())
}

#[pymodule]
fn snrlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchedule>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyCorrection>()?;
    m.add_function(wrap_pyfunction!(dwt_haar, m)?)?;
    m.add_function(wrap_pyfunction!(idwt_haar, m)?)?;
    m.add_function(wrap_pyfunction!(dc_pixel, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_hat_step, m)?)?;
    m.add_function(wrap_pyfunction!(biased_step_law, m)?)?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(snr_theorem, m)?)?;
    m.add_function(wrap_pyfunction!(theory_curves, m)?)?;
    m.add_function(wrap_pyfunction!(energy_distance, m)?)?;
    m.add_function(wrap_pyfunction!(sliced_wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(sample_data, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_selftest, m)?)?;
    Ok(())
}
