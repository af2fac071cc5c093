//! Forward perturbation, the reverse-step forms and full reverse chains.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::correction::CorrectionConfig;
use crate::denoiser::{eps_to_x0, x0_to_eps, Denoiser};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarStats, Shape};
use crate::parallel;
use crate::rng::{self, Purpose};
use crate::schedule::NoiseSchedule;

fn combine(a: f64, x: &Grid, b: f64, y: &Grid) -> Result<Grid> {
    crate::grid::axpy(a, x, b, y)
}

/// `sqrt(ab_t) x0 + sqrt(1 - ab_t) eps`, for `t` in `0..=T`.
pub fn forward_perturb(x0: &Grid, t: usize, eps: &Grid, sched: &NoiseSchedule) -> Result<Grid> {
    x0.check_same_shape(eps)?;
    let ab = sched.alpha_bar(t)?;
    combine(ab.sqrt(), x0, (1.0 - ab).sqrt(), eps)
}

/// `(x_t - beta_t / sqrt(1 - ab_t) eps_hat) / sqrt(alpha_t) + sigma_t z`; `z` is
/// ignored at `t = 1`.
pub fn ancestral_step(x_t: &Grid, eps_hat: &Grid, z: &Grid, t: usize, sched: &NoiseSchedule) -> Result<Grid> {
    sched.check_step(t)?;
    x_t.check_same_shape(eps_hat)?;
    x_t.check_same_shape(z)?;
    let inv = 1.0 / sched.alpha(t)?.sqrt();
    let e = sched.beta(t)? / (1.0 - sched.alpha_bar(t)?).sqrt();
    let sigma = if t == 1 { 0.0 } else { sched.sigma(t)? };
    let values = x_t
        .values()
        .iter()
        .zip(eps_hat.values())
        .zip(z.values())
        .map(|((x, eh), zi)| inv * (x - e * eh) + sigma * zi)
        .collect();
    Grid::new(x_t.shape(), values)
}

/// Weights `(c0, ct)` of the posterior mean `c0 x0 + ct x_t` of `q(x_{t-1} | x_t, x0)`.
pub fn posterior_coefficients(t: usize, sched: &NoiseSchedule) -> Result<(f64, f64)> {
    sched.check_step(t)?;
    let (ab, ab_prev) = (sched.alpha_bar(t)?, sched.alpha_bar(t - 1)?);
    let c0 = ab_prev.sqrt() * sched.beta(t)? / (1.0 - ab);
    let ct = sched.alpha(t)?.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
    Ok((c0, ct))
}

/// `c0 x0_hat + ct x_t + sigma_t z`; `z` is ignored at `t = 1`.
pub fn posterior_step(x_t: &Grid, x0_hat: &Grid, z: &Grid, t: usize, sched: &NoiseSchedule) -> Result<Grid> {
    x_t.check_same_shape(x0_hat)?;
    x_t.check_same_shape(z)?;
    let (c0, ct) = posterior_coefficients(t, sched)?;
    let sigma = if t == 1 { 0.0 } else { sched.sigma(t)? };
    let values = x_t
        .values()
        .iter()
        .zip(x0_hat.values())
        .zip(z.values())
        .map(|((x, x0), zi)| c0 * x0 + ct * x + sigma * zi)
        .collect();
    Grid::new(x_t.shape(), values)
}

/// Deterministic DDIM jump from `t` to `t_prev < t`.
pub fn ddim_step(x_t: &Grid, eps_hat: &Grid, t: usize, t_prev: usize, sched: &NoiseSchedule) -> Result<Grid> {
    sched.check_step(t)?;
    if t_prev >= t {
        return Err(Error::InvalidArgument(format!("ddim needs t_prev < t, got {t_prev} >= {t}")));
    }
    let x0_hat = eps_to_x0(x_t, eps_hat, t, sched)?;
    let ab_prev = sched.alpha_bar(t_prev)?;
    combine(ab_prev.sqrt(), &x0_hat, (1.0 - ab_prev).sqrt(), eps_hat)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RecordFlags {
    /// Keep every intermediate state; otherwise only the terminal one.
    pub states: bool,
    pub x0_hat: bool,
    pub eps_hat: bool,
}

impl RecordFlags {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        Self {
            states: true,
            x0_hat: true,
            eps_hat: true,
        }
    }

    /// Parses a list of `states`, `x0_hat`, `eps_hat`.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut out = Self::none();
        for n in names {
            match n.as_ref() {
                "states" => out.states = true,
                "x0_hat" => out.x0_hat = true,
                "eps_hat" => out.eps_hat = true,
                other => return Err(Error::InvalidArgument(format!("unknown record flag `{other}`"))),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerKind {
    Ancestral,
    /// Deterministic DDIM over `steps` evenly spaced timesteps.
    Ddim { steps: usize },
}

impl FromStr for SamplerKind {
    type Err = Error;

    /// `ancestral` or `ddim:<steps>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "ancestral" {
            return Ok(Self::Ancestral);
        }
        if let Some(k) = s.strip_prefix("ddim:") {
            let steps = k
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad ddim step count in `{s}`")))?;
            return Ok(Self::Ddim { steps });
        }
        Err(Error::InvalidArgument(format!("unknown sampler `{s}`")))
    }
}

/// Visited timesteps from `T` down to `0`.
pub fn timesteps(kind: SamplerKind, steps: usize) -> Result<Vec<usize>> {
    match kind {
        SamplerKind::Ancestral => Ok((0..=steps).rev().collect()),
        SamplerKind::Ddim { steps: k } => {
            if k == 0 || k > steps {
                return Err(Error::InvalidArgument(format!("ddim needs 1..={steps} steps, got {k}")));
            }
            let mut ts: Vec<usize> = (1..=k).rev().map(|i| (i * steps).div_ceil(k)).collect();
            ts.push(0);
            Ok(ts)
        }
    }
}

/// One reverse chain.
///
/// `ts` lists visited timesteps from `T` to `0`; `mean_sq[i]` is the per-dimension
/// squared norm of the state at `ts[i]`. The per-step vectors are indexed by the
/// step taken from `ts[i]`, so they have one entry fewer.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub chain_id: u64,
    pub seed: u64,
    pub ts: Vec<usize>,
    pub mean_sq: Vec<f64>,
    pub x0_hat_mean_sq: Vec<f64>,
    pub eps_hat_mean_sq: Vec<f64>,
    /// Every state when recorded, otherwise only the terminal one.
    pub states: Vec<(usize, Grid)>,
    pub recorded_x0_hat: Option<Vec<Grid>>,
    pub recorded_eps_hat: Option<Vec<Grid>>,
}

impl Trajectory {
    pub fn terminal(&self) -> &Grid {
        &self.states.last().expect("trajectory has a terminal state").1
    }
}

/// Outputs of a single reverse step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub x0_hat: Grid,
    pub eps_hat: Grid,
    /// Corrected `x_hat_{t-1}`.
    pub next: Grid,
}

/// Predict with the `(chain, t)` bias stream, take the ancestral step with that
/// cell's step noise, then correct the step output.
pub fn reverse_step<D: Denoiser + ?Sized>(
    model: &D,
    x: &Grid,
    t: usize,
    sched: &NoiseSchedule,
    corr: &CorrectionConfig,
    seed: u64,
    chain: u64,
) -> Result<StepOutput> {
    let mut bias = rng::stream(seed, chain, t as u64, Purpose::BiasNoise);
    let x0_hat = model.predict_x0(x, t, sched, &mut bias)?;
    let eps_hat = x0_to_eps(x, &x0_hat, t, sched)?;
    let z = if t == 1 {
        Grid::zeros(x.shape())
    } else {
        let mut r = rng::stream(seed, chain, t as u64, Purpose::StepNoise);
        Grid::new(x.shape(), rng::normal_vec(&mut r, x.dim()))?
    };
    let raw = ancestral_step(x, &eps_hat, &z, t, sched)?;
    let next = corr.apply(t, sched, &raw, &x0_hat)?;
    Ok(StepOutput { x0_hat, eps_hat, next })
}

/// Standard normal `x_T` of chain `chain`.
pub fn initial_state(shape: Shape, seed: u64, chain: u64, steps: usize) -> Result<Grid> {
    let mut r = rng::stream(seed, chain, steps as u64, Purpose::Init);
    Grid::new(shape, rng::normal_vec(&mut r, shape.len()))
}

/// Runs one chain with the given sampler.
#[allow(clippy::too_many_arguments)]
pub fn run_chain<D: Denoiser + ?Sized>(
    model: &D,
    shape: Shape,
    sched: &NoiseSchedule,
    corr: &CorrectionConfig,
    kind: SamplerKind,
    seed: u64,
    chain: u64,
    record: RecordFlags,
) -> Result<Trajectory> {
    let ts = timesteps(kind, sched.steps())?;
    let mut x = initial_state(shape, seed, chain, sched.steps())?;
    let n_steps = ts.len() - 1;
    let mut traj = Trajectory {
        chain_id: chain,
        seed,
        ts: ts.clone(),
        mean_sq: Vec::with_capacity(ts.len()),
        x0_hat_mean_sq: Vec::with_capacity(n_steps),
        eps_hat_mean_sq: Vec::with_capacity(n_steps),
        states: Vec::new(),
        recorded_x0_hat: record.x0_hat.then(Vec::new),
        recorded_eps_hat: record.eps_hat.then(Vec::new),
    };
    traj.mean_sq.push(x.mean_sq());
    for w in ts.windows(2) {
        let (t, t_prev) = (w[0], w[1]);
        let out = match kind {
            SamplerKind::Ancestral => reverse_step(model, &x, t, sched, corr, seed, chain)?,
            SamplerKind::Ddim { .. } => {
                let mut bias = rng::stream(seed, chain, t as u64, Purpose::BiasNoise);
                let x0_hat = model.predict_x0(&x, t, sched, &mut bias)?;
                let eps_hat = x0_to_eps(&x, &x0_hat, t, sched)?;
                let raw = ddim_step(&x, &eps_hat, t, t_prev, sched)?;
                let next = corr.apply(t, sched, &raw, &x0_hat)?;
                StepOutput { x0_hat, eps_hat, next }
            }
        };
        traj.x0_hat_mean_sq.push(out.x0_hat.mean_sq());
        traj.eps_hat_mean_sq.push(out.eps_hat.mean_sq());
        if let Some(v) = traj.recorded_x0_hat.as_mut() {
            v.push(out.x0_hat);
        }
        if let Some(v) = traj.recorded_eps_hat.as_mut() {
            v.push(out.eps_hat);
        }
        if record.states {
            traj.states.push((t, std::mem::replace(&mut x, out.next)));
        } else {
            x = out.next;
        }
        traj.mean_sq.push(x.mean_sq());
    }
    traj.states.push((0, x));
    Ok(traj)
}

/// Ancestral chains `0..n_chains`, in chain order.
pub fn run_reverse<D: Denoiser + ?Sized>(
    model: &D,
    shape: Shape,
    sched: &NoiseSchedule,
    corr: &CorrectionConfig,
    n_chains: usize,
    seed: u64,
    record: RecordFlags,
) -> Result<Vec<Trajectory>> {
    run_sampler(model, shape, sched, corr, SamplerKind::Ancestral, n_chains, seed, record)
}

#[allow(clippy::too_many_arguments)]
pub fn run_sampler<D: Denoiser + ?Sized>(
    model: &D,
    shape: Shape,
    sched: &NoiseSchedule,
    corr: &CorrectionConfig,
    kind: SamplerKind,
    n_chains: usize,
    seed: u64,
    record: RecordFlags,
) -> Result<Vec<Trajectory>> {
    if n_chains == 0 {
        return Err(Error::InvalidArgument("n_chains must be >= 1".into()));
    }
    parallel::map_indexed(n_chains, |i| run_chain(model, shape, sched, corr, kind, seed, i as u64, record))
}

/// Per-timestep statistics of `mean_sq` across chains, aligned with `ts`.
pub fn state_norm_stats(trajs: &[Trajectory]) -> Result<Vec<(usize, ScalarStats)>> {
    per_index_stats(trajs, |tr| &tr.mean_sq)
}

/// Per-step statistics of `eps_hat_mean_sq`, keyed by the step's `t`.
pub fn eps_norm_stats(trajs: &[Trajectory]) -> Result<Vec<(usize, ScalarStats)>> {
    per_index_stats(trajs, |tr| &tr.eps_hat_mean_sq)
}

/// Per-step statistics of `x0_hat_mean_sq`, keyed by the step's `t`.
pub fn x0_norm_stats(trajs: &[Trajectory]) -> Result<Vec<(usize, ScalarStats)>> {
    per_index_stats(trajs, |tr| &tr.x0_hat_mean_sq)
}

fn per_index_stats(trajs: &[Trajectory], field: impl Fn(&Trajectory) -> &Vec<f64>) -> Result<Vec<(usize, ScalarStats)>> {
    let first = trajs.first().ok_or(Error::Empty("trajectory set"))?;
    let len = field(first).len();
    let mut out: Vec<(usize, ScalarStats)> = first.ts[..len].iter().map(|t| (*t, ScalarStats::new())).collect();
    for tr in trajs {
        let values = field(tr);
        if values.len() != len || tr.ts != first.ts {
            return Err(Error::InvalidArgument("trajectories visit different timesteps".into()));
        }
        for (slot, v) in out.iter_mut().zip(values) {
            slot.1.push(*v);
        }
    }
    Ok(out)
}

/// `chain_id,t,mean_sq_norm` rows in chain then time order.
pub fn trajectories_csv(trajs: &[Trajectory]) -> String {
    let mut s = String::from("chain_id,t,mean_sq_norm\n");
    for tr in trajs {
        for (t, v) in tr.ts.iter().zip(&tr.mean_sq) {
            let _ = writeln!(s, "{},{},{}", tr.chain_id, t, v);
        }
    }
    s
}

/// Full state dump `chain_id,t,c,h,w,value` of recorded states.
pub fn states_csv(trajs: &[Trajectory]) -> String {
    let mut s = String::from("chain_id,t,c,h,w,value\n");
    for tr in trajs {
        for (t, g) in &tr.states {
            let shape = g.shape();
            for c in 0..shape.channels {
                for h in 0..shape.height {
                    for w in 0..shape.width {
                        let _ = writeln!(s, "{},{},{},{},{},{}", tr.chain_id, t, c, h, w, g.get(c, h, w));
                    }
                }
            }
        }
    }
    s
}
