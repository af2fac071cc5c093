//! Experiment orchestration: runs a configured experiment, writes its CSVs,
//! a JSON report and a manifest into `output.root/<config name>/`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Config, ExperimentKind};
use crate::diagnostics;
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarStats};
use crate::metrics::{self, EnergyReference, MetricRow};
use crate::parallel;
use crate::rng;
use crate::sampler::{self, Trajectory};
use crate::search::{self, Benchmark};
use crate::theory::TheoryCurves;

/// A reported number with its standard error (NaN when not applicable).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reported {
    pub value: f64,
    pub stderr: f64,
}

impl Reported {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: f64::NAN }
    }

    fn with(value: f64, stderr: f64) -> Self {
        Self { value, stderr }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub command: String,
    pub experiment: String,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub metrics: BTreeMap<String, Reported>,
    /// Every seed that fed a random stream, by role.
    pub seeds: BTreeMap<String, u64>,
    pub threads: Option<usize>,
    pub wall_clock_seconds: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct ManifestEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest {
    name: String,
    command: String,
    files: Vec<ManifestEntry>,
}

/// Collects the output files of one command.
struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn create(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    fn finish(mut self, mut report: ExperimentReport, started: Instant) -> Result<ExperimentReport> {
        report.outputs = self.files.clone();
        report.outputs.push("report.json".into());
        report.wall_clock_seconds = started.elapsed().as_secs_f64();
        self.write("report.json", &serde_json::to_string_pretty(&report)?)?;
        let mut files = Vec::new();
        let mut names = self.files.clone();
        names.sort();
        for name in names {
            let bytes = std::fs::read(self.dir.join(&name))?;
            files.push(ManifestEntry {
                path: name,
                bytes: bytes.len() as u64,
                sha256: format!("{:x}", Sha256::digest(&bytes)),
            });
        }
        let manifest = Manifest {
            name: report.name.clone(),
            command: report.command.clone(),
            files,
        };
        std::fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(report)
    }
}

fn blank_report(cfg: &Config, command: &str, threads: Option<usize>) -> Result<ExperimentReport> {
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        command: command.to_string(),
        experiment: cfg.experiment.as_str().to_string(),
        config: cfg.snapshot()?,
        outputs: Vec::new(),
        metrics: BTreeMap::new(),
        seeds: BTreeMap::new(),
        threads,
        wall_clock_seconds: 0.0,
        notes: Vec::new(),
    })
}

/// Loads a config and runs its experiment with the worker cap from `SNRLAB_THREADS`.
pub fn run_experiment_path(path: &Path) -> Result<ExperimentReport> {
    let cfg = Config::from_path(path)?;
    run_experiment(&cfg, parallel::threads_from_env()?)
}

pub fn run_experiment(cfg: &Config, threads: Option<usize>) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut report = blank_report(cfg, "run", threads)?;
    let sched = cfg.build_schedule()?;
    let data = cfg.build_data()?;
    let model = cfg.denoiser.build(&data, &sched)?;
    let mut out = Output::create(cfg.output_dir())?;
    let seed = cfg.run.seed;
    report.seeds.insert("run.seed".into(), seed);

    parallel::with_threads(threads, || -> Result<()> {
        match cfg.experiment {
            ExperimentKind::Sample => {
                let trajs = sampler::run_sampler(&*model, data.shape(), &sched, &cfg.correction, cfg.run.sampler, cfg.run.n_chains, seed, cfg.run.record)?;
                out.write("trajectories.csv", &sampler::trajectories_csv(&trajs))?;
                if cfg.run.record.states {
                    out.write("states.csv", &sampler::states_csv(&trajs))?;
                }
                if cfg.run.record.x0_hat {
                    out.write("x0_hat.csv", &prediction_csv(&trajs, |t| t.recorded_x0_hat.as_deref()))?;
                }
                if cfg.run.record.eps_hat {
                    out.write("eps_hat.csv", &prediction_csv(&trajs, |t| t.recorded_eps_hat.as_deref()))?;
                }
                let terminal: ScalarStats = trajs.iter().map(|t| t.terminal().mean_sq()).collect();
                report.metrics.insert("terminal_mean_sq_norm".into(), Reported::with(terminal.mean(), terminal.stderr()));
                report.metrics.insert("data_mean_sq_norm".into(), Reported::exact(data.mean_sq_norm()));
            }
            ExperimentKind::SlidingWindow => {
                let d = &cfg.diagnostics;
                let w = diagnostics::sliding_window(&*model, &sched, &data, &d.s_list, &d.t_list, d.n, seed)?;
                out.write("sliding_window.csv", &w.to_csv())?;
                if data.modes() == 1 && cfg.denoiser.kind == crate::config::DenoiserKind::Exact {
                    let (s0, m2) = (data.variances()[0], data.means()[0].mean_sq());
                    let mut worst = 0.0f64;
                    for (i, s) in d.s_list.iter().enumerate() {
                        for (j, t) in d.t_list.iter().enumerate() {
                            let c = w.cell(i, j);
                            let exact = diagnostics::sliding_window_exact(&sched, s0, m2, *s, *t)?;
                            worst = worst.max((c.mean - exact).abs() / c.stderr);
                        }
                    }
                    report.metrics.insert("max_abs_z_vs_closed_form".into(), Reported::exact(worst));
                }
            }
            ExperimentKind::ForwardVsReverse => {
                let fr = diagnostics::forward_vs_reverse(&*model, &sched, &data, &cfg.correction, cfg.diagnostics.n, seed)?;
                out.write("norms.csv", &fr.to_csv())?;
                report.metrics.insert("dominance_fraction".into(), Reported::exact(fr.dominance_fraction()));
                report.metrics.insert("separated_3se".into(), Reported::exact(fr.separated(3.0) as f64));
                report.seeds.insert("forward".into(), rng::child_seed(seed, 1));
                report.seeds.insert("reverse".into(), rng::child_seed(seed, 2));
            }
            ExperimentKind::ReconNorms => {
                let r = diagnostics::reconstruction_norms(&*model, &sched, &data, cfg.diagnostics.n, seed)?;
                out.write("recon_norms.csv", &r.to_csv())?;
                let worst = r.gap.iter().map(|g| g.mean / g.stderr).fold(f64::NEG_INFINITY, f64::max);
                report.metrics.insert("max_paired_z_forward_above_data".into(), Reported::exact(worst));
                report.seeds.insert("forward".into(), rng::child_seed(seed, 1));
                report.seeds.insert("reverse".into(), rng::child_seed(seed, 2));
            }
            ExperimentKind::TheoryCurves => write_theory(cfg, &sched, &data, &mut out, &mut report)?,
            ExperimentKind::Metrics => {
                let trajs = sampler::run_sampler(&*model, data.shape(), &sched, &cfg.correction, cfg.run.sampler, cfg.run.n_chains, seed, cfg.run.record)?;
                let samples: Vec<Grid> = trajs.iter().map(|t| t.terminal().clone()).collect();
                let m = &cfg.metrics;
                let reference_set: Vec<Grid> = parallel::map_indexed(m.n_data, |i| Ok(data.sample(m.seed, i as u64)))?;
                let control_seed = rng::child_seed(m.seed, 1);
                let control: Vec<Grid> = parallel::map_indexed(samples.len(), |i| Ok(data.sample(control_seed, i as u64)))?;
                let reference = EnergyReference::new(&reference_set)?;
                let ed = reference.distance(&samples)?;
                let ed_control = reference.distance(&control)?;
                let sw = metrics::sliced_wasserstein(&samples, &reference_set, m.n_proj, m.seed)?;
                let sw_control = metrics::sliced_wasserstein(&control, &reference_set, m.n_proj, m.seed)?;
                let row = |name: &str, value: f64| MetricRow {
                    metric_name: name.into(),
                    value,
                    n_a: samples.len(),
                    n_b: reference_set.len(),
                    seed: m.seed,
                };
                let rows = vec![
                    row("energy_distance", ed.value),
                    row("energy_distance_stderr", ed.stderr),
                    row("sliced_wasserstein", sw),
                    row("energy_distance_control", ed_control.value),
                    row("energy_distance_control_stderr", ed_control.stderr),
                    row("sliced_wasserstein_control", sw_control),
                ];
                out.write("metrics.csv", &metrics::metrics_csv(&rows))?;
                report.metrics.insert("energy_distance".into(), Reported::with(ed.value, ed.stderr));
                report.metrics.insert("energy_distance_control".into(), Reported::with(ed_control.value, ed_control.stderr));
                report.metrics.insert("sliced_wasserstein".into(), Reported::exact(sw));
                report.metrics.insert("sliced_wasserstein_control".into(), Reported::exact(sw_control));
                report.seeds.insert("metrics.seed".into(), m.seed);
                report.seeds.insert("control".into(), control_seed);
                report.notes.push("control rows compare a fresh data draw of the same size against the reference".into());
            }
        }
        Ok(())
    })??;
    out.finish(report, started)
}

fn prediction_csv(trajs: &[Trajectory], get: impl Fn(&Trajectory) -> Option<&[Grid]>) -> String {
    let mut s = String::from("chain_id,t,c,h,w,value\n");
    for tr in trajs {
        let Some(preds) = get(tr) else { continue };
        for (t, g) in tr.ts.iter().zip(preds) {
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

fn write_theory(
    cfg: &Config,
    sched: &crate::schedule::NoiseSchedule,
    data: &crate::denoiser::GaussianMixture,
    out: &mut Output,
    report: &mut ExperimentReport,
) -> Result<()> {
    let profile = cfg.denoiser.effective_profile();
    let curves = TheoryCurves::compute(&profile, sched)?;
    out.write("theory_curves.csv", &curves.to_csv())?;
    let dominated = curves.snr_reverse.iter().zip(&curves.snr_forward).all(|(r, f)| r <= f);
    report.metrics.insert("snr_reverse_le_forward_all_t".into(), Reported::exact(f64::from(u8::from(dominated))));
    if !cfg.diagnostics.gamma_psi_t.is_empty() {
        if sched.sigma_mode() != crate::schedule::SigmaMode::Small {
            report.notes.push("gamma_psi closed forms assume sigma = sqrt(beta_tilde); this schedule uses sqrt(beta)".into());
        }
        let rows = cfg
            .diagnostics
            .gamma_psi_t
            .iter()
            .map(|t| diagnostics::estimate_gamma_psi(sched, data, &profile, *t, cfg.diagnostics.n, cfg.run.seed))
            .collect::<Result<Vec<_>>>()?;
        out.write("gamma_psi.csv", &diagnostics::gamma_psi_csv(&rows))?;
        for r in &rows {
            let z_coef = (r.coef_x0 - r.theory.coef_x0) / r.coef_x0_stderr;
            let z_noise = (r.noise_std - r.theory.noise_std) / r.noise_std_stderr;
            report.metrics.insert(format!("gamma_psi.t{}.z_coef_x0", r.t), Reported::exact(z_coef));
            report.metrics.insert(format!("gamma_psi.t{}.z_noise_std", r.t), Reported::exact(z_noise));
            report.metrics.insert(format!("gamma_psi.t{}.snr_rel_err", r.t), Reported::exact(r.snr / r.snr_theory - 1.0));
        }
    }
    Ok(())
}

/// Writes `theory_curves.csv` (and `gamma_psi.csv` when requested) for any config.
pub fn run_theory(cfg: &Config, threads: Option<usize>) -> Result<ExperimentReport> {
    let started = Instant::now();
    let mut report = blank_report(cfg, "theory", threads)?;
    let sched = cfg.build_schedule()?;
    let data = cfg.build_data()?;
    let mut out = Output::create(cfg.output_dir())?;
    report.seeds.insert("run.seed".into(), cfg.run.seed);
    parallel::with_threads(threads, || write_theory(cfg, &sched, &data, &mut out, &mut report))??;
    out.finish(report, started)
}

/// Two-stage search over the correction strengths; writes `search_trace.csv`.
pub fn run_search(cfg: &Config, threads: Option<usize>) -> Result<(ExperimentReport, search::SearchOutcome)> {
    let started = Instant::now();
    let mut report = blank_report(cfg, "search", threads)?;
    let sched = cfg.build_schedule()?;
    let data = cfg.build_data()?;
    let model = cfg.denoiser.build(&data, &sched)?;
    let mut out = Output::create(cfg.output_dir())?;
    let outcome = parallel::with_threads(threads, || -> Result<search::SearchOutcome> {
        let mut bench = Benchmark::new(&*model, &sched, &data, cfg.search.mode, cfg.run.n_chains, cfg.run.seed, cfg.metrics.n_data, cfg.metrics.seed)?;
        bench.n_proj = cfg.metrics.n_proj;
        search::two_stage_search(&bench, &cfg.search)
    })??;
    out.write("search_trace.csv", &outcome.trace_csv())?;
    report.seeds.insert("run.seed".into(), cfg.run.seed);
    report.seeds.insert("metrics.seed".into(), cfg.metrics.seed);
    let m = &mut report.metrics;
    m.insert("lambda_l_star".into(), Reported::exact(outcome.lambda_l_star));
    m.insert("lambda_h_star".into(), Reported::exact(outcome.lambda_h_star));
    m.insert("objective_best".into(), Reported::with(outcome.best.objective, outcome.best.stderr));
    m.insert("objective_baseline".into(), Reported::with(outcome.baseline.objective, outcome.baseline.stderr));
    m.insert("improvement_paired".into(), Reported::with(outcome.improvement.value, outcome.improvement.stderr));
    m.insert("sliced_wasserstein_best".into(), Reported::exact(outcome.sliced_wasserstein_best));
    m.insert("sliced_wasserstein_baseline".into(), Reported::exact(outcome.sliced_wasserstein_baseline));
    for s in &outcome.non_unimodal {
        report.notes.push(format!("{} trace is not first-decreasing-then-increasing", s.as_str()));
    }
    for s in &outcome.boundary_minimum {
        report.notes.push(format!("{} minimum sits on the upper grid edge; widen the grid", s.as_str()));
    }
    let report = out.finish(report, started)?;
    Ok((report, outcome))
}

/// The schedule table `t,beta,alpha_bar,beta_tilde,sigma,snr`.
pub fn schedule_dump(cfg: &Config) -> Result<String> {
    Ok(cfg.build_schedule()?.to_csv())
}

/// Reads the CSV outputs listed in a report, for byte comparisons.
pub fn read_csv_outputs(dir: &Path, report: &ExperimentReport) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for name in report.outputs.iter().filter(|n| n.ends_with(".csv")) {
        out.insert(name.clone(), std::fs::read(dir.join(name)).map_err(Error::Io)?);
    }
    Ok(out)
}
