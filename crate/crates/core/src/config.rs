//! Experiment configuration.
//!
//! A config is a TOML file whose leaves are addressed by dotted paths such as
//! `schedule.T` or `correction.lambda_l`. Every key is validated up front and
//! unknown keys are rejected by their full path, before any output is written.
//! Relative paths inside the file resolve against the file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::correction::{CorrectionConfig, CorrectionMode, WeightKind};
use crate::denoiser::{BiasProfile, BiasedDenoiser, Denoiser, ExactDenoiser, GaussianMixture, MeanSpec, StepValues};
use crate::error::{Error, Result};
use crate::grid::{Grid, Shape};
use crate::sampler::{RecordFlags, SamplerKind};
use crate::schedule::{NoiseSchedule, SigmaMode, DEFAULT_COSINE_CLIP, DEFAULT_COSINE_OFFSET};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Sample,
    SlidingWindow,
    ForwardVsReverse,
    ReconNorms,
    TheoryCurves,
    Metrics,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        Self::Sample,
        Self::SlidingWindow,
        Self::ForwardVsReverse,
        Self::ReconNorms,
        Self::TheoryCurves,
        Self::Metrics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sample => "sample",
            Self::SlidingWindow => "sliding-window",
            Self::ForwardVsReverse => "forward-vs-reverse",
            Self::ReconNorms => "recon-norms",
            Self::TheoryCurves => "theory-curves",
            Self::Metrics => "metrics",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub cosine_s: f64,
    pub cosine_clip: f64,
    pub sigma_mode: SigmaMode,
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        match self.kind {
            ScheduleKind::Linear => NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end, self.sigma_mode),
            ScheduleKind::Cosine => NoiseSchedule::cosine(self.steps, self.cosine_s, self.cosine_clip, self.sigma_mode),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeConfig {
    pub weight: f64,
    pub mean: MeanSpec,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub shape: Shape,
    pub modes: Vec<ModeConfig>,
}

impl DataConfig {
    pub fn build(&self) -> Result<GaussianMixture> {
        let mut weights = Vec::new();
        let mut means = Vec::new();
        let mut vars = Vec::new();
        for m in &self.modes {
            weights.push(m.weight);
            means.push(m.mean.build(self.shape)?);
            vars.push(m.var);
        }
        GaussianMixture::new(weights, means, vars)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiserKind {
    Exact,
    Biased,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    pub kind: DenoiserKind,
    pub profile: BiasProfile,
}

impl DenoiserConfig {
    pub fn build(&self, data: &GaussianMixture, sched: &NoiseSchedule) -> Result<Box<dyn Denoiser>> {
        let exact = ExactDenoiser::new(data.clone());
        Ok(match self.kind {
            DenoiserKind::Exact => Box::new(exact),
            DenoiserKind::Biased => {
                self.profile.check_covers(sched)?;
                Box::new(BiasedDenoiser::new(exact, self.profile.clone()))
            }
        })
    }

    /// The profile in effect: identity for the exact denoiser.
    pub fn effective_profile(&self) -> BiasProfile {
        match self.kind {
            DenoiserKind::Exact => BiasProfile::identity(),
            DenoiserKind::Biased => self.profile.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_chains: usize,
    pub seed: u64,
    pub record: RecordFlags,
    pub sampler: SamplerKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsConfig {
    pub n: usize,
    pub s_list: Vec<usize>,
    pub t_list: Vec<usize>,
    pub gamma_psi_t: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    pub n_data: usize,
    pub n_proj: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub mode: CorrectionMode,
    pub lambda_l_max: f64,
    /// Largest high-band strength `1 - lambda_h` on the coarse grid.
    pub high_strength_max: f64,
    pub coarse_step: f64,
    pub fine_step: f64,
    /// Search both parameters on a joint coarse grid instead of one after the other.
    pub joint: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// File stem; names the output directory.
    pub name: String,
    pub experiment: ExperimentKind,
    pub schedule: ScheduleConfig,
    pub data: DataConfig,
    pub denoiser: DenoiserConfig,
    pub run: RunConfig,
    pub correction: CorrectionConfig,
    pub diagnostics: DiagnosticsConfig,
    pub metrics: MetricsConfig,
    pub search: SearchConfig,
    pub output_root: PathBuf,
    /// Every setting after defaults, keyed by dotted path.
    pub resolved: BTreeMap<String, toml::Value>,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::config("<path>", format!("cannot name output after {}", path.display())))?
            .to_string();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &name, &base)
    }

    /// Parses config text; `base` anchors relative paths.
    pub fn parse(text: &str, name: &str, base: &Path) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        let mut keys = Keys::new(table, base);
        let cfg = Self::from_keys(&mut keys, name)?;
        keys.finish()?;
        Ok(Self { resolved: keys.resolved, ..cfg })
    }

    fn from_keys(k: &mut Keys, name: &str) -> Result<Self> {
        let experiment = {
            let s: String = k.get_or("experiment.name", "sample".to_string())?;
            s.parse::<ExperimentKind>()?
        };

        let steps = k.get_or("schedule.T", 100usize)?;
        if steps < 2 {
            return Err(Error::config("schedule.T", "needs at least 2 steps"));
        }
        let scale = 1000.0 / steps as f64;
        let schedule = ScheduleConfig {
            kind: match k.get_or("schedule.kind", "linear".to_string())?.as_str() {
                "linear" => ScheduleKind::Linear,
                "cosine" => ScheduleKind::Cosine,
                other => return Err(Error::config("schedule.kind", format!("`{other}` is not linear or cosine"))),
            },
            steps,
            beta_start: k.get_or("schedule.beta_start", 1e-4 * scale)?,
            beta_end: k.get_or("schedule.beta_end", 0.02 * scale)?,
            cosine_s: k.get_or("schedule.cosine_s", DEFAULT_COSINE_OFFSET)?,
            cosine_clip: k.get_or("schedule.cosine_clip", DEFAULT_COSINE_CLIP)?,
            sigma_mode: k.parse_or("schedule.sigma_mode", SigmaMode::Small)?,
        };
        let sched = schedule.build().map_err(|e| Error::config("schedule", e.to_string()))?;

        let shape: Vec<usize> = k.get_or("data.shape", vec![1usize, 8, 8])?;
        let shape = match shape.as_slice() {
            [c, h, w] => Shape::new(*c, *h, *w).map_err(|e| Error::config("data.shape", e.to_string()))?,
            _ => return Err(Error::config("data.shape", "expected [channels, height, width]")),
        };
        let modes = k.modes(shape)?;
        let data = DataConfig { shape, modes };
        data.build().map_err(|e| Error::config("data.modes", e.to_string()))?;

        let kind = match k.get_or("denoiser.kind", "exact".to_string())?.as_str() {
            "exact" => DenoiserKind::Exact,
            "biased" => DenoiserKind::Biased,
            other => return Err(Error::config("denoiser.kind", format!("`{other}` is not exact or biased"))),
        };
        let gamma = k.step_values("denoiser.gamma", 0.98)?;
        let phi = k.step_values("denoiser.phi", 0.1)?;
        let profile = BiasProfile::new(gamma, phi).map_err(|e| Error::config("denoiser", e.to_string()))?;
        profile.check_covers(&sched).map_err(|e| Error::config("denoiser", e.to_string()))?;
        let denoiser = DenoiserConfig { kind, profile };

        let n_chains = k.get_or("run.n_chains", 1000usize)?;
        if n_chains == 0 {
            return Err(Error::config("run.n_chains", "must be >= 1"));
        }
        let record: Vec<String> = k.get_or("run.record", Vec::<String>::new())?;
        let run = RunConfig {
            n_chains,
            seed: k.get_or("run.seed", 0u64)?,
            record: RecordFlags::from_names(&record).map_err(|e| Error::config("run.record", e.to_string()))?,
            sampler: k.parse_or("run.sampler", SamplerKind::Ancestral)?,
        };
        crate::sampler::timesteps(run.sampler, steps).map_err(|e| Error::config("run.sampler", e.to_string()))?;

        let correction = k.correction()?;
        if correction.weight_kind == WeightKind::Piecewise && correction.t_s > steps {
            return Err(Error::config("correction.t_s", format!("must lie in 0..={steps}")));
        }

        let half = (steps / 2).max(1);
        let diagnostics = DiagnosticsConfig {
            n: k.get_or("diagnostics.n", n_chains)?,
            s_list: k.get_or("diagnostics.s_list", vec![half])?,
            t_list: k.get_or("diagnostics.t_list", (1..=steps).collect::<Vec<_>>())?,
            gamma_psi_t: k.get_or("diagnostics.gamma_psi_t", Vec::<usize>::new())?,
        };
        for (key, list) in [
            ("diagnostics.s_list", &diagnostics.s_list),
            ("diagnostics.t_list", &diagnostics.t_list),
            ("diagnostics.gamma_psi_t", &diagnostics.gamma_psi_t),
        ] {
            if let Some(t) = list.iter().find(|t| **t == 0 || **t > steps) {
                return Err(Error::config(key, format!("step {t} outside 1..={steps}")));
            }
        }
        if diagnostics.n == 0 {
            return Err(Error::config("diagnostics.n", "must be >= 1"));
        }

        let metrics = MetricsConfig {
            n_data: k.get_or("metrics.n_data", n_chains)?,
            n_proj: k.get_or("metrics.n_proj", 50usize)?,
            seed: k.get_or("metrics.seed", crate::rng::child_seed(run.seed, 0x5eed))?,
        };
        if metrics.n_data == 0 || metrics.n_proj == 0 {
            return Err(Error::config("metrics", "n_data and n_proj must be >= 1"));
        }

        let search = SearchConfig {
            mode: k.parse_or("search.mode", CorrectionMode::Dcw)?,
            lambda_l_max: k.get_or("search.lambda_l_max", 0.2)?,
            high_strength_max: k.get_or("search.high_strength_max", 0.2)?,
            coarse_step: k.get_or("search.coarse_step", 0.01)?,
            fine_step: k.get_or("search.fine_step", 0.001)?,
            joint: k.get_or("search.joint", false)?,
        };
        if !(search.coarse_step > 0.0 && search.fine_step > 0.0 && search.fine_step <= search.coarse_step) {
            return Err(Error::config("search", "need 0 < fine_step <= coarse_step"));
        }
        if !(search.lambda_l_max >= 0.0 && (0.0..=1.0).contains(&search.high_strength_max)) {
            return Err(Error::config("search", "lambda_l_max >= 0 and high_strength_max in [0, 1] required"));
        }
        if search.mode == CorrectionMode::None {
            return Err(Error::config("search.mode", "a correction mode is required"));
        }

        let output_root = k.path_or("output.root", "out")?;

        Ok(Self {
            name: name.to_string(),
            experiment,
            schedule,
            data,
            denoiser,
            run,
            correction,
            diagnostics,
            metrics,
            search,
            output_root,
            resolved: BTreeMap::new(),
        })
    }

    /// `output.root/<name>`.
    pub fn output_dir(&self) -> PathBuf {
        self.output_root.join(&self.name)
    }

    pub fn build_schedule(&self) -> Result<NoiseSchedule> {
        self.schedule.build()
    }

    pub fn build_data(&self) -> Result<GaussianMixture> {
        self.data.build()
    }

    /// Snapshot of every resolved setting as JSON.
    pub fn snapshot(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(&self.resolved)?)
    }
}

/// Flattened key store that remembers which keys were consumed.
struct Keys {
    values: BTreeMap<String, toml::Value>,
    resolved: BTreeMap<String, toml::Value>,
    base: PathBuf,
}

fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

fn type_error(key: &str, want: &str, got: &toml::Value) -> Error {
    Error::config(key, format!("expected {want}, found {}", got.type_str()))
}

trait FromToml: Sized {
    fn from_toml(key: &str, v: &toml::Value) -> Result<Self>;
    fn to_toml(&self) -> toml::Value;
}

impl FromToml for f64 {
    fn from_toml(key: &str, v: &toml::Value) -> Result<Self> {
        match v {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as f64),
            other => Err(type_error(key, "a number", other)),
        }
    }
    fn to_toml(&self) -> toml::Value {
        toml::Value::Float(*self)
    }
}

impl FromToml for usize {
    fn from_toml(key: &str, v: &toml::Value) -> Result<Self> {
        match v {
            toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            other => Err(type_error(key, "a non-negative integer", other)),
        }
    }
    fn to_toml(&self) -> toml::Value {
        toml::Value::Integer(*self as i64)
    }
}

impl FromToml for u64 {
    fn from_toml(key: &str, v: &toml::Value) -> Result<Self> {
        match v {
            toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            other => Err(type_error(key, "a non-negative integer", other)),
        }
    }
    fn to_toml(&self) -> toml::Value {
        // seeds above i64::MAX are kept as strings in the snapshot
        i64::try_from(*self).map_or_else(|_| toml::Value::String(self.to_string()), toml::Value::Integer)
    }
}

impl FromToml for bool {
    fn from_toml(key: &str, v: &toml::Value) -> Result<Self> {
        v.as_bool().ok_or_else(|| type_error(key, "a boolean", v))
    }
    fn to_toml(&self) -> toml::Value {
        toml::Value::Boolean(*self)
    }
}

impl FromToml for String {
    fn from_toml(key: &str, v: &toml::Value) -> Result<Self> {
        v.as_str().map(str::to_string).ok_or_else(|| type_error(key, "a string", v))
    }
    fn to_toml(&self) -> toml::Value {
        toml::Value::String(self.clone())
    }
}

impl<T: FromToml> FromToml for Vec<T> {
    fn from_toml(key: &str, v: &toml::Value) -> Result<Self> {
        let arr = v.as_array().ok_or_else(|| type_error(key, "an array", v))?;
        arr.iter().map(|x| T::from_toml(key, x)).collect()
    }
    fn to_toml(&self) -> toml::Value {
        toml::Value::Array(self.iter().map(T::to_toml).collect())
    }
}

impl Keys {
    fn new(table: toml::Table, base: &Path) -> Self {
        let mut values = BTreeMap::new();
        flatten("", table, &mut values);
        Self {
            values,
            resolved: BTreeMap::new(),
            base: base.to_path_buf(),
        }
    }

    fn take(&mut self, key: &str) -> Option<toml::Value> {
        self.values.remove(key)
    }

    fn get<T: FromToml>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => {
                let parsed = T::from_toml(key, &v)?;
                self.resolved.insert(key.to_string(), v);
                Ok(Some(parsed))
            }
        }
    }

    fn get_or<T: FromToml>(&mut self, key: &str, default: T) -> Result<T> {
        match self.get(key)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.insert(key.to_string(), default.to_toml());
                Ok(default)
            }
        }
    }

    fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn parse_or<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr<Err = Error>,
    {
        match self.get::<String>(key)? {
            Some(s) => s.parse().map_err(|e: Error| Error::config(key, e.to_string())),
            None => Ok(default),
        }
    }

    fn resolve_path(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base.join(path)
        }
    }

    fn path_or(&mut self, key: &str, default: &str) -> Result<PathBuf> {
        let p: String = self.get_or(key, default.to_string())?;
        Ok(self.resolve_path(&p))
    }

    /// A scalar, or `"csv:<path>"` with one value per step.
    fn step_values(&mut self, key: &str, default: f64) -> Result<StepValues> {
        match self.take(key) {
            None => {
                self.resolved.insert(key.to_string(), toml::Value::Float(default));
                Ok(StepValues::Constant(default))
            }
            Some(toml::Value::String(s)) => {
                let path = s
                    .strip_prefix("csv:")
                    .ok_or_else(|| Error::config(key, "expected a number or \"csv:<path>\""))?;
                let values = read_column(&self.resolve_path(path)).map_err(|e| Error::config(key, e.to_string()))?;
                self.resolved.insert(key.to_string(), toml::Value::String(s.clone()));
                Ok(StepValues::PerStep(values))
            }
            Some(v) => {
                let x = f64::from_toml(key, &v)?;
                self.resolved.insert(key.to_string(), v);
                Ok(StepValues::Constant(x))
            }
        }
    }

    fn modes(&mut self, shape: Shape) -> Result<Vec<ModeConfig>> {
        let key = "data.modes";
        let Some(v) = self.take(key) else {
            let default = toml::Value::Array(vec![toml::Value::Table(
                [
                    ("weight".to_string(), toml::Value::Float(1.0)),
                    ("mean".to_string(), toml::Value::String("checker:0.5".into())),
                    ("var".to_string(), toml::Value::Float(0.25)),
                ]
                .into_iter()
                .collect(),
            )]);
            self.resolved.insert(key.to_string(), default);
            return Ok(vec![ModeConfig {
                weight: 1.0,
                mean: MeanSpec::Checker { amplitude: 0.5, cell: 1 },
                var: 0.25,
            }]);
        };
        let arr = v.as_array().ok_or_else(|| type_error(key, "an array of tables", &v))?;
        if arr.is_empty() {
            return Err(Error::config(key, "at least one mode is required"));
        }
        let mut out = Vec::new();
        for (i, m) in arr.iter().enumerate() {
            let mkey = format!("{key}[{i}]");
            let t = m.as_table().ok_or_else(|| type_error(&mkey, "a table", m))?;
            if let Some(unknown) = t.keys().find(|k| !["weight", "mean", "var"].contains(&k.as_str())) {
                return Err(Error::config(format!("{mkey}.{unknown}"), "unknown key"));
            }
            let weight = match t.get("weight") {
                Some(w) => f64::from_toml(&format!("{mkey}.weight"), w)?,
                None => 1.0,
            };
            let var = f64::from_toml(
                &format!("{mkey}.var"),
                t.get("var").ok_or_else(|| Error::config(format!("{mkey}.var"), "required key is missing"))?,
            )?;
            let mean = match t.get("mean") {
                None => MeanSpec::Constant(0.0),
                Some(v) => self.mean_spec(&format!("{mkey}.mean"), v, shape)?,
            };
            out.push(ModeConfig { weight, mean, var });
        }
        self.resolved.insert(key.to_string(), v.clone());
        Ok(out)
    }

    /// A number, `"constant:<c>"`, `"checker:<amplitude>[:<cell>]"` or `"csv:<path>"`.
    fn mean_spec(&self, key: &str, v: &toml::Value, shape: Shape) -> Result<MeanSpec> {
        if let Ok(c) = f64::from_toml(key, v) {
            return Ok(MeanSpec::Constant(c));
        }
        let s = v.as_str().ok_or_else(|| type_error(key, "a number or mean string", v))?;
        let bad = |msg: &str| Error::config(key, format!("{msg} in `{s}`"));
        let num = |x: &str| x.parse::<f64>().map_err(|_| bad("bad number"));
        let spec = if let Some(rest) = s.strip_prefix("constant:") {
            MeanSpec::Constant(num(rest)?)
        } else if let Some(rest) = s.strip_prefix("checker:") {
            let mut parts = rest.split(':');
            let amplitude = num(parts.next().unwrap_or(""))?;
            let cell = match parts.next() {
                Some(c) => c.parse::<usize>().map_err(|_| bad("bad cell size"))?,
                None => 1,
            };
            if parts.next().is_some() {
                return Err(bad("too many fields"));
            }
            MeanSpec::Checker { amplitude, cell }
        } else if let Some(rest) = s.strip_prefix("csv:") {
            let text = std::fs::read_to_string(self.resolve_path(rest)).map_err(|e| Error::config(key, e.to_string()))?;
            MeanSpec::Explicit(Grid::from_csv(&text).map_err(|e| Error::config(key, e.to_string()))?)
        } else {
            return Err(bad("unknown mean form"));
        };
        spec.build(shape).map_err(|e| Error::config(key, e.to_string()))?;
        Ok(spec)
    }

    fn correction(&mut self) -> Result<CorrectionConfig> {
        let mode: CorrectionMode = self.parse_or("correction.mode", CorrectionMode::None)?;
        let kind: WeightKind = self.parse_or("correction.weight_kind", WeightKind::Variance)?;
        if mode == CorrectionMode::Dcw && kind == WeightKind::Variance {
            for key in ["correction.lambda_l", "correction.lambda_h"] {
                if !self.has(key) {
                    return Err(Error::config(key, "DCW with variance weights needs both lambda_l and lambda_h"));
                }
            }
        }
        let cfg = CorrectionConfig {
            mode,
            weight_kind: kind,
            lambda_l: self.get_or("correction.lambda_l", 0.0)?,
            lambda_h: self.get_or("correction.lambda_h", 1.0)?,
            t_s: self.get_or("correction.t_s", 0usize)?,
            w_l: self.get_or("correction.w_l", 0.0)?,
            w_h: self.get_or("correction.w_h", 0.0)?,
        };
        cfg.validated().map_err(|e| Error::config("correction", e.to_string()))
    }

    fn finish(&self) -> Result<()> {
        match self.values.keys().next() {
            Some(k) => Err(Error::config(k.clone(), "unknown key")),
            None => Ok(()),
        }
    }
}

/// One value per line; a `t,value` pair per line is also accepted and blank
/// lines, `#` comments and a non-numeric header are skipped.
fn read_column(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 && out.is_empty() => continue,
            Err(_) => return Err(Error::Csv(format!("{}:{}: `{line}`", path.display(), i + 1))),
        }
    }
    if out.is_empty() {
        return Err(Error::Csv(format!("{} has no values", path.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config> {
        Config::parse(text, "cfg", Path::new("/tmp"))
    }

    #[test]
    fn defaults() {
        let c = parse("experiment.name = \"sample\"\n").unwrap();
        assert_eq!(c.experiment, ExperimentKind::Sample);
        assert_eq!(c.schedule.steps, 100);
        assert!((c.schedule.beta_start - 1e-3).abs() < 1e-15);
        assert!((c.schedule.beta_end - 0.2).abs() < 1e-15);
        assert_eq!(c.schedule.sigma_mode, SigmaMode::Small);
        assert_eq!(c.correction, CorrectionConfig::none());
        assert_eq!(c.data.modes.len(), 1);
        assert_eq!(c.output_dir(), PathBuf::from("/tmp/out/cfg"));
        assert!(c.resolved.contains_key("schedule.T"));
        assert!(c.resolved.contains_key("run.seed"));
    }

    #[test]
    fn full_config() {
        let text = r#"
            [experiment]
            name = "forward-vs-reverse"
            [schedule]
            kind = "cosine"
            T = 50
            sigma_mode = "large"
            [data]
            shape = [2, 4, 4]
            modes = [ { weight = 0.25, mean = "checker:1.0:2", var = 0.3 },
                      { weight = 0.75, mean = -0.5, var = 0.1 } ]
            [denoiser]
            kind = "biased"
            gamma = 0.9
            phi = 0.2
            [run]
            n_chains = 10
            seed = 42
            record = ["x0_hat"]
            [correction]
            mode = "DCW"
            lambda_l = 0.05
            lambda_h = 0.5
        "#;
        let c = parse(text).unwrap();
        assert_eq!(c.schedule.kind, ScheduleKind::Cosine);
        assert_eq!(c.data.shape, Shape::new(2, 4, 4).unwrap());
        assert_eq!(c.data.modes[0].mean, MeanSpec::Checker { amplitude: 1.0, cell: 2 });
        assert_eq!(c.data.modes[1].mean, MeanSpec::Constant(-0.5));
        assert_eq!(c.denoiser.kind, DenoiserKind::Biased);
        assert_eq!(c.denoiser.profile.gamma(3).unwrap(), 0.9);
        assert!(c.run.record.x0_hat && !c.run.record.states);
        assert_eq!(c.correction.mode, CorrectionMode::Dcw);
        assert_eq!(c.run.seed, 42);
    }

    #[test]
    fn unknown_key_names_path() {
        let err = parse("experiment.name = \"sample\"\ncorection.mode = \"DCW\"\n").unwrap_err();
        assert!(err.to_string().contains("corection.mode"), "{err}");
        let err = parse("experiment.name = \"sample\"\n[correction]\nlambda = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("correction.lambda"), "{err}");
        let err = parse("experiment.name = \"sample\"\ndata.modes = [{ var = 0.2, wieght = 1.0 }]\n").unwrap_err();
        assert!(err.to_string().contains("data.modes[0].wieght"), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(parse("experiment.name = \"nope\"\n"), Err(Error::UnknownExperiment(_))));
        assert_eq!(parse("").unwrap().experiment, ExperimentKind::Sample);
        let e = parse("experiment.name = \"sample\"\nschedule.T = \"ten\"\n").unwrap_err();
        assert!(e.to_string().contains("schedule.T"));
        let e = parse("experiment.name = \"sample\"\ncorrection.mode = \"DCW\"\ncorrection.lambda_l = 0.1\n").unwrap_err();
        assert!(e.to_string().contains("correction.lambda_h"), "{e}");
        assert!(parse("experiment.name = \"sample\"\ncorrection.mode = \"DL\"\ncorrection.lambda_l = 0.1\n").is_ok());
        assert!(parse("experiment.name = \"sample\"\ndenoiser.gamma = 1.5\n").is_err());
        assert!(parse("experiment.name = \"sample\"\nrun.record = [\"everything\"]\n").is_err());
        assert!(parse("experiment.name = \"sample\"\ndiagnostics.t_list = [0, 5]\n").is_err());
        assert!(parse("experiment.name = \"sample\"\nrun.sampler = \"ddim:500\"\n").is_err());
        assert!(parse("experiment.name = \"sample\"\nschedule.T = 10\n").is_err());
    }

    #[test]
    fn per_step_profile_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let column: String = (1..=20).map(|t| format!("{t},{}\n", 1.0 - 0.001 * t as f64)).collect();
        std::fs::write(dir.path().join("gamma.csv"), format!("t,gamma\n{column}")).unwrap();
        let text = "experiment.name = \"theory-curves\"\nschedule.T = 20\nschedule.beta_start = 0.001\nschedule.beta_end = 0.2\ndenoiser.kind = \"biased\"\ndenoiser.gamma = \"csv:gamma.csv\"\n";
        let c = Config::parse(text, "x", dir.path()).unwrap();
        assert!((c.denoiser.profile.gamma(20).unwrap() - 0.98).abs() < 1e-12);
        std::fs::write(dir.path().join("short.csv"), "0.9\n0.9\n").unwrap();
        let text = text.replace("gamma.csv", "short.csv");
        assert!(Config::parse(&text, "x", dir.path()).is_err());
    }
}
