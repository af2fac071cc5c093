//! C x H x W real fields and moment accumulation.

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

/// Row-major `channels x height x width` field with finite entries and even
/// spatial dimensions.
#[derive(Clone, PartialEq)]
pub struct Grid {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid({}x{}x{}, {:?})", self.channels, self.height, self.width, self.values)
    }
}

/// Shape triple `(channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Grid(format!("dimensions must be positive, got {channels}x{height}x{width}")));
        }
        if !height.is_multiple_of(2) || !width.is_multiple_of(2) {
            return Err(Error::Grid(format!("height and width must be even, got {height}x{width}")));
        }
        Ok(Self { channels, height, width })
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

impl Grid {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(shape.channels, shape.height, shape.width)?;
        if values.len() != shape.len() {
            return Err(Error::Grid(format!(
                "expected {} values for shape {shape}, got {}",
                shape.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Grid(format!("non-finite value at index {i}")));
        }
        Ok(Self::from_parts(shape, values))
    }

    /// Caller guarantees a valid shape, matching length and finite values.
    pub(crate) fn from_parts(shape: Shape, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        Self {
            channels: shape.channels,
            height: shape.height,
            width: shape.width,
            values,
        }
    }

    /// Builds a grid from an unchecked buffer, rejecting non-finite results.
    pub(crate) fn from_computed(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Grid("computation produced a non-finite value".into()));
        }
        Ok(Self::from_parts(shape, values))
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::from_parts(shape, vec![0.0; shape.len()])
    }

    pub fn filled(shape: Shape, value: f64) -> Result<Self> {
        Self::new(shape, vec![value; shape.len()])
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            for h in 0..shape.height {
                for w in 0..shape.width {
                    values.push(f(c, h, w));
                }
            }
        }
        Self::new(shape, values)
    }

    pub fn shape(&self) -> Shape {
        Shape {
            channels: self.channels,
            height: self.height,
            width: self.width,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of scalar entries, `C * H * W`.
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.values[(c * self.height + h) * self.width + w]
    }

    pub fn check_same_shape(&self, other: &Grid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: self.shape().to_string(),
                right: other.shape().to_string(),
            });
        }
        Ok(())
    }

    pub fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `||x||^2 / dim`.
    pub fn mean_sq(&self) -> f64 {
        self.sq_norm() / self.dim() as f64
    }

    pub fn dot(&self, other: &Grid) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn scale(&self, a: f64) -> Result<Grid> {
        Self::from_computed(self.shape(), self.values.iter().map(|v| a * v).collect())
    }

    pub fn max_abs_diff(&self, other: &Grid) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Flat CSV: first line `C,H,W`, then one line of `W` values per `(c, h)` row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},{}\n", self.channels, self.height, self.width);
        for row in self.values.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Grid> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Csv("missing shape header".into()))?;
        let dims: Vec<usize> = header
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Csv(format!("bad shape header `{header}`: {e}")))?;
        if dims.len() != 3 {
            return Err(Error::Csv(format!("shape header needs 3 fields, got `{header}`")));
        }
        let shape = Shape::new(dims[0], dims[1], dims[2])?;
        let mut values = Vec::with_capacity(shape.len());
        for (row, line) in lines.enumerate() {
            for field in line.split(',') {
                let v = field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Csv(format!("row {}: `{field}`: {e}", row + 2)))?;
                values.push(v);
            }
        }
        Grid::new(shape, values)
    }
}

/// Elementwise `a * x + b * y`.
pub fn axpy(a: f64, x: &Grid, b: f64, y: &Grid) -> Result<Grid> {
    x.check_same_shape(y)?;
    let values = x.values.iter().zip(&y.values).map(|(xv, yv)| a * xv + b * yv).collect();
    Grid::from_computed(x.shape(), values)
}

/// Streaming mean and variance of a scalar (Welford), mergeable across
/// partitions in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScalarStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl ScalarStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &ScalarStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for ScalarStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = ScalarStats::new();
        iter.into_iter().for_each(|x| s.push(x));
        s
    }
}

/// Mean squared norm per dimension and elementwise mean of a set of grids.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    pub mean_sq_norm: f64,
    pub mean_sq_norm_stderr: f64,
    pub mean: Grid,
    pub count: u64,
}

/// Mergeable accumulator behind [`MomentStats`].
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    shape: Option<Shape>,
    sq: ScalarStats,
    mean: Vec<f64>,
}

impl Default for MomentAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self {
            shape: None,
            sq: ScalarStats::new(),
            mean: Vec::new(),
        }
    }

    pub fn push(&mut self, x: &Grid) -> Result<()> {
        match self.shape {
            None => {
                self.shape = Some(x.shape());
                self.mean = vec![0.0; x.dim()];
            }
            Some(s) if s != x.shape() => {
                return Err(Error::ShapeMismatch {
                    left: s.to_string(),
                    right: x.shape().to_string(),
                })
            }
            Some(_) => {}
        }
        self.sq.push(x.mean_sq());
        let n = self.sq.count() as f64;
        for (m, v) in self.mean.iter_mut().zip(x.values()) {
            *m += (v - *m) / n;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        let Some(other_shape) = other.shape else {
            return Ok(());
        };
        match self.shape {
            None => {
                *self = other.clone();
                return Ok(());
            }
            Some(s) if s != other_shape => {
                return Err(Error::ShapeMismatch {
                    left: s.to_string(),
                    right: other_shape.to_string(),
                })
            }
            Some(_) => {}
        }
        let n_self = self.sq.count() as f64;
        let n_other = other.sq.count() as f64;
        let total = n_self + n_other;
        for (m, o) in self.mean.iter_mut().zip(&other.mean) {
            *m += (o - *m) * n_other / total;
        }
        self.sq.merge(&other.sq);
        Ok(())
    }

    pub fn finish(&self) -> Result<MomentStats> {
        let shape = self.shape.ok_or(Error::Empty("moment stream"))?;
        Ok(MomentStats {
            mean_sq_norm: self.sq.mean(),
            mean_sq_norm_stderr: self.sq.stderr(),
            mean: Grid::from_parts(shape, self.mean.clone()),
            count: self.sq.count(),
        })
    }
}

pub fn accumulate_moments<'a, I>(samples: I) -> Result<MomentStats>
where
    I: IntoIterator<Item = &'a Grid>,
{
    let mut acc = MomentAccumulator::new();
    for g in samples {
        acc.push(g)?;
    }
    acc.finish()
}
