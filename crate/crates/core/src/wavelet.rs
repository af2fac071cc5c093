//! Single-level orthonormal 2-D Haar transform.
//!
//! For each 2x2 block `[[a, b], [c, d]]` of every channel:
//!
//! ```text
//! ll = (a + b + c + d) / 2      a = (ll + lh + hl + hh) / 2
//! lh = (a + b - c - d) / 2      b = (ll + lh - hl - hh) / 2
//! hl = (a - b + c - d) / 2      c = (ll - lh + hl - hh) / 2
//! hh = (a - b - c + d) / 2      d = (ll - lh - hl + hh) / 2
//! ```

use crate::error::{Error, Result};
use crate::grid::{Grid, Shape};

/// Normalization of the orthonormal transform.
pub const HAAR_SCALE: f64 = 0.5;

/// Frequency subband of a single-level decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Ll,
    Lh,
    Hl,
    Hh,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::Ll, Band::Lh, Band::Hl, Band::Hh];

    pub fn is_low(self) -> bool {
        self == Band::Ll
    }
}

/// One half-resolution band, `channels x height x width`.
///
/// Unlike [`Grid`] the spatial sides may be odd (an 2x2 input gives 1x1 bands).
#[derive(Debug, Clone, PartialEq)]
pub struct Subband {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Subband {
    fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    fn same_dims(&self, other: &Subband) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// The four subbands of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    pub ll: Subband,
    pub lh: Subband,
    pub hl: Subband,
    pub hh: Subband,
}

impl SubbandSet {
    pub fn band(&self, band: Band) -> &Subband {
        match band {
            Band::Ll => &self.ll,
            Band::Lh => &self.lh,
            Band::Hl => &self.hl,
            Band::Hh => &self.hh,
        }
    }

    pub fn band_mut(&mut self, band: Band) -> &mut Subband {
        match band {
            Band::Ll => &mut self.ll,
            Band::Lh => &mut self.lh,
            Band::Hl => &mut self.hl,
            Band::Hh => &mut self.hh,
        }
    }

    pub fn energy(&self) -> f64 {
        Band::ALL.iter().map(|&b| self.band(b).sq_norm()).sum()
    }

    /// `sum_f <self^f, other^f>`.
    pub fn dot(&self, other: &SubbandSet) -> f64 {
        Band::ALL
            .iter()
            .map(|&b| {
                self.band(b)
                    .values
                    .iter()
                    .zip(&other.band(b).values)
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
            })
            .sum()
    }
}

pub fn dwt_haar(x: &Grid) -> Result<SubbandSet> {
    dwt_haar_scaled(x, HAAR_SCALE)
}

/// Forward transform with an explicit normalization constant. Only
/// [`HAAR_SCALE`] gives the orthonormal transform; other values exist so the
/// self-test can demonstrate that its energy check catches a broken constant.
pub fn dwt_haar_scaled(x: &Grid, scale: f64) -> Result<SubbandSet> {
    let (c_n, h_n, w_n) = (x.channels(), x.height(), x.width());
    if h_n % 2 != 0 || w_n % 2 != 0 {
        return Err(Error::Grid(format!("Haar DWT needs even sides, got {h_n}x{w_n}")));
    }
    let (bh, bw) = (h_n / 2, w_n / 2);
    let mut out = SubbandSet {
        ll: Subband::zeros(c_n, bh, bw),
        lh: Subband::zeros(c_n, bh, bw),
        hl: Subband::zeros(c_n, bh, bw),
        hh: Subband::zeros(c_n, bh, bw),
    };
    let v = x.values();
    for c in 0..c_n {
        for i in 0..bh {
            for j in 0..bw {
                let top = (c * h_n + 2 * i) * w_n + 2 * j;
                let bottom = top + w_n;
                let (a, b, cc, d) = (v[top], v[top + 1], v[bottom], v[bottom + 1]);
                let k = (c * bh + i) * bw + j;
                out.ll.values[k] = (a + b + cc + d) * scale;
                out.lh.values[k] = (a + b - cc - d) * scale;
                out.hl.values[k] = (a - b + cc - d) * scale;
                out.hh.values[k] = (a - b - cc + d) * scale;
            }
        }
    }
    Ok(out)
}

pub fn idwt_haar(s: &SubbandSet) -> Result<Grid> {
    let ll = &s.ll;
    if !(ll.same_dims(&s.lh) && ll.same_dims(&s.hl) && ll.same_dims(&s.hh)) {
        return Err(Error::ShapeMismatch {
            left: format!("{}x{}x{}", ll.channels, ll.height, ll.width),
            right: "inconsistent subband dimensions".into(),
        });
    }
    let expected = ll.channels * ll.height * ll.width;
    if Band::ALL.iter().any(|&b| s.band(b).values.len() != expected) {
        return Err(Error::Grid("subband buffer length does not match its dimensions".into()));
    }
    let shape = Shape::new(ll.channels, 2 * ll.height, 2 * ll.width)?;
    let (h_n, w_n) = (shape.height, shape.width);
    let mut values = vec![0.0; shape.len()];
    for c in 0..ll.channels {
        for i in 0..ll.height {
            for j in 0..ll.width {
                let k = (c * ll.height + i) * ll.width + j;
                let (l, lh, hl, hh) = (s.ll.values[k], s.lh.values[k], s.hl.values[k], s.hh.values[k]);
                let top = (c * h_n + 2 * i) * w_n + 2 * j;
                let bottom = top + w_n;
                values[top] = (l + lh + hl + hh) * HAAR_SCALE;
                values[top + 1] = (l + lh - hl - hh) * HAAR_SCALE;
                values[bottom] = (l - lh + hl - hh) * HAAR_SCALE;
                values[bottom + 1] = (l - lh - hl + hh) * HAAR_SCALE;
            }
        }
    }
    Grid::from_computed(shape, values)
}
