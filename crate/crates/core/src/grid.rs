use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform grid on `[-L, L]` with `n` points, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub half_length: f64,
    pub n: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(half_length: f64, n: usize) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half length must be positive, got {half_length}"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {n}")));
        }
        Ok(Self {
            half_length,
            n,
            dx: 2.0 * half_length / (n - 1) as f64,
        })
    }

    /// Grid whose spacing is the closest to `dx` that divides `2L` evenly.
    pub fn with_spacing(half_length: f64, dx: f64) -> Result<Self> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {dx}")));
        }
        let intervals = (2.0 * half_length / dx).round().max(2.0) as usize;
        Self::new(half_length, intervals + 1)
    }

    #[inline]
    pub fn xi(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.half_length
        } else {
            -self.half_length + i as f64 * self.dx
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.xi(i))
    }

    /// Composite trapezoid rule of sampled values.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        trapezoid(values, self.dx)
    }
}

pub(crate) fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let interior: f64 = values[1..n - 1].iter().sum();
            dx * (interior + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Scalar field sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.n
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t: f64::NAN,
                what: format!("field value at index {i}"),
            });
        }
        Ok(Self { values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl AsRef<[f64]> for Field {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}
