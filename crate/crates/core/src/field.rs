//! Dual-polarization complex baseband field on a uniform time grid.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::units::DEFAULT_CENTER_FREQ;

/// Dual-polarization field. `|x|² + |y|²` is instantaneous power in watts.
///
/// Lengths are restricted to products of 2, 3 and 5 so every transform runs
/// on a fast mixed-radix path (3 samples/symbol at a power-of-two symbol
/// count gives a factor of 3).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    x: Vec<Complex64>,
    y: Vec<Complex64>,
    sample_rate: f64,
    center_freq: f64,
}

/// True if `n` has no prime factors other than 2, 3 and 5.
pub fn is_smooth_length(mut n: usize) -> bool {
    if n == 0 {
        return false;
    }
    for p in [2, 3, 5] {
        while n.is_multiple_of(p) {
            n /= p;
        }
    }
    n == 1
}

impl SampledField {
    pub fn new(x: Vec<Complex64>, y: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        Self::with_center_freq(x, y, sample_rate, DEFAULT_CENTER_FREQ)
    }

    pub fn with_center_freq(
        x: Vec<Complex64>,
        y: Vec<Complex64>,
        sample_rate: f64,
        center_freq: f64,
    ) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidField(format!(
                "polarization lengths differ: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::InvalidField(format!(
                "need at least 2 samples, got {}",
                x.len()
            )));
        }
        if !is_smooth_length(x.len()) {
            return Err(Error::InvalidField(format!(
                "length {} has prime factors other than 2, 3, 5",
                x.len()
            )));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidField(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if !(center_freq.is_finite() && center_freq > 0.0) {
            return Err(Error::InvalidField(format!(
                "center frequency must be positive, got {center_freq}"
            )));
        }
        let field = Self {
            x,
            y,
            sample_rate,
            center_freq,
        };
        if !field.mean_power().is_finite() {
            return Err(Error::InvalidField("non-finite samples".into()));
        }
        Ok(field)
    }

    /// All-zero field of length `n`.
    pub fn zeros(n: usize, sample_rate: f64, center_freq: f64) -> Result<Self> {
        let z = vec![Complex64::new(0.0, 0.0); n];
        Self::with_center_freq(z.clone(), z, sample_rate, center_freq)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[Complex64] {
        &self.x
    }

    pub fn y(&self) -> &[Complex64] {
        &self.y
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn center_freq(&self) -> f64 {
        self.center_freq
    }

    /// Time-grid spacing in seconds.
    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Mutable access to both polarizations at once.
    pub fn polarizations_mut(&mut self) -> (&mut [Complex64], &mut [Complex64]) {
        (&mut self.x, &mut self.y)
    }

    pub fn into_parts(self) -> (Vec<Complex64>, Vec<Complex64>) {
        (self.x, self.y)
    }

    /// `mean(|x|² + |y|²)`.
    pub fn mean_power(&self) -> f64 {
        let sum: f64 = self
            .x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .sum();
        sum / self.len() as f64
    }

    /// Multiplies both polarizations by a real amplitude factor.
    pub fn scale(&mut self, amplitude: f64) {
        for v in self.x.iter_mut().chain(self.y.iter_mut()) {
            *v *= amplitude;
        }
    }

    /// Sample-wise sum with another field on the same grid.
    pub fn add(&mut self, other: &SampledField) -> Result<()> {
        if other.len() != self.len() || other.sample_rate != self.sample_rate {
            return Err(Error::InvalidField("grid mismatch in field sum".into()));
        }
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a += b;
        }
        for (a, b) in self.y.iter_mut().zip(&other.y) {
            *a += b;
        }
        Ok(())
    }

    /// Writes the samples as little-endian float64 pairs `(re, im)`: all of
    /// X first, then all of Y. No header.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(self.len() * 32);
        for v in self.x.iter().chain(&self.y) {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads a dump produced by [`SampledField::write_binary`].
    pub fn read_binary<R: Read>(mut r: R, sample_rate: f64, center_freq: f64) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() % 32 != 0 {
            return Err(Error::InvalidField(format!(
                "binary dump of {} bytes is not a whole number of dual-pol samples",
                bytes.len()
            )));
        }
        let vals: Vec<Complex64> = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        let n = vals.len() / 2;
        let (x, y) = vals.split_at(n);
        Self::with_center_freq(x.to_vec(), y.to_vec(), sample_rate, center_freq)
    }
}
