//! Optical spectrum analyzer emulation and average-PSD reduction.
//!
//! A trace is a Welch periodogram (Hann window, 50% overlap) of both
//! polarizations, summed, then smoothed by a unit-area Super-Gaussian
//! resolution kernel. APSD figures are trapezoidal averages of a trace over
//! a set of intervals, optionally shrunk about their centers to discard
//! edges blurred by the instrument resolution.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::FftPair;
use crate::field::SampledField;
use crate::units::linear_to_db;
use crate::wfm::{Interval, RegionSet};

/// Shortest field accepted by [`Osa::estimate_psd`].
pub const MIN_PSD_SAMPLES: usize = 1 << 14;

/// Fraction of each `F_N` interval that enters the notch APSD.
pub const NOTCH_INNER_FRACTION: f64 = 0.8;

/// Instrument model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Osa {
    /// 3 dB full width of the resolution filter, Hz.
    pub resolution_hz: f64,
    /// Super-Gaussian order `m` of `exp(-(f/f₀)^(2m))`.
    pub order: u32,
    /// Upper bound on the native Welch bin spacing, Hz.
    pub max_bin_spacing_hz: f64,
}

impl Default for Osa {
    fn default() -> Self {
        Self {
            resolution_hz: 150e6,
            order: 4,
            max_bin_spacing_hz: 30e6,
        }
    }
}

/// PSD of both polarizations summed, on an ascending two-sided grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdTrace {
    freqs: Vec<f64>,
    psd: Vec<f64>,
    rbw: f64,
}

impl PsdTrace {
    pub fn new(freqs: Vec<f64>, psd: Vec<f64>, rbw: f64) -> Result<Self> {
        if freqs.len() != psd.len() || freqs.len() < 2 {
            return Err(Error::InvalidField(
                "trace needs matching frequency and PSD vectors of length >= 2".into(),
            ));
        }
        if freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidField(
                "trace frequencies must increase".into(),
            ));
        }
        if psd.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidField(
                "trace PSD must be finite and >= 0".into(),
            ));
        }
        Ok(Self { freqs, psd, rbw })
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn psd(&self) -> &[f64] {
        &self.psd
    }

    pub fn rbw(&self) -> f64 {
        self.rbw
    }

    pub fn bin_spacing(&self) -> f64 {
        self.freqs[1] - self.freqs[0]
    }

    /// Rectangle-rule integral over the whole grid (total power for a
    /// periodogram).
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.bin_spacing()
    }

    /// Writes `freq_hz,psd_w_per_hz` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["freq_hz", "psd_w_per_hz"])?;
        for (f, p) in self.freqs.iter().zip(&self.psd) {
            wtr.write_record([f.to_string(), format!("{p:e}")])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// `∫ psd df` over `[lo, hi]`, trapezoidal with linear interpolation at
    /// the ends.
    fn integrate(&self, lo: f64, hi: f64) -> Result<f64> {
        let f = &self.freqs;
        let p = &self.psd;
        if lo < f[0] || hi > f[f.len() - 1] {
            return Err(Error::RegionNotCovered {
                lo,
                hi,
                trace_lo: f[0],
                trace_hi: f[f.len() - 1],
            });
        }
        let interp = |x: f64, i: usize| -> f64 {
            // f[i] <= x <= f[i + 1]
            let t = (x - f[i]) / (f[i + 1] - f[i]);
            p[i] + t * (p[i + 1] - p[i])
        };
        // Segment index containing x (clamped to the last segment).
        let seg = |x: f64| -> usize {
            let i = f.partition_point(|&v| v <= x);
            i.saturating_sub(1).min(f.len() - 2)
        };
        let (i0, i1) = (seg(lo), seg(hi));
        let p_lo = interp(lo, i0);
        let p_hi = interp(hi, i1);
        if i0 == i1 {
            return Ok(0.5 * (p_lo + p_hi) * (hi - lo));
        }
        let mut acc = 0.5 * (p_lo + p[i0 + 1]) * (f[i0 + 1] - lo);
        for i in i0 + 1..i1 {
            acc += 0.5 * (p[i] + p[i + 1]) * (f[i + 1] - f[i]);
        }
        acc += 0.5 * (p[i1] + p_hi) * (hi - f[i1]);
        Ok(acc)
    }
}

impl Osa {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution_hz > 0.0 && self.max_bin_spacing_hz > 0.0 && self.order >= 1) {
            return Err(Error::InvalidConfig(format!(
                "invalid OSA settings: {self:?}"
            )));
        }
        Ok(())
    }

    /// Welch segment length for a given sample rate: the smallest power of
    /// two whose bin spacing does not exceed `max_bin_spacing_hz`.
    pub fn segment_len(&self, sample_rate: f64) -> usize {
        ((sample_rate / self.max_bin_spacing_hz).ceil() as usize).next_power_of_two()
    }

    /// Welch periodogram without the resolution kernel.
    pub fn welch(&self, field: &SampledField) -> Result<PsdTrace> {
        self.validate()?;
        if field.len() < MIN_PSD_SAMPLES {
            return Err(Error::FieldTooShort {
                len: field.len(),
                min: MIN_PSD_SAMPLES,
            });
        }
        let fs = field.sample_rate();
        let nseg = self.segment_len(fs).min(field.len());
        let mut psd = welch_two_sided(field.x(), fs, nseg);
        for (a, b) in psd.iter_mut().zip(welch_two_sided(field.y(), fs, nseg)) {
            *a += b;
        }
        let df = fs / nseg as f64;
        let freqs = (0..nseg)
            .map(|k| (k as f64 - (nseg / 2) as f64) * df)
            .collect();
        PsdTrace::new(freqs, psd, df)
    }

    /// Emulated OSA trace of a field.
    pub fn estimate_psd(&self, field: &SampledField) -> Result<PsdTrace> {
        let raw = self.welch(field)?;
        let kernel = self.kernel(raw.bin_spacing());
        let smoothed = circular_convolve(&raw.psd, &kernel);
        PsdTrace::new(raw.freqs, smoothed, self.resolution_hz)
    }

    /// Unit-sum Super-Gaussian taps sampled at `df`, centered.
    pub fn kernel(&self, df: f64) -> Vec<f64> {
        let m2 = 2.0 * self.order as f64;
        let f0 = 0.5 * self.resolution_hz / std::f64::consts::LN_2.powf(1.0 / m2);
        // exp(-(f/f0)^2m) drops below 1e-18 past this offset.
        let reach = f0 * (18.0 * std::f64::consts::LN_10).powf(1.0 / m2);
        let half = (reach / df).ceil() as i64;
        let mut taps: Vec<f64> = (-half..=half)
            .map(|k| (-((k as f64 * df) / f0).powf(m2)).exp())
            .collect();
        let sum: f64 = taps.iter().sum();
        for t in taps.iter_mut() {
            *t /= sum;
        }
        taps
    }

    /// APSD over `F_ref` (full width) and `F_N` (inner fraction).
    pub fn measure(
        &self,
        field: &SampledField,
        regions: &RegionSet,
        delta_a_db: f64,
        scenario: impl Into<String>,
    ) -> Result<ApsdReport> {
        let trace = self.estimate_psd(field)?;
        ApsdReport::from_trace(&trace, regions, delta_a_db, scenario)
    }
}

/// Two-sided Welch PSD of one complex sequence, DC-centered.
fn welch_two_sided(samples: &[Complex64], fs: f64, nseg: usize) -> Vec<f64> {
    let window: Vec<f64> = (0..nseg)
        .map(|i| {
            let s = (std::f64::consts::PI * i as f64 / nseg as f64).sin();
            s * s
        })
        .collect();
    let energy: f64 = window.iter().map(|w| w * w).sum();
    let hop = (nseg / 2).max(1);
    let mut plans = FftPair::new(nseg);
    let mut acc = vec![0.0; nseg];
    let mut buf = vec![Complex64::new(0.0, 0.0); nseg];
    let mut count = 0usize;
    let mut start = 0;
    while start + nseg <= samples.len() {
        for ((b, s), w) in buf
            .iter_mut()
            .zip(&samples[start..start + nseg])
            .zip(&window)
        {
            *b = s * w;
        }
        plans.forward(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    let norm = 1.0 / (count as f64 * fs * energy);
    // fftshift: bin nseg/2 (most negative frequency) first.
    let mut out = Vec::with_capacity(nseg);
    out.extend(acc[nseg / 2..].iter().map(|v| v * norm));
    out.extend(acc[..nseg / 2].iter().map(|v| v * norm));
    out
}

fn circular_convolve(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = x.len() as i64;
    let half = (kernel.len() / 2) as i64;
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, k)| k * x[(i + j as i64 - half).rem_euclid(n) as usize])
                .sum()
        })
        .collect()
}

/// OSA trace with the default instrument.
pub fn estimate_psd(field: &SampledField) -> Result<PsdTrace> {
    Osa::default().estimate_psd(field)
}

/// Average PSD of `trace` over `region`, each interval shrunk to
/// `inner_fraction` of its width, in dB (10·log10 of W/Hz).
pub fn apsd(trace: &PsdTrace, region: &[Interval], inner_fraction: f64) -> Result<f64> {
    if !(inner_fraction > 0.0 && inner_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "inner fraction must lie in (0, 1], got {inner_fraction}"
        )));
    }
    let mut power = 0.0;
    let mut width = 0.0;
    for iv in region {
        let s = iv.shrink(inner_fraction);
        if s.width() <= 0.0 {
            continue;
        }
        power += trace.integrate(s.lo, s.hi)?;
        width += s.width();
    }
    if width <= 0.0 {
        return Err(Error::EmptyRegion);
    }
    Ok(linear_to_db(power / width))
}

/// Notch contrast `p_ref − p_n`, dB.
pub fn nln_metric(p_ref: f64, p_n: f64) -> f64 {
    p_ref - p_n
}

/// APSD pair for one received probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApsdReport {
    /// APSD over `F_ref = F_A ∪ F_B`, dB.
    pub p_ref: f64,
    /// APSD over the inner part of `F_N`, dB.
    pub p_n: f64,
    pub delta_a_db: f64,
    pub scenario: String,
}

impl ApsdReport {
    pub fn from_trace(
        trace: &PsdTrace,
        regions: &RegionSet,
        delta_a_db: f64,
        scenario: impl Into<String>,
    ) -> Result<Self> {
        let p_ref = apsd(trace, &regions.reference(), 1.0)?;
        let p_n = apsd(trace, regions.n(), NOTCH_INNER_FRACTION)?;
        let scenario = scenario.into();
        if !(p_ref.is_finite() && p_n.is_finite()) {
            return Err(Error::InvalidField(format!(
                "non-finite APSD in scenario {scenario}: p_ref={p_ref}, p_n={p_n}"
            )));
        }
        Ok(Self {
            p_ref,
            p_n,
            delta_a_db,
            scenario,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn white(n: usize, psd_per_pol: f64, fs: f64, seed: u64) -> SampledField {
        let sigma = (0.5 * psd_per_pol * fs).sqrt();
        let mut rng = stream(seed);
        let mut draw = || -> Vec<Complex64> {
            (0..n)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im) * sigma
                })
                .collect()
        };
        let (x, y) = (draw(), draw());
        SampledField::new(x, y, fs).unwrap()
    }

    fn flat_trace(level: f64) -> PsdTrace {
        let freqs: Vec<f64> = (0..101).map(|k| (k as f64 - 50.0) * 1e9).collect();
        PsdTrace::new(freqs, vec![level; 101], 1e9).unwrap()
    }

    #[test]
    fn kernel_is_normalized_with_3db_width() {
        let osa = Osa::default();
        let df = 1e6;
        let k = osa.kernel(df);
        assert_relative_eq!(k.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        let mid = k.len() / 2;
        let at_edge = k[mid + 75] / k[mid];
        assert_relative_eq!(at_edge, 0.5, max_relative = 1e-9);
    }

    #[test]
    fn kernel_preserves_constant_levels() {
        let osa = Osa::default();
        let x = vec![3.5e-15; 1000];
        let y = circular_convolve(&x, &osa.kernel(20.8e6));
        for v in y {
            assert!(linear_to_db(v / 3.5e-15).abs() < 0.01);
        }
    }

    #[test]
    fn segment_length_meets_bin_spacing() {
        let osa = Osa::default();
        let n = osa.segment_len(170.4e9);
        assert_eq!(n, 8192);
        assert!(170.4e9 / n as f64 <= 30e6);
    }

    #[test]
    fn short_field_is_rejected() {
        let f = white(1 << 12, 1e-15, 170.4e9, 1);
        assert!(matches!(estimate_psd(&f), Err(Error::FieldTooShort { .. })));
    }

    #[test]
    fn white_noise_trace_is_flat() {
        let fs = 170.4e9;
        let s0 = 2e-17;
        let f = white(3 << 16, s0, fs, 2);
        let trace = estimate_psd(&f).unwrap();
        // Both polarizations summed.
        let level = 2.0 * s0;
        let df = trace.bin_spacing();
        let per_window = (1e9 / df).round() as usize;
        for chunk in trace
            .psd()
            .chunks(per_window)
            .filter(|c| c.len() == per_window)
        {
            let avg = chunk.iter().sum::<f64>() / chunk.len() as f64;
            assert!(linear_to_db(avg / level).abs() < 0.5);
        }
        let whole = trace.psd().iter().sum::<f64>() / trace.psd().len() as f64;
        assert!(linear_to_db(whole / level).abs() < 0.05);
        // Parseval on the pre-kernel periodogram.
        let raw = Osa::default().welch(&f).unwrap();
        assert!((raw.total_power() / f.mean_power() - 1.0).abs() < 0.01);
    }

    #[test]
    fn apsd_of_flat_trace_is_exact() {
        let t = flat_trace(4e-16);
        let region = [
            Interval::new(-3.3e9, 7.1e9).unwrap(),
            Interval::new(20e9, 21e9).unwrap(),
        ];
        for frac in [1.0, 0.8, 0.1] {
            let v = apsd(&t, &region, frac).unwrap();
            assert_relative_eq!(v, linear_to_db(4e-16), epsilon = 1e-12);
        }
    }

    #[test]
    fn apsd_matches_linear_ramp_integral() {
        // psd = f on [0, 10]; mean over [2.5, 7.5] is 5.
        let freqs: Vec<f64> = (0..11).map(|k| k as f64).collect();
        let t = PsdTrace::new(freqs.clone(), freqs, 1.0).unwrap();
        let v = apsd(&t, &[Interval::new(2.5, 7.5).unwrap()], 1.0).unwrap();
        assert_relative_eq!(v, linear_to_db(5.0), epsilon = 1e-12);
        // Shrinking [0, 10] to 80% leaves [1, 9], still mean 5.
        let v = apsd(&t, &[Interval::new(0.0, 10.0).unwrap()], 0.8).unwrap();
        assert_relative_eq!(v, linear_to_db(5.0), epsilon = 1e-12);
    }

    #[test]
    fn apsd_rejects_uncovered_or_empty_regions() {
        let t = flat_trace(1.0);
        assert!(matches!(
            apsd(&t, &[Interval::new(40e9, 60e9).unwrap()], 1.0),
            Err(Error::RegionNotCovered { .. })
        ));
        assert!(matches!(apsd(&t, &[], 1.0), Err(Error::EmptyRegion)));
        assert!(apsd(&t, &[Interval::new(0.0, 1e9).unwrap()], 0.0).is_err());
        assert!(apsd(&t, &[Interval::new(0.0, 1e9).unwrap()], 1.5).is_err());
    }

    #[test]
    fn nln_metric_is_a_difference() {
        assert_eq!(nln_metric(-130.0, -130.0), 0.0);
        assert_eq!(nln_metric(-130.0, -150.5), 20.5);
    }

    #[test]
    fn trace_rejects_bad_inputs() {
        assert!(PsdTrace::new(vec![0.0, 1.0], vec![1.0, -1.0], 1.0).is_err());
        assert!(PsdTrace::new(vec![1.0, 0.0], vec![1.0, 1.0], 1.0).is_err());
        assert!(PsdTrace::new(vec![0.0, 1.0], vec![1.0], 1.0).is_err());
    }

    #[test]
    fn csv_export_has_header() {
        let t = flat_trace(1e-15);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("freq_hz,psd_w_per_hz"));
        assert_eq!(lines.next(), Some("-50000000000,1e-15"));
        assert_eq!(text.lines().count(), 102);
    }
}
