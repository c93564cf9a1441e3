//! Multi-span amplified fiber link.
//!
//! Each span is integrated with a symmetric split-step scheme for the
//! Manakov equation and followed by a constant-gain amplifier that restores
//! the span loss and injects ASE. The field convention is
//!
//! ```text
//! ∂A/∂z = -(α/2)·A + i(β₂/2)·∂²A/∂t² - i(8/9)·γ·(|Aₓ|² + |A_y|²)·A
//! ```
//!
//! so a CW input of power `P` picks up the phase `exp(-i(8/9)γPL)` over a
//! lossless, dispersionless length `L`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{self, FftPair};
use crate::field::SampledField;
use crate::rng::{derive_seed, stream};
use crate::units::{
    alpha_db_km_to_per_m, beta2_from_dispersion, db_to_linear, dbm_to_watts, linear_to_db,
    osnr_reference_bandwidth, DEFAULT_CENTER_FREQ, PLANCK,
};

/// Manakov nonlinear coefficient factor for randomly varying birefringence.
pub const MANAKOV_FACTOR: f64 = 8.0 / 9.0;

/// Maximum nonlinear phase per step before a diagnostic is emitted, rad.
pub const MAX_STEP_PHASE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberParams {
    /// Dispersion parameter D, ps/(nm·km).
    pub dispersion_ps_nm_km: f64,
    /// Nonlinear coefficient γ, 1/(W·km).
    pub gamma_per_w_km: f64,
    /// Power attenuation, dB/km.
    pub alpha_db_per_km: f64,
    pub span_length_km: f64,
    /// Split-step size, km.
    pub step_km: f64,
}

impl Default for FiberParams {
    /// G.652 NDSF with a 0.01 km step.
    fn default() -> Self {
        Self {
            dispersion_ps_nm_km: 16.7,
            gamma_per_w_km: 1.3,
            alpha_db_per_km: 0.2,
            span_length_km: 100.0,
            step_km: 0.01,
        }
    }
}

impl FiberParams {
    /// Zero values of D, γ and α are accepted to isolate single effects.
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("dispersion", self.dispersion_ps_nm_km),
            ("gamma", self.gamma_per_w_km),
            ("alpha", self.alpha_db_per_km),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(self.span_length_km.is_finite() && self.span_length_km > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "span length must be positive, got {}",
                self.span_length_km
            )));
        }
        if !(self.step_km > 0.0 && self.step_km <= self.span_length_km) {
            return Err(Error::InvalidConfig(format!(
                "step {} km must lie in (0, span length {} km]",
                self.step_km, self.span_length_km
            )));
        }
        Ok(())
    }

    pub fn span_loss_db(&self) -> f64 {
        self.alpha_db_per_km * self.span_length_km
    }

    pub fn n_steps(&self) -> usize {
        (self.span_length_km / self.step_km - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpParams {
    pub gain_db: f64,
    /// Noise figure, dB. `-inf` switches ASE off.
    pub nf_db: f64,
    pub center_freq: f64,
}

impl AmpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain_db.is_finite() && self.gain_db > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "amplifier gain must be positive, got {} dB",
                self.gain_db
            )));
        }
        if !(self.nf_db == f64::NEG_INFINITY || (self.nf_db.is_finite() && self.nf_db >= 3.01)) {
            return Err(Error::InvalidConfig(format!(
                "noise figure {} dB is below the 3 dB quantum limit",
                self.nf_db
            )));
        }
        if !(self.center_freq.is_finite() && self.center_freq > 0.0) {
            return Err(Error::InvalidConfig(
                "center frequency must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.nf_db == f64::NEG_INFINITY
    }

    /// One-sided ASE PSD per polarization, W/Hz: `n_sp·h·ν·(G − 1)` with the
    /// high-gain approximation `n_sp = NF/2`.
    pub fn ase_psd_per_pol(&self) -> f64 {
        if self.is_noiseless() {
            return 0.0;
        }
        let n_sp = db_to_linear(self.nf_db) / 2.0;
        let g = db_to_linear(self.gain_db);
        n_sp * PLANCK * self.center_freq * (g - 1.0)
    }
}

/// One link scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub fiber: FiberParams,
    pub amp: AmpParams,
    /// Zero spans is accepted as the back-to-back case.
    pub n_spans: usize,
    pub launch_power_dbm: f64,
    pub ase_seed: u64,
}

impl LinkConfig {
    /// Link whose amplifiers exactly compensate the span loss.
    pub fn constant_gain(
        fiber: FiberParams,
        nf_db: f64,
        n_spans: usize,
        launch_power_dbm: f64,
        ase_seed: u64,
    ) -> Self {
        let gain_db = fiber.span_loss_db();
        Self {
            fiber,
            amp: AmpParams {
                gain_db,
                nf_db,
                center_freq: DEFAULT_CENTER_FREQ,
            },
            n_spans,
            launch_power_dbm,
            ase_seed,
        }
    }

    pub fn with_center_freq(mut self, center_freq: f64) -> Self {
        self.amp.center_freq = center_freq;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.fiber.validate()?;
        if !self.launch_power_dbm.is_finite() {
            return Err(Error::InvalidConfig("launch power must be finite".into()));
        }
        if self.n_spans == 0 {
            return Ok(());
        }
        self.amp.validate()?;
        let loss = self.fiber.span_loss_db();
        if (self.amp.gain_db - loss).abs() > 1e-9 * loss.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "constant-gain control needs gain = span loss ({loss} dB), got {} dB",
                self.amp.gain_db
            )));
        }
        Ok(())
    }

    pub fn launch_power_w(&self) -> f64 {
        dbm_to_watts(self.launch_power_dbm)
    }
}

/// Propagates one fiber span with symmetric split-step integration.
pub fn propagate_span(mut field: SampledField, fiber: &FiberParams) -> Result<SampledField> {
    fiber.validate()?;
    let n = field.len();
    let fs = field.sample_rate();
    let beta2 = beta2_from_dispersion(fiber.dispersion_ps_nm_km, field.center_freq());
    let alpha = alpha_db_km_to_per_m(fiber.alpha_db_per_km);
    let gamma = fiber.gamma_per_w_km / 1e3;
    let steps = fiber.n_steps();
    let h = fiber.span_length_km * 1e3 / steps as f64;
    // Power-weighted length of one step about its midpoint.
    let h_eff = if alpha > 0.0 {
        2.0 * (0.5 * alpha * h).sinh() / alpha
    } else {
        h
    };
    let nl_coeff = -MANAKOV_FACTOR * gamma * h_eff;

    // Linear propagators with the inverse-transform 1/N folded in.
    let inv_n = 1.0 / n as f64;
    let linear = |len: f64| -> Vec<Complex64> {
        (0..n)
            .map(|k| {
                let w = 2.0 * std::f64::consts::PI * fft::bin_frequency(k, n, fs);
                Complex64::from_polar(
                    (-0.5 * alpha * len).exp() * inv_n,
                    -0.5 * beta2 * w * w * len,
                )
            })
            .collect()
    };
    let half = linear(0.5 * h);
    let full = if steps > 1 { linear(h) } else { Vec::new() };

    let mut plans = FftPair::new(n);
    let (x, y) = field.polarizations_mut();
    plans.forward(x);
    plans.forward(y);

    let mut max_phase = 0.0f64;
    for step in 0..steps {
        let op = if step == 0 { &half } else { &full };
        for ((a, b), h) in x.iter_mut().zip(y.iter_mut()).zip(op) {
            *a *= h;
            *b *= h;
        }
        plans.inverse_unnormalized(x);
        plans.inverse_unnormalized(y);

        if nl_coeff != 0.0 {
            for (a, b) in x.iter_mut().zip(y.iter_mut()) {
                let phi = nl_coeff * (a.norm_sqr() + b.norm_sqr());
                max_phase = max_phase.max(phi.abs());
                let (s, c) = phi.sin_cos();
                let rot = Complex64::new(c, s);
                *a *= rot;
                *b *= rot;
            }
        }

        plans.forward(x);
        plans.forward(y);
    }
    for ((a, b), h) in x.iter_mut().zip(y.iter_mut()).zip(&half) {
        *a *= h;
        *b *= h;
    }
    plans.inverse_unnormalized(x);
    plans.inverse_unnormalized(y);

    if max_phase > MAX_STEP_PHASE {
        log::warn!(
            "split-step nonlinear phase reached {max_phase:.3} rad per step (limit {MAX_STEP_PHASE}); \
             reduce step_km for accuracy"
        );
    }
    Ok(field)
}

/// Applies amplifier gain and adds white ASE on both polarizations.
pub fn amplify(mut field: SampledField, amp: &AmpParams, seed: u64) -> Result<SampledField> {
    amp.validate()?;
    field.scale(db_to_linear(amp.gain_db).sqrt());
    if amp.is_noiseless() {
        return Ok(field);
    }
    // Per-sample variance of complex white noise with one-sided PSD S over
    // the full simulated bandwidth fs.
    let sigma = (0.5 * amp.ase_psd_per_pol() * field.sample_rate()).sqrt();
    let (x, y) = field.polarizations_mut();
    for (pol_idx, pol) in [x, y].into_iter().enumerate() {
        let mut rng = stream(derive_seed(seed, &[pol_idx as u64]));
        for v in pol.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re, im) * sigma;
        }
    }
    Ok(field)
}

/// Seed of the amplifier after span `span` (1-based).
pub fn span_seed(ase_seed: u64, span: usize) -> u64 {
    derive_seed(ase_seed, &[span as u64])
}

/// Runs the link, calling `on_span(k, field)` after the amplifier of every
/// span `k = 1..=n_spans`.
///
/// The amplifier noise of span `k` depends only on `(ase_seed, k)`, so the
/// output after `k` spans is identical for every `n_spans ≥ k`.
pub fn simulate_link_tapped<F>(
    tx: &SampledField,
    link: &LinkConfig,
    mut on_span: F,
) -> Result<SampledField>
where
    F: FnMut(usize, &SampledField) -> Result<()>,
{
    link.validate()?;
    let mut field = tx.clone();
    let p = field.mean_power();
    if p > 0.0 {
        field.scale((link.launch_power_w() / p).sqrt());
    }
    for span in 1..=link.n_spans {
        let started = std::time::Instant::now();
        field = propagate_span(field, &link.fiber)?;
        field = amplify(field, &link.amp, span_seed(link.ase_seed, span))?;
        log::trace!("span {span} done in {:?}", started.elapsed());
        on_span(span, &field)?;
    }
    Ok(field)
}

/// Scales `tx` to the launch power and runs every span of the link.
pub fn simulate_link(tx: &SampledField, link: &LinkConfig) -> Result<SampledField> {
    simulate_link_tapped(tx, link, |_, _| Ok(()))
}

/// Ground-truth OSNR in an arbitrary reference bandwidth, dB.
pub fn analytic_osnr_in_bandwidth(link: &LinkConfig, ref_bandwidth: f64) -> f64 {
    let ase = link.n_spans as f64 * 2.0 * link.amp.ase_psd_per_pol() * ref_bandwidth;
    linear_to_db(link.launch_power_w() / ase)
}

/// Ground-truth OSNR in 0.1 nm at the amplifier carrier, dB.
pub fn analytic_osnr(link: &LinkConfig) -> f64 {
    analytic_osnr_in_bandwidth(link, osnr_reference_bandwidth(link.amp.center_freq))
}
