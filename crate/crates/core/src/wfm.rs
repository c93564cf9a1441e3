//! Transmit waveform synthesis and power-conserving spectral perturbation.
//!
//! A probe set is built from one reference DP-QPSK waveform. Each probe
//! rescales the reference spectrum piecewise: the boosted bands `F_A` by
//! `Δ(A)`, the notch `F_N` by `Δ(N) = 0`, and the remainder `F_B` by the
//! compensating `Δ(B)` that holds total power fixed.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{is_smooth_length, SampledField};
use crate::rng::{derive_seed, stream};
use crate::units::{db_to_linear, DEFAULT_CENTER_FREQ};

/// Half-open baseband frequency interval `[lo, hi)` in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval { lo: v[0], hi: v[1] }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidRegions(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    /// Interval of `width` centered on `center`.
    pub fn centered(center: f64, width: f64) -> Self {
        Interval {
            lo: center - width / 2.0,
            hi: center + width / 2.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    #[inline]
    pub fn contains(&self, f: f64) -> bool {
        f >= self.lo && f < self.hi
    }

    /// Shrinks symmetrically about the center to `fraction` of the width.
    pub fn shrink(&self, fraction: f64) -> Interval {
        Interval::centered(self.center(), self.width() * fraction)
    }
}

/// Spectral region label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    A,
    B,
    N,
}

/// Partition of the bandwidth of interest into `F_A`, `F_B` and `F_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    a: Vec<Interval>,
    b: Vec<Interval>,
    n: Vec<Interval>,
    boi: Interval,
}

impl RegionSet {
    /// Validates that the three regions are disjoint and tile `boi` exactly.
    pub fn new(
        a: Vec<Interval>,
        b: Vec<Interval>,
        n: Vec<Interval>,
        boi: Interval,
    ) -> Result<Self> {
        Interval::new(boi.lo, boi.hi)?;
        let mut all: Vec<Interval> = a.iter().chain(&b).chain(&n).copied().collect();
        for iv in &all {
            Interval::new(iv.lo, iv.hi)?;
        }
        if all.is_empty() {
            return Err(Error::InvalidRegions("no intervals".into()));
        }
        all.sort_by(|p, q| p.lo.total_cmp(&q.lo));
        let tol = 1e-9 * boi.width();
        if (all[0].lo - boi.lo).abs() > tol {
            return Err(Error::InvalidRegions(format!(
                "regions start at {} Hz but the BOI starts at {} Hz",
                all[0].lo, boi.lo
            )));
        }
        if (all[all.len() - 1].hi - boi.hi).abs() > tol {
            return Err(Error::InvalidRegions(format!(
                "regions end at {} Hz but the BOI ends at {} Hz",
                all[all.len() - 1].hi,
                boi.hi
            )));
        }
        for w in all.windows(2) {
            if w[0].hi > w[1].lo + tol {
                return Err(Error::InvalidRegions(format!(
                    "intervals [{}, {}] and [{}, {}] overlap",
                    w[0].lo, w[0].hi, w[1].lo, w[1].hi
                )));
            }
            if w[0].hi < w[1].lo - tol {
                return Err(Error::InvalidRegions(format!(
                    "gap between {} Hz and {} Hz is not covered",
                    w[0].hi, w[1].lo
                )));
            }
        }
        Ok(Self { a, b, n, boi })
    }

    /// Builds `F_B` as the part of `boi` not covered by `a` or `n`.
    pub fn from_bands(a: Vec<Interval>, n: Vec<Interval>, boi: Interval) -> Result<Self> {
        let mut taken: Vec<Interval> = a.iter().chain(&n).copied().collect();
        taken.sort_by(|p, q| p.lo.total_cmp(&q.lo));
        let mut b = Vec::new();
        let mut cursor = boi.lo;
        for iv in &taken {
            if iv.lo > cursor {
                b.push(Interval {
                    lo: cursor,
                    hi: iv.lo,
                });
            }
            cursor = cursor.max(iv.hi);
        }
        if cursor < boi.hi {
            b.push(Interval {
                lo: cursor,
                hi: boi.hi,
            });
        }
        Self::new(a, b, n, boi)
    }

    /// Two 1 GHz boost bands at +11.5 and +14.5 GHz around a 2 GHz notch at
    /// +13 GHz; everything else in `boi` is `F_B`.
    pub fn default_geometry(boi: Interval) -> Result<Self> {
        let a = vec![
            Interval::centered(11.5e9, 1e9),
            Interval::centered(14.5e9, 1e9),
        ];
        let n = vec![Interval::centered(13e9, 2e9)];
        Self::from_bands(a, n, boi)
    }

    pub fn a(&self) -> &[Interval] {
        &self.a
    }

    pub fn b(&self) -> &[Interval] {
        &self.b
    }

    pub fn n(&self) -> &[Interval] {
        &self.n
    }

    pub fn boi(&self) -> Interval {
        self.boi
    }

    /// `F_ref = F_A ∪ F_B`, sorted.
    pub fn reference(&self) -> Vec<Interval> {
        let mut v: Vec<Interval> = self.a.iter().chain(&self.b).copied().collect();
        v.sort_by(|p, q| p.lo.total_cmp(&q.lo));
        v
    }

    pub fn intervals(&self, region: Region) -> &[Interval] {
        match region {
            Region::A => &self.a,
            Region::B => &self.b,
            Region::N => &self.n,
        }
    }

    /// Region containing `f`, or `None` outside the BOI.
    pub fn region_of(&self, f: f64) -> Option<Region> {
        if !self.boi.contains(f) {
            return None;
        }
        for region in [Region::A, Region::N, Region::B] {
            if self.intervals(region).iter().any(|iv| iv.contains(f)) {
                return Some(region);
            }
        }
        // Edge bins that fall inside the validation tolerance.
        Some(Region::B)
    }

    /// Region label of every DFT bin of an `n`-point grid.
    pub fn classify_bins(&self, n: usize, sample_rate: f64) -> Result<Vec<Option<Region>>> {
        let nyquist = sample_rate / 2.0;
        if self.boi.lo < -nyquist || self.boi.hi > nyquist {
            return Err(Error::RegionOutOfBand {
                lo: self.boi.lo,
                hi: self.boi.hi,
                nyquist,
            });
        }
        Ok((0..n)
            .map(|k| self.region_of(fft::bin_frequency(k, n, sample_rate)))
            .collect())
    }
}

/// Relative power of the reference waveform in each region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFractions {
    pub k_a: f64,
    pub k_b: f64,
    pub k_n: f64,
}

impl PowerFractions {
    pub fn get(&self, region: Region) -> f64 {
        match region {
            Region::A => self.k_a,
            Region::B => self.k_b,
            Region::N => self.k_n,
        }
    }
}

/// One probe of the transmitted set: linear PSD ratios per region.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationProfile {
    delta_a: f64,
    delta_b: f64,
    delta_n: f64,
    regions: RegionSet,
}

impl PerturbationProfile {
    /// Checks `Δ(B) > 0`, non-negative ratios and power conservation to 1e-9.
    pub fn new(
        delta_a: f64,
        delta_b: f64,
        delta_n: f64,
        fractions: &PowerFractions,
        regions: RegionSet,
    ) -> Result<Self> {
        if !(delta_a.is_finite() && delta_a >= 0.0 && delta_n.is_finite() && delta_n >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "delta_A = {delta_a} and delta_N = {delta_n} must be finite and non-negative"
            )));
        }
        if !(delta_b.is_finite() && delta_b > 0.0) {
            return Err(Error::InfeasiblePerturbation(fractions.k_a * delta_a));
        }
        let total = fractions.k_a * delta_a + fractions.k_b * delta_b + fractions.k_n * delta_n;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::PowerNotConserved(total));
        }
        Ok(Self {
            delta_a,
            delta_b,
            delta_n,
            regions,
        })
    }

    /// Notch profile (`Δ(N) = 0`) with `Δ(B)` solved for constant power.
    pub fn constant_power(
        delta_a_db: f64,
        fractions: &PowerFractions,
        regions: RegionSet,
    ) -> Result<Self> {
        let delta_a = db_to_linear(delta_a_db);
        let delta_b = delta_b_for(delta_a, fractions.k_a, fractions.k_b)?;
        Self::new(delta_a, delta_b, 0.0, fractions, regions)
    }

    pub fn delta_a(&self) -> f64 {
        self.delta_a
    }

    pub fn delta_b(&self) -> f64 {
        self.delta_b
    }

    pub fn delta_n(&self) -> f64 {
        self.delta_n
    }

    pub fn delta_a_db(&self) -> f64 {
        10.0 * self.delta_a.log10()
    }

    pub fn regions(&self) -> &RegionSet {
        &self.regions
    }

    pub fn delta(&self, region: Region) -> f64 {
        match region {
            Region::A => self.delta_a,
            Region::B => self.delta_b,
            Region::N => self.delta_n,
        }
    }
}

/// Transmitter parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxConfig {
    /// Symbol rate, Hz.
    pub baud_rate: f64,
    pub rolloff: f64,
    pub samples_per_symbol: usize,
    pub n_symbols: usize,
    /// Transmitter noise floor PSD relative to the unperturbed waveform
    /// PSD, dB. `-inf` disables it.
    pub nfl_rel_db: f64,
    pub seed: u64,
    #[serde(default = "default_center_freq")]
    pub center_freq: f64,
}

fn default_center_freq() -> f64 {
    DEFAULT_CENTER_FREQ
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            baud_rate: 56.8e9,
            rolloff: 0.07,
            samples_per_symbol: 3,
            n_symbols: 1 << 17,
            nfl_rel_db: -22.5,
            seed: 1,
            center_freq: DEFAULT_CENTER_FREQ,
        }
    }
}

impl TxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.baud_rate.is_finite() && self.baud_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "baud rate must be positive, got {}",
                self.baud_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::InvalidConfig(format!(
                "rolloff must lie in [0, 1], got {}",
                self.rolloff
            )));
        }
        if self.samples_per_symbol < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 samples per symbol, got {}",
                self.samples_per_symbol
            )));
        }
        if self.n_symbols == 0 {
            return Err(Error::InvalidConfig("n_symbols must be positive".into()));
        }
        if self.nfl_rel_db.is_nan() || self.nfl_rel_db == f64::INFINITY {
            return Err(Error::InvalidConfig(format!(
                "nfl_rel_db must be finite or -inf, got {}",
                self.nfl_rel_db
            )));
        }
        if !is_smooth_length(self.n_samples()) {
            return Err(Error::InvalidConfig(format!(
                "n_symbols * samples_per_symbol = {} must factor into 2, 3 and 5",
                self.n_samples()
            )));
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> f64 {
        self.baud_rate * self.samples_per_symbol as f64
    }

    pub fn n_samples(&self) -> usize {
        self.n_symbols * self.samples_per_symbol
    }

    /// Occupied band `±(1 + rolloff)·B/2` of the shaped signal.
    pub fn occupied_band(&self) -> Interval {
        let half = 0.5 * (1.0 + self.rolloff) * self.baud_rate;
        Interval {
            lo: -half,
            hi: half,
        }
    }
}

/// Raised-cosine power response, unit height in the flat part.
pub fn raised_cosine(f: f64, baud_rate: f64, rolloff: f64) -> f64 {
    let af = f.abs();
    let f1 = 0.5 * (1.0 - rolloff) * baud_rate;
    let f2 = 0.5 * (1.0 + rolloff) * baud_rate;
    if af <= f1 {
        1.0
    } else if af >= f2 {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI / (rolloff * baud_rate) * (af - f1)).cos())
    }
}

const QPSK: [Complex64; 4] = [
    Complex64::new(
        std::f64::consts::FRAC_1_SQRT_2,
        std::f64::consts::FRAC_1_SQRT_2,
    ),
    Complex64::new(
        -std::f64::consts::FRAC_1_SQRT_2,
        std::f64::consts::FRAC_1_SQRT_2,
    ),
    Complex64::new(
        -std::f64::consts::FRAC_1_SQRT_2,
        -std::f64::consts::FRAC_1_SQRT_2,
    ),
    Complex64::new(
        std::f64::consts::FRAC_1_SQRT_2,
        -std::f64::consts::FRAC_1_SQRT_2,
    ),
];

/// Root-raised-cosine DP-QPSK waveform with unit mean power.
///
/// Pulse shaping is applied as a circular filter in the frequency domain,
/// so the spectrum follows the analytic response with no tap truncation.
pub fn generate_reference(cfg: &TxConfig) -> Result<SampledField> {
    cfg.validate()?;
    let n = cfg.n_samples();
    let fs = cfg.sample_rate();
    let mut rng = stream(cfg.seed);

    let mut pols = [
        vec![Complex64::new(0.0, 0.0); n],
        vec![Complex64::new(0.0, 0.0); n],
    ];
    for pol in pols.iter_mut() {
        for k in 0..cfg.n_symbols {
            pol[k * cfg.samples_per_symbol] = QPSK[rng.random_range(0..4usize)];
        }
    }

    let shape: Vec<f64> = (0..n)
        .map(|k| raised_cosine(fft::bin_frequency(k, n, fs), cfg.baud_rate, cfg.rolloff).sqrt())
        .collect();
    for pol in pols.iter_mut() {
        fft::forward(pol);
        for (v, h) in pol.iter_mut().zip(&shape) {
            *v *= *h;
        }
        fft::inverse(pol);
    }

    let [x, y] = pols;
    let mut field = SampledField::with_center_freq(x, y, fs, cfg.center_freq)?;
    let p = field.mean_power();
    if p <= 0.0 {
        return Err(Error::InvalidField("shaped waveform has no power".into()));
    }
    field.scale(1.0 / p.sqrt());
    Ok(field)
}

/// Region power fractions `K_A`, `K_B`, `K_N` from the periodogram of the
/// unperturbed field.
pub fn power_fractions(field: &SampledField, regions: &RegionSet) -> Result<PowerFractions> {
    let labels = regions.classify_bins(field.len(), field.sample_rate())?;
    let mut x = field.x().to_vec();
    let mut y = field.y().to_vec();
    fft::forward(&mut x);
    fft::forward(&mut y);

    let (mut pa, mut pb, mut pn) = (0.0, 0.0, 0.0);
    for ((label, vx), vy) in labels.iter().zip(&x).zip(&y) {
        let p = vx.norm_sqr() + vy.norm_sqr();
        match label {
            Some(Region::A) => pa += p,
            Some(Region::B) => pb += p,
            Some(Region::N) => pn += p,
            None => {}
        }
    }
    let total = pa + pb + pn;
    if !(total > 0.0) {
        return Err(Error::InvalidField("no power inside the BOI".into()));
    }
    Ok(PowerFractions {
        k_a: pa / total,
        k_b: pb / total,
        k_n: pn / total,
    })
}

/// `Δ(B) = (1 − K_A·Δ(A)) / K_B`, the ratio that keeps total power fixed
/// when the notch is fully suppressed.
pub fn delta_b_for(delta_a: f64, k_a: f64, k_b: f64) -> Result<f64> {
    if !(k_b > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "K_B must be positive, got {k_b}"
        )));
    }
    let boosted = k_a * delta_a;
    if !(boosted < 1.0) {
        return Err(Error::InfeasiblePerturbation(boosted));
    }
    Ok((1.0 - boosted) / k_b)
}

/// Scales the field spectrum by `√Δ` per region, identically on X and Y.
/// Bins outside the BOI are left untouched.
pub fn apply_perturbation(
    field: &SampledField,
    profile: &PerturbationProfile,
) -> Result<SampledField> {
    let labels = profile
        .regions()
        .classify_bins(field.len(), field.sample_rate())?;
    let gains = [
        profile.delta_a.sqrt(),
        profile.delta_b.sqrt(),
        profile.delta_n.sqrt(),
    ];
    let mut out = field.clone();
    let (x, y) = out.polarizations_mut();
    for pol in [x, y] {
        fft::forward(pol);
        for (v, label) in pol.iter_mut().zip(&labels) {
            let g = match label {
                Some(Region::A) => gains[0],
                Some(Region::B) => gains[1],
                Some(Region::N) => gains[2],
                None => continue,
            };
            *v *= g;
        }
        fft::inverse(pol);
    }
    Ok(out)
}

/// Adds white circular Gaussian noise over the occupied band of `cfg`,
/// `nfl_rel_db` below the unperturbed in-band PSD, on each polarization.
///
/// The level is tied to the field's mean power, which perturbation leaves
/// unchanged, so the floor is the same for every probe of a set.
pub fn add_tx_noise_floor(field: &SampledField, cfg: &TxConfig, seed: u64) -> Result<SampledField> {
    if cfg.nfl_rel_db == f64::NEG_INFINITY {
        return Ok(field.clone());
    }
    cfg.validate()?;
    let n = field.len();
    let fs = field.sample_rate();
    let boi = cfg.occupied_band();
    if boi.hi > fs / 2.0 {
        return Err(Error::RegionOutOfBand {
            lo: boi.lo,
            hi: boi.hi,
            nyquist: fs / 2.0,
        });
    }

    let signal_psd_per_pol = 0.5 * field.mean_power() / cfg.baud_rate;
    let noise_psd = signal_psd_per_pol * db_to_linear(cfg.nfl_rel_db);
    // E|X_k|² for an unnormalized DFT of white noise with PSD S.
    let bin_sigma = (0.5 * noise_psd * fs * n as f64).sqrt();

    let mut out = field.clone();
    let (x, y) = out.polarizations_mut();
    for (pol_idx, pol) in [x, y].into_iter().enumerate() {
        let mut rng = stream(derive_seed(seed, &[pol_idx as u64]));
        let mut noise = vec![Complex64::new(0.0, 0.0); n];
        for (k, v) in noise.iter_mut().enumerate() {
            if boi.contains(fft::bin_frequency(k, n, fs)) {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *v = Complex64::new(re, im) * bin_sigma;
            }
        }
        fft::inverse(&mut noise);
        for (s, w) in pol.iter_mut().zip(&noise) {
            *s += w;
        }
    }
    Ok(out)
}
