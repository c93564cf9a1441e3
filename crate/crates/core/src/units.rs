//! Physical constants and unit conversions.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Default optical carrier, Hz.
pub const DEFAULT_CENTER_FREQ: f64 = 193.4e12;

/// OSNR reference bandwidth expressed in wavelength, m (0.1 nm).
pub const OSNR_REF_BANDWIDTH_M: f64 = 0.1e-9;

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * db_to_linear(dbm)
}

#[inline]
pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w / 1e-3)
}

/// Converts a wavelength span around `center_freq` into a frequency span.
pub fn wavelength_span_to_hz(span_m: f64, center_freq: f64) -> f64 {
    span_m * center_freq * center_freq / SPEED_OF_LIGHT
}

/// The 0.1 nm OSNR reference bandwidth in Hz at `center_freq`.
pub fn osnr_reference_bandwidth(center_freq: f64) -> f64 {
    wavelength_span_to_hz(OSNR_REF_BANDWIDTH_M, center_freq)
}

/// Group-velocity dispersion β₂ (s²/m) from the dispersion parameter D in
/// ps/(nm·km) at carrier `center_freq`.
pub fn beta2_from_dispersion(d_ps_nm_km: f64, center_freq: f64) -> f64 {
    let d_si = d_ps_nm_km * 1e-6; // s/m²
    let lambda = SPEED_OF_LIGHT / center_freq;
    -d_si * lambda * lambda / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT)
}

/// Power attenuation coefficient in 1/m from dB/km.
pub fn alpha_db_km_to_per_m(alpha_db_per_km: f64) -> f64 {
    alpha_db_per_km * std::f64::consts::LN_10 / 10.0 / 1e3
}
