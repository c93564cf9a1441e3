//! SNR penalty of reserving part of the channel bandwidth for probing.
//!
//! Keeping Shannon capacity fixed while the information bandwidth shrinks
//! from `B` to `B − BWD` requires `(B − BWD)·log₂(1 + SNR') = B·log₂(1 + SNR)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_to_linear, linear_to_db};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginQuery {
    pub snr_linear: f64,
    pub baud_rate: f64,
    pub bwd_pert: f64,
}

impl MarginQuery {
    pub fn validate(&self) -> Result<()> {
        if !(self.snr_linear.is_finite() && self.snr_linear >= 0.0) {
            return Err(Error::InvalidMargin(format!(
                "SNR must be finite and non-negative, got {}",
                self.snr_linear
            )));
        }
        if !(self.baud_rate.is_finite() && self.baud_rate > 0.0) {
            return Err(Error::InvalidMargin(format!(
                "baud rate must be positive, got {}",
                self.baud_rate
            )));
        }
        if !(self.bwd_pert >= 0.0 && self.bwd_pert < self.baud_rate) {
            return Err(Error::InvalidMargin(format!(
                "perturbation bandwidth {} must lie in [0, {})",
                self.bwd_pert, self.baud_rate
            )));
        }
        Ok(())
    }
}

/// `SNR' = (1 + SNR)^(B / (B − BWD)) − 1`.
pub fn perturbed_snr(q: &MarginQuery) -> Result<f64> {
    q.validate()?;
    if q.bwd_pert == 0.0 {
        return Ok(q.snr_linear);
    }
    let exponent = q.baud_rate / (q.baud_rate - q.bwd_pert);
    // expm1/ln1p keep full relative precision at small SNR.
    Ok((exponent * q.snr_linear.ln_1p()).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub snr_db: f64,
    pub bwd_pert_hz: f64,
    pub snr_perturbed_db: f64,
    /// `SNR'[dB] − SNR[dB]`.
    pub penalty_db: f64,
}

/// Penalty table over every `(snr, bwd)` pair, SNR-major.
pub fn margin_curve(
    baud_rate: f64,
    bwd_list: &[f64],
    snr_grid_db: &[f64],
) -> Result<Vec<MarginRow>> {
    let mut rows = Vec::with_capacity(bwd_list.len() * snr_grid_db.len());
    for &snr_db in snr_grid_db {
        for &bwd in bwd_list {
            let q = MarginQuery {
                snr_linear: db_to_linear(snr_db),
                baud_rate,
                bwd_pert: bwd,
            };
            let sp = perturbed_snr(&q)?;
            let snr_perturbed_db = if bwd == 0.0 { snr_db } else { linear_to_db(sp) };
            rows.push(MarginRow {
                snr_db,
                bwd_pert_hz: bwd,
                snr_perturbed_db,
                penalty_db: snr_perturbed_db - snr_db,
            });
        }
    }
    Ok(rows)
}

/// Default perturbation bandwidths, Hz.
pub const DEFAULT_BWD_LIST: [f64; 5] = [0.5e9, 1e9, 2e9, 4e9, 5.68e9];

/// Evenly spaced SNR grid `start..=stop` in dB.
pub fn snr_grid(start_db: f64, stop_db: f64, step_db: f64) -> Vec<f64> {
    if !(step_db > 0.0) || stop_db < start_db {
        return vec![start_db];
    }
    let n = ((stop_db - start_db) / step_db + 1e-9).floor() as usize;
    (0..=n).map(|i| start_db + i as f64 * step_db).collect()
}

pub fn write_margin_csv<W: Write>(w: W, rows: &[MarginRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["snr_db", "bwd_pert_hz", "snr_perturbed_db", "penalty_db"])?;
    for r in rows {
        wtr.write_record([
            r.snr_db.to_string(),
            r.bwd_pert_hz.to_string(),
            r.snr_perturbed_db.to_string(),
            r.penalty_db.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
