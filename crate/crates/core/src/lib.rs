//! Simulation and estimation toolkit for in-band OSNR measurement with
//! spectrally perturbed probe waveforms.
//!
//! The pipeline mirrors a lab setup:
//!
//! * [`wfm`] synthesizes a root-raised-cosine DP-QPSK reference waveform and
//!   reshapes its spectrum into a notch-and-boost probe while keeping the
//!   total power fixed.
//! * [`fiberlink`] propagates the probe over amplified NDSF spans with a
//!   symmetric split-step Manakov solver and lumped ASE injection.
//! * [`spectrum`] emulates a 150 MHz optical spectrum analyzer and reduces
//!   traces to average PSD (APSD) figures per spectral region.
//! * [`estimator`] fits the linear OSNR model over the APSD features.
//! * [`margin`] evaluates the capacity-equivalent SNR penalty of reserving
//!   bandwidth for the probe.

// NaN must fail range checks, so `!(x > 0.0)` is intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod fft;
pub mod fiberlink;
pub mod field;
pub mod margin;
pub mod rng;
pub mod spectrum;
pub mod units;
pub mod wfm;

pub use error::{Error, Result};
pub use estimator::{
    build_feature_row, cross_validate, evaluate, fit_least_squares, predict_osnr, Dataset,
    EvalReport, FeatureRow, FitCoefficients, ScenarioMeta, Split, DELTA_A_GRID_DB,
};
pub use fiberlink::{
    amplify, analytic_osnr, propagate_span, simulate_link, simulate_link_tapped, AmpParams,
    FiberParams, LinkConfig,
};
pub use field::SampledField;
pub use margin::{margin_curve, perturbed_snr, MarginQuery, MarginRow};
pub use spectrum::{apsd, estimate_psd, nln_metric, ApsdReport, Osa, PsdTrace};
pub use wfm::{
    add_tx_noise_floor, apply_perturbation, delta_b_for, generate_reference, power_fractions,
    Interval, PerturbationProfile, PowerFractions, Region, RegionSet, TxConfig,
};
