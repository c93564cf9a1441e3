//! Thin drivers behind the `psd`, `fit`, `eval` and `margin` subcommands.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use osnr_core::estimator::{load_rows, COLUMN_NAMES};
use osnr_core::margin::write_margin_csv;
use osnr_core::spectrum::nln_metric;
use osnr_core::{
    cross_validate, evaluate, fit_least_squares, margin_curve, simulate_link, ApsdReport, Dataset,
    EvalReport, FitCoefficients, PsdTrace,
};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::runner::{build_probes, link_for};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Path {
            path: path.to_path_buf(),
            source: e,
        })
}

fn load_dataset_rows(path: &Path) -> Result<Vec<osnr_core::FeatureRow>> {
    if !path.exists() {
        return Err(CliError::Path {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
        });
    }
    Ok(load_rows(path)?)
}

/// Column suffix for a `Δ(A)` value: `m10`, `m5`, `0`, `p5`, `p10`.
pub fn delta_tag(delta_db: f64) -> String {
    if delta_db < 0.0 {
        format!("m{}", -delta_db)
    } else if delta_db > 0.0 {
        format!("p{delta_db}")
    } else {
        "0".into()
    }
}

/// Scenario of a `psd` export.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdRequest {
    pub launch_power_dbm: f64,
    /// Zero exports the transmitted probes.
    pub n_spans: usize,
    /// `None` runs noiseless amplifiers.
    pub nf_db: Option<f64>,
    pub dump_fields: bool,
}

/// Writes `psd.csv` (one PSD column per probe, W/Hz) and `apsd.csv` (APSD
/// per probe, dB) into `out_dir`, and optionally raw field dumps.
pub fn export_psd(
    cfg: &ExperimentConfig,
    req: &PsdRequest,
    out_dir: &Path,
) -> Result<Vec<ApsdReport>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let (regions, probes) = build_probes(cfg)?;
    let nf = req.nf_db.unwrap_or(f64::NEG_INFINITY);
    let link = link_for(cfg, req.launch_power_dbm, nf, req.n_spans, 0);

    let mut traces: Vec<PsdTrace> = Vec::with_capacity(probes.len());
    let mut reports = Vec::with_capacity(probes.len());
    for probe in &probes {
        let rx = simulate_link(&probe.field, &link)?;
        if req.dump_fields {
            let path = out_dir.join(format!("field_da_{}.bin", delta_tag(probe.delta_a_db)));
            rx.write_binary(create(&path)?)?;
        }
        let trace = cfg.osa.estimate_psd(&rx)?;
        let scenario = format!(
            "P{:+}dBm_N{}_NF{}",
            req.launch_power_dbm,
            req.n_spans,
            req.nf_db.map_or("none".to_string(), |v| v.to_string())
        );
        reports.push(ApsdReport::from_trace(
            &trace,
            &regions,
            probe.delta_a_db,
            scenario,
        )?);
        traces.push(trace);
    }

    let mut wtr = csv::Writer::from_writer(create(&out_dir.join("psd.csv"))?);
    let mut header = vec!["freq_hz".to_string()];
    header.extend(
        probes
            .iter()
            .map(|p| format!("psd_da_{}", delta_tag(p.delta_a_db))),
    );
    wtr.write_record(&header)?;
    for i in 0..traces[0].freqs().len() {
        let mut rec = vec![traces[0].freqs()[i].to_string()];
        rec.extend(traces.iter().map(|t| format!("{:e}", t.psd()[i])));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;

    let mut wtr = csv::Writer::from_writer(create(&out_dir.join("apsd.csv"))?);
    wtr.write_record(["delta_a_db", "p_ref_db", "p_n_db", "nln_metric_db"])?;
    for r in &reports {
        wtr.write_record([
            r.delta_a_db.to_string(),
            r.p_ref.to_string(),
            r.p_n.to_string(),
            nln_metric(r.p_ref, r.p_n).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// k-fold cross-validation for the held-out score; final coefficients
    /// from all rows.
    CrossValidate { folds: usize, seed: u64 },
    /// Fit and score on every row below the cap.
    All,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientEntry {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub dataset: PathBuf,
    pub mode: String,
    pub osnr_cap_db: f64,
    pub rows_total: usize,
    pub rows_used: usize,
    pub coefficients: Vec<CoefficientEntry>,
    /// Score of the final coefficients on the rows they were fit on.
    pub training: EvalReport,
    /// Pooled held-out score (cross-validation mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub held_out: Option<EvalReport>,
}

impl FitReport {
    /// RMSE quoted for the fit: held-out when available.
    pub fn headline_rmse(&self) -> f64 {
        self.held_out.as_ref().unwrap_or(&self.training).rmse_db
    }
}

/// Fits the estimator to a dataset file, writes the coefficients JSON and
/// a JSON report next to it.
pub fn run_fit(
    dataset: &Path,
    mode: FitMode,
    osnr_cap_db: f64,
    coeffs_out: &Path,
    report_out: &Path,
) -> Result<FitReport> {
    let rows = load_dataset_rows(dataset)?;
    let rows_total = rows.len();
    let data = Dataset::fit_all(rows, osnr_cap_db);
    let rows_used = data.train_rows().len();
    let coeffs = fit_least_squares(&data)?;
    let training = evaluate(&data, &coeffs)?;
    let (mode_name, held_out) = match mode {
        FitMode::All => ("all".to_string(), None),
        FitMode::CrossValidate { folds, seed } => (
            format!("cv{folds}"),
            Some(cross_validate(&data, folds, seed)?),
        ),
    };
    let report = FitReport {
        dataset: dataset.to_path_buf(),
        mode: mode_name,
        osnr_cap_db,
        rows_total,
        rows_used,
        coefficients: COLUMN_NAMES
            .iter()
            .zip(coeffs.k)
            .map(|(&name, value)| CoefficientEntry { name, value })
            .collect(),
        training,
        held_out,
    };
    if let Some(dir) = coeffs_out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    coeffs.save_json(coeffs_out)?;
    serde_json::to_writer_pretty(create(report_out)?, &report)?;
    Ok(report)
}

/// Scores saved coefficients on a dataset and writes per-row predictions.
pub fn run_eval(
    dataset: &Path,
    coeffs: &Path,
    osnr_cap_db: f64,
    predictions_out: &Path,
) -> Result<EvalReport> {
    let rows = load_dataset_rows(dataset)?;
    if !coeffs.exists() {
        return Err(CliError::Path {
            path: coeffs.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "coefficients file not found",
            ),
        });
    }
    let k = FitCoefficients::load_json(coeffs)?;
    let report = evaluate(&Dataset::fit_all(rows, osnr_cap_db), &k)?;
    report.write_predictions_csv(create(predictions_out)?)?;
    Ok(report)
}

/// Writes the SNR-penalty table.
pub fn run_margin(
    baud_rate: f64,
    bwd_list_hz: &[f64],
    snr_grid_db: &[f64],
    out: &Path,
) -> Result<usize> {
    let rows = margin_curve(baud_rate, bwd_list_hz, snr_grid_db)?;
    write_margin_csv(create(out)?, &rows)?;
    Ok(rows.len())
}
