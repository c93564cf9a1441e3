//! Linear least-squares OSNR model over APSD features.
//!
//! ```text
//! OSNR[dB] = k0 + k1·P_ref(Δ(A) = -10 dB) + Σᵢ k(i+2)·P_N(Δ(A)ᵢ)
//! ```
//!
//! with `Δ(A)` on the grid `-10:5:10` dB. All APSD features are in dB.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::spectrum::ApsdReport;

/// Probe grid, ascending, in dB.
pub const DELTA_A_GRID_DB: [f64; 5] = [-10.0, -5.0, 0.0, 5.0, 10.0];

/// Number of model coefficients.
pub const N_COEFFS: usize = 7;

/// Human-readable names of the design-matrix columns.
pub const COLUMN_NAMES: [&str; N_COEFFS] = [
    "k0 (constant)",
    "k1 (P_ref @ -10 dB)",
    "k2 (P_N @ -10 dB)",
    "k3 (P_N @ -5 dB)",
    "k4 (P_N @ 0 dB)",
    "k5 (P_N @ +5 dB)",
    "k6 (P_N @ +10 dB)",
];

/// Default OSNR ceiling for fitting and scoring, dB.
pub const DEFAULT_OSNR_CAP_DB: f64 = 30.0;

const GRID_MATCH_TOL_DB: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub launch_power_dbm: f64,
    pub n_spans: usize,
    pub nf_db: f64,
}

impl ScenarioMeta {
    /// Stable identifier, e.g. `P+2dBm_N30_NF4.5`.
    pub fn id(&self) -> String {
        format!(
            "P{:+}dBm_N{}_NF{}",
            self.launch_power_dbm, self.n_spans, self.nf_db
        )
    }
}

/// Regression inputs for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub p_ref_at_minus10: f64,
    /// `P_N` for each `Δ(A)` of [`DELTA_A_GRID_DB`], in that order.
    pub p_n: [f64; 5],
    pub truth_osnr_db: f64,
    pub meta: ScenarioMeta,
}

impl FeatureRow {
    /// Design-matrix row `[1, p_ref, p_n...]`.
    pub fn features(&self) -> [f64; N_COEFFS] {
        let mut f = [1.0; N_COEFFS];
        f[1] = self.p_ref_at_minus10;
        f[2..].copy_from_slice(&self.p_n);
        f
    }

    pub fn id(&self) -> String {
        self.meta.id()
    }
}

/// Orders one scenario's reports onto the probe grid.
pub fn build_feature_row(
    reports: &[ApsdReport],
    truth_osnr_db: f64,
    meta: ScenarioMeta,
) -> Result<FeatureRow> {
    let mut slots: [Option<&ApsdReport>; 5] = [None; 5];
    for r in reports {
        let idx = DELTA_A_GRID_DB
            .iter()
            .position(|d| (d - r.delta_a_db).abs() < GRID_MATCH_TOL_DB)
            .ok_or_else(|| {
                Error::IncompleteGrid(format!(
                    "delta_A = {} dB is not on the -10:5:10 dB grid",
                    r.delta_a_db
                ))
            })?;
        if slots[idx].replace(r).is_some() {
            return Err(Error::IncompleteGrid(format!(
                "delta_A = {} dB reported twice",
                DELTA_A_GRID_DB[idx]
            )));
        }
    }
    let missing: Vec<String> = DELTA_A_GRID_DB
        .iter()
        .zip(&slots)
        .filter(|(_, s)| s.is_none())
        .map(|(d, _)| format!("{d}"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteGrid(format!(
            "missing delta_A = {} dB",
            missing.join(", ")
        )));
    }
    let slots = slots.map(|s| s.unwrap());
    let mut p_n = [0.0; 5];
    for (p, r) in p_n.iter_mut().zip(&slots) {
        *p = r.p_n;
    }
    let row = FeatureRow {
        p_ref_at_minus10: slots[0].p_ref,
        p_n,
        truth_osnr_db,
        meta,
    };
    if row.features().iter().any(|v| !v.is_finite()) || !truth_osnr_db.is_finite() {
        return Err(Error::InvalidField(format!(
            "non-finite feature in scenario {}",
            meta.id()
        )));
    }
    Ok(row)
}

/// Fitted `k0..k6`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCoefficients {
    pub k: [f64; N_COEFFS],
}

impl FitCoefficients {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(f)?)
    }
}

/// Which rows train and which score.
#[derive(Debug, Clone, PartialEq)]
pub enum Split {
    /// Fit on every eligible row and score on the same rows.
    All,
    /// `true` marks a held-out test row.
    Holdout(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<FeatureRow>,
    pub split: Split,
    pub osnr_cap_db: f64,
}

impl Dataset {
    pub fn fit_all(rows: Vec<FeatureRow>, osnr_cap_db: f64) -> Self {
        Self {
            rows,
            split: Split::All,
            osnr_cap_db,
        }
    }

    fn eligible(&self, row: &FeatureRow) -> bool {
        row.truth_osnr_db <= self.osnr_cap_db
    }

    fn select(&self, want_test: bool) -> Vec<&FeatureRow> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| self.eligible(r))
            .filter(|(i, _)| match &self.split {
                Split::All => true,
                Split::Holdout(test) => test[*i] == want_test,
            })
            .map(|(_, r)| r)
            .collect()
    }

    /// Training rows at or below the OSNR cap.
    pub fn train_rows(&self) -> Vec<&FeatureRow> {
        self.select(false)
    }

    /// Scoring rows at or below the OSNR cap.
    pub fn test_rows(&self) -> Vec<&FeatureRow> {
        self.select(true)
    }

    /// Folds for k-fold cross-validation, stratified by span count.
    ///
    /// Within each span count, rows are shuffled with `seed` and dealt
    /// round-robin; the dealing offset carries across span counts so fold
    /// sizes stay balanced.
    pub fn folds(&self, k: usize, seed: u64) -> Result<Vec<Dataset>> {
        if k < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 folds, got {k}"
            )));
        }
        let mut by_spans: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            if self.eligible(r) {
                by_spans.entry(r.meta.n_spans).or_default().push(i);
            }
        }
        let mut rng = stream(seed);
        let mut fold_of = vec![usize::MAX; self.rows.len()];
        let mut next = 0usize;
        for idx in by_spans.values_mut() {
            idx.sort_by(|&a, &b| {
                let (ma, mb) = (&self.rows[a].meta, &self.rows[b].meta);
                ma.launch_power_dbm
                    .total_cmp(&mb.launch_power_dbm)
                    .then(ma.nf_db.total_cmp(&mb.nf_db))
            });
            idx.shuffle(&mut rng);
            for &i in idx.iter() {
                fold_of[i] = next % k;
                next += 1;
            }
        }
        Ok((0..k)
            .map(|f| Dataset {
                rows: self.rows.clone(),
                split: Split::Holdout(fold_of.iter().map(|&g| g == f).collect()),
                osnr_cap_db: self.osnr_cap_db,
            })
            .collect())
    }
}

/// Least-squares fit over the training rows via Householder QR.
pub fn fit_least_squares(data: &Dataset) -> Result<FitCoefficients> {
    fit_rows(&data.train_rows())
}

fn fit_rows(rows: &[&FeatureRow]) -> Result<FitCoefficients> {
    if rows.len() < N_COEFFS {
        return Err(Error::TooFewRows {
            have: rows.len(),
            need: N_COEFFS,
        });
    }
    let design = DMatrix::from_fn(rows.len(), N_COEFFS, |i, j| rows[i].features()[j]);
    let mut rhs = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.truth_osnr_db));
    let col_norms: Vec<f64> = (0..N_COEFFS).map(|j| design.column(j).norm()).collect();

    let qr = design.qr();
    let r = qr.r();
    // |R_jj| is the norm of column j orthogonal to columns 0..j.
    let collinear: Vec<String> = (0..N_COEFFS)
        .filter(|&j| r[(j, j)].abs() <= 1e-10 * col_norms[j].max(f64::MIN_POSITIVE))
        .map(|j| COLUMN_NAMES[j].to_string())
        .collect();
    if !collinear.is_empty() {
        return Err(Error::RankDeficient(collinear));
    }
    qr.q_tr_mul(&mut rhs);
    let top = rhs.rows(0, N_COEFFS).into_owned();
    let sol = r
        .solve_upper_triangular(&top)
        .ok_or_else(|| Error::RankDeficient(vec!["triangular solve failed".into()]))?;
    let mut k = [0.0; N_COEFFS];
    k.copy_from_slice(sol.as_slice());
    Ok(FitCoefficients { k })
}

pub fn predict_osnr(coeffs: &FitCoefficients, row: &FeatureRow) -> f64 {
    coeffs
        .k
        .iter()
        .zip(row.features())
        .map(|(k, x)| k * x)
        .sum()
}

/// Sum of squared residuals over `rows`.
pub fn sse(coeffs: &FitCoefficients, rows: &[&FeatureRow]) -> f64 {
    rows.iter()
        .map(|r| (predict_osnr(coeffs, r) - r.truth_osnr_db).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub truth_osnr_db: f64,
    pub predicted_osnr_db: f64,
    pub launch_power_dbm: f64,
    pub n_spans: usize,
    pub nf_db: f64,
}

impl Prediction {
    pub fn error(&self) -> f64 {
        self.predicted_osnr_db - self.truth_osnr_db
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub launch_power_dbm: f64,
    pub rmse_db: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse_db: f64,
    pub bias_db: f64,
    pub max_abs_error_db: f64,
    pub count: usize,
    pub per_power: Vec<PowerBreakdown>,
    #[serde(skip)]
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn from_predictions(predictions: Vec<Prediction>) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        let n = predictions.len() as f64;
        let rmse = (predictions.iter().map(|p| p.error().powi(2)).sum::<f64>() / n).sqrt();
        let bias = predictions.iter().map(Prediction::error).sum::<f64>() / n;
        let max_abs = predictions
            .iter()
            .map(|p| p.error().abs())
            .fold(0.0, f64::max);

        let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
        for p in &predictions {
            match groups
                .iter_mut()
                .find(|(pw, _)| pw.to_bits() == p.launch_power_dbm.to_bits())
            {
                Some((_, errs)) => errs.push(p.error()),
                None => groups.push((p.launch_power_dbm, vec![p.error()])),
            }
        }
        groups.sort_by(|a, b| a.0.total_cmp(&b.0));
        let per_power = groups
            .into_iter()
            .map(|(launch_power_dbm, errs)| PowerBreakdown {
                launch_power_dbm,
                rmse_db: (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt(),
                count: errs.len(),
            })
            .collect();
        Ok(Self {
            rmse_db: rmse,
            bias_db: bias,
            max_abs_error_db: max_abs,
            count: predictions.len(),
            per_power,
            predictions,
        })
    }

    /// Writes `truth,predicted,power,spans,nf` rows with a header.
    pub fn write_predictions_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "truth_osnr_db",
            "predicted_osnr_db",
            "launch_power_dbm",
            "n_spans",
            "nf_db",
        ])?;
        for p in &self.predictions {
            wtr.write_record([
                p.truth_osnr_db.to_string(),
                p.predicted_osnr_db.to_string(),
                p.launch_power_dbm.to_string(),
                p.n_spans.to_string(),
                p.nf_db.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn predict_rows(coeffs: &FitCoefficients, rows: &[&FeatureRow]) -> Vec<Prediction> {
    rows.iter()
        .map(|r| Prediction {
            truth_osnr_db: r.truth_osnr_db,
            predicted_osnr_db: predict_osnr(coeffs, r),
            launch_power_dbm: r.meta.launch_power_dbm,
            n_spans: r.meta.n_spans,
            nf_db: r.meta.nf_db,
        })
        .collect()
}

/// Scores `coeffs` on the test rows of `data`.
pub fn evaluate(data: &Dataset, coeffs: &FitCoefficients) -> Result<EvalReport> {
    EvalReport::from_predictions(predict_rows(coeffs, &data.test_rows()))
}

/// Held-out predictions from k-fold cross-validation, pooled into one
/// report.
pub fn cross_validate(data: &Dataset, k: usize, seed: u64) -> Result<EvalReport> {
    let mut all = Vec::new();
    for fold in data.folds(k, seed)? {
        let coeffs = fit_least_squares(&fold)?;
        all.extend(predict_rows(&coeffs, &fold.test_rows()));
    }
    EvalReport::from_predictions(all)
}

/// Flat on-disk form of a [`FeatureRow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RowRecord {
    scenario: String,
    launch_power_dbm: f64,
    n_spans: usize,
    nf_db: f64,
    truth_osnr_db: f64,
    p_ref_da_m10: f64,
    p_n_da_m10: f64,
    p_n_da_m5: f64,
    p_n_da_0: f64,
    p_n_da_p5: f64,
    p_n_da_p10: f64,
}

impl From<&FeatureRow> for RowRecord {
    fn from(r: &FeatureRow) -> Self {
        Self {
            scenario: r.id(),
            launch_power_dbm: r.meta.launch_power_dbm,
            n_spans: r.meta.n_spans,
            nf_db: r.meta.nf_db,
            truth_osnr_db: r.truth_osnr_db,
            p_ref_da_m10: r.p_ref_at_minus10,
            p_n_da_m10: r.p_n[0],
            p_n_da_m5: r.p_n[1],
            p_n_da_0: r.p_n[2],
            p_n_da_p5: r.p_n[3],
            p_n_da_p10: r.p_n[4],
        }
    }
}

impl From<RowRecord> for FeatureRow {
    fn from(r: RowRecord) -> Self {
        FeatureRow {
            p_ref_at_minus10: r.p_ref_da_m10,
            p_n: [
                r.p_n_da_m10,
                r.p_n_da_m5,
                r.p_n_da_0,
                r.p_n_da_p5,
                r.p_n_da_p10,
            ],
            truth_osnr_db: r.truth_osnr_db,
            meta: ScenarioMeta {
                launch_power_dbm: r.launch_power_dbm,
                n_spans: r.n_spans,
                nf_db: r.nf_db,
            },
        }
    }
}

/// CSV header of dataset files.
pub fn dataset_header() -> Vec<&'static str> {
    vec![
        "scenario",
        "launch_power_dbm",
        "n_spans",
        "nf_db",
        "truth_osnr_db",
        "p_ref_da_m10",
        "p_n_da_m10",
        "p_n_da_m5",
        "p_n_da_0",
        "p_n_da_p5",
        "p_n_da_p10",
    ]
}

/// Appends rows to a CSV writer that already carries the header.
pub fn write_rows<W: Write>(wtr: &mut csv::Writer<W>, rows: &[FeatureRow]) -> Result<()> {
    for r in rows {
        wtr.serialize(RowRecord::from(r))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_rows_csv<W: Write>(w: W, rows: &[FeatureRow]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(dataset_header())?;
    write_rows(&mut wtr, rows)
}

/// Reads dataset rows. A truncated final record (from an interrupted
/// writer) is skipped with a warning; any other malformed record is an
/// error.
pub fn read_rows_csv<R: Read>(r: R) -> Result<Vec<FeatureRow>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let mut rows = Vec::new();
    let mut records = rdr.deserialize::<RowRecord>().peekable();
    while let Some(rec) = records.next() {
        match rec {
            Ok(r) => rows.push(FeatureRow::from(r)),
            Err(e) if records.peek().is_none() => {
                log::warn!("skipping truncated final dataset record: {e}");
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(rows)
}

pub fn load_rows(path: &Path) -> Result<Vec<FeatureRow>> {
    read_rows_csv(std::fs::File::open(path)?)
}

pub fn save_rows(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    write_rows_csv(std::fs::File::create(path)?, rows)
}
