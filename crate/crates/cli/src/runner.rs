//! Dataset generation over the full scenario grid.
//!
//! The unit of parallel work is a chain: one probe (`Δ(A)`) launched at one
//! power through amplifiers of one noise figure, tapped after every span
//! count of the grid. Span `k` of a chain is bit-identical to a standalone
//! `k`-span run because amplifier noise is seeded per span.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Instant;

use osnr_core::estimator::{read_rows_csv, write_rows, write_rows_csv};
use osnr_core::fiberlink::analytic_osnr;
use osnr_core::rng::derive_seed;
use osnr_core::units::{db_to_linear, linear_to_db};
use osnr_core::{
    add_tx_noise_floor, apply_perturbation, build_feature_row, generate_reference, power_fractions,
    simulate_link_tapped, ApsdReport, FeatureRow, LinkConfig, PerturbationProfile, RegionSet,
    SampledField, ScenarioMeta,
};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// Transmitted probe for one `Δ(A)`.
#[derive(Debug, Clone)]
pub struct Probe {
    pub delta_a_db: f64,
    pub field: SampledField,
}

/// Builds the reference waveform, every constant-power probe of the grid and
/// the transmitter noise floor (same realization on every probe).
pub fn build_probes(cfg: &ExperimentConfig) -> Result<(RegionSet, Vec<Probe>)> {
    let regions = cfg.regions.resolve(&cfg.tx)?;
    let reference = generate_reference(&cfg.tx)?;
    let fractions = power_fractions(&reference, &regions)?;
    log::debug!(
        "power fractions K_A={:.5} K_B={:.5} K_N={:.5}",
        fractions.k_a,
        fractions.k_b,
        fractions.k_n
    );
    let probes = cfg
        .delta_a_grid_db
        .iter()
        .map(|&d| {
            let profile = PerturbationProfile::constant_power(d, &fractions, regions.clone())
                .map_err(|e| CliError::Scenario {
                    scenario: format!("delta_A={d}dB"),
                    source: e,
                })?;
            let shaped = apply_perturbation(&reference, &profile)?;
            let field = add_tx_noise_floor(&shaped, &cfg.tx, cfg.seeds.nfl)?;
            Ok(Probe {
                delta_a_db: d,
                field,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((regions, probes))
}

/// Amplifier noise seed of a (power, NF) chain; shared by every probe so the
/// ASE realization is common across `Δ(A)`.
pub fn chain_ase_seed(base: u64, launch_power_dbm: f64, nf_db: f64, realization: usize) -> u64 {
    derive_seed(
        base,
        &[
            launch_power_dbm.to_bits(),
            nf_db.to_bits(),
            realization as u64,
        ],
    )
}

/// Link of `n_spans` spans for one grid point.
pub fn link_for(
    cfg: &ExperimentConfig,
    launch_power_dbm: f64,
    nf_db: f64,
    n_spans: usize,
    realization: usize,
) -> LinkConfig {
    LinkConfig::constant_gain(
        cfg.fiber.clone(),
        nf_db,
        n_spans,
        launch_power_dbm,
        chain_ase_seed(cfg.seeds.ase, launch_power_dbm, nf_db, realization),
    )
    .with_center_freq(cfg.link.center_freq_hz)
}

fn sorted_spans(cfg: &ExperimentConfig) -> Vec<usize> {
    let mut s = cfg.link.spans.clone();
    s.sort_unstable();
    s.dedup();
    s
}

/// Runs one probe through a (power, NF) chain and returns one report per
/// configured span count, ascending. APSDs of several ASE realizations are
/// averaged in linear units.
pub fn run_chain(
    cfg: &ExperimentConfig,
    regions: &RegionSet,
    probe: &Probe,
    launch_power_dbm: f64,
    nf_db: f64,
    cancel: &AtomicBool,
) -> Result<Vec<ApsdReport>> {
    let spans = sorted_spans(cfg);
    let max_spans = *spans.last().expect("validated non-empty");
    let reps = cfg.seeds.ase_realizations;
    let mut acc = vec![(0.0f64, 0.0f64); spans.len()];
    for r in 0..reps {
        let link = link_for(cfg, launch_power_dbm, nf_db, max_spans, r);
        simulate_link_tapped(&probe.field, &link, |k, field| {
            if cancel.load(Ordering::Relaxed) {
                return Err(osnr_core::Error::InvalidConfig("run cancelled".into()));
            }
            if let Ok(i) = spans.binary_search(&k) {
                let meta = ScenarioMeta {
                    launch_power_dbm,
                    n_spans: k,
                    nf_db,
                };
                let rep = cfg
                    .osa
                    .measure(field, regions, probe.delta_a_db, meta.id())?;
                acc[i].0 += db_to_linear(rep.p_ref);
                acc[i].1 += db_to_linear(rep.p_n);
            }
            Ok(())
        })
        .map_err(|e| CliError::Scenario {
            scenario: format!(
                "P{launch_power_dbm:+}dBm_NF{nf_db}_dA{}dB",
                probe.delta_a_db
            ),
            source: e,
        })?;
    }
    Ok(spans
        .iter()
        .zip(acc)
        .map(|(&k, (p_ref, p_n))| ApsdReport {
            p_ref: linear_to_db(p_ref / reps as f64),
            p_n: linear_to_db(p_n / reps as f64),
            delta_a_db: probe.delta_a_db,
            scenario: ScenarioMeta {
                launch_power_dbm,
                n_spans: k,
                nf_db,
            }
            .id(),
        })
        .collect())
}

/// Outcome of [`run_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunSummary {
    /// Rows taken from an existing output file.
    pub rows_reused: usize,
    /// Rows produced by this invocation.
    pub rows_simulated: usize,
    /// Propagation chains run by this invocation.
    pub chains_simulated: usize,
}

/// Rejects a `Δ(A)` grid that cannot form feature rows before any
/// simulation starts.
fn check_delta_grid(cfg: &ExperimentConfig) -> Result<()> {
    let dummy: Vec<ApsdReport> = cfg
        .delta_a_grid_db
        .iter()
        .map(|&d| ApsdReport {
            p_ref: 0.0,
            p_n: 0.0,
            delta_a_db: d,
            scenario: String::new(),
        })
        .collect();
    let meta = ScenarioMeta {
        launch_power_dbm: 0.0,
        n_spans: 1,
        nf_db: 5.0,
    };
    build_feature_row(&dummy, 0.0, meta)
        .map_err(|e| CliError::Config(format!("delta_a_grid_db: {e}")))?;
    Ok(())
}

type GroupKey = (u64, u64);

fn key(power: f64, nf: f64) -> GroupKey {
    (power.to_bits(), nf.to_bits())
}

/// Rows of `rows` in configuration order (power, NF, spans), dropping
/// scenarios outside the grid and duplicates.
fn canonical(cfg: &ExperimentConfig, rows: Vec<FeatureRow>) -> Vec<FeatureRow> {
    let mut by_id: BTreeMap<(GroupKey, usize), FeatureRow> = BTreeMap::new();
    for r in rows {
        by_id
            .entry((key(r.meta.launch_power_dbm, r.meta.nf_db), r.meta.n_spans))
            .or_insert(r);
    }
    let mut out = Vec::with_capacity(by_id.len());
    for &p in &cfg.link.launch_powers_dbm {
        for &nf in &cfg.link.nf_db {
            for &k in &sorted_spans(cfg) {
                if let Some(r) = by_id.remove(&(key(p, nf), k)) {
                    out.push(r);
                }
            }
        }
    }
    out
}

/// Writes `rows` to `path` through a sibling temporary file and a rename so
/// readers never see a half-written dataset.
fn write_atomic(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let tmp = tmp_path(path);
    {
        let f = File::create(&tmp).map_err(|e| CliError::Path {
            path: tmp.clone(),
            source: e,
        })?;
        let mut w = BufWriter::new(f);
        write_rows_csv(&mut w, rows)?;
        w.flush()?;
    }
    fs::rename(&tmp, path).map_err(|e| CliError::Path {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

fn load_existing(path: &Path) -> Result<Vec<FeatureRow>> {
    match File::open(path) {
        Ok(f) => Ok(read_rows_csv(f)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(CliError::Path {
            path: path.to_path_buf(),
            source: e,
        }),
    }
}

type ChainResult = (usize, usize, Result<Vec<ApsdReport>>);

/// Simulates every missing scenario of `cfg` and writes the dataset to `out`.
///
/// Completed (power, NF) groups already present in `out` are kept and not
/// simulated again. New groups are appended as soon as all of their probes
/// finish; the file is rewritten in canonical order at the end, so an
/// interrupted and resumed run ends byte-identical to an uninterrupted one.
pub fn run_dataset(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<RunSummary> {
    cfg.validate()?;
    check_delta_grid(cfg)?;
    let spans = sorted_spans(cfg);

    let existing = canonical(cfg, load_existing(out)?);
    let mut per_group: BTreeMap<GroupKey, usize> = BTreeMap::new();
    for r in &existing {
        *per_group
            .entry(key(r.meta.launch_power_dbm, r.meta.nf_db))
            .or_default() += 1;
    }
    let complete: HashSet<GroupKey> = per_group
        .into_iter()
        .filter(|&(_, n)| n == spans.len())
        .map(|(k, _)| k)
        .collect();
    let kept: Vec<FeatureRow> = existing
        .into_iter()
        .filter(|r| complete.contains(&key(r.meta.launch_power_dbm, r.meta.nf_db)))
        .collect();
    let mut summary = RunSummary {
        rows_reused: kept.len(),
        ..Default::default()
    };

    let mut pending = Vec::new();
    for &p in &cfg.link.launch_powers_dbm {
        for &nf in &cfg.link.nf_db {
            if !complete.contains(&key(p, nf)) && !pending.contains(&(p, nf)) {
                pending.push((p, nf));
            }
        }
    }
    if pending.is_empty() {
        log::info!(
            "all {} scenarios present in {}; nothing to simulate",
            kept.len(),
            out.display()
        );
        write_atomic(out, &kept)?;
        return Ok(summary);
    }
    write_atomic(out, &kept)?;
    log::info!(
        "{} rows reused, {} (power, NF) groups to simulate with {} worker(s)",
        kept.len(),
        pending.len(),
        workers
    );

    let started = Instant::now();
    let (regions, probes) = build_probes(cfg)?;
    log::info!("built {} probes in {:?}", probes.len(), started.elapsed());

    let shared = Arc::new((cfg.clone(), regions, probes));
    let cancel = Arc::new(AtomicBool::new(false));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    let (tx, rx) = mpsc::channel::<ChainResult>();
    let n_deltas = cfg.delta_a_grid_db.len();
    for (g, &(p, nf)) in pending.iter().enumerate() {
        for d in 0..n_deltas {
            let tx = tx.clone();
            let shared = Arc::clone(&shared);
            let cancel = Arc::clone(&cancel);
            pool.spawn(move || {
                let (cfg, regions, probes) = &*shared;
                let t0 = Instant::now();
                let res = run_chain(cfg, regions, &probes[d], p, nf, &cancel);
                if res.is_ok() {
                    log::info!(
                        "chain P{p:+}dBm NF{nf} dA{}dB: {} spans in {:.1?}",
                        probes[d].delta_a_db,
                        cfg.max_spans(),
                        t0.elapsed()
                    );
                }
                let _ = tx.send((g, d, res));
            });
        }
    }
    drop(tx);

    let mut slots: Vec<Vec<Option<Vec<ApsdReport>>>> = vec![vec![None; n_deltas]; pending.len()];
    let mut file = OpenOptions::new()
        .append(true)
        .open(out)
        .map_err(|e| CliError::Path {
            path: out.to_path_buf(),
            source: e,
        })?;
    for (g, d, res) in rx {
        let reports = match res {
            Ok(r) => r,
            Err(e) => {
                cancel.store(true, Ordering::Relaxed);
                return Err(e);
            }
        };
        summary.chains_simulated += 1;
        slots[g][d] = Some(reports);
        if slots[g].iter().all(Option::is_some) {
            let (p, nf) = pending[g];
            let done: Vec<Vec<ApsdReport>> =
                slots[g].iter_mut().map(|s| s.take().unwrap()).collect();
            let mut rows = Vec::with_capacity(spans.len());
            for (i, &k) in spans.iter().enumerate() {
                let meta = ScenarioMeta {
                    launch_power_dbm: p,
                    n_spans: k,
                    nf_db: nf,
                };
                let reports: Vec<ApsdReport> = done.iter().map(|c| c[i].clone()).collect();
                let truth = analytic_osnr(&link_for(cfg, p, nf, k, 0));
                let row =
                    build_feature_row(&reports, truth, meta).map_err(|e| CliError::Scenario {
                        scenario: meta.id(),
                        source: e,
                    })?;
                rows.push(row);
            }
            let mut wtr = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(&mut file);
            write_rows(&mut wtr, &rows)?;
            drop(wtr);
            file.sync_data()?;
            summary.rows_simulated += rows.len();
            log::info!(
                "group P{p:+}dBm NF{nf}: {} rows written ({:.1?} since start)",
                rows.len(),
                started.elapsed()
            );
        }
    }
    drop(file);
    if summary.chains_simulated != pending.len() * n_deltas {
        return Err(CliError::Pool(format!(
            "only {} of {} chains reported back",
            summary.chains_simulated,
            pending.len() * n_deltas
        )));
    }

    let all = canonical(cfg, load_existing(out)?);
    write_atomic(out, &all)?;
    log::info!(
        "dataset {} complete: {} rows in {:.1?}",
        out.display(),
        all.len(),
        started.elapsed()
    );
    Ok(summary)
}
