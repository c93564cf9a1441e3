use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use osnr_core::estimator::{FeatureRow, ScenarioMeta};
use osnr_core::rng::mix64;
use osnr_core::{
    estimate_psd, fit_least_squares, generate_reference, propagate_span, Dataset, FiberParams,
    TxConfig,
};

fn desk_field() -> osnr_core::SampledField {
    let cfg = TxConfig {
        n_symbols: 1 << 14,
        ..TxConfig::default()
    };
    let mut f = generate_reference(&cfg).unwrap();
    f.scale(1e-3f64.sqrt());
    f
}

fn split_step(c: &mut Criterion) {
    let field = desk_field();
    // One tenth of a desk-scale span: 200 steps of 0.05 km.
    let fiber = FiberParams {
        span_length_km: 10.0,
        step_km: 0.05,
        ..FiberParams::default()
    };
    let mut g = c.benchmark_group("split_step");
    g.sample_size(10);
    g.bench_function("desk_200_steps", |b| {
        b.iter_batched(
            || field.clone(),
            |f| propagate_span(f, &fiber).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn psd(c: &mut Criterion) {
    let field = desk_field();
    c.bench_function("estimate_psd_desk", |b| {
        b.iter(|| estimate_psd(&field).unwrap())
    });
}

fn fit(c: &mut Criterion) {
    let unit = |i: u64, s: u64| (mix64(i ^ mix64(s)) >> 11) as f64 / (1u64 << 53) as f64;
    let rows: Vec<FeatureRow> = (0..600u64)
        .map(|i| FeatureRow {
            p_ref_at_minus10: -140.0 + 10.0 * unit(i, 0),
            p_n: std::array::from_fn(|j| -165.0 + 20.0 * unit(i, j as u64 + 1)),
            truth_osnr_db: 10.0 + 20.0 * unit(i, 9),
            meta: ScenarioMeta {
                launch_power_dbm: 0.0,
                n_spans: 1 + (i as usize % 30),
                nf_db: 5.0,
            },
        })
        .collect();
    let data = Dataset::fit_all(rows, f64::INFINITY);
    c.bench_function("fit_600_rows", |b| {
        b.iter(|| fit_least_squares(&data).unwrap())
    });
}

criterion_group!(benches, split_step, psd, fit);
criterion_main!(benches);
