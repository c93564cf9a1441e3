//! Thin wrappers over `rustfft` with a per-thread plan cache.
//!
//! Forward transforms are unnormalized; [`inverse`] applies the `1/N` factor
//! so that `inverse(forward(x)) == x`.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn forward(buf: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

pub fn inverse(buf: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Reusable forward/inverse plans for repeated transforms of one length.
pub struct FftPair {
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        let (fwd, inv) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(len), p.plan_fft_inverse(len))
        });
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Self {
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    pub fn forward(&mut self, buf: &mut [Complex64]) {
        self.fwd.process_with_scratch(buf, &mut self.scratch);
    }

    /// Unnormalized inverse; callers fold `1/N` into their own multipliers.
    pub fn inverse_unnormalized(&mut self, buf: &mut [Complex64]) {
        self.inv.process_with_scratch(buf, &mut self.scratch);
    }
}

/// Frequency of DFT bin `k` for an `n`-point transform at `sample_rate`, in
/// the range `[-fs/2, fs/2)`.
#[inline]
pub fn bin_frequency(k: usize, n: usize, sample_rate: f64) -> f64 {
    let k = k as f64;
    let n_f = n as f64;
    if k < n_f / 2.0 {
        k * sample_rate / n_f
    } else {
        (k - n_f) * sample_rate / n_f
    }
}

/// All bin frequencies in natural (unshifted) DFT order.
pub fn bin_frequencies(n: usize, sample_rate: f64) -> Vec<f64> {
    (0..n).map(|k| bin_frequency(k, n, sample_rate)).collect()
}
