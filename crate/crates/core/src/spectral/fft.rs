use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Grid;

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> Plans {
    static CACHE: OnceLock<Mutex<HashMap<usize, Plans>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

fn transform(grid: &Grid, data: &mut [Complex64], fft: &dyn Fft<f64>) {
    let n = grid.points();
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    // last axis is contiguous
    fft.process_with_scratch(data, &mut scratch);
    let mut line = vec![Complex64::default(); n];
    for axis in 0..grid.dim() - 1 {
        let stride = grid.stride(axis);
        let block = stride * n;
        for start in (0..data.len()).step_by(block) {
            for offset in 0..stride {
                let base = start + offset;
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[base + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    }
}

/// Nodal values to Fourier coefficients, normalized so that
/// `f(x) = Σ_k f̂_k e^{ik·x}`.
pub fn forward(grid: &Grid, values: &[f64]) -> Vec<Complex64> {
    debug_assert_eq!(values.len(), grid.len());
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let (fwd, _) = plans(grid.points());
    transform(grid, &mut data, fwd.as_ref());
    let scale = 1.0 / grid.len() as f64;
    data.iter_mut().for_each(|c| *c *= scale);
    data
}

/// Fourier coefficients of a real field back to nodal values.
pub fn inverse(grid: &Grid, coeffs: &[Complex64]) -> Vec<f64> {
    debug_assert_eq!(coeffs.len(), grid.len());
    let mut data = coeffs.to_vec();
    let (_, inv) = plans(grid.points());
    transform(grid, &mut data, inv.as_ref());
    data.into_iter().map(|c| c.re).collect()
}
