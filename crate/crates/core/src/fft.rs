//! Multi-dimensional complex FFTs over a [`BoxGrid`].
//!
//! Forward transforms are unscaled, backward transforms carry the full
//! `1/N^dim` factor.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::grid::BoxGrid;

type PlanKey = (usize, bool);

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<PlanKey, Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let key = (n, direction == FftDirection::Forward);
    let mut cache = CACHE
        .get_or_init(|| Mutex::new(HashMap::new()))
        .lock()
        .expect("plan cache poisoned");
    cache
        .entry(key)
        .or_insert_with(|| FftPlanner::new().plan_fft(n, direction))
        .clone()
}

fn transform(grid: &BoxGrid, data: &mut [Complex64], direction: FftDirection) {
    assert_eq!(data.len(), grid.len(), "buffer does not match grid");
    let dims = grid.points();
    for axis in 0..dims.len() {
        let n = dims[axis];
        let plan = plan(n, direction);
        let inner: usize = dims[axis + 1..].iter().product();
        let block = n * inner;
        if inner == 1 {
            data.par_chunks_mut(n * 64.min(block / n).max(1)).for_each(|lines| {
                let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
                plan.process_with_scratch(lines, &mut scratch);
            });
            continue;
        }
        // gather the strided lines of each block into contiguous rows
        data.par_chunks_mut(block).for_each(|chunk| {
            let mut buf = vec![Complex64::new(0.0, 0.0); block];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            for i in 0..n {
                let row = &chunk[i * inner..(i + 1) * inner];
                for (offset, v) in row.iter().enumerate() {
                    buf[offset * n + i] = *v;
                }
            }
            plan.process_with_scratch(&mut buf, &mut scratch);
            for i in 0..n {
                let row = &mut chunk[i * inner..(i + 1) * inner];
                for (offset, v) in row.iter_mut().enumerate() {
                    *v = buf[offset * n + i];
                }
            }
        });
    }
}

/// In-place forward transform (physical → spectral), unscaled.
pub fn forward(grid: &BoxGrid, data: &mut [Complex64]) {
    transform(grid, data, FftDirection::Forward);
}

/// In-place backward transform (spectral → physical), scaled by `1/N^dim`.
pub fn backward(grid: &BoxGrid, data: &mut [Complex64]) {
    transform(grid, data, FftDirection::Inverse);
    let scale = 1.0 / grid.len() as f64;
    data.par_iter_mut().for_each(|v| *v *= scale);
}

/// Copy a spectrum onto a finer lattice (zero padding), or truncate it onto a
/// coarser one. Amplitudes are rescaled so that the physical field is kept.
pub fn resample(from: &BoxGrid, to: &BoxGrid, coeffs: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(from.dim(), to.dim());
    let mut out = vec![Complex64::new(0.0, 0.0); to.len()];
    let scale = to.len() as f64 / from.len() as f64;
    for (flat, c) in coeffs.iter().enumerate() {
        if c.re == 0.0 && c.im == 0.0 {
            continue;
        }
        let k = from.wavevector(flat);
        let mut pos = [0usize; 3];
        let mut keep = true;
        for axis in 0..from.dim() {
            let idx = k.index[axis];
            if from.n(axis) != to.n(axis) {
                // unpaired -n/2 indices are dropped so real fields stay real
                let to_half = (to.n(axis) / 2) as i64;
                let from_half = (from.n(axis) / 2) as i64;
                if idx.abs() >= to_half || idx == -from_half {
                    keep = false;
                    break;
                }
            }
            pos[axis] = to.position(axis, idx);
        }
        if keep {
            out[to.flatten(pos)] = *c * scale;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_mode_lands_on_its_index() {
        let g = BoxGrid::new(&[8, 6], &[2.0 * PI, 2.0 * PI]).unwrap();
        let mut data: Vec<Complex64> = (0..g.len())
            .map(|flat| {
                let x = g.coordinate(flat);
                Complex64::new(0.0, 2.0 * x[0] - x[1]).exp()
            })
            .collect();
        forward(&g, &mut data);
        let target = g.flatten([2, g.position(1, -1), 0]);
        for (flat, v) in data.iter().enumerate() {
            let expect = if flat == target { g.len() as f64 } else { 0.0 };
            assert!((v.re - expect).abs() < 1e-10 && v.im.abs() < 1e-10, "{flat}: {v}");
        }
    }

    #[test]
    fn roundtrip_3d() {
        let g = BoxGrid::new(&[4, 6, 8], &[1.0, 2.0, 3.0]).unwrap();
        let orig: Vec<Complex64> = (0..g.len())
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut data = orig.clone();
        forward(&g, &mut data);
        backward(&g, &mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
