//! Axis-line iteration over row-major arrays and a per-thread FFT planner.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Distance in the flat buffer between consecutive points along `axis`.
pub(crate) fn stride(shape: &[usize], axis: usize) -> usize {
    shape[axis + 1..].iter().product()
}

/// Applies `f` to every line of `data` running along `axis`.
///
/// Lines along the last axis are contiguous and handed out in place; other
/// axes are gathered into a scratch buffer and scattered back.
pub(crate) fn for_each_line<T: Copy + Default>(
    data: &mut [T],
    shape: &[usize],
    axis: usize,
    mut f: impl FnMut(&mut [T]),
) {
    let n = shape[axis];
    let s = stride(shape, axis);
    if s == 1 {
        for line in data.chunks_mut(n) {
            f(line);
        }
        return;
    }
    let outer: usize = shape[..axis].iter().product();
    let mut buf = vec![T::default(); n];
    for o in 0..outer {
        for inner in 0..s {
            let base = o * n * s + inner;
            for (j, b) in buf.iter_mut().enumerate() {
                *b = data[base + j * s];
            }
            f(&mut buf);
            for (j, b) in buf.iter().enumerate() {
                data[base + j * s] = *b;
            }
        }
    }
}

/// Like [`for_each_line`] but the transformed line may change length:
/// `f(input, output)` maps a line of `shape[axis]` values to `new_len` values.
pub(crate) fn map_lines<T: Copy + Default>(
    data: &[T],
    shape: &[usize],
    axis: usize,
    new_len: usize,
    mut f: impl FnMut(&[T], &mut [T]),
) -> Vec<T> {
    let n = shape[axis];
    let s = stride(shape, axis);
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![T::default(); outer * new_len * s];
    let mut inp = vec![T::default(); n];
    let mut res = vec![T::default(); new_len];
    for o in 0..outer {
        for inner in 0..s {
            let base = o * n * s + inner;
            for (j, b) in inp.iter_mut().enumerate() {
                *b = data[base + j * s];
            }
            f(&inp, &mut res);
            let obase = o * new_len * s + inner;
            for (j, r) in res.iter().enumerate() {
                out[obase + j * s] = *r;
            }
        }
    }
    out
}

/// Multiplies the spectrum of every line along `axis` by `factor[k]`
/// (FFT ordering), in place.
pub(crate) fn spectral_multiply(
    data: &mut [Complex64],
    shape: &[usize],
    axis: usize,
    factor: &[Complex64],
) {
    let n = shape[axis];
    let fwd = forward(n);
    let inv = inverse(n);
    let scale = 1.0 / n as f64;
    for_each_line(data, shape, axis, |line| {
        fwd.process(line);
        for (v, f) in line.iter_mut().zip(factor) {
            *v *= f * scale;
        }
        inv.process(line);
    });
}
