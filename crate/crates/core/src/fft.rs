//! Minimal row/column 2-D FFT on top of `rustfft`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::scalar::Real;

/// In-place 2-D transform of a row-major `height x width` buffer.
/// The inverse is unnormalized.
pub(crate) fn fft2<T: Real>(buf: &mut [Complex<T>], width: usize, height: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), width * height);
    let mut planner = FftPlanner::<T>::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(width)
    } else {
        planner.plan_fft_forward(width)
    };
    row_fft.process(buf);

    let col_fft = if inverse {
        planner.plan_fft_inverse(height)
    } else {
        planner.plan_fft_forward(height)
    };
    let mut t = transpose(buf, width, height);
    col_fft.process(&mut t);
    let back = transpose(&t, height, width);
    buf.copy_from_slice(&back);
}

fn transpose<T: Copy>(src: &[T], width: usize, height: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for c in 0..width {
        for r in 0..height {
            out.push(src[r * width + c]);
        }
    }
    out
}
