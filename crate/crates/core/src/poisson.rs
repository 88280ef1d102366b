//! Least-squares recovery of intensities from a gradient field.

use rustfft::num_complex::Complex;

use crate::fft::fft2;
use crate::image::{GradientImage, Image};
use crate::scalar::Real;

/// Intensity image whose periodic forward differences best match `g` in the
/// least-squares sense. The free additive constant is fixed by pinning the
/// mean to 0.5.
pub fn poisson_reconstruct<T: Real>(g: &GradientImage<T>) -> Image<T> {
    let (w, h) = (g.width(), g.height());
    let to_complex = |img: &Image<T>| -> Vec<Complex<T>> {
        img.data().iter().map(|&v| Complex::new(v, T::zero())).collect()
    };
    let mut gx = to_complex(g.gx());
    let mut gy = to_complex(g.gy());
    fft2(&mut gx, w, h, false);
    fft2(&mut gy, w, h, false);

    let two_pi = T::lit(std::f64::consts::TAU);
    let one = Complex::new(T::one(), T::zero());
    let mut u = vec![Complex::new(T::zero(), T::zero()); w * h];
    for r in 0..h {
        let ty = two_pi * T::count(r) / T::count(h);
        let dy = Complex::new(ty.cos(), ty.sin()) - one;
        for c in 0..w {
            if r == 0 && c == 0 {
                continue;
            }
            let tx = two_pi * T::count(c) / T::count(w);
            let dx = Complex::new(tx.cos(), tx.sin()) - one;
            let denom = dx.norm_sqr() + dy.norm_sqr();
            let i = r * w + c;
            u[i] = (dx.conj() * gx[i] + dy.conj() * gy[i]) / denom;
        }
    }
    fft2(&mut u, w, h, true);
    let scale = T::count(w * h);
    let half = T::lit(0.5);
    Image::from_fn(w, h, |r, c| u[r * w + c].re / scale + half)
}
