use std::collections::VecDeque;

use crate::image::Image;
use crate::scalar::Real;

const SMOOTH_SIGMA: f64 = 1.4;
const SMOOTH_RADIUS: isize = 2;

/// Binary edge map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl EdgeMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.data[row * self.width + col] = on;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&e| e).count()
    }

    /// Edge pixels as `(row, col)` in raster order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(i, _)| (i / self.width, i % self.width))
    }
}

/// 5x5 Gaussian smoothing (sigma 1.4) with replicated borders.
pub fn gaussian_smooth<T: Real>(img: &Image<T>) -> Image<T> {
    let taps: Vec<f64> = (-SMOOTH_RADIUS..=SMOOTH_RADIUS)
        .map(|i| (-(i * i) as f64 / (2.0 * SMOOTH_SIGMA * SMOOTH_SIGMA)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<T> = taps.iter().map(|&t| T::lit(t / norm)).collect();
    let pass = |src: &Image<T>, horizontal: bool| {
        Image::from_fn(src.width(), src.height(), |r, c| {
            let mut acc = T::zero();
            for (j, &w) in taps.iter().enumerate() {
                let d = j as isize - SMOOTH_RADIUS;
                let v = if horizontal {
                    src.get_clamped(r as isize, c as isize + d)
                } else {
                    src.get_clamped(r as isize + d, c as isize)
                };
                acc = acc + w * v;
            }
            acc
        })
    };
    pass(&pass(img, true), false)
}

/// Sobel derivatives `(gx, gy)` with replicated borders; `gy` points down.
pub fn sobel<T: Real>(img: &Image<T>) -> (Image<T>, Image<T>) {
    let two = T::lit(2.0);
    let at = |r: usize, c: usize, dr: isize, dc: isize| img.get_clamped(r as isize + dr, c as isize + dc);
    let gx = Image::from_fn(img.width(), img.height(), |r, c| {
        (at(r, c, -1, 1) + two * at(r, c, 0, 1) + at(r, c, 1, 1))
            - (at(r, c, -1, -1) + two * at(r, c, 0, -1) + at(r, c, 1, -1))
    });
    let gy = Image::from_fn(img.width(), img.height(), |r, c| {
        (at(r, c, 1, -1) + two * at(r, c, 1, 0) + at(r, c, 1, 1))
            - (at(r, c, -1, -1) + two * at(r, c, -1, 0) + at(r, c, -1, 1))
    });
    (gx, gy)
}

/// Canny edge detector: Gaussian smoothing, Sobel gradients, non-maximum
/// suppression along the quantized gradient direction, then hysteresis
/// with 8-connectivity. Thresholds apply to the Sobel magnitude.
pub fn canny_edges<T: Real>(img: &Image<T>, low: T, high: T) -> EdgeMask {
    let (w, h) = (img.width(), img.height());
    let mut mask = EdgeMask::empty(w, h);
    if w < 3 || h < 3 {
        return mask;
    }
    let (gx, gy) = sobel(&gaussian_smooth(img));
    let mag = gx.zip_map(&gy, |a, b| a.hypot(b)).expect("same shape");

    // Ties along the gradient keep the pixel on the low side, so an ideal
    // step yields a single-pixel line.
    let mut thin = Image::<T>::zeros(w, h);
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let m = mag.get(r, c);
            if !(m > T::zero()) {
                continue;
            }
            let mut angle = gy.get(r, c).atan2(gx.get(r, c)).to_degrees().as_f64();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (dr, dc): (isize, isize) = if !(22.5..157.5).contains(&angle) {
                (0, 1)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (1, 0)
            } else {
                (1, -1)
            };
            let before = mag.get((r as isize - dr) as usize, (c as isize - dc) as usize);
            let after = mag.get((r as isize + dr) as usize, (c as isize + dc) as usize);
            if m > before && m >= after {
                thin.set(r, c, m);
            }
        }
    }

    let mut queue = VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            if thin.get(r, c) >= high && thin.get(r, c) > T::zero() {
                mask.set(r, c, true);
                queue.push_back((r, c));
            }
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        for nr in r.saturating_sub(1)..=(r + 1).min(h - 1) {
            for nc in c.saturating_sub(1)..=(c + 1).min(w - 1) {
                let m = thin.get(nr, nc);
                if !mask.get(nr, nc) && m > T::zero() && m >= low {
                    mask.set(nr, nc, true);
                    queue.push_back((nr, nc));
                }
            }
        }
    }
    mask
}
