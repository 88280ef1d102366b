use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Real;

/// Closed-form matting Laplacian of a grayscale guide, applied without
/// forming the matrix.
///
/// Every `window x window` neighbourhood fully inside the image contributes
/// `delta_ij - (1 + (I_i - mu)(I_j - mu) / (var + eps / n)) / n` for each
/// pixel pair `(i, j)` it contains, with `n` the window pixel count.
#[derive(Debug, Clone)]
pub struct MattingLaplacian<T> {
    width: usize,
    height: usize,
    window: usize,
    guide: Vec<T>,
    /// Per window, in raster order of the top-left corner: mean and
    /// `1 / (var + eps / n)`.
    stats: Vec<(T, T)>,
}

impl<T: Real> MattingLaplacian<T> {
    pub fn new(guide: &Image<T>, window: usize, epsilon: T) -> Result<Self> {
        if window.is_multiple_of(2) || window < 3 {
            return Err(Error::InvalidParam(format!(
                "matting window must be odd and >= 3, got {window}"
            )));
        }
        if !(epsilon > T::zero()) {
            return Err(Error::InvalidParam("matting epsilon must be positive".into()));
        }
        let (width, height) = (guide.width(), guide.height());
        if width < window || height < window {
            return Err(Error::Dimensions(format!(
                "guide {width}x{height} is smaller than the {window}x{window} matting window"
            )));
        }
        let n = T::count(window * window);
        let mut stats = Vec::with_capacity((width - window + 1) * (height - window + 1));
        for top in 0..=height - window {
            for left in 0..=width - window {
                let vals = (top..top + window)
                    .flat_map(|r| (left..left + window).map(move |c| (r, c)))
                    .map(|(r, c)| guide.get(r, c));
                let mean = vals.clone().fold(T::zero(), |a, v| a + v) / n;
                let var = vals.fold(T::zero(), |a, v| a + (v - mean) * (v - mean)) / n;
                stats.push((mean, T::one() / (var + epsilon / n)));
            }
        }
        Ok(Self {
            width,
            height,
            window,
            guide: guide.data().to_vec(),
            stats,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn windows(&self) -> impl Iterator<Item = (usize, usize, T, T)> + '_ {
        let across = self.width - self.window + 1;
        self.stats
            .iter()
            .enumerate()
            .map(move |(i, &(mean, inv))| (i / across, i % across, mean, inv))
    }

    fn window_pixels(&self, top: usize, left: usize) -> impl Iterator<Item = usize> + '_ {
        let (w, win) = (self.width, self.window);
        (top..top + win).flat_map(move |r| (left..left + win).map(move |c| r * w + c))
    }

    /// `out = L x`.
    pub fn apply(&self, x: &[T], out: &mut [T]) {
        assert_eq!(x.len(), self.len());
        assert_eq!(out.len(), self.len());
        out.fill(T::zero());
        let n = T::count(self.window * self.window);
        for (top, left, mean, inv) in self.windows() {
            let (mut s, mut t) = (T::zero(), T::zero());
            for p in self.window_pixels(top, left) {
                s = s + x[p];
                t = t + (self.guide[p] - mean) * x[p];
            }
            for p in self.window_pixels(top, left) {
                out[p] = out[p] + x[p] - (s + (self.guide[p] - mean) * t * inv) / n;
            }
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        let n = T::count(self.window * self.window);
        let mut d = vec![T::zero(); self.len()];
        for (top, left, mean, inv) in self.windows() {
            for p in self.window_pixels(top, left) {
                let z = self.guide[p] - mean;
                d[p] = d[p] + T::one() - (T::one() + z * z * inv) / n;
            }
        }
        d
    }

    /// Dense row-major matrix, for small guides only.
    pub fn to_dense(&self) -> Vec<T> {
        let n = self.len();
        let mut dense = vec![T::zero(); n * n];
        let mut unit = vec![T::zero(); n];
        let mut col = vec![T::zero(); n];
        for j in 0..n {
            unit[j] = T::one();
            self.apply(&unit, &mut col);
            unit[j] = T::zero();
            for i in 0..n {
                dense[i * n + j] = col[i];
            }
        }
        dense
    }
}
