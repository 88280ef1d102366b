use crate::cg::conjugate_gradient;
use crate::conv::BoundaryPolicy;
use crate::energy::energy;
use crate::error::{Error, Result};
use crate::image::{gradients, Image};
use crate::prior::EnergyParams;
use crate::scalar::Real;
use crate::synthetic::disk;

use super::canny::{canny_edges, EdgeMask};
use super::matting::MattingLaplacian;

#[derive(Debug, Clone, PartialEq)]
pub struct DefocusParams {
    /// Candidate disk radii in pixels, increasing.
    pub radii: Vec<f64>,
    /// Side of the square window evaluated around each edge pixel.
    pub window: usize,
    pub canny_low: f64,
    pub canny_high: f64,
    /// Only every `edge_stride`-th edge pixel (raster order) is evaluated.
    pub edge_stride: usize,
    pub prop_lambda: f64,
    pub ml_window: usize,
    pub ml_epsilon: f64,
    pub prop_tol: f64,
    pub prop_max_iters: usize,
}

impl Default for DefocusParams {
    fn default() -> Self {
        Self {
            radii: (0..=8).map(f64::from).collect(),
            window: 41,
            canny_low: 0.05,
            canny_high: 0.15,
            edge_stride: 1,
            prop_lambda: 0.05,
            ml_window: 3,
            ml_epsilon: 1e-5,
            prop_tol: 1e-8,
            prop_max_iters: 20_000,
        }
    }
}

impl DefocusParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.radii.is_empty() {
            return Err(Error::Empty("defocus radii"));
        }
        if self.radii.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return bad("defocus radii must be finite and non-negative".into());
        }
        if self.radii.windows(2).any(|p| p[0] >= p[1]) {
            return bad("defocus radii must be strictly increasing".into());
        }
        let max_r = self.radii[self.radii.len() - 1];
        if self.window.is_multiple_of(2) || self.window as f64 <= 2.0 * max_r {
            return bad(format!(
                "window {} must be odd and larger than twice the largest radius {max_r}",
                self.window
            ));
        }
        if !(0.0 <= self.canny_low && self.canny_low <= self.canny_high) {
            return bad("canny thresholds need 0 <= low <= high".into());
        }
        if self.edge_stride == 0 {
            return bad("edge stride must be positive".into());
        }
        if !(self.prop_lambda > 0.0) {
            return bad("propagation lambda must be positive".into());
        }
        if !(self.ml_epsilon > 0.0) || self.ml_window.is_multiple_of(2) || self.ml_window < 3 {
            return bad("matting window must be odd >= 3 and epsilon positive".into());
        }
        Ok(())
    }

    fn min_radius(&self) -> f64 {
        self.radii[0]
    }

    fn max_radius(&self) -> f64 {
        self.radii[self.radii.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefocusSample {
    pub row: usize,
    pub col: usize,
    pub radius: f64,
    /// Energy at the chosen radius.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseDefocusMap {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<DefocusSample>,
    /// Edge pixels whose window leaves the image.
    pub skipped: Vec<(usize, usize)>,
    pub edges: EdgeMask,
}

/// Chooses, at every edge pixel, the disk radius whose energy over the
/// surrounding window is lowest. Ties go to the smaller radius.
pub fn estimate_defocus_sparse<T: Real>(
    img: &Image<T>,
    dp: &DefocusParams,
    params: &EnergyParams<T>,
) -> Result<SparseDefocusMap> {
    dp.validate()?;
    params.validate()?;
    let kernels = dp
        .radii
        .iter()
        .map(|&r| disk::<T>(r))
        .collect::<Result<Vec<_>>>()?;
    let bp = BoundaryPolicy::for_kernels(&kernels);
    let edges = canny_edges(img, T::lit(dp.canny_low), T::lit(dp.canny_high));
    let half = dp.window / 2;

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (row, col) in edges.pixels().step_by(dp.edge_stride) {
        if row < half || col < half || row + half >= img.height() || col + half >= img.width() {
            skipped.push((row, col));
            continue;
        }
        let b = gradients(&img.crop(row - half, col - half, dp.window, dp.window)?);
        let mut best: Option<(f64, f64)> = None;
        for (k, &radius) in kernels.iter().zip(&dp.radii) {
            let e = energy(k, &b, params, &bp)?.breakdown.total.as_f64();
            if best.is_none_or(|(_, be)| e < be) {
                best = Some((radius, e));
            }
        }
        let (radius, energy) = best.expect("radii non-empty");
        samples.push(DefocusSample {
            row,
            col,
            radius,
            energy,
        });
    }
    Ok(SparseDefocusMap {
        width: img.width(),
        height: img.height(),
        samples,
        skipped,
        edges,
    })
}

#[derive(Debug, Clone)]
pub struct DenseDefocus<T> {
    /// Radius per pixel, clamped to the candidate range.
    pub map: Image<T>,
    pub iterations: usize,
    pub converged: bool,
}

/// Spreads sparse radii over the image by solving
/// `(L + lambda D) d = lambda D d_sparse`, with `L` the matting Laplacian
/// of `guide` and `D` the indicator of sampled pixels.
pub fn propagate_defocus<T: Real>(
    sparse: &SparseDefocusMap,
    guide: &Image<T>,
    dp: &DefocusParams,
) -> Result<DenseDefocus<T>> {
    dp.validate()?;
    if sparse.samples.is_empty() {
        return Err(Error::Empty("sparse defocus samples"));
    }
    if (guide.width(), guide.height()) != (sparse.width, sparse.height) {
        return Err(Error::DimensionMismatch {
            left_width: guide.width(),
            left_height: guide.height(),
            right_width: sparse.width,
            right_height: sparse.height,
        });
    }
    let lap = MattingLaplacian::new(guide, dp.ml_window, T::lit(dp.ml_epsilon))?;
    let n = lap.len();
    let lambda = T::lit(dp.prop_lambda);
    let mut seeded = vec![T::zero(); n];
    let mut rhs = vec![T::zero(); n];
    for s in &sparse.samples {
        let i = s.row * sparse.width + s.col;
        seeded[i] = lambda;
        rhs[i] = lambda * T::lit(s.radius);
    }
    let tiny = T::lit(1e-12);
    let inv_diag: Vec<T> = lap
        .diagonal()
        .iter()
        .zip(&seeded)
        .map(|(&d, &s)| {
            let v = d + s;
            if v > tiny {
                T::one() / v
            } else {
                T::one()
            }
        })
        .collect();

    let mut x = vec![T::zero(); n];
    let report = conjugate_gradient(
        |v, out| {
            lap.apply(v, out);
            out.iter_mut().zip(v.iter().zip(&seeded)).for_each(|(o, (&v, &s))| *o = *o + s * v);
        },
        &rhs,
        &mut x,
        T::lit(dp.prop_tol),
        dp.prop_max_iters,
        Some(&inv_diag),
    );
    let (lo, hi) = (T::lit(dp.min_radius()), T::lit(dp.max_radius()));
    let map = Image::new(sparse.width, sparse.height, x.into_iter().map(|v| v.max(lo).min(hi)).collect())?;
    Ok(DenseDefocus {
        map,
        iterations: report.iterations,
        converged: report.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sparse_at(w: usize, h: usize, pts: &[(usize, usize, f64)]) -> SparseDefocusMap {
        SparseDefocusMap {
            width: w,
            height: h,
            samples: pts
                .iter()
                .map(|&(row, col, radius)| DefocusSample { row, col, radius, energy: 0.0 })
                .collect(),
            skipped: vec![],
            edges: EdgeMask::empty(w, h),
        }
    }

    #[test]
    fn validation() {
        assert!(DefocusParams::default().validate().is_ok());
        let mut dp = DefocusParams { window: 15, ..Default::default() };
        assert!(dp.validate().is_err());
        dp = DefocusParams { radii: vec![2.0, 1.0], ..Default::default() };
        assert!(dp.validate().is_err());
        dp = DefocusParams { radii: vec![], ..Default::default() };
        assert!(dp.validate().is_err());
    }

    #[test]
    fn uniform_seeds_give_constant_map() {
        let guide = Image::from_fn(12, 10, |r, c| ((r * 3 + c * 5) % 4) as f64 / 4.0);
        let sp = sparse_at(12, 10, &[(2, 3, 3.0), (7, 9, 3.0), (5, 1, 3.0)]);
        let out = propagate_defocus(&sp, &guide, &DefocusParams::default()).unwrap();
        assert!(out.converged);
        assert!(out.map.data().iter().all(|&v| (v - 3.0).abs() < 1e-5));
    }

    #[test]
    fn full_coverage_reproduces_seeds() {
        let guide = Image::from_fn(8, 8, |r, c| (r + c) as f64 / 16.0);
        let pts: Vec<_> = (0..8)
            .flat_map(|r| (0..8).map(move |c| (r, c, ((r * 8 + c) % 5) as f64)))
            .collect();
        let dp = DefocusParams { prop_lambda: 1e6, ..Default::default() };
        let out = propagate_defocus(&sparse_at(8, 8, &pts), &guide, &dp).unwrap();
        for &(r, c, v) in &pts {
            assert!((out.map.get(r, c) - v).abs() < 1e-3, "{r},{c}");
        }
    }

    #[test]
    fn singleton_radius_everywhere() {
        let img = Image::from_fn(40, 40, |r, c| if (r as f64 - 20.0).hypot(c as f64 - 20.0) < 9.0 { 0.9 } else { 0.1 });
        let dp = DefocusParams { radii: vec![2.0], window: 15, ..Default::default() };
        let sp = estimate_defocus_sparse(&img, &dp, &EnergyParams::default()).unwrap();
        assert!(!sp.samples.is_empty());
        assert!(sp.samples.iter().all(|s| s.radius == 2.0 && sp.edges.get(s.row, s.col)));
    }
}
