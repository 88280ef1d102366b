//! Experiment harness: energy ratios over parameter grids and image sets,
//! the success-rate histogram, and kernel-length sweeps.
//!
//! Every sweep runs sequentially in a fixed order and returns records
//! sorted by key, so results are reproducible bit for bit.

use std::io::{Read, Write};

use crate::conv::BoundaryPolicy;
use crate::deconv::blind_deconv_single_scale;
use crate::energy::{compare_with_noblur_using, energy, energy_noblur_exact, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::image::GradientImage;
use crate::kernel::{estimate_kernel, project_kernel, BlurKernel};
use crate::prior::EnergyParams;
use crate::scalar::Real;

/// One energy comparison between a ground-truth kernel and the no-blur
/// solution.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub image_id: String,
    pub kernel_id: String,
    pub alpha: f64,
    pub lambda_l: f64,
    pub f_irls_gt: f64,
    pub f_opt_delta: f64,
    pub f_irls_delta: f64,
    /// `f_irls_gt / f_opt_delta`.
    pub ratio: f64,
    pub prior_ratio: f64,
    pub converged_gt: bool,
    pub converged_delta: bool,
}

pub const CSV_HEADER: [&str; 11] = [
    "image_id",
    "kernel_id",
    "alpha",
    "lambda_l",
    "f_irls_gt",
    "f_opt_delta",
    "f_irls_delta",
    "ratio",
    "prior_ratio",
    "converged_gt",
    "converged_delta",
];

fn key_order(a: &SweepRecord, b: &SweepRecord) -> std::cmp::Ordering {
    a.image_id
        .cmp(&b.image_id)
        .then_with(|| a.kernel_id.cmp(&b.kernel_id))
        .then_with(|| a.alpha.total_cmp(&b.alpha))
        .then_with(|| a.lambda_l.total_cmp(&b.lambda_l))
}

pub fn sort_records(records: &mut [SweepRecord]) {
    records.sort_by(key_order);
}

/// Compares `k_gt` against the no-blur solution at one parameter setting.
pub fn sweep_point<T: Real>(
    image_id: &str,
    kernel_id: &str,
    b: &GradientImage<T>,
    k_gt: &BlurKernel<T>,
    params: &EnergyParams<T>,
) -> Result<SweepRecord> {
    let bp = BoundaryPolicy::for_kernel(k_gt);
    let cmp = compare_with_noblur_using(k_gt, b, params, &bp, true)?;
    let delta_irls = cmp.delta_irls.as_ref().expect("requested");
    Ok(SweepRecord {
        image_id: image_id.to_string(),
        kernel_id: kernel_id.to_string(),
        alpha: params.alpha.as_f64(),
        lambda_l: params.lambda_l.as_f64(),
        f_irls_gt: cmp.kernel.breakdown.total.as_f64(),
        f_opt_delta: cmp.delta_opt.breakdown.total.as_f64(),
        f_irls_delta: delta_irls.breakdown.total.as_f64(),
        ratio: cmp.energy_ratio().as_f64(),
        prior_ratio: cmp.prior_ratio().as_f64(),
        converged_gt: cmp.kernel.converged,
        converged_delta: delta_irls.converged,
    })
}

/// One record per `(alpha, lambda_l)` pair.
pub fn alpha_lambda_grid<T: Real>(
    b: &GradientImage<T>,
    k_gt: &BlurKernel<T>,
    alphas: &[T],
    lambdas: &[T],
    params: &EnergyParams<T>,
) -> Result<Vec<SweepRecord>> {
    if alphas.is_empty() || lambdas.is_empty() {
        return Err(Error::Empty("parameter grid"));
    }
    let mut out = Vec::with_capacity(alphas.len() * lambdas.len());
    for &alpha in alphas {
        for &lambda_l in lambdas {
            let p = (*params).with_alpha(alpha).with_lambda_l(lambda_l);
            out.push(sweep_point("image", "gt", b, k_gt, &p)?);
        }
    }
    sort_records(&mut out);
    Ok(out)
}

/// A blurred observation with its known kernel.
#[derive(Debug, Clone)]
pub struct DatasetItem<T> {
    pub image_id: String,
    pub kernel_id: String,
    pub blurred: GradientImage<T>,
    pub kernel: BlurKernel<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub image_id: String,
    pub lambda_l: f64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    pub failures: Vec<SweepFailure>,
}

/// Sweeps `lambda_l` over every dataset item at a fixed `alpha`. A failing
/// item is recorded and the sweep continues.
pub fn lambda_sweep_dataset<T: Real>(
    dataset: &[DatasetItem<T>],
    lambdas: &[T],
    alpha: T,
    params: &EnergyParams<T>,
) -> Result<SweepReport> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if lambdas.is_empty() {
        return Err(Error::Empty("lambda list"));
    }
    let mut report = SweepReport::default();
    for item in dataset {
        for &lambda_l in lambdas {
            let p = (*params).with_alpha(alpha).with_lambda_l(lambda_l);
            match sweep_point(&item.image_id, &item.kernel_id, &item.blurred, &item.kernel, &p) {
                Ok(r) => report.records.push(r),
                Err(e) => report.failures.push(SweepFailure {
                    image_id: item.image_id.clone(),
                    lambda_l: lambda_l.as_f64(),
                    message: e.to_string(),
                }),
            }
        }
    }
    sort_records(&mut report.records);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lambda_l: f64,
    pub images: usize,
    pub successes: usize,
    /// Percentage of images with ratio below one, in `[0, 100]`.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioHistogram {
    /// Bins in increasing `lambda_l`.
    pub bins: Vec<HistogramBin>,
    /// Smallest `lambda_l` attaining the highest success rate.
    pub argmax_lambda: f64,
}

impl RatioHistogram {
    pub fn argmax_index(&self) -> usize {
        self.bins
            .iter()
            .position(|b| b.lambda_l == self.argmax_lambda)
            .expect("argmax is one of the bins")
    }
}

/// Success percentage (`ratio < 1`) per `lambda_l`.
pub fn ratio_histogram(records: &[SweepRecord]) -> Result<RatioHistogram> {
    let first = records.first().ok_or(Error::Empty("sweep records"))?;
    if records.iter().any(|r| r.alpha != first.alpha) {
        return Err(Error::InvalidParam("histogram records must share alpha".into()));
    }
    let mut lambdas: Vec<f64> = records.iter().map(|r| r.lambda_l).collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let bins: Vec<HistogramBin> = lambdas
        .iter()
        .map(|&lambda_l| {
            let (images, successes) = records
                .iter()
                .filter(|r| r.lambda_l == lambda_l)
                .fold((0, 0), |(n, s), r| (n + 1, s + usize::from(r.ratio < 1.0)));
            HistogramBin {
                lambda_l,
                images,
                successes,
                percent: 100.0 * successes as f64 / images as f64,
            }
        })
        .collect();
    let best = bins.iter().map(|b| b.percent).fold(f64::NEG_INFINITY, f64::max);
    let argmax_lambda = bins.iter().find(|b| b.percent == best).expect("non-empty").lambda_l;
    Ok(RatioHistogram { bins, argmax_lambda })
}

/// Intensity profile of a constructed 1D kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    Box,
    Triangle,
}

impl Profile {
    /// Horizontal `len x 1` kernel with this profile.
    pub fn kernel<T: Real>(self, len: usize) -> Result<BlurKernel<T>> {
        if len.is_multiple_of(2) {
            return Err(Error::Dimensions(format!("kernel length must be odd, got {len}")));
        }
        let c = (len / 2) as f64;
        let taps = (0..len)
            .map(|i| match self {
                Profile::Box => T::one(),
                Profile::Triangle => T::lit(c + 1.0 - (i as f64 - c).abs()),
            })
            .collect();
        Ok(project_kernel(&BlurKernel::new(len, 1, taps)?))
    }
}

/// How the kernel of each length is obtained.
#[derive(Debug, Clone, Copy)]
pub enum LengthMode<'a, T> {
    /// Blind estimation of a horizontal kernel of that length, starting
    /// from a delta, with the given number of alternations.
    Estimate { iters: usize },
    /// Regularized least-squares fit against known sharp gradients,
    /// clamped and normalized.
    Fitted(&'a GradientImage<T>),
    /// A fixed kernel of the given profile.
    Constructed(Profile),
}

impl<T> Default for LengthMode<'_, T> {
    fn default() -> Self {
        LengthMode::Estimate { iters: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct LengthEntry<T> {
    pub length: usize,
    pub kernel: BlurKernel<T>,
    pub energy: EnergyBreakdown<T>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct LengthSweep<T> {
    pub entries: Vec<LengthEntry<T>>,
    /// `f^opt(delta)` on the same interior.
    pub f_opt_delta: EnergyBreakdown<T>,
    pub policy: BoundaryPolicy,
}

impl<T: Real> LengthSweep<T> {
    /// Length with the lowest energy; ties go to the shorter kernel.
    pub fn argmin(&self) -> usize {
        let mut best = &self.entries[0];
        for e in &self.entries[1..] {
            if e.energy.total < best.energy.total
                || (e.energy.total == best.energy.total && e.length < best.length)
            {
                best = e;
            }
        }
        best.length
    }
}

/// `f^IRLS` of horizontal kernels of several lengths, all evaluated on the
/// interior of the longest one, plus the exact no-blur baseline.
pub fn kernel_length_sweep<T: Real>(
    b: &GradientImage<T>,
    lengths: &[usize],
    params: &EnergyParams<T>,
    mode: LengthMode<'_, T>,
) -> Result<LengthSweep<T>> {
    if lengths.is_empty() {
        return Err(Error::Empty("length list"));
    }
    if let Some(&bad) = lengths.iter().find(|&&l| l % 2 == 0) {
        return Err(Error::Dimensions(format!("kernel lengths must be odd, got {bad}")));
    }
    let longest = *lengths.iter().max().expect("non-empty");
    let bp = BoundaryPolicy::new(longest / 2);
    let mut entries = Vec::with_capacity(lengths.len());
    for &length in lengths {
        let kernel = match mode {
            LengthMode::Constructed(profile) => profile.kernel(length)?,
            LengthMode::Fitted(sharp) => {
                estimate_kernel(sharp, b, length, 1, params.lambda_k, &bp)?
            }
            LengthMode::Estimate { .. } if length == 1 => BlurKernel::delta(1, 1),
            LengthMode::Estimate { iters } => {
                blind_deconv_single_scale(b, (length, 1), params, iters)?.kernel
            }
        };
        let eval = energy(&kernel, b, params, &bp)?;
        entries.push(LengthEntry {
            length,
            kernel,
            energy: eval.breakdown,
            converged: eval.converged,
        });
    }
    let f_opt_delta = energy_noblur_exact(b, params, &bp)?.breakdown;
    Ok(LengthSweep {
        entries,
        f_opt_delta,
        policy: bp,
    })
}

/// Formats with nine significant digits, in the shorter of fixed and
/// exponent notation, without trailing zeros.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent notation");
    let e: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&e) {
        let fixed = format!("{:.*}", (8 - e).max(0) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}", trim_zeros(mant), e)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_records_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.image_id.clone(),
            r.kernel_id.clone(),
            format_sig9(r.alpha),
            format_sig9(r.lambda_l),
            format_sig9(r.f_irls_gt),
            format_sig9(r.f_opt_delta),
            format_sig9(r.f_irls_delta),
            format_sig9(r.ratio),
            format_sig9(r.prior_ratio),
            r.converged_gt.to_string(),
            r.converged_delta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Format(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let num = |s: &str, col: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Format(format!("column {col}: cannot parse {s:?}")))
    };
    let flag = |s: &str, col: &str| -> Result<bool> {
        s.parse()
            .map_err(|_| Error::Format(format!("column {col}: expected true/false, got {s:?}")))
    };
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        out.push(SweepRecord {
            image_id: row[0].to_string(),
            kernel_id: row[1].to_string(),
            alpha: num(&row[2], "alpha")?,
            lambda_l: num(&row[3], "lambda_l")?,
            f_irls_gt: num(&row[4], "f_irls_gt")?,
            f_opt_delta: num(&row[5], "f_opt_delta")?,
            f_irls_delta: num(&row[6], "f_irls_delta")?,
            ratio: num(&row[7], "ratio")?,
            prior_ratio: num(&row[8], "prior_ratio")?,
            converged_gt: flag(&row[9], "converged_gt")?,
            converged_delta: flag(&row[10], "converged_delta")?,
        });
    }
    Ok(out)
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}
