//! `mapdeblur`: blind deconvolution and the energy experiments from the
//! command line.
//!
//! Exit status: 0 on success, 1 for usage errors, 2 for data errors and 3
//! when a solver fails to converge under `--strict`.

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mapdeblur::EnergyParams;

use crate::error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "mapdeblur", version, about = "Gradient-domain MAP blind deconvolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Energy hyperparameters and solver controls.
#[derive(Args, Debug, Clone)]
pub struct ParamArgs {
    /// Sparseness exponent of the gradient penalty
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Magnitude below which the penalty is quadratic
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,
    /// Weight of the sparsity prior
    #[arg(long, default_value_t = 0.00064)]
    pub lambda_l: f64,
    /// Weight of the kernel prior
    #[arg(long, default_value_t = 0.001)]
    pub lambda_k: f64,
    #[arg(long, default_value_t = 8)]
    pub irls_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub cg_tol: f64,
    #[arg(long, default_value_t = 100)]
    pub cg_max_iters: usize,
    /// Grid size of the exact no-blur search
    #[arg(long, default_value_t = 2001)]
    pub noblur_grid: usize,
}

impl ParamArgs {
    pub fn params(&self) -> CliResult<EnergyParams<f64>> {
        let p = EnergyParams {
            alpha: self.alpha,
            tau: self.tau,
            lambda_l: self.lambda_l,
            lambda_k: self.lambda_k,
            irls_iters: self.irls_iters,
            cg_tol: self.cg_tol,
            cg_max_iters: self.cg_max_iters,
            noblur_grid: self.noblur_grid,
            ..EnergyParams::default()
        };
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(p)
    }
}

/// Where sweep observations come from.
#[derive(Args, Debug, Clone)]
pub struct DatasetArgs {
    /// Use the ten built-in synthetic test images
    #[arg(long, conflicts_with_all = ["input", "kernel"])]
    pub bundled: bool,
    /// Blurred image (PNG or PGM)
    #[arg(long, requires = "kernel")]
    pub input: Option<PathBuf>,
    /// Ground-truth kernel file for --input
    #[arg(long, requires = "input")]
    pub kernel: Option<PathBuf>,
}

/// A list of `lambda_l` values, explicit or log-spaced.
#[derive(Args, Debug, Clone)]
pub struct LambdaArgs {
    /// Explicit comma-separated values; overrides the range
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Vec<f64>,
    #[arg(long, default_value_t = 1e-5)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 1e-1)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 9)]
    pub lambda_count: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthModeArg {
    /// Blind estimate of each length from a delta
    Estimate,
    /// Least-squares fit against a sharp image (needs --sharp)
    Fitted,
    /// Fixed box profile
    Box,
    /// Fixed triangle profile
    Triangle,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Step-rich scene blurred by a camera-shake kernel
    Shake,
    /// Step-rich scene blurred horizontally by a box
    Box,
    /// Two halves defocused by discs of different radii
    TwoRegion,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate a blur kernel and latent image
    Deblur {
        #[arg(long)]
        input: PathBuf,
        /// Kernel width in taps (odd)
        #[arg(long)]
        kernel_size: usize,
        /// Kernel height in taps (odd); defaults to the width
        #[arg(long)]
        kernel_height: Option<usize>,
        /// Coarse-to-fine estimation
        #[arg(long)]
        multiscale: bool,
        /// Alternations (per level with --multiscale)
        #[arg(long, default_value_t = mapdeblur::deconv::DEFAULT_ITERS_PER_LEVEL)]
        iters: usize,
        /// Pyramid downsampling ratio
        #[arg(long, default_value_t = mapdeblur::deconv::DEFAULT_RATIO)]
        ratio: f64,
        #[arg(long)]
        out_kernel: PathBuf,
        /// Poisson-reconstructed latent image (PNG or PGM)
        #[arg(long)]
        out_latent: PathBuf,
        /// Per-step energy trace (CSV)
        #[arg(long)]
        out_trace: PathBuf,
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Evaluate the energy of a kernel on a blurred image
    Energy {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        /// Also report the exact no-blur energy on the same interior
        #[arg(long)]
        exact_noblur: bool,
        /// Also write the breakdown as CSV
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Energy ratio against no-blur over lambda_l
    SweepLambda {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        lambdas: LambdaArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Energy ratio over an alpha x lambda_l grid
    SweepGrid {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.8")]
        alphas: Vec<f64>,
        #[command(flatten)]
        lambdas: LambdaArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Energy of horizontal kernels of several lengths
    SweepLength {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9,11,13,15")]
        lengths: Vec<usize>,
        #[arg(long, value_enum, default_value_t = LengthModeArg::Estimate)]
        mode: LengthModeArg,
        /// Alternations per length in estimate mode
        #[arg(long, default_value_t = 10)]
        iters: usize,
        /// Sharp image for fitted mode
        #[arg(long)]
        sharp: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Success rate per lambda_l from a sweep CSV
    Hist {
        /// CSV written by sweep-lambda
        #[arg(long)]
        input: PathBuf,
        /// Histogram CSV destination
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick the kernel size with the lowest energy
    KernelSize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = mapdeblur::deconv::DEFAULT_ITERS_PER_LEVEL)]
        iters: usize,
        #[arg(long, default_value_t = mapdeblur::deconv::DEFAULT_RATIO)]
        ratio: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Kernel of the selected size
        #[arg(long)]
        out_kernel: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Rank light-streak patches by the energy of their kernels
    Streaks {
        #[arg(long)]
        input: PathBuf,
        /// Patch image (repeatable; odd sides)
        #[arg(long = "patch", required = true)]
        patches: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Sparse defocus radii at edges and their dense propagation
    Defocus {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8")]
        radii: Vec<f64>,
        /// Odd window side around each edge pixel
        #[arg(long, default_value_t = 41)]
        window: usize,
        #[arg(long, default_value_t = 1)]
        edge_stride: usize,
        #[arg(long, default_value_t = 0.05)]
        canny_low: f64,
        #[arg(long, default_value_t = 0.15)]
        canny_high: f64,
        /// Weight of the sparse samples during propagation
        #[arg(long, default_value_t = 0.05)]
        prop_lambda: f64,
        /// Sparse samples (CSV)
        #[arg(long)]
        out_sparse: PathBuf,
        /// Dense map: CSV of radii, or PNG/PGM scaled by the largest radius
        #[arg(long)]
        out_dense: PathBuf,
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Write a synthetic test image (and its kernel, where there is one)
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        /// Kernel extent (shake, box) or right-half radius (two-region)
        #[arg(long, default_value_t = 9)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gaussian noise sigma added to the blurred image
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth kernel destination
        #[arg(long)]
        out_kernel: Option<PathBuf>,
        /// Sharp image destination
        #[arg(long)]
        out_sharp: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    use commands::*;
    match cli.command {
        Command::Deblur {
            input,
            kernel_size,
            kernel_height,
            multiscale,
            iters,
            ratio,
            out_kernel,
            out_latent,
            out_trace,
            strict,
            params,
        } => deblur(DeblurOpts {
            input,
            size: (kernel_size, kernel_height.unwrap_or(kernel_size)),
            multiscale,
            iters,
            ratio,
            out_kernel,
            out_latent,
            out_trace,
            strict,
            params: params.params()?,
        }),
        Command::Energy {
            input,
            kernel,
            exact_noblur,
            out,
            strict,
            params,
        } => energy(&input, &kernel, exact_noblur, out.as_deref(), strict, &params.params()?),
        Command::SweepLambda {
            data,
            lambdas,
            out,
            strict,
            params,
        } => sweep_lambda(&data, &lambdas, out.as_deref(), strict, &params.params()?),
        Command::SweepGrid {
            data,
            alphas,
            lambdas,
            out,
            strict,
            params,
        } => sweep_grid(&data, &alphas, &lambdas, out.as_deref(), strict, &params.params()?),
        Command::SweepLength {
            input,
            lengths,
            mode,
            iters,
            sharp,
            out,
            strict,
            params,
        } => sweep_length(
            &input,
            &lengths,
            mode,
            iters,
            sharp.as_deref(),
            out.as_deref(),
            strict,
            &params.params()?,
        ),
        Command::Hist { input, out } => hist(&input, out.as_deref()),
        Command::KernelSize {
            input,
            sizes,
            iters,
            ratio,
            out,
            out_kernel,
            params,
        } => kernel_size(&input, &sizes, iters, ratio, out.as_deref(), out_kernel.as_deref(), &params.params()?),
        Command::Streaks {
            input,
            patches,
            out,
            params,
        } => streaks(&input, &patches, out.as_deref(), &params.params()?),
        Command::Defocus {
            input,
            radii,
            window,
            edge_stride,
            canny_low,
            canny_high,
            prop_lambda,
            out_sparse,
            out_dense,
            strict,
            params,
        } => {
            let dp = mapdeblur::apps::DefocusParams {
                radii,
                window,
                edge_stride,
                canny_low,
                canny_high,
                prop_lambda,
                ..Default::default()
            };
            dp.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            defocus(&input, &dp, &out_sparse, &out_dense, strict, &params.params()?)
        }
        Command::Synth {
            kind,
            width,
            height,
            size,
            seed,
            noise,
            out,
            out_kernel,
            out_sharp,
        } => synth(SynthOpts {
            kind,
            width,
            height,
            size,
            seed,
            noise,
            out,
            out_kernel,
            out_sharp,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mapdeblur: {e}");
            e.exit_code()
        }
    }
}
