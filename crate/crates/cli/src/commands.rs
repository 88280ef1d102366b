use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use mapdeblur::analysis::{
    alpha_lambda_grid, format_sig9, kernel_length_sweep, lambda_sweep_dataset, log_space,
    ratio_histogram, read_records_csv, sort_records, write_records_csv, DatasetItem, LengthMode,
    Profile, SweepRecord,
};
use mapdeblur::apps::{
    estimate_defocus_sparse, propagate_defocus, rank_light_streak_patches, select_kernel_size,
    DefocusParams, SizeSettings,
};
use mapdeblur::deconv::{blind_deconv_multiscale, blind_deconv_single_scale};
use mapdeblur::synthetic::{add_noise, blurred_pair, bundled_set, camera_shake, two_region_defocus, SceneStyle};
use mapdeblur::{
    energy as evaluate, energy_noblur_exact, gradients, poisson_reconstruct, BlurKernel,
    BoundaryPolicy, EnergyBreakdown, EnergyParams, Image,
};

use crate::error::{CliError, CliResult};
use crate::io::{read_image, read_kernel, write_image, write_kernel};
use crate::{DatasetArgs, LambdaArgs, LengthModeArg, SynthKind};

type P = EnergyParams<f64>;

fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn csv_sink(path: Option<&Path>) -> CliResult<csv::Writer<Box<dyn Write>>> {
    Ok(csv::Writer::from_writer(sink(path)?))
}

fn breakdown_fields(e: &EnergyBreakdown<f64>) -> [String; 4] {
    [e.total, e.data, e.sparsity, e.kernel_prior].map(format_sig9)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn require_odd(what: &str, n: usize) -> CliResult<()> {
    if n.is_multiple_of(2) {
        return Err(CliError::Usage(format!("{what} must be odd, got {n}")));
    }
    Ok(())
}

pub struct DeblurOpts {
    pub input: PathBuf,
    pub size: (usize, usize),
    pub multiscale: bool,
    pub iters: usize,
    pub ratio: f64,
    pub out_kernel: PathBuf,
    pub out_latent: PathBuf,
    pub out_trace: PathBuf,
    pub strict: bool,
    pub params: P,
}

pub fn deblur(o: DeblurOpts) -> CliResult<()> {
    require_odd("kernel width", o.size.0)?;
    require_odd("kernel height", o.size.1)?;
    if o.iters == 0 {
        return Err(CliError::Usage("--iters must be positive".into()));
    }
    if !(o.ratio > 0.0 && o.ratio < 1.0) {
        return Err(CliError::Usage(format!("--ratio must lie in (0, 1), got {}", o.ratio)));
    }
    let b = gradients(&read_image(&o.input)?);
    let res = if o.multiscale {
        blind_deconv_multiscale(&b, o.size, &o.params, o.iters, o.ratio)?
    } else {
        blind_deconv_single_scale(&b, o.size, &o.params, o.iters)?
    };

    write_kernel(&o.out_kernel, &res.kernel)?;
    write_image(&o.out_latent, &poisson_reconstruct(&res.latent))?;
    let mut w = csv_sink(Some(&o.out_trace))?;
    w.write_record([
        "level",
        "iteration",
        "before_total",
        "before_data",
        "before_sparsity",
        "before_kernel_prior",
        "after_total",
        "after_data",
        "after_sparsity",
        "after_kernel_prior",
        "latent_converged",
    ])?;
    for r in &res.trace.records {
        let mut row = vec![r.level.to_string(), r.iteration.to_string()];
        row.extend(breakdown_fields(&r.before_k_step));
        row.extend(breakdown_fields(&r.after_k_step));
        row.push(r.latent_converged.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;

    println!(
        "kernel {}x{}  energy {}  converged {}",
        res.kernel.width(),
        res.kernel.height(),
        format_sig9(res.energy.total),
        res.converged
    );
    if o.strict && !res.converged {
        return Err(CliError::NotConverged("latent solves hit their iteration caps".into()));
    }
    Ok(())
}

pub fn energy(
    input: &Path,
    kernel: &Path,
    exact_noblur: bool,
    out: Option<&Path>,
    strict: bool,
    p: &P,
) -> CliResult<()> {
    let b = gradients(&read_image(input)?);
    let k = read_kernel(kernel)?;
    let bp = BoundaryPolicy::for_kernel(&k);
    let eval = evaluate(&k, &b, p, &bp)?;
    let mut rows = vec![("irls", eval.breakdown, eval.converged)];
    if exact_noblur {
        let opt = energy_noblur_exact(&b, p, &bp)?;
        rows.push(("noblur_exact", opt.breakdown, opt.converged));
    }

    for (name, e, conv) in &rows {
        println!(
            "{name}: total {}  data {}  sparsity {}  kernel_prior {}  converged {conv}",
            format_sig9(e.total),
            format_sig9(e.data),
            format_sig9(e.sparsity),
            format_sig9(e.kernel_prior)
        );
    }
    if let Some(path) = out {
        let mut w = csv_sink(Some(path))?;
        w.write_record(["energy", "total", "data", "sparsity", "kernel_prior", "converged"])?;
        for (name, e, conv) in &rows {
            let mut row = vec![name.to_string()];
            row.extend(breakdown_fields(e));
            row.push(conv.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    if strict && !eval.converged {
        return Err(CliError::NotConverged("IRLS latent solve hit its iteration cap".into()));
    }
    Ok(())
}

fn dataset(args: &DatasetArgs) -> CliResult<Vec<DatasetItem<f64>>> {
    if args.bundled {
        return Ok(bundled_set::<f64>()?
            .into_iter()
            .map(|(name, pair)| DatasetItem {
                image_id: name,
                kernel_id: "gt".into(),
                blurred: pair.blurred_gradients(),
                kernel: pair.kernel,
            })
            .collect());
    }
    match (&args.input, &args.kernel) {
        (Some(input), Some(kernel)) => Ok(vec![DatasetItem {
            image_id: stem(input),
            kernel_id: stem(kernel),
            blurred: gradients(&read_image(input)?),
            kernel: read_kernel(kernel)?,
        }]),
        _ => Err(CliError::Usage("give --bundled or --input with --kernel".into())),
    }
}

fn lambda_list(args: &LambdaArgs) -> CliResult<Vec<f64>> {
    if !args.lambdas.is_empty() {
        if args.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(CliError::Usage("lambda values must be positive".into()));
        }
        return Ok(args.lambdas.clone());
    }
    if !(args.lambda_min > 0.0 && args.lambda_max >= args.lambda_min) || args.lambda_count == 0 {
        return Err(CliError::Usage(
            "need 0 < --lambda-min <= --lambda-max and --lambda-count >= 1".into(),
        ));
    }
    Ok(log_space(args.lambda_min, args.lambda_max, args.lambda_count))
}

fn finish_records(records: &[SweepRecord], out: Option<&Path>, strict: bool) -> CliResult<()> {
    let mut w = sink(out)?;
    write_records_csv(records, &mut w)?;
    w.flush()?;
    let unconverged = records
        .iter()
        .filter(|r| !(r.converged_gt && r.converged_delta))
        .count();
    if strict && unconverged > 0 {
        return Err(CliError::NotConverged(format!("{unconverged} sweep points")));
    }
    Ok(())
}

pub fn sweep_lambda(
    data: &DatasetArgs,
    lambdas: &LambdaArgs,
    out: Option<&Path>,
    strict: bool,
    p: &P,
) -> CliResult<()> {
    let items = dataset(data)?;
    let report = lambda_sweep_dataset(&items, &lambda_list(lambdas)?, p.alpha, p)?;
    finish_records(&report.records, out, strict)?;
    if !report.failures.is_empty() {
        for f in &report.failures {
            eprintln!("failed: {} at lambda_l {}: {}", f.image_id, f.lambda_l, f.message);
        }
        return Err(CliError::Data(format!("{} sweep points failed", report.failures.len())));
    }
    Ok(())
}

pub fn sweep_grid(
    data: &DatasetArgs,
    alphas: &[f64],
    lambdas: &LambdaArgs,
    out: Option<&Path>,
    strict: bool,
    p: &P,
) -> CliResult<()> {
    let items = dataset(data)?;
    let lambdas = lambda_list(lambdas)?;
    let mut records = Vec::new();
    for item in &items {
        for mut r in alpha_lambda_grid(&item.blurred, &item.kernel, alphas, &lambdas, p)? {
            r.image_id = item.image_id.clone();
            r.kernel_id = item.kernel_id.clone();
            records.push(r);
        }
    }
    sort_records(&mut records);
    finish_records(&records, out, strict)
}

#[allow(clippy::too_many_arguments)]
pub fn sweep_length(
    input: &Path,
    lengths: &[usize],
    mode: LengthModeArg,
    iters: usize,
    sharp: Option<&Path>,
    out: Option<&Path>,
    strict: bool,
    p: &P,
) -> CliResult<()> {
    for &l in lengths {
        require_odd("kernel length", l)?;
    }
    let b = gradients(&read_image(input)?);
    let sharp_g = match (mode, sharp) {
        (LengthModeArg::Fitted, Some(s)) => Some(gradients(&read_image(s)?)),
        (LengthModeArg::Fitted, None) => {
            return Err(CliError::Usage("--mode fitted needs --sharp".into()))
        }
        _ => None,
    };
    let mode = match mode {
        LengthModeArg::Estimate => LengthMode::Estimate { iters },
        LengthModeArg::Fitted => LengthMode::Fitted(sharp_g.as_ref().expect("checked above")),
        LengthModeArg::Box => LengthMode::Constructed(Profile::Box),
        LengthModeArg::Triangle => LengthMode::Constructed(Profile::Triangle),
    };
    let sweep = kernel_length_sweep(&b, lengths, p, mode)?;

    let mut w = csv_sink(out)?;
    w.write_record(["length", "total", "data", "sparsity", "kernel_prior", "converged", "f_opt_delta"])?;
    for e in &sweep.entries {
        let mut row = vec![e.length.to_string()];
        row.extend(breakdown_fields(&e.energy));
        row.push(e.converged.to_string());
        row.push(format_sig9(sweep.f_opt_delta.total));
        w.write_record(&row)?;
    }
    w.flush()?;
    eprintln!("argmin length {}", sweep.argmin());
    if strict && sweep.entries.iter().any(|e| !e.converged) {
        return Err(CliError::NotConverged("some lengths".into()));
    }
    Ok(())
}

pub fn hist(input: &Path, out: Option<&Path>) -> CliResult<()> {
    let records = read_records_csv(File::open(input)?)?;
    let h = ratio_histogram(&records)?;
    println!("{:>16} {:>7} {:>10} {:>8}", "lambda_l", "images", "successes", "percent");
    for b in &h.bins {
        println!(
            "{:>16} {:>7} {:>10} {:>8.1}",
            format_sig9(b.lambda_l),
            b.images,
            b.successes,
            b.percent
        );
    }
    println!("argmax lambda_l: {}", format_sig9(h.argmax_lambda));
    if let Some(path) = out {
        let mut w = csv_sink(Some(path))?;
        w.write_record(["lambda_l", "images", "successes", "percent"])?;
        for b in &h.bins {
            w.write_record([
                format_sig9(b.lambda_l),
                b.images.to_string(),
                b.successes.to_string(),
                format_sig9(b.percent),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn kernel_size(
    input: &Path,
    sizes: &[usize],
    iters: usize,
    ratio: f64,
    out: Option<&Path>,
    out_kernel: Option<&Path>,
    p: &P,
) -> CliResult<()> {
    for &s in sizes {
        require_odd("kernel size", s)?;
    }
    let b = gradients(&read_image(input)?);
    let settings = SizeSettings {
        iters_per_level: iters,
        ratio,
    };
    let sel = select_kernel_size(&b, sizes, p, settings)?;
    for f in &sel.failures {
        eprintln!("size {} failed: {}", f.size, f.message);
    }
    let mut w = csv_sink(out)?;
    w.write_record(["size", "total", "data", "sparsity", "kernel_prior", "selected"])?;
    for c in &sel.candidates {
        let mut row = vec![c.size.to_string()];
        row.extend(breakdown_fields(&c.energy));
        row.push((c.size == sel.best).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    if let Some(path) = out_kernel {
        write_kernel(path, &sel.best_candidate().kernel)?;
    }
    eprintln!("selected size {}", sel.best);
    Ok(())
}

pub fn streaks(input: &Path, patches: &[PathBuf], out: Option<&Path>, p: &P) -> CliResult<()> {
    let b = gradients(&read_image(input)?);
    let images = patches.iter().map(|q| read_image(q)).collect::<CliResult<Vec<_>>>()?;
    let ranking = rank_light_streak_patches(&b, &images, p)?;
    for &i in &ranking.excluded {
        eprintln!("warning: {} has no streak above its background; excluded", patches[i].display());
    }
    let mut w = csv_sink(out)?;
    w.write_record(["rank", "patch", "path", "total", "data", "sparsity", "kernel_prior"])?;
    for (rank, r) in ranking.ranked.iter().enumerate() {
        let mut row = vec![(rank + 1).to_string(), r.id.to_string(), patches[r.id].display().to_string()];
        row.extend(breakdown_fields(&r.energy));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn defocus(
    input: &Path,
    dp: &DefocusParams,
    out_sparse: &Path,
    out_dense: &Path,
    strict: bool,
    p: &P,
) -> CliResult<()> {
    let img = read_image(input)?;
    let sparse = estimate_defocus_sparse(&img, dp, p)?;
    let mut w = csv_sink(Some(out_sparse))?;
    w.write_record(["row", "col", "radius", "energy"])?;
    for s in &sparse.samples {
        w.write_record([
            s.row.to_string(),
            s.col.to_string(),
            format_sig9(s.radius),
            format_sig9(s.energy),
        ])?;
    }
    w.flush()?;

    let dense = propagate_defocus(&sparse, &img, dp)?;
    let is_csv = out_dense
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mut w = csv_sink(Some(out_dense))?;
        for r in 0..dense.map.height() {
            w.write_record((0..dense.map.width()).map(|c| format_sig9(dense.map.get(r, c))))?;
        }
        w.flush()?;
    } else {
        let top = dp.radii.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        write_image(out_dense, &dense.map.map(|v| v / top))?;
    }
    eprintln!(
        "{} edge samples ({} skipped near borders); propagation {} iterations, converged {}",
        sparse.samples.len(),
        sparse.skipped.len(),
        dense.iterations,
        dense.converged
    );
    if strict && !dense.converged {
        return Err(CliError::NotConverged("defocus propagation".into()));
    }
    Ok(())
}

pub struct SynthOpts {
    pub kind: SynthKind,
    pub width: usize,
    pub height: usize,
    pub size: usize,
    pub seed: u64,
    pub noise: f64,
    pub out: PathBuf,
    pub out_kernel: Option<PathBuf>,
    pub out_sharp: Option<PathBuf>,
}

pub fn synth(o: SynthOpts) -> CliResult<()> {
    if !(o.noise >= 0.0 && o.noise.is_finite()) {
        return Err(CliError::Usage("--noise must be non-negative".into()));
    }
    let (blurred, sharp, kernel): (Image<f64>, Image<f64>, Option<BlurKernel<f64>>) = match o.kind {
        SynthKind::TwoRegion => {
            let s = two_region_defocus(o.width, o.height, (0.0, o.size as f64), o.seed)?;
            (s.image, s.sharp, None)
        }
        kind => {
            require_odd("--size", o.size)?;
            let k = match kind {
                SynthKind::Shake => camera_shake(o.size, o.seed)?,
                _ => Profile::Box.kernel(o.size)?,
            };
            let pair = blurred_pair(o.width, o.height, SceneStyle::StepRich, &k, o.seed)?;
            (pair.blurred, pair.sharp, Some(k))
        }
    };
    let blurred = if o.noise > 0.0 {
        add_noise(&blurred, o.noise, o.seed.wrapping_add(1))
    } else {
        blurred
    };
    write_image(&o.out, &blurred)?;
    if let Some(path) = &o.out_sharp {
        write_image(path, &sharp)?;
    }
    match (&o.out_kernel, &kernel) {
        (Some(path), Some(k)) => write_kernel(path, k)?,
        (Some(_), None) => eprintln!("warning: two-region scenes have no single kernel; --out-kernel ignored"),
        _ => {}
    }
    Ok(())
}
