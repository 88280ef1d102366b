//! Image and kernel files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};
use mapdeblur::{project_kernel, BlurKernel, Image};

use crate::error::{CliError, CliResult};

/// Kernel sums further than this from one are renormalized with a warning.
pub const SUM_TOLERANCE: f64 = 1e-6;

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Reads a PNG or PGM as grey values in `[0, 1]`. Colour inputs are
/// converted to luma.
pub fn read_image(path: &Path) -> CliResult<Image<f64>> {
    let dynamic = image::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let data: Vec<f64> = match dynamic {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        other => {
            eprintln!("warning: {} is not greyscale; converting to luma", path.display());
            other.into_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
        }
    };
    Ok(Image::new(w, h, data)?)
}

/// Writes a 16-bit greyscale PNG or ASCII PGM, chosen by extension. Values
/// are clamped to `[0, 1]`.
pub fn write_image(path: &Path, img: &Image<f64>) -> CliResult<()> {
    let raw: Vec<u16> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let file = BufWriter::new(fs::File::create(path)?);
    let res = match extension(path).as_str() {
        "png" => {
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(w, h, raw).expect("buffer matches dimensions");
            buf.write_to(&mut { file }, image::ImageFormat::Png)
        }
        // The PNM encoder only takes 8-bit samples; plain P2 is simple
        // enough to emit directly at full depth.
        "pgm" => {
            let mut file = file;
            writeln!(file, "P2\n{w} {h}\n65535")?;
            for row in raw.chunks(w as usize) {
                let line: Vec<String> = row.iter().map(u16::to_string).collect();
                writeln!(file, "{}", line.join(" "))?;
            }
            file.flush()?;
            Ok(())
        }
        other => return Err(CliError::Usage(format!("unsupported image extension '{other}' (use png or pgm)"))),
    };
    res.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Parses the text kernel format: a `w h` line, then `h` rows of `w`
/// numbers. Returns the kernel and, if it had to be renormalized, a
/// warning.
pub fn parse_kernel(text: &str) -> CliResult<(BlurKernel<f64>, Option<String>)> {
    let bad = |m: String| CliError::Data(format!("kernel file: {m}"));
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| bad("empty".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(format!("bad dimension '{t}'"))))
        .collect::<CliResult<_>>()?;
    let [w, h] = dims[..] else {
        return Err(bad(format!("expected 'w h', got '{header}'")));
    };
    if w % 2 == 0 || h % 2 == 0 {
        return Err(bad(format!("dimensions must be odd, got {w}x{h}")));
    }
    let mut taps = Vec::with_capacity(w * h);
    for r in 0..h {
        let line = lines.next().ok_or_else(|| bad(format!("expected {h} rows, found {r}")))?;
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("bad number '{t}' in row {}", r + 1))))
            .collect::<CliResult<_>>()?;
        if row.len() != w {
            return Err(bad(format!("row {} has {} values, expected {w}", r + 1, row.len())));
        }
        taps.extend(row);
    }
    if lines.next().is_some() {
        return Err(bad(format!("more than {h} rows")));
    }
    if taps.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(bad("taps must be finite and non-negative".into()));
    }
    let sum: f64 = taps.iter().sum();
    if sum <= 0.0 {
        return Err(bad("taps sum to zero".into()));
    }
    let k = BlurKernel::new(w, h, taps)?;
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        let warning = format!("kernel taps sum to {sum}; renormalized");
        return Ok((project_kernel(&k), Some(warning)));
    }
    Ok((k, None))
}

pub fn read_kernel(path: &Path) -> CliResult<BlurKernel<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (k, warning) = parse_kernel(&text)?;
    if let Some(w) = warning {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(k)
}

/// Shortest decimal form that reads back to the same value.
pub fn format_kernel(k: &BlurKernel<f64>) -> String {
    let mut out = format!("{} {}\n", k.width(), k.height());
    for r in 0..k.height() {
        let row: Vec<String> = (0..k.width()).map(|c| format!("{}", k.get(r, c))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_kernel(path: &Path, k: &BlurKernel<f64>) -> CliResult<()> {
    fs::write(path, format_kernel(k))?;
    Ok(())
}
