//! Image quality and destruction metrics: BER, MSE, PSNR, SSIM, UQI, plus
//! per-method report assembly.
//!
//! PSNR uses peak 255; identical images report an infinity sentinel (the
//! string `inf` in CSV), never a fake large number. SSIM follows the Wang
//! et al. defaults (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03,
//! L 255); UQI uses 8x8 sliding windows with unbiased sample statistics.
//! Aggregates are arithmetic means with compensated summation.

use crate::error::{Error, Result};
use crate::imageio::GrayImage;
use crate::par;

const PEAK_SQ: f64 = 255.0 * 255.0;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);
const SSIM_WINDOW: usize = 11;
const UQI_WINDOW: usize = 8;

/// Kahan-compensated sum.
fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Compensated mean; an infinite element makes the mean infinite.
fn kahan_mean(values: &[f64]) -> f64 {
    if values.iter().any(|v| v.is_infinite()) {
        return f64::INFINITY;
    }
    kahan_sum(values.iter().copied()) / values.len() as f64
}

/// Mean squared pixel difference.
pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    a.same_dims(b)?;
    let sum = kahan_sum(a.pixels().iter().zip(b.pixels()).map(|(&x, &y)| {
        let d = x as f64 - y as f64;
        d * d
    }));
    Ok(sum / a.pixels().len() as f64)
}

/// Peak signal-to-noise ratio in dB with peak 255; +inf when MSE is 0.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK_SQ / mse).log10()
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let sigma = 1.5f64;
    let mut k = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = (-d * d / (2.0 * sigma * sigma)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable valid-mode filtering with a symmetric 1-D kernel.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let kw = k.len();
    let ow = w - kw + 1;
    let mut mid = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * src[y * w + x + i];
            }
            mid[y * ow + x] = acc;
        }
    }
    let oh = h - kw + 1;
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * mid[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    (out, ow, oh)
}

/// Mean local structural similarity.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    a.same_dims(b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: SSIM_WINDOW,
        });
    }
    let x: Vec<f64> = a.pixels().iter().map(|&p| p as f64).collect();
    let y: Vec<f64> = b.pixels().iter().map(|&p| p as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u * v).collect();

    let k = gaussian_window();
    let (mu_x, ow, oh) = filter_valid(&x, w, h, &k);
    let (mu_y, _, _) = filter_valid(&y, w, h, &k);
    let (m_xx, _, _) = filter_valid(&xx, w, h, &k);
    let (m_yy, _, _) = filter_valid(&yy, w, h, &k);
    let (m_xy, _, _) = filter_valid(&xy, w, h, &k);

    let values = (0..ow * oh).map(|i| {
        let mx = mu_x[i];
        let my = mu_y[i];
        let var_x = m_xx[i] - mx * mx;
        let var_y = m_yy[i] - my * my;
        let cov = m_xy[i] - mx * my;
        ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((mx * mx + my * my + SSIM_C1) * (var_x + var_y + SSIM_C2))
    });
    Ok(kahan_sum(values) / (ow * oh) as f64)
}

/// Universal quality index over sliding 8x8 windows.
pub fn uqi(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    a.same_dims(b)?;
    let (w, h) = (a.width(), a.height());
    if w < UQI_WINDOW || h < UQI_WINDOW {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: UQI_WINDOW,
        });
    }

    // Integral images for O(1) window sums. Pixel sums are integers, so the
    // degenerate-window checks below are exact.
    let sums = |f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut s = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            for x in 0..w {
                s[(y + 1) * (w + 1) + x + 1] =
                    f(y * w + x) + s[y * (w + 1) + x + 1] + s[(y + 1) * (w + 1) + x]
                        - s[y * (w + 1) + x];
            }
        }
        s
    };
    let pa = a.pixels();
    let pb = b.pixels();
    let sx = sums(&|i| pa[i] as f64);
    let sy = sums(&|i| pb[i] as f64);
    let sxx = sums(&|i| (pa[i] as f64) * (pa[i] as f64));
    let syy = sums(&|i| (pb[i] as f64) * (pb[i] as f64));
    let sxy = sums(&|i| (pa[i] as f64) * (pb[i] as f64));

    let window = |s: &[f64], x0: usize, y0: usize| -> f64 {
        let x1 = x0 + UQI_WINDOW;
        let y1 = y0 + UQI_WINDOW;
        s[y1 * (w + 1) + x1] - s[y0 * (w + 1) + x1] - s[y1 * (w + 1) + x0] + s[y0 * (w + 1) + x0]
    };

    let n = (UQI_WINDOW * UQI_WINDOW) as f64;
    let mut values = Vec::with_capacity((w - UQI_WINDOW + 1) * (h - UQI_WINDOW + 1));
    for y0 in 0..=h - UQI_WINDOW {
        for x0 in 0..=w - UQI_WINDOW {
            let sum_x = window(&sx, x0, y0);
            let sum_y = window(&sy, x0, y0);
            let mean_x = sum_x / n;
            let mean_y = sum_y / n;
            // unbiased sample statistics
            let var_x = (window(&sxx, x0, y0) - sum_x * mean_x) / (n - 1.0);
            let var_y = (window(&syy, x0, y0) - sum_y * mean_y) / (n - 1.0);
            let cov = (window(&sxy, x0, y0) - sum_x * mean_y) / (n - 1.0);

            let denom_var = var_x + var_y;
            let denom_mean = mean_x * mean_x + mean_y * mean_y;
            let q = if denom_var > 0.0 && denom_mean > 0.0 {
                4.0 * cov * mean_x * mean_y / (denom_var * denom_mean)
            } else if denom_mean > 0.0 {
                // both windows constant: luminance factor only
                2.0 * mean_x * mean_y / denom_mean
            } else if denom_var > 0.0 {
                // zero means: contrast factor only
                2.0 * cov / denom_var
            } else {
                // identical all-zero windows
                1.0
            };
            values.push(q);
        }
    }
    Ok(kahan_mean(&values))
}

/// Fraction of differing bits across all 8 bit planes.
pub fn ber(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    a.same_dims(b)?;
    let diff: u64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| u64::from((x ^ y).count_ones()))
        .sum();
    Ok(diff as f64 / (8 * a.pixels().len()) as f64)
}

/// Per-method aggregate row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub ber: f64,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub uqi: f64,
    pub n_images: usize,
}

/// Metrics for one (stego, purified) pair.
#[derive(Debug, Clone, Copy)]
pub struct ImageMetrics {
    pub ber: f64,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub uqi: f64,
}

fn image_metrics(stego: &GrayImage, purified: &GrayImage) -> Result<ImageMetrics> {
    let mse_v = mse(purified, stego)?;
    Ok(ImageMetrics {
        ber: ber(stego, purified)?,
        mse: mse_v,
        psnr: psnr_from_mse(mse_v),
        ssim: ssim(purified, stego)?,
        uqi: uqi(purified, stego)?,
    })
}

/// Aggregate metrics over pre-purified images. All five metrics compare the
/// purified image against its steganographic counterpart; BER measures the
/// bits changed by purification.
pub fn evaluate_pairs(
    stegos: &[GrayImage],
    purified: &[GrayImage],
    method: &str,
) -> Result<(MetricsRow, Vec<ImageMetrics>)> {
    if stegos.is_empty() {
        return Err(Error::EmptyInput("no stego/purified pairs to evaluate"));
    }
    if stegos.len() != purified.len() {
        return Err(Error::Manifest(format!(
            "unpaired sets: {} stegos vs {} purified",
            stegos.len(),
            purified.len()
        )));
    }
    let pairs: Vec<(usize, ())> = (0..stegos.len()).map(|i| (i, ())).collect();
    let per_image: Vec<Result<ImageMetrics>> =
        par::batch_map(&pairs, |(i, _)| image_metrics(&stegos[*i], &purified[*i]));
    let per_image: Vec<ImageMetrics> = per_image.into_iter().collect::<Result<_>>()?;

    let collect = |f: &dyn Fn(&ImageMetrics) -> f64| -> Vec<f64> {
        per_image.iter().map(f).collect()
    };
    let row = MetricsRow {
        method: method.to_string(),
        ber: kahan_mean(&collect(&|m| m.ber)),
        mse: kahan_mean(&collect(&|m| m.mse)),
        psnr: kahan_mean(&collect(&|m| m.psnr)),
        ssim: kahan_mean(&collect(&|m| m.ssim)),
        uqi: kahan_mean(&collect(&|m| m.uqi)),
        n_images: per_image.len(),
    };
    Ok((row, per_image))
}

/// Purify each stego image with `purifier` and aggregate metrics. `covers`
/// is the paired cover set; counts must line up.
pub fn evaluate<F>(
    covers: &[GrayImage],
    stegos: &[GrayImage],
    purifier: F,
    method: &str,
) -> Result<(MetricsRow, Vec<ImageMetrics>)>
where
    F: Fn(&GrayImage) -> Result<GrayImage> + Sync + Send,
{
    if covers.is_empty() || stegos.is_empty() {
        return Err(Error::EmptyInput("empty cover or stego set"));
    }
    if covers.len() != stegos.len() {
        return Err(Error::Manifest(format!(
            "unpaired sets: {} covers vs {} stegos",
            covers.len(),
            stegos.len()
        )));
    }
    let purified: Vec<GrayImage> = par::batch_map(stegos, |s| purifier(s))
        .into_iter()
        .collect::<Result<_>>()?;
    evaluate_pairs(stegos, &purified, method)
}

/// Format with 6 significant digits; infinities become `inf`.
pub fn fmt_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Render rows as the canonical CSV report.
pub fn report_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("method,ber,mse,psnr,ssim,uqi,n\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method,
            fmt_sig6(r.ber),
            fmt_sig6(r.mse),
            fmt_sig6(r.psnr),
            fmt_sig6(r.ssim),
            fmt_sig6(r.uqi),
            r.n_images
        ));
    }
    out
}

/// JSON mirror of the CSV report; `psnr` becomes the string `"inf"` when
/// infinite.
pub fn report_json(rows: &[MetricsRow]) -> String {
    let rows: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            let psnr = if r.psnr.is_infinite() {
                serde_json::Value::String("inf".into())
            } else {
                serde_json::json!(r.psnr)
            };
            serde_json::json!({
                "method": r.method,
                "ber": r.ber,
                "mse": r.mse,
                "psnr": psnr,
                "ssim": r.ssim,
                "uqi": r.uqi,
                "n": r.n_images,
            })
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({ "report": rows })).expect("valid json")
}

/// Per-image rows as CSV.
pub fn per_image_csv(method_rows: &[(String, Vec<ImageMetrics>)]) -> String {
    let mut out = String::from("method,image,ber,mse,psnr,ssim,uqi\n");
    for (method, rows) in method_rows {
        for (i, m) in rows.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                method,
                i,
                fmt_sig6(m.ber),
                fmt_sig6(m.mse),
                fmt_sig6(m.psnr),
                fmt_sig6(m.ssim),
                fmt_sig6(m.uqi)
            ));
        }
    }
    out
}

/// Parse a report produced by [`report_csv`].
pub fn parse_report_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Manifest(format!("bad report line: {line}")));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Manifest(format!("bad number {s} in report")))
        };
        rows.push(MetricsRow {
            method: fields[0].to_string(),
            ber: num(fields[1])?,
            mse: num(fields[2])?,
            psnr: num(fields[3])?,
            ssim: num(fields[4])?,
            uqi: num(fields[5])?,
            n_images: fields[6]
                .parse()
                .map_err(|_| Error::Manifest(format!("bad count in report: {}", fields[6])))?,
        });
    }
    Ok(rows)
}
