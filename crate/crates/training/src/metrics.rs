//! Full-reference image quality metrics and the evaluation report.

use serde::{Deserialize, Serialize};

use rganet_tensor::{Result, Scalar, Tensor4, TensorError};

use crate::color::{delta_e_2000, srgb_to_lab};
use crate::ssim::{ms_ssim, ssim_mean};

/// PSNR is capped here when the images are numerically identical.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct MetricValues {
    /// Peak signal-to-noise ratio in dB for range-1 images.
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    /// Mean absolute error scaled by 255 (8-bit convention).
    pub mae: f64,
    pub ciede2000: f64,
}

/// Per-image metric rows plus the dataset means.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub mae: f64,
    pub ciede2000: f64,
    pub per_image: Vec<PerImageMetrics>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerImageMetrics {
    pub id: String,
    #[serde(flatten)]
    pub values: MetricValues,
}

pub fn psnr<S: Scalar>(pred: &Tensor4<S>, target: &Tensor4<S>) -> Result<f64> {
    if pred.dims() != target.dims() {
        return Err(TensorError::shape(
            "psnr",
            format!("dims {:?} vs {:?}", pred.dims(), target.dims()),
        ));
    }
    let mse: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p.as64() - t.as64();
            d * d
        })
        .sum::<f64>()
        / pred.numel() as f64;
    if mse < 1e-10 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

pub fn mae_255<S: Scalar>(pred: &Tensor4<S>, target: &Tensor4<S>) -> Result<f64> {
    if pred.dims() != target.dims() {
        return Err(TensorError::shape(
            "mae",
            format!("dims {:?} vs {:?}", pred.dims(), target.dims()),
        ));
    }
    let mae: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p.as64() - t.as64()).abs())
        .sum::<f64>()
        / pred.numel() as f64;
    Ok(mae * 255.0)
}

/// Mean CIEDE2000 over pixels of a 3-channel image pair in [0,1].
pub fn ciede2000_mean<S: Scalar>(pred: &Tensor4<S>, target: &Tensor4<S>) -> Result<f64> {
    if pred.dims() != target.dims() {
        return Err(TensorError::shape(
            "ciede2000",
            format!("dims {:?} vs {:?}", pred.dims(), target.dims()),
        ));
    }
    let (n, c, h, w) = pred.dims();
    if c != 3 {
        return Err(TensorError::shape(
            "ciede2000",
            format!("expected 3 channels, got {c}"),
        ));
    }
    let mut sum = 0.0;
    for ni in 0..n {
        let (pr, pg, pb) = (pred.plane(ni, 0), pred.plane(ni, 1), pred.plane(ni, 2));
        let (tr, tg, tb) = (
            target.plane(ni, 0),
            target.plane(ni, 1),
            target.plane(ni, 2),
        );
        for i in 0..h * w {
            let lab_p = srgb_to_lab(pr[i].as64(), pg[i].as64(), pb[i].as64());
            let lab_t = srgb_to_lab(tr[i].as64(), tg[i].as64(), tb[i].as64());
            sum += delta_e_2000(lab_p, lab_t);
        }
    }
    Ok(sum / (n * h * w) as f64)
}

/// All five metrics for one image pair in [0,1].
pub fn metrics<S: Scalar>(pred: &Tensor4<S>, target: &Tensor4<S>) -> Result<MetricValues> {
    let p64 = pred.cast::<f64>();
    let t64 = target.cast::<f64>();
    Ok(MetricValues {
        psnr: psnr(&p64, &t64)?,
        ssim: ssim_mean(&p64, &t64)?,
        ms_ssim: ms_ssim(&p64, &t64)?,
        mae: mae_255(&p64, &t64)?,
        ciede2000: ciede2000_mean(&p64, &t64)?,
    })
}

/// Aggregates per-image metrics into a report with dataset means.
pub fn report<S: Scalar>(
    pairs: &[(String, Tensor4<S>, Tensor4<S>)],
) -> Result<MetricsReport> {
    let mut rep = MetricsReport::default();
    for (id, pred, target) in pairs {
        let values = metrics(pred, target)?;
        rep.psnr += values.psnr;
        rep.ssim += values.ssim;
        rep.ms_ssim += values.ms_ssim;
        rep.mae += values.mae;
        rep.ciede2000 += values.ciede2000;
        rep.per_image.push(PerImageMetrics {
            id: id.clone(),
            values,
        });
    }
    let n = rep.per_image.len().max(1) as f64;
    rep.psnr /= n;
    rep.ssim /= n;
    rep.ms_ssim /= n;
    rep.mae /= n;
    rep.ciede2000 /= n;
    Ok(rep)
}
