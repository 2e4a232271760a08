//! Saliency evaluation: PR and ROC curves over the 0..255 threshold sweep,
//! their areas, the F-measure under the self-adaptive threshold, and
//! co-segmentation accuracy.
//!
//! Prediction maps are quantized to `round(255 * v)` and binarized with
//! `quantized >= t` for every threshold `t`, so `t = 0` is the all-positive
//! threshold. Rates are computed per image and macro-averaged in index
//! order. Images with no predicted positives contribute precision 1.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::imagio::{PixelMask, ScalarMap};

pub const BETA_SQUARED: f64 = 0.3;

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub threshold: u16,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub ap: f64,
    pub auc: f64,
    pub fmeasure: f64,
    pub fmeasure_std: f64,
    pub pr_curve: Vec<CurvePoint>,
    pub roc_curve: Vec<CurvePoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jaccard: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pixel_precision: Option<f64>,
}

#[inline]
fn quantize(v: f32) -> usize {
    (255.0 * v.clamp(0.0, 1.0)).round() as usize
}

fn check_pair(pred: &ScalarMap, gt: &PixelMask) -> Result<()> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    Ok(())
}

struct ThresholdCounts {
    /// tp[t], fp[t] for threshold t, positives, negatives
    tp: [f64; 256],
    fp: [f64; 256],
    positives: f64,
    negatives: f64,
}

fn threshold_counts(pred: &ScalarMap, gt: &PixelMask) -> Result<ThresholdCounts> {
    check_pair(pred, gt)?;
    let mut pos_hist = [0.0f64; 256];
    let mut neg_hist = [0.0f64; 256];
    for (v, &g) in pred.values.iter().zip(&gt.data) {
        let q = quantize(*v);
        if g {
            pos_hist[q] += 1.0;
        } else {
            neg_hist[q] += 1.0;
        }
    }
    let mut tp = [0.0f64; 256];
    let mut fp = [0.0f64; 256];
    let mut acc_p = 0.0;
    let mut acc_n = 0.0;
    for t in (0..256).rev() {
        acc_p += pos_hist[t];
        acc_n += neg_hist[t];
        tp[t] = acc_p;
        fp[t] = acc_n;
    }
    Ok(ThresholdCounts { tp, fp, positives: acc_p, negatives: acc_n })
}

/// Threshold-swept curves macro-averaged over the dataset, with the areas
/// under the PR curve (over recall) and the ROC curve (over the false
/// positive rate), both by trapezoid with endpoints extended to zero
/// recall / zero fpr.
pub fn pr_roc(predictions: &[ScalarMap], ground_truth: &[PixelMask]) -> Result<(Vec<CurvePoint>, f64, f64)> {
    if predictions.is_empty() || predictions.len() != ground_truth.len() {
        return Err(Error::DimMismatch(format!(
            "{} predictions vs {} ground-truth masks",
            predictions.len(),
            ground_truth.len()
        )));
    }
    let counts: Vec<ThresholdCounts> = predictions
        .iter()
        .zip(ground_truth)
        .map(|(p, g)| threshold_counts(p, g))
        .collect::<Result<_>>()?;
    if counts.iter().all(|c| c.positives == 0.0) {
        return Err(Error::EmptyGroundTruth);
    }
    let m = counts.len() as f64;
    let mut curve = Vec::with_capacity(256);
    for t in 0..256 {
        let mut precision = 0.0;
        let mut recall = 0.0;
        let mut fpr = 0.0;
        for c in &counts {
            let predicted = c.tp[t] + c.fp[t];
            precision += if predicted > 0.0 { c.tp[t] / predicted } else { 1.0 };
            recall += if c.positives > 0.0 { c.tp[t] / c.positives } else { 1.0 };
            fpr += if c.negatives > 0.0 { c.fp[t] / c.negatives } else { 0.0 };
        }
        curve.push(CurvePoint {
            threshold: t as u16,
            precision: precision / m,
            recall: recall / m,
            fpr: fpr / m,
        });
    }
    let mut ap = 0.0;
    let mut auc = 0.0;
    for w in curve.windows(2) {
        ap += (w[0].recall - w[1].recall) * (w[0].precision + w[1].precision) / 2.0;
        auc += (w[0].fpr - w[1].fpr) * (w[0].tpr() + w[1].tpr()) / 2.0;
    }
    let last = curve.last().unwrap();
    // extend to recall = 0 at constant precision, and to (fpr, tpr) = (0, 0)
    ap += last.recall * last.precision;
    auc += last.fpr * last.tpr() / 2.0;
    Ok((curve, ap, auc))
}

impl CurvePoint {
    #[inline]
    pub fn tpr(&self) -> f64 {
        self.recall
    }
}

/// `F_beta` combination of precision and recall (zero when both are zero).
pub fn f_beta(precision: f64, recall: f64, beta2: f64) -> f64 {
    let den = beta2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / den
    }
}

/// Per-image precision and recall under the self-adaptive threshold
/// `T = mean + std` of the prediction map (clamped to its maximum value, so
/// the binarization is never empty on a non-constant map).
pub fn adaptive_rates(prediction: &ScalarMap, gt: &PixelMask) -> Result<(f64, f64)> {
    check_pair(prediction, gt)?;
    let positives = gt.count_ones();
    if positives == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let n = prediction.values.len() as f64;
    let mean = prediction.values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = prediction.values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let max = prediction.values.iter().fold(0.0f32, |m, &v| m.max(v)) as f64;
    let t = (mean + var.sqrt()).min(max);
    let mut tp = 0.0;
    let mut fp = 0.0;
    for (&v, &g) in prediction.values.iter().zip(&gt.data) {
        if v as f64 >= t {
            if g {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
    }
    let predicted = tp + fp;
    let precision = if predicted > 0.0 { tp / predicted } else { 1.0 };
    let recall = tp / positives as f64;
    Ok((precision, recall))
}

/// Dataset F-measure: rates averaged over all samples, then combined.
pub fn f_measure(predictions: &[ScalarMap], ground_truth: &[PixelMask]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != ground_truth.len() {
        return Err(Error::DimMismatch(format!(
            "{} predictions vs {} ground-truth masks",
            predictions.len(),
            ground_truth.len()
        )));
    }
    let mut psum = 0.0;
    let mut rsum = 0.0;
    for (p, g) in predictions.iter().zip(ground_truth) {
        let (pr, rc) = adaptive_rates(p, g)?;
        psum += pr;
        rsum += rc;
    }
    let m = predictions.len() as f64;
    Ok(f_beta(psum / m, rsum / m, BETA_SQUARED))
}

/// Jaccard index (1 when both masks are empty) and the proportion of
/// pixels with equal labels.
pub fn jaccard_precision(mask: &PixelMask, gt: &PixelMask) -> Result<(f64, f64)> {
    if mask.width != gt.width || mask.height != gt.height {
        return Err(Error::DimMismatch(format!(
            "mask {}x{} vs ground truth {}x{}",
            mask.width, mask.height, gt.width, gt.height
        )));
    }
    let mut inter = 0.0f64;
    let mut union = 0.0f64;
    let mut equal = 0.0f64;
    for (&a, &b) in mask.data.iter().zip(&gt.data) {
        if a && b {
            inter += 1.0;
        }
        if a || b {
            union += 1.0;
        }
        if a == b {
            equal += 1.0;
        }
    }
    let j = if union == 0.0 { 1.0 } else { inter / union };
    Ok((j, equal / mask.data.len() as f64))
}

/// Full metric report: curves, areas, adaptive F with its standard
/// deviation over the 256 thresholds, and optional co-segmentation scores.
pub fn evaluate_dataset(
    predictions: &[ScalarMap],
    ground_truth: &[PixelMask],
    masks: Option<&[PixelMask]>,
) -> Result<MetricReport> {
    let (curve, ap, auc) = pr_roc(predictions, ground_truth)?;
    let fmeasure = f_measure(predictions, ground_truth)?;
    // F over the fixed thresholds, from the same macro-averaged rates
    let fs: Vec<f64> = curve.iter().map(|c| f_beta(c.precision, c.recall, BETA_SQUARED)).collect();
    let mean = fs.iter().sum::<f64>() / fs.len() as f64;
    let fmeasure_std = (fs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / fs.len() as f64).sqrt();

    let (jaccard, pixel_precision) = match masks {
        Some(ms) => {
            if ms.len() != ground_truth.len() {
                return Err(Error::DimMismatch(format!(
                    "{} masks vs {} ground-truth masks",
                    ms.len(),
                    ground_truth.len()
                )));
            }
            let mut js = 0.0;
            let mut ps = 0.0;
            for (m, g) in ms.iter().zip(ground_truth) {
                let (j, p) = jaccard_precision(m, g)?;
                js += j;
                ps += p;
            }
            let n = ms.len() as f64;
            (Some(js / n), Some(ps / n))
        }
        None => (None, None),
    };
    Ok(MetricReport {
        ap,
        auc,
        fmeasure,
        fmeasure_std,
        pr_curve: curve.clone(),
        roc_curve: curve,
        jaccard,
        pixel_precision,
    })
}

/// Curve rows as `threshold,precision,recall,fpr` CSV.
pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("threshold,precision,recall,fpr\n");
    for p in curve {
        out.push_str(&format!("{},{:.9},{:.9},{:.9}\n", p.threshold, p.precision, p.recall, p.fpr));
    }
    out
}
