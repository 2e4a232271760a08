//! Fusion of the two saliency routes into co-saliency maps: the initial
//! combination of intra- and inter-image fields, group seed extraction,
//! auxiliary propagation over the integrated graph, max-fusion, spatial
//! post-processing, and co-segmentation masks.

use crate::error::{Error, Result};
use crate::features::{ForegroundPool, ImageDescriptors};
use crate::graph::{
    half_shift_normalize, min_max_normalize, seed_ratio, AffinityGraph, RankingSolver, SeedVector,
};
use crate::imagio::PixelMask;
use crate::superpixel::{segment_field_to_pixels, SegmentedImage, SegmentField};

/// Numeric parameters shared by every stage of a run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Params {
    pub alpha: f64,
    pub eta: f64,
    pub sigma: f64,
    pub tau: f64,
    pub cluster_count: usize,
    pub knn: usize,
    pub rho: f64,
    pub gamma: f64,
    pub scales: Vec<usize>,
    pub coseg_mode: bool,
    pub seed: u64,
    pub slic_compactness: f64,
    pub workers: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            alpha: 0.95,
            eta: 2.0,
            sigma: 0.25,
            tau: 0.5,
            cluster_count: 100,
            knn: 5,
            rho: 0.7,
            gamma: 3.0,
            scales: vec![200, 150, 50],
            coseg_mode: false,
            seed: 0,
            slic_compactness: 0.05,
            workers: 0,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArg(format!("alpha {} outside (0,1)", self.alpha)));
        }
        if self.eta <= 0.0 || self.sigma <= 0.0 || self.gamma <= 0.0 {
            return Err(Error::InvalidArg("eta, sigma and gamma must be positive".into()));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidArg(format!("tau {} outside (0,1)", self.tau)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidArg(format!("rho {} outside (0,1)", self.rho)));
        }
        if self.cluster_count < 2 {
            return Err(Error::InvalidArg("cluster count must be at least 2".into()));
        }
        if self.knn < 1 {
            return Err(Error::InvalidArg("knn must be at least 1".into()));
        }
        if self.scales.is_empty() {
            return Err(Error::InvalidArg("at least one superpixel scale required".into()));
        }
        if self.scales.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidArg("superpixel scales must be strictly descending".into()));
        }
        if self.slic_compactness <= 0.0 {
            return Err(Error::InvalidArg("slic compactness must be positive".into()));
        }
        Ok(())
    }
}

/// The whole image group at the main superpixel scale, built up in phases
/// by the pipeline. Per-image sequences share the group length.
#[derive(Debug)]
pub struct GroupContext {
    pub images: Vec<SegmentedImage>,
    pub intra_fields: Vec<SegmentField>,
    pub inter_fields: Vec<SegmentField>,
    pub descriptors: Vec<ImageDescriptors>,
    pub foregrounds: ForegroundPool,
    pub initial: Vec<SegmentField>,
    pub auxiliary: Vec<SegmentField>,
    pub cosal: Vec<SegmentField>,
    pub params: Params,
}

impl GroupContext {
    pub fn image_count(&self) -> usize {
        self.images.len()
    }

    /// Node ranges of each image in the concatenated intra-node order.
    pub fn node_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.images.len());
        let mut offset = 0usize;
        for seg in &self.images {
            out.push(offset..offset + seg.segment_count);
            offset += seg.segment_count;
        }
        out
    }

    pub fn total_nodes(&self) -> usize {
        self.images.iter().map(|s| s.segment_count).sum()
    }
}

/// Initial co-saliency of one segment: the product branch when the
/// intra-image score exceeds the inter-image score by at least `tau`
/// (single-saliency residual), otherwise the `|delta|`-blend of the two.
pub fn initial_cosal_value(intra: f64, inter: f64, tau: f64) -> f64 {
    let delta = intra - inter;
    if delta >= tau {
        intra * inter
    } else {
        (1.0 - delta.abs()) * intra + delta.abs() * inter
    }
}

/// Element-wise initial co-saliency over one image.
pub fn initial_cosal(intra: &SegmentField, inter: &SegmentField, tau: f64) -> Result<SegmentField> {
    if intra.len() != inter.len() {
        return Err(Error::DimMismatch(format!(
            "intra field has {} values, inter field has {}",
            intra.len(),
            inter.len()
        )));
    }
    let values = intra
        .values
        .iter()
        .zip(&inter.values)
        .map(|(&r, &e)| initial_cosal_value(r, e, tau))
        .collect();
    Ok(SegmentField::new(values, intra.scale_tag))
}

/// Group-level seeds over the integrated node order: per image, the
/// top-decile initial co-saliency nodes become co-saliency seeds and the
/// boundary nodes become background seeds; nodes qualifying for both are
/// excluded from both. The vectors carry `cluster_count` zero entries for
/// the cluster layer.
pub fn extract_group_seeds(
    images: &[SegmentedImage],
    initial: &[SegmentField],
    cluster_count: usize,
) -> Result<(SeedVector, SeedVector)> {
    let total: usize = images.iter().map(|s| s.segment_count).sum();
    let mut fg = vec![false; total + cluster_count];
    let mut bg = vec![false; total + cluster_count];
    let mut offset = 0usize;
    for (seg, ic) in images.iter().zip(initial) {
        if ic.len() != seg.segment_count {
            return Err(Error::DimMismatch(format!(
                "initial field has {} values, segmentation has {} segments",
                ic.len(),
                seg.segment_count
            )));
        }
        let top: std::collections::BTreeSet<usize> =
            crate::scorer::top_decile(&ic.values).into_iter().collect();
        for i in 0..seg.segment_count {
            let is_top = top.contains(&i);
            let is_boundary = seg.boundary_flags[i];
            if is_top && !is_boundary {
                fg[offset + i] = true;
            }
            if is_boundary && !is_top {
                bg[offset + i] = true;
            }
        }
        offset += seg.segment_count;
    }
    let fg = SeedVector { mask: fg };
    if fg.is_empty() {
        return Err(Error::DegenerateSeeds(
            "no interior co-saliency seeds in the whole group".into(),
        ));
    }
    Ok((fg, SeedVector { mask: bg }))
}

/// Auxiliary co-saliency: propagates the group seeds over the integrated
/// graph and splits the combined field per image, normalizing each image
/// range (min-max in detection mode, `(x+1)/2` in co-segmentation mode).
pub fn auxiliary_cosal(
    images: &[SegmentedImage],
    solver: &RankingSolver,
    seeds_fg: &SeedVector,
    seeds_bg: &SeedVector,
    eta: f64,
    coseg_mode: bool,
) -> Result<Vec<SegmentField>> {
    if seeds_fg.is_empty() && seeds_bg.is_empty() {
        return Err(Error::DegenerateSeeds("both group seed vectors are all-zero".into()));
    }
    let ff = solver.rank(&seeds_fg.to_dense())?;
    let fb = solver.rank(&seeds_bg.to_dense())?;
    let combined = seed_ratio(&ff, &fb, eta);
    let mut out = Vec::with_capacity(images.len());
    let mut offset = 0usize;
    for seg in images {
        let mut slice = combined[offset..offset + seg.segment_count].to_vec();
        if coseg_mode {
            half_shift_normalize(&mut slice);
        } else {
            min_max_normalize(&mut slice);
        }
        out.push(SegmentField::new(slice, seg.scale_tag));
        offset += seg.segment_count;
    }
    Ok(out)
}

/// Final co-saliency: the element-wise max of the initial and auxiliary
/// fields, followed by the spatial post-processing step.
pub fn final_cosal(
    seg: &SegmentedImage,
    initial: &SegmentField,
    auxiliary: &SegmentField,
) -> Result<SegmentField> {
    if initial.len() != auxiliary.len() {
        return Err(Error::DimMismatch(format!(
            "initial field has {} values, auxiliary has {}",
            initial.len(),
            auxiliary.len()
        )));
    }
    let fused = SegmentField::new(
        initial.values.iter().zip(&auxiliary.values).map(|(&a, &b)| a.max(b)).collect(),
        initial.scale_tag,
    );
    postprocess(seg, &fused)
}

/// Shrink factor per side for the spatial distance map.
const POSTPROCESS_SHRINK: usize = 4;
/// Spread of the radial attenuation, as a fraction of the image diagonal.
const POSTPROCESS_SIGMA: f64 = 0.33;

/// Radial attenuation around the saliency-weighted centroid:
/// `cs' = cs * exp(-d^2 / (2 sigma^2))` with `d` the diagonal-normalized
/// distance from the segment centroid to the weighted centroid. Outputs
/// never exceed inputs. The centroid is computed on a shrunk pixel grid.
pub fn postprocess(seg: &SegmentedImage, field: &SegmentField) -> Result<SegmentField> {
    if field.len() != seg.segment_count {
        return Err(Error::DimMismatch(format!(
            "field has {} values, segmentation has {} segments",
            field.len(),
            seg.segment_count
        )));
    }
    let (w, h) = (seg.width(), seg.height());
    let norm_x = (w.max(2) - 1) as f64;
    let norm_y = (h.max(2) - 1) as f64;
    let mut weight_sum = 0.0f64;
    let mut centroid = [0.0f64; 2];
    let mut samples = 0usize;
    let mut pos_sum = [0.0f64; 2];
    let mut y = 0usize;
    while y < h {
        let mut x = 0usize;
        while x < w {
            let v = field.values[seg.labels[y * w + x] as usize];
            let px = x as f64 / norm_x;
            let py = y as f64 / norm_y;
            weight_sum += v;
            centroid[0] += v * px;
            centroid[1] += v * py;
            pos_sum[0] += px;
            pos_sum[1] += py;
            samples += 1;
            x += POSTPROCESS_SHRINK;
        }
        y += POSTPROCESS_SHRINK;
    }
    let center = if weight_sum > 0.0 {
        [centroid[0] / weight_sum, centroid[1] / weight_sum]
    } else {
        [pos_sum[0] / samples as f64, pos_sum[1] / samples as f64]
    };
    let diag = std::f64::consts::SQRT_2;
    let values = (0..seg.segment_count)
        .map(|i| {
            let dx = seg.mean_pos[i][0] - center[0];
            let dy = seg.mean_pos[i][1] - center[1];
            let d = (dx * dx + dy * dy).sqrt() / diag;
            field.values[i] * (-d * d / (2.0 * POSTPROCESS_SIGMA * POSTPROCESS_SIGMA)).exp()
        })
        .collect();
    Ok(SegmentField::new(values, field.scale_tag))
}

/// Thresholds a co-saliency field into a binary pixel mask (pixels take
/// their segment's value; values equal to the threshold are included).
pub fn to_coseg_mask(seg: &SegmentedImage, field: &SegmentField, threshold: f64) -> Result<PixelMask> {
    let map = segment_field_to_pixels(seg, field)?;
    Ok(PixelMask::from_map(&map, threshold as f32))
}

/// Builds the integrated graph's solver for a group. Convenience wrapper
/// used by the pipeline and the oracle tests.
pub fn integrated_solver(
    intra_graphs: &[AffinityGraph],
    node_lab: &[[f64; 3]],
    layer: &crate::graph::ClusterLayer,
    params: &Params,
) -> Result<(AffinityGraph, RankingSolver)> {
    let graph = crate::graph::integrated_graph(intra_graphs, node_lab, layer, params.sigma, params.knn)?;
    let solver = RankingSolver::new(&graph, params.alpha)?;
    Ok((graph, solver))
}
