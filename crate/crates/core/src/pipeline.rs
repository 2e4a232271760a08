//! End-to-end group detection: multi-scale scoring and refinement, the
//! initial/auxiliary/final co-saliency fusion, and training-sample
//! construction. The command-line driver is a thin wrapper over this
//! module.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::build_group_descriptors;
use crate::fusion::{
    auxiliary_cosal, extract_group_seeds, final_cosal, initial_cosal, GroupContext, Params,
};
use crate::graph::{build_cluster_layer, intra_graph, RankingSolver};
use crate::imagio::{rgb_to_lab, FeatureTensor, LabImage, PixelMask, RgbImage, ScalarMap};
use crate::scorer::{heuristic_scores, refine_scores, score_segments, MlpModel, TrainSample};
use crate::superpixel::{pool_mean, pool_median, segment_field_to_pixels, slic, SegmentField};

/// One loaded image group, ready for detection.
pub struct GroupInput {
    pub names: Vec<String>,
    pub images: Vec<RgbImage>,
    /// Pixel-level intra-image saliency, one map per image at image size.
    pub saliency_maps: Vec<ScalarMap>,
    pub tensors: Option<Vec<FeatureTensor>>,
}

impl GroupInput {
    fn validate(&self) -> Result<()> {
        let m = self.images.len();
        if m == 0 {
            return Err(Error::InvalidArg("empty image group".into()));
        }
        if self.names.len() != m || self.saliency_maps.len() != m {
            return Err(Error::DimMismatch(format!(
                "{m} images vs {} names vs {} saliency maps",
                self.names.len(),
                self.saliency_maps.len()
            )));
        }
        if let Some(ts) = &self.tensors {
            if ts.len() != m {
                return Err(Error::DimMismatch(format!("{m} images vs {} tensors", ts.len())));
            }
        }
        for (img, sal) in self.images.iter().zip(&self.saliency_maps) {
            if img.width != sal.width || img.height != sal.height {
                return Err(Error::DimMismatch(format!(
                    "saliency map {}x{} does not match image {}x{}",
                    sal.width, sal.height, img.width, img.height
                )));
            }
        }
        Ok(())
    }
}

/// Segment scorer selection for a run.
pub enum ScorerKind<'a> {
    Model(&'a MlpModel),
    Heuristic,
}

pub struct DetectOutput {
    pub context: GroupContext,
    /// Pixel-level final co-saliency, one map per image.
    pub cosal_maps: Vec<ScalarMap>,
    /// Binary masks, produced in co-segmentation mode.
    pub masks: Option<Vec<PixelMask>>,
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArg(format!("cannot build worker pool: {e}")))
}

struct ScaleProducts {
    segmented: Vec<crate::superpixel::SegmentedImage>,
    intra_fields: Vec<SegmentField>,
    descriptors: Vec<crate::features::ImageDescriptors>,
    pool: crate::features::ForegroundPool,
    refined: Vec<SegmentField>,
}

fn run_scale(
    labs: &[LabImage],
    input: &GroupInput,
    params: &Params,
    scorer: &ScorerKind<'_>,
    scale: usize,
) -> Result<ScaleProducts> {
    let segmented: Vec<_> = labs
        .par_iter()
        .map(|lab| slic(lab, scale, params.slic_compactness))
        .collect::<Result<_>>()?;
    let intra_fields: Vec<_> = segmented
        .par_iter()
        .zip(&input.saliency_maps)
        .map(|(seg, map)| pool_median(seg, map))
        .collect::<Result<_>>()?;
    let (descriptors, pool) =
        build_group_descriptors(&segmented, &intra_fields, input.tensors.as_deref())?;
    let raw: Vec<SegmentField> = match scorer {
        ScorerKind::Model(model) => descriptors
            .par_iter()
            .map(|d| score_segments(model, d))
            .collect::<Result<_>>()?,
        ScorerKind::Heuristic => descriptors.par_iter().map(heuristic_scores).collect(),
    };
    let refined: Vec<_> = segmented
        .par_iter()
        .zip(&raw)
        .map(|(seg, r)| refine_scores(seg, r, params.alpha, params.eta))
        .collect::<Result<_>>()?;
    Ok(ScaleProducts { segmented, intra_fields, descriptors, pool, refined })
}

/// Runs the whole detection pipeline on one group.
pub fn detect_group(input: &GroupInput, params: &Params, scorer: ScorerKind<'_>) -> Result<DetectOutput> {
    params.validate()?;
    input.validate()?;
    let pool = thread_pool(params.workers)?;
    pool.install(|| detect_group_inner(input, params, &scorer))
}

fn detect_group_inner(
    input: &GroupInput,
    params: &Params,
    scorer: &ScorerKind<'_>,
) -> Result<DetectOutput> {
    let m = input.images.len();
    let labs: Vec<LabImage> = input.images.par_iter().map(rgb_to_lab).collect();

    // multi-scale inter-image scoring: refine at each scale, project to
    // pixels, average, re-pool onto the main-scale segmentation
    let main_scale = params.scales[0];
    let mut main: Option<ScaleProducts> = None;
    let mut pixel_sums: Vec<Vec<f32>> = input
        .images
        .iter()
        .map(|img| vec![0.0f32; img.width * img.height])
        .collect();
    for &scale in &params.scales {
        let products = run_scale(&labs, input, params, scorer, scale)?;
        for (i, (seg, field)) in products.segmented.iter().zip(&products.refined).enumerate() {
            let map = segment_field_to_pixels(seg, field)?;
            for (acc, v) in pixel_sums[i].iter_mut().zip(&map.values) {
                *acc += v;
            }
        }
        if scale == main_scale {
            main = Some(products);
        }
    }
    let main = main.expect("main scale is always processed");
    let scale_count = params.scales.len() as f32;
    let inter_fields: Vec<SegmentField> = main
        .segmented
        .iter()
        .zip(pixel_sums)
        .map(|(seg, sums)| {
            let avg = ScalarMap::new(
                seg.width(),
                seg.height(),
                sums.into_iter().map(|v| (v / scale_count).clamp(0.0, 1.0)).collect(),
            )?;
            pool_median(seg, &avg)
        })
        .collect::<Result<_>>()?;

    let initial: Vec<SegmentField> = main
        .intra_fields
        .iter()
        .zip(&inter_fields)
        .map(|(rs, es)| initial_cosal(rs, es, params.tau))
        .collect::<Result<_>>()?;

    // integrated graph over the main-scale nodes plus the cluster layer
    let intra_graphs: Vec<_> = main.segmented.par_iter().map(intra_graph).collect::<Result<_>>()?;
    let node_lab: Vec<[f64; 3]> =
        main.segmented.iter().flat_map(|s| s.mean_lab.iter().copied()).collect();
    let k_eff = params.cluster_count.min(node_lab.len());
    let layer = build_cluster_layer(&node_lab, k_eff, params.seed)?;
    let graph =
        crate::graph::integrated_graph(&intra_graphs, &node_lab, &layer, params.sigma, params.knn)?;
    let solver = RankingSolver::new(&graph, params.alpha)?;

    let (seeds_fg, seeds_bg) = extract_group_seeds(&main.segmented, &initial, k_eff)?;
    let auxiliary = auxiliary_cosal(
        &main.segmented,
        &solver,
        &seeds_fg,
        &seeds_bg,
        params.eta,
        params.coseg_mode,
    )?;

    let cosal: Vec<SegmentField> = (0..m)
        .map(|i| final_cosal(&main.segmented[i], &initial[i], &auxiliary[i]))
        .collect::<Result<_>>()?;
    let cosal_maps: Vec<ScalarMap> = main
        .segmented
        .iter()
        .zip(&cosal)
        .map(|(seg, f)| segment_field_to_pixels(seg, f))
        .collect::<Result<_>>()?;
    let masks = if params.coseg_mode {
        Some(
            main.segmented
                .iter()
                .zip(&cosal)
                .map(|(seg, f)| crate::fusion::to_coseg_mask(seg, f, 0.5))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let context = GroupContext {
        images: main.segmented,
        intra_fields: main.intra_fields,
        inter_fields,
        descriptors: main.descriptors,
        foregrounds: main.pool,
        initial,
        auxiliary,
        cosal,
        params: params.clone(),
    };
    Ok(DetectOutput { context, cosal_maps, masks })
}

/// Builds labeled training samples from a group with ground truth, at every
/// configured superpixel scale.
pub fn build_training_samples(
    input: &GroupInput,
    ground_truth: &[PixelMask],
    params: &Params,
) -> Result<Vec<TrainSample>> {
    params.validate()?;
    input.validate()?;
    if ground_truth.len() != input.images.len() {
        return Err(Error::DimMismatch(format!(
            "{} images vs {} ground-truth masks",
            input.images.len(),
            ground_truth.len()
        )));
    }
    let pool = thread_pool(params.workers)?;
    pool.install(|| {
        let labs: Vec<LabImage> = input.images.par_iter().map(rgb_to_lab).collect();
        let mut samples = Vec::new();
        for &scale in &params.scales {
            let segmented: Vec<_> = labs
                .par_iter()
                .map(|lab| slic(lab, scale, params.slic_compactness))
                .collect::<Result<_>>()?;
            let intra_fields: Vec<_> = segmented
                .par_iter()
                .zip(&input.saliency_maps)
                .map(|(seg, map)| pool_median(seg, map))
                .collect::<Result<_>>()?;
            let (descriptors, _) =
                build_group_descriptors(&segmented, &intra_fields, input.tensors.as_deref())?;
            for (idx, ((seg, rs), desc)) in
                segmented.iter().zip(&intra_fields).zip(&descriptors).enumerate()
            {
                let gt_map = ScalarMap::new(
                    seg.width(),
                    seg.height(),
                    ground_truth[idx].data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
                )?;
                let gt_avg = pool_mean(seg, &gt_map)?;
                for i in 0..seg.segment_count {
                    samples.push(TrainSample {
                        descriptor: desc.concat(i),
                        label: u8::from(gt_avg.values[i] >= 0.5),
                        intra: rs.values[i],
                        gt_cosal: gt_avg.values[i],
                    });
                }
            }
        }
        Ok(samples)
    })
}
