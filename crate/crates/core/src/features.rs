//! Per-segment multi-regional descriptors and the per-image / group
//! foreground-region pools they are built from.
//!
//! A segment descriptor concatenates four L2-normalized parts: the segment
//! itself, its immediate neighborhood, the pooled foreground regions of its
//! own image, and the pooled foreground regions of the whole group (the
//! last one carries covariance traces of the region descriptors).

use crate::error::{Error, Result};
use crate::imagio::FeatureTensor;
use crate::superpixel::{SegmentedImage, SegmentField};

pub const HIST_BINS: usize = 256;
const L_BINS: usize = 4;
const A_BINS: usize = 8;
const B_BINS: usize = 8;

/// The largest number of connected components kept before forming the
/// region power set (bounds the pool at 2^6 - 1 = 63 regions per image).
pub const MAX_FOREGROUND_COMPONENTS: usize = 6;

/// Histogram cell of a normalized Lab triple: 4 L bins x 8 a bins x 8 b bins.
#[inline]
pub fn lab_bin(lab: [f32; 3]) -> usize {
    let bl = ((lab[0] as f64 * L_BINS as f64) as usize).min(L_BINS - 1);
    let ba = ((lab[1] as f64 * A_BINS as f64) as usize).min(A_BINS - 1);
    let bb = ((lab[2] as f64 * B_BINS as f64) as usize).min(B_BINS - 1);
    (bl * A_BINS + ba) * B_BINS + bb
}

/// Fixed slot layout of descriptor parts for one run.
///
/// Segment part: `[high (4*channels, optional), mean Lab (3), mean pos (2),
/// hist (256)]`. Region part adds a position-variance pair; the group part
/// appends covariance traces (high-level and low-level, or low-level only
/// when no feature tensors are supplied).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DescriptorLayout {
    pub high_channels: usize,
}

impl DescriptorLayout {
    pub fn new(high_channels: Option<usize>) -> Self {
        Self { high_channels: high_channels.unwrap_or(0) }
    }

    pub fn has_high(&self) -> bool {
        self.high_channels > 0
    }

    pub fn high_len(&self) -> usize {
        4 * self.high_channels
    }

    pub fn seg_len(&self) -> usize {
        self.high_len() + 3 + 2 + HIST_BINS
    }

    pub fn region_len(&self) -> usize {
        self.high_len() + 3 + 2 + 2 + HIST_BINS
    }

    pub fn trace_len(&self) -> usize {
        if self.has_high() {
            2
        } else {
            1
        }
    }

    pub fn gfg_len(&self) -> usize {
        self.region_len() + self.trace_len()
    }

    pub fn total_len(&self) -> usize {
        2 * self.seg_len() + self.region_len() + self.gfg_len()
    }

    pub fn seg_high(&self) -> std::ops::Range<usize> {
        0..self.high_len()
    }

    pub fn seg_lab(&self) -> std::ops::Range<usize> {
        self.high_len()..self.high_len() + 3
    }

    pub fn seg_hist(&self) -> std::ops::Range<usize> {
        self.high_len() + 5..self.seg_len()
    }

    pub fn region_high(&self) -> std::ops::Range<usize> {
        0..self.high_len()
    }

    pub fn region_lab(&self) -> std::ops::Range<usize> {
        self.high_len()..self.high_len() + 3
    }

    pub fn region_hist(&self) -> std::ops::Range<usize> {
        self.high_len() + 7..self.region_len()
    }
}

/// A union of above-threshold segments with its pooled descriptors.
#[derive(Debug, Clone)]
pub struct ForegroundRegion {
    pub member_segments: Vec<usize>,
    pub owning_image: usize,
    /// Pooled high-level vector (empty when no feature tensor is supplied).
    pub descriptor_high: Vec<f64>,
    pub mean_lab: [f64; 3],
    pub mean_pos: [f64; 2],
    pub pos_variance: [f64; 2],
    /// Square roots of the L1-normalized 256-bin Lab histogram.
    pub color_hist: Vec<f64>,
    pub pixel_count: usize,
}

impl ForegroundRegion {
    /// Flat region descriptor `[high, lab, pos, posvar, hist]`.
    pub fn descriptor(&self, layout: &DescriptorLayout) -> Vec<f64> {
        let mut v = Vec::with_capacity(layout.region_len());
        debug_assert_eq!(self.descriptor_high.len(), layout.high_len());
        v.extend_from_slice(&self.descriptor_high);
        v.extend_from_slice(&self.mean_lab);
        v.extend_from_slice(&self.mean_pos);
        v.extend_from_slice(&self.pos_variance);
        v.extend_from_slice(&self.color_hist);
        v
    }
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Raw per-segment histogram counts, reused for unions of segments.
fn segment_bin_counts(seg: &SegmentedImage) -> Vec<Vec<u32>> {
    let mut counts = vec![vec![0u32; HIST_BINS]; seg.segment_count];
    let (w, h) = (seg.width(), seg.height());
    for y in 0..h {
        for x in 0..w {
            let s = seg.labels[y * w + x] as usize;
            counts[s][lab_bin(seg.lab.pixel(x, y))] += 1;
        }
    }
    counts
}

fn finalize_hist(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| (c / total).sqrt()).collect()
}

/// L1-normalized then square-rooted Lab histogram over the pixels of the
/// given segments.
pub fn lab_histogram(seg: &SegmentedImage, member_segments: &[usize]) -> Result<Vec<f64>> {
    if member_segments.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut member = vec![false; seg.segment_count];
    for &s in member_segments {
        member[s] = true;
    }
    let mut counts = vec![0.0f64; HIST_BINS];
    let (w, h) = (seg.width(), seg.height());
    let mut any = false;
    for y in 0..h {
        for x in 0..w {
            if member[seg.labels[y * w + x] as usize] {
                counts[lab_bin(seg.lab.pixel(x, y))] += 1.0;
                any = true;
            }
        }
    }
    if !any {
        return Err(Error::EmptyRegion);
    }
    Ok(finalize_hist(&counts))
}

/// Pixel coverage of every segment on the feature-tensor grid. Cells
/// partition the image by integer division, so per-cell pixel totals are
/// exact.
struct CellCoverage {
    grid_w: usize,
    cell_total: Vec<u32>,
    per_segment: Vec<Vec<(u32, u32)>>, // (cell index, member pixel count)
}

impl CellCoverage {
    fn build(seg: &SegmentedImage, tensor: &FeatureTensor) -> Self {
        let (w, h) = (seg.width(), seg.height());
        let (gw, gh) = (tensor.grid_width, tensor.grid_height);
        let mut cell_total = vec![0u32; gw * gh];
        let mut maps: Vec<std::collections::BTreeMap<u32, u32>> =
            vec![std::collections::BTreeMap::new(); seg.segment_count];
        for y in 0..h {
            let gy = (y * gh) / h;
            for x in 0..w {
                let gx = (x * gw) / w;
                let cell = (gy * gw + gx) as u32;
                cell_total[cell as usize] += 1;
                let s = seg.labels[y * w + x] as usize;
                *maps[s].entry(cell).or_insert(0) += 1;
            }
        }
        let per_segment = maps.into_iter().map(|m| m.into_iter().collect()).collect();
        Self { grid_w: gw, cell_total, per_segment }
    }

    fn union_counts(&self, members: &[usize]) -> std::collections::BTreeMap<u32, u32> {
        let mut out = std::collections::BTreeMap::new();
        for &s in members {
            for &(cell, c) in &self.per_segment[s] {
                *out.entry(cell).or_insert(0) += c;
            }
        }
        out
    }
}

/// Projects a member mask onto the tensor grid (a cell belongs to the mask
/// when at least half of its pixels are members; if none qualifies, the
/// max-coverage cell is taken), then max-pools channels over the 2x2
/// quadrants of the mask's bounding box.
fn pool_high_from_coverage(
    coverage: &CellCoverage,
    tensor: &FeatureTensor,
    members: &[usize],
) -> Vec<f64> {
    let counts = coverage.union_counts(members);
    let mut cells: Vec<u32> = counts
        .iter()
        .filter(|&(&cell, &c)| 2 * c >= coverage.cell_total[cell as usize])
        .map(|(&cell, _)| cell)
        .collect();
    if cells.is_empty() {
        if let Some((&cell, _)) = counts.iter().max_by_key(|&(&cell, &c)| (c, std::cmp::Reverse(cell))) {
            cells.push(cell);
        } else {
            return vec![0.0; 4 * tensor.channels];
        }
    }
    let gw = coverage.grid_w;
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0usize, usize::MAX, 0usize);
    for &cell in &cells {
        let (r, c) = (cell as usize / gw, cell as usize % gw);
        r0 = r0.min(r);
        r1 = r1.max(r);
        c0 = c0.min(c);
        c1 = c1.max(c);
    }
    let bh = r1 - r0 + 1;
    let bw = c1 - c0 + 1;
    let channels = tensor.channels;
    let in_mask: std::collections::BTreeSet<u32> = cells.iter().copied().collect();

    let mut out = Vec::with_capacity(4 * channels);
    let mut global_max = vec![f64::NEG_INFINITY; channels];
    for &cell in &cells {
        let (r, c) = (cell as usize / gw, cell as usize % gw);
        for ch in 0..channels {
            global_max[ch] = global_max[ch].max(tensor.value(c, r, ch) as f64);
        }
    }
    for qr in 0..2usize {
        let rr0 = r0 + qr * bh / 2;
        let rr1 = r0 + ((qr + 1) * bh).div_ceil(2) - 1;
        for qc in 0..2usize {
            let cc0 = c0 + qc * bw / 2;
            let cc1 = c0 + ((qc + 1) * bw).div_ceil(2) - 1;
            let mut quadrant_max = vec![f64::NEG_INFINITY; channels];
            let mut hit = false;
            for r in rr0..=rr1 {
                for c in cc0..=cc1 {
                    let cell = (r * gw + c) as u32;
                    if in_mask.contains(&cell) {
                        hit = true;
                        for ch in 0..channels {
                            quadrant_max[ch] = quadrant_max[ch].max(tensor.value(c, r, ch) as f64);
                        }
                    }
                }
            }
            // an L-shaped mask can leave a quadrant empty; fall back to the
            // region-wide channel maxima
            let src = if hit { &quadrant_max } else { &global_max };
            out.extend_from_slice(src);
        }
    }
    out
}

/// Mask-pooled high-level vector for a set of segments (4 * channels).
pub fn pool_segment_high(
    seg: &SegmentedImage,
    tensor: &FeatureTensor,
    member_segments: &[usize],
) -> Vec<f64> {
    let coverage = CellCoverage::build(seg, tensor);
    pool_high_from_coverage(&coverage, tensor, member_segments)
}

/// Thresholds the intra-image saliency field at `max(mean, 0.5)`, finds
/// connected components over segment adjacency, keeps the
/// [`MAX_FOREGROUND_COMPONENTS`] largest, and returns every nonempty union
/// of them with pooled descriptors.
pub fn extract_foregrounds(
    seg: &SegmentedImage,
    intra_field: &SegmentField,
    tensor: Option<&FeatureTensor>,
    owning_image: usize,
) -> Result<Vec<ForegroundRegion>> {
    if intra_field.len() != seg.segment_count {
        return Err(Error::DimMismatch(format!(
            "saliency field has {} values, segmentation has {} segments",
            intra_field.len(),
            seg.segment_count
        )));
    }
    let threshold = intra_field.mean().max(0.5);
    let selected: Vec<bool> = intra_field.values.iter().map(|&v| v >= threshold).collect();

    // connected components over segment adjacency, restricted to the mask
    let mut comp_of = vec![usize::MAX; seg.segment_count];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for start in 0..seg.segment_count {
        if !selected[start] || comp_of[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = Vec::new();
        let mut stack = vec![start];
        comp_of[start] = id;
        while let Some(s) = stack.pop() {
            members.push(s);
            for &t in &seg.adjacency[s] {
                if selected[t] && comp_of[t] == usize::MAX {
                    comp_of[t] = id;
                    stack.push(t);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    if components.is_empty() {
        return Ok(Vec::new());
    }
    let pixel_count =
        |members: &[usize]| members.iter().map(|&s| seg.pixel_counts[s]).sum::<usize>();
    components.sort_by_key(|m| (std::cmp::Reverse(pixel_count(m)), m[0]));
    components.truncate(MAX_FOREGROUND_COMPONENTS);

    // sufficient statistics per component so unions are cheap to pool
    let bin_counts = segment_bin_counts(seg);
    struct CompStats {
        pixels: f64,
        sum_lab: [f64; 3],
        sum_pos: [f64; 2],
        sum_pos_sq: [f64; 2],
        hist: Vec<f64>,
    }
    let stats: Vec<CompStats> = components
        .iter()
        .map(|members| {
            let mut s = CompStats {
                pixels: 0.0,
                sum_lab: [0.0; 3],
                sum_pos: [0.0; 2],
                sum_pos_sq: [0.0; 2],
                hist: vec![0.0; HIST_BINS],
            };
            for &m in members {
                let c = seg.pixel_counts[m] as f64;
                s.pixels += c;
                for d in 0..3 {
                    s.sum_lab[d] += seg.mean_lab[m][d] * c;
                }
                for (b, &cnt) in s.hist.iter_mut().zip(&bin_counts[m]) {
                    *b += cnt as f64;
                }
            }
            s
        })
        .collect();
    // position first and second moments need a pixel pass
    let mut stats = stats;
    {
        let mut comp_index = vec![usize::MAX; seg.segment_count];
        for (ci, comp) in components.iter().enumerate() {
            for &s in comp {
                comp_index[s] = ci;
            }
        }
        let (w, h) = (seg.width(), seg.height());
        let norm_x = (w.max(2) - 1) as f64;
        let norm_y = (h.max(2) - 1) as f64;
        for y in 0..h {
            for x in 0..w {
                let ci = comp_index[seg.labels[y * w + x] as usize];
                if ci == usize::MAX {
                    continue;
                }
                let px = x as f64 / norm_x;
                let py = y as f64 / norm_y;
                stats[ci].sum_pos[0] += px;
                stats[ci].sum_pos[1] += py;
                stats[ci].sum_pos_sq[0] += px * px;
                stats[ci].sum_pos_sq[1] += py * py;
            }
        }
    }

    let coverage = tensor.map(|t| CellCoverage::build(seg, t));
    let c = components.len();
    let mut regions = Vec::with_capacity((1usize << c) - 1);
    for bits in 1u32..(1u32 << c) {
        let mut members = Vec::new();
        let mut pixels = 0.0f64;
        let mut sum_lab = [0.0f64; 3];
        let mut sum_pos = [0.0f64; 2];
        let mut sum_pos_sq = [0.0f64; 2];
        let mut hist = vec![0.0f64; HIST_BINS];
        for (ci, comp) in components.iter().enumerate() {
            if bits & (1 << ci) == 0 {
                continue;
            }
            members.extend_from_slice(comp);
            let st = &stats[ci];
            pixels += st.pixels;
            for d in 0..3 {
                sum_lab[d] += st.sum_lab[d];
            }
            for d in 0..2 {
                sum_pos[d] += st.sum_pos[d];
                sum_pos_sq[d] += st.sum_pos_sq[d];
            }
            for (b, v) in hist.iter_mut().zip(&st.hist) {
                *b += v;
            }
        }
        members.sort_unstable();
        let mean_lab = [sum_lab[0] / pixels, sum_lab[1] / pixels, sum_lab[2] / pixels];
        let mean_pos = [sum_pos[0] / pixels, sum_pos[1] / pixels];
        let pos_variance = [
            (sum_pos_sq[0] / pixels - mean_pos[0] * mean_pos[0]).max(0.0),
            (sum_pos_sq[1] / pixels - mean_pos[1] * mean_pos[1]).max(0.0),
        ];
        let descriptor_high = match (&coverage, tensor) {
            (Some(cov), Some(t)) => pool_high_from_coverage(cov, t, &members),
            _ => Vec::new(),
        };
        regions.push(ForegroundRegion {
            member_segments: members,
            owning_image,
            descriptor_high,
            mean_lab,
            mean_pos,
            pos_variance,
            color_hist: finalize_hist(&hist),
            pixel_count: pixels as usize,
        });
    }
    Ok(regions)
}

/// Foreground regions of every image in the group.
#[derive(Debug, Clone, Default)]
pub struct ForegroundPool {
    pub per_image: Vec<Vec<ForegroundRegion>>,
}

impl ForegroundPool {
    pub fn total_regions(&self) -> usize {
        self.per_image.iter().map(|r| r.len()).sum()
    }

    pub fn all_regions(&self) -> impl Iterator<Item = &ForegroundRegion> {
        self.per_image.iter().flatten()
    }
}

/// Descriptors of one image: per-segment `seg`/`nbh` parts plus the shared
/// same-image and group foreground parts. Every part is L2-normalized (or
/// all-zero when its source pool is empty).
#[derive(Debug, Clone)]
pub struct ImageDescriptors {
    pub layout: DescriptorLayout,
    pub seg: Vec<Vec<f64>>,
    pub nbh: Vec<Vec<f64>>,
    pub sfg: Vec<f64>,
    pub gfg: Vec<f64>,
    /// Superpixel scale the segmentation was requested at.
    pub scale_tag: usize,
}

impl ImageDescriptors {
    pub fn segment_count(&self) -> usize {
        self.seg.len()
    }

    pub fn dim(&self) -> usize {
        self.layout.total_len()
    }

    /// Full concatenated descriptor of segment `i`.
    pub fn concat(&self, i: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.seg[i]);
        v.extend_from_slice(&self.nbh[i]);
        v.extend_from_slice(&self.sfg);
        v.extend_from_slice(&self.gfg);
        v
    }
}

/// Population covariance traces of region descriptors across the pool:
/// `[high-level trace, low-level trace]`, or `[low-level trace]` when no
/// high-level features exist.
pub fn covariance_traces(regions: &[&ForegroundRegion], layout: &DescriptorLayout) -> Vec<f64> {
    let n = regions.len();
    let trace_of = |dim: usize, get: &dyn Fn(&ForegroundRegion, usize) -> f64| -> f64 {
        if n == 0 {
            return 0.0;
        }
        let mut sum = vec![0.0f64; dim];
        let mut sum_sq = vec![0.0f64; dim];
        for r in regions {
            for d in 0..dim {
                let v = get(r, d);
                sum[d] += v;
                sum_sq[d] += v * v;
            }
        }
        let nf = n as f64;
        (0..dim).map(|d| (sum_sq[d] / nf - (sum[d] / nf).powi(2)).max(0.0)).sum()
    };
    let low_dim = 3 + 2 + 2 + HIST_BINS;
    let low = trace_of(low_dim, &|r: &ForegroundRegion, d: usize| match d {
        0..=2 => r.mean_lab[d],
        3 | 4 => r.mean_pos[d - 3],
        5 | 6 => r.pos_variance[d - 5],
        _ => r.color_hist[d - 7],
    });
    if layout.has_high() {
        let high = trace_of(layout.high_len(), &|r: &ForegroundRegion, d: usize| r.descriptor_high[d]);
        vec![high, low]
    } else {
        vec![low]
    }
}

fn sum_region_descriptors(
    regions: &mut dyn Iterator<Item = &ForegroundRegion>,
    layout: &DescriptorLayout,
) -> (Vec<f64>, usize) {
    let mut acc = vec![0.0f64; layout.region_len()];
    let mut count = 0usize;
    for r in regions {
        for (a, v) in acc.iter_mut().zip(r.descriptor(layout)) {
            *a += v;
        }
        count += 1;
    }
    (acc, count)
}

/// Builds the descriptors of every image in a group. Feature tensors, when
/// supplied, must cover every image with a common channel count.
pub fn build_group_descriptors(
    images: &[SegmentedImage],
    intra_fields: &[SegmentField],
    tensors: Option<&[FeatureTensor]>,
) -> Result<(Vec<ImageDescriptors>, ForegroundPool)> {
    if images.len() != intra_fields.len() {
        return Err(Error::DimMismatch(format!(
            "{} images vs {} saliency fields",
            images.len(),
            intra_fields.len()
        )));
    }
    if let Some(ts) = tensors {
        if ts.len() != images.len() {
            return Err(Error::DimMismatch(format!(
                "{} images vs {} feature tensors",
                images.len(),
                ts.len()
            )));
        }
        if ts.windows(2).any(|w| w[0].channels != w[1].channels) {
            return Err(Error::DimMismatch("feature tensors disagree on channel count".into()));
        }
    }
    let layout = DescriptorLayout::new(tensors.map(|ts| ts[0].channels));

    let mut pool = ForegroundPool::default();
    for (m, (seg, field)) in images.iter().zip(intra_fields).enumerate() {
        let tensor = tensors.map(|ts| &ts[m]);
        pool.per_image.push(extract_foregrounds(seg, field, tensor, m)?);
    }

    // group part: raw sum of all region descriptors plus covariance traces
    let all: Vec<&ForegroundRegion> = pool.all_regions().collect();
    let (gfg_sum, total) = sum_region_descriptors(&mut all.iter().copied(), &layout);
    let mut gfg = if total == 0 { vec![0.0; layout.gfg_len()] } else {
        let mut v = gfg_sum;
        v.extend(covariance_traces(&all, &layout));
        v
    };
    l2_normalize(&mut gfg);

    let mut out = Vec::with_capacity(images.len());
    for (m, seg) in images.iter().enumerate() {
        let tensor = tensors.map(|ts| &ts[m]);
        let coverage = tensor.map(|t| CellCoverage::build(seg, t));
        let bin_counts = segment_bin_counts(seg);

        let (sfg_raw, count) =
            sum_region_descriptors(&mut pool.per_image[m].iter(), &layout);
        let mut sfg = if count == 0 { vec![0.0; layout.region_len()] } else { sfg_raw };
        l2_normalize(&mut sfg);

        let mut seg_parts = Vec::with_capacity(seg.segment_count);
        let mut nbh_parts = Vec::with_capacity(seg.segment_count);
        for i in 0..seg.segment_count {
            let mut part = Vec::with_capacity(layout.seg_len());
            if let (Some(cov), Some(t)) = (&coverage, tensor) {
                part.extend(pool_high_from_coverage(cov, t, &[i]));
            }
            part.extend_from_slice(&seg.mean_lab[i]);
            part.extend_from_slice(&seg.mean_pos[i]);
            let hist: Vec<f64> = bin_counts[i].iter().map(|&c| c as f64).collect();
            part.extend(finalize_hist(&hist));
            l2_normalize(&mut part);
            seg_parts.push(part);

            // neighborhood: the segment together with its adjacent segments
            let mut members: Vec<usize> = vec![i];
            members.extend_from_slice(&seg.adjacency[i]);
            members.sort_unstable();
            let mut part = Vec::with_capacity(layout.seg_len());
            if let (Some(cov), Some(t)) = (&coverage, tensor) {
                part.extend(pool_high_from_coverage(cov, t, &members));
            }
            let mut pixels = 0.0f64;
            let mut lab = [0.0f64; 3];
            let mut pos = [0.0f64; 2];
            let mut hist = vec![0.0f64; HIST_BINS];
            for &s in &members {
                let c = seg.pixel_counts[s] as f64;
                pixels += c;
                for d in 0..3 {
                    lab[d] += seg.mean_lab[s][d] * c;
                }
                for d in 0..2 {
                    pos[d] += seg.mean_pos[s][d] * c;
                }
                for (b, &cnt) in hist.iter_mut().zip(&bin_counts[s]) {
                    *b += cnt as f64;
                }
            }
            part.extend(lab.iter().map(|v| v / pixels));
            part.extend(pos.iter().map(|v| v / pixels));
            part.extend(finalize_hist(&hist));
            l2_normalize(&mut part);
            nbh_parts.push(part);
        }
        out.push(ImageDescriptors {
            layout,
            seg: seg_parts,
            nbh: nbh_parts,
            sfg,
            gfg: gfg.clone(),
            scale_tag: seg.scale_tag,
        });
    }
    Ok((out, pool))
}

/// Exports an image's concatenated descriptors as an `n x dim` tensor
/// (C = 1) in the shared container format.
pub fn descriptors_to_tensor(desc: &ImageDescriptors) -> crate::imagio::Tensor {
    let n = desc.segment_count();
    let dim = desc.dim();
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n {
        data.extend(desc.concat(i).into_iter().map(|v| v as f32));
    }
    crate::imagio::Tensor::new(n, dim, 1, data).expect("sized by construction")
}
