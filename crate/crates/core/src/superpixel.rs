//! SLIC over-segmentation, segment adjacency and boundary flags, and
//! segment-level pooling of pixel fields.

use crate::error::{Error, Result};
use crate::imagio::{LabImage, RgbImage, ScalarMap};

/// An image plus its superpixel partition and per-segment statistics.
///
/// Labels form a partition into nonempty, 4-connected segments. Adjacency is
/// symmetric and irreflexive; `mean_pos` is normalized to `[0,1]` per axis.
#[derive(Debug, Clone)]
pub struct SegmentedImage {
    pub lab: LabImage,
    pub labels: Vec<u32>,
    pub segment_count: usize,
    pub adjacency: Vec<Vec<usize>>,
    pub boundary_flags: Vec<bool>,
    pub mean_lab: Vec<[f64; 3]>,
    pub mean_pos: Vec<[f64; 2]>,
    pub pixel_counts: Vec<usize>,
    /// Superpixel count this segmentation was requested at.
    pub scale_tag: usize,
}

impl SegmentedImage {
    pub fn width(&self) -> usize {
        self.lab.width
    }

    pub fn height(&self) -> usize {
        self.lab.height
    }

    /// Assembles a segmentation from an explicit label map, recomputing all
    /// derived statistics. Labels must be dense in `0..segment_count` and
    /// every segment nonempty; connectivity is the caller's responsibility.
    pub fn from_labels(lab: LabImage, labels: Vec<u32>, scale_tag: usize) -> Result<Self> {
        let (w, h) = (lab.width, lab.height);
        if labels.len() != w * h {
            return Err(Error::DimMismatch(format!(
                "label map holds {} entries, image has {} pixels",
                labels.len(),
                w * h
            )));
        }
        let n = match labels.iter().max() {
            Some(&m) => m as usize + 1,
            None => return Err(Error::InvalidArg("empty label map".into())),
        };
        let mut pixel_counts = vec![0usize; n];
        let mut sum_lab = vec![[0.0f64; 3]; n];
        let mut sum_pos = vec![[0.0f64; 2]; n];
        let mut boundary_flags = vec![false; n];
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for y in 0..h {
            for x in 0..w {
                let s = labels[y * w + x] as usize;
                pixel_counts[s] += 1;
                let px = lab.pixel(x, y);
                for c in 0..3 {
                    sum_lab[s][c] += px[c] as f64;
                }
                sum_pos[s][0] += x as f64;
                sum_pos[s][1] += y as f64;
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    boundary_flags[s] = true;
                }
                if x + 1 < w {
                    let t = labels[y * w + x + 1] as usize;
                    if t != s {
                        adj[s].push(t);
                        adj[t].push(s);
                    }
                }
                if y + 1 < h {
                    let t = labels[(y + 1) * w + x] as usize;
                    if t != s {
                        adj[s].push(t);
                        adj[t].push(s);
                    }
                }
            }
        }
        if pixel_counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidArg("label map has an empty segment".into()));
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        let mean_lab = sum_lab
            .iter()
            .zip(&pixel_counts)
            .map(|(s, &c)| [s[0] / c as f64, s[1] / c as f64, s[2] / c as f64])
            .collect();
        let norm_x = (w.max(2) - 1) as f64;
        let norm_y = (h.max(2) - 1) as f64;
        let mean_pos = sum_pos
            .iter()
            .zip(&pixel_counts)
            .map(|(s, &c)| [s[0] / c as f64 / norm_x, s[1] / c as f64 / norm_y])
            .collect();
        Ok(Self {
            lab,
            labels,
            segment_count: n,
            adjacency: adj,
            boundary_flags,
            mean_lab,
            mean_pos,
            pixel_counts,
            scale_tag,
        })
    }
}

/// One value in `[0,1]` per segment of a [`SegmentedImage`].
#[derive(Debug, Clone)]
pub struct SegmentField {
    pub values: Vec<f64>,
    /// Superpixel count of the segmentation this field was computed at.
    pub scale_tag: usize,
}

impl SegmentField {
    pub fn new(values: Vec<f64>, scale_tag: usize) -> Self {
        Self { values, scale_tag }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

struct SlicCenter {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

/// Standard SLIC with 10 iterations and connectivity enforcement over the
/// normalized-Lab image. The actual segment count may differ from
/// `target_count`; the compactness weight trades color against spatial
/// distance on the `[0,1]` Lab scale.
pub fn slic(lab: &LabImage, target_count: usize, compactness: f64) -> Result<SegmentedImage> {
    let (w, h) = (lab.width, lab.height);
    let pixels = w * h;
    if target_count < 2 || target_count > pixels {
        return Err(Error::InvalidArg(format!(
            "superpixel count {target_count} out of range 2..={pixels}"
        )));
    }
    if compactness <= 0.0 {
        return Err(Error::InvalidArg("compactness must be positive".into()));
    }

    let spacing = (pixels as f64 / target_count as f64).sqrt();
    let mut nx = ((w as f64 / spacing).round() as usize).max(1);
    let mut ny = ((h as f64 / spacing).round() as usize).max(1);
    if nx * ny < 2 {
        if w >= h {
            nx = 2;
        } else {
            ny = 2;
        }
    }

    let grad = |x: usize, y: usize| -> f64 {
        let xm = lab.pixel(x.saturating_sub(1), y);
        let xp = lab.pixel((x + 1).min(w - 1), y);
        let ym = lab.pixel(x, y.saturating_sub(1));
        let yp = lab.pixel(x, (y + 1).min(h - 1));
        let mut g = 0.0;
        for c in 0..3 {
            g += (xp[c] as f64 - xm[c] as f64).powi(2) + (yp[c] as f64 - ym[c] as f64).powi(2);
        }
        g
    };

    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = ((i as f64 + 0.5) * w as f64 / nx as f64) as usize;
            let cy = ((j as f64 + 0.5) * h as f64 / ny as f64) as usize;
            let cx = cx.min(w - 1);
            let cy = cy.min(h - 1);
            // nudge to the lowest-gradient pixel in the 3x3 neighborhood
            let mut best = (cx, cy);
            let mut best_g = f64::INFINITY;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let px = cx as i64 + dx;
                    let py = cy as i64 + dy;
                    if px < 0 || py < 0 || px >= w as i64 || py >= h as i64 {
                        continue;
                    }
                    let g = grad(px as usize, py as usize);
                    if g < best_g {
                        best_g = g;
                        best = (px as usize, py as usize);
                    }
                }
            }
            let p = lab.pixel(best.0, best.1);
            centers.push(SlicCenter {
                lab: [p[0] as f64, p[1] as f64, p[2] as f64],
                x: best.0 as f64,
                y: best.1 as f64,
            });
        }
    }

    let step_x = w as f64 / nx as f64;
    let step_y = h as f64 / ny as f64;
    let search = step_x.max(step_y).ceil() as i64 + 1;
    let color_weight = (compactness / spacing).powi(2);

    let mut labels = vec![u32::MAX; pixels];
    let mut best_dist = vec![f64::INFINITY; pixels];
    for _ in 0..10 {
        best_dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let x0 = ((c.x as i64) - search).max(0) as usize;
            let x1 = ((c.x as i64) + search).min(w as i64 - 1) as usize;
            let y0 = ((c.y as i64) - search).max(0) as usize;
            let y1 = ((c.y as i64) + search).min(h as i64 - 1) as usize;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = lab.pixel(x, y);
                    let mut dc = 0.0;
                    for ch in 0..3 {
                        dc += (p[ch] as f64 - c.lab[ch]).powi(2);
                    }
                    let ds = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                    let d = dc + color_weight * ds;
                    let idx = y * w + x;
                    if d < best_dist[idx] {
                        best_dist[idx] = d;
                        labels[idx] = k as u32;
                    }
                }
            }
        }
        // safety net: windows cover the image by construction, but assign any
        // straggler to the globally nearest center
        for y in 0..h {
            for x in 0..w {
                let idx = y * w + x;
                if labels[idx] == u32::MAX {
                    let mut best = (f64::INFINITY, 0u32);
                    for (k, c) in centers.iter().enumerate() {
                        let ds = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                        if ds < best.0 {
                            best = (ds, k as u32);
                        }
                    }
                    labels[idx] = best.1;
                }
            }
        }
        // recompute centers
        let mut acc = vec![([0.0f64; 3], 0.0f64, 0.0f64, 0usize); centers.len()];
        for y in 0..h {
            for x in 0..w {
                let k = labels[y * w + x] as usize;
                let p = lab.pixel(x, y);
                let a = &mut acc[k];
                for c in 0..3 {
                    a.0[c] += p[c] as f64;
                }
                a.1 += x as f64;
                a.2 += y as f64;
                a.3 += 1;
            }
        }
        for (k, a) in acc.iter().enumerate() {
            if a.3 > 0 {
                let n = a.3 as f64;
                centers[k].lab = [a.0[0] / n, a.0[1] / n, a.0[2] / n];
                centers[k].x = a.1 / n;
                centers[k].y = a.2 / n;
            }
        }
    }

    let labels = enforce_connectivity(&labels, w, h);
    SegmentedImage::from_labels(lab.clone(), labels, target_count)
}

/// Connected-component relabeling: every SLIC label keeps its largest
/// component; all other components are merged, smallest first, into the
/// largest adjacent region.
fn enforce_connectivity(labels: &[u32], w: usize, h: usize) -> Vec<u32> {
    let pixels = w * h;
    let mut comp = vec![usize::MAX; pixels];
    let mut comp_label = Vec::new();
    let mut comp_size = Vec::new();
    let mut stack = Vec::new();
    for start in 0..pixels {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_label.len();
        let lbl = labels[start];
        comp_label.push(lbl);
        comp_size.push(0usize);
        stack.push(start);
        comp[start] = id;
        while let Some(p) = stack.pop() {
            comp_size[id] += 1;
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp[q] == usize::MAX && labels[q] == lbl {
                    comp[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
    }

    let ncomp = comp_label.len();
    // component adjacency
    let mut comp_adj: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
    for y in 0..h {
        for x in 0..w {
            let a = comp[y * w + x];
            if x + 1 < w {
                let b = comp[y * w + x + 1];
                if a != b {
                    comp_adj[a].push(b);
                    comp_adj[b].push(a);
                }
            }
            if y + 1 < h {
                let b = comp[(y + 1) * w + x];
                if a != b {
                    comp_adj[a].push(b);
                    comp_adj[b].push(a);
                }
            }
        }
    }
    for list in &mut comp_adj {
        list.sort_unstable();
        list.dedup();
    }

    // largest component per label is that label's core
    let mut core_of_label: std::collections::BTreeMap<u32, usize> = std::collections::BTreeMap::new();
    for id in 0..ncomp {
        let entry = core_of_label.entry(comp_label[id]).or_insert(id);
        if comp_size[id] > comp_size[*entry] {
            *entry = id;
        }
    }
    let is_core: Vec<bool> = (0..ncomp).map(|id| core_of_label[&comp_label[id]] == id).collect();

    // union-find over components
    let mut parent: Vec<usize> = (0..ncomp).collect();
    let mut group_size = comp_size.clone();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }

    let mut orphans: Vec<usize> = (0..ncomp).filter(|&id| !is_core[id]).collect();
    orphans.sort_by_key(|&id| (comp_size[id], id));
    for id in orphans {
        let own = find(&mut parent, id);
        let mut best: Option<(usize, usize)> = None; // (size, root)
        for &nb in &comp_adj[id] {
            let root = find(&mut parent, nb);
            if root == own {
                continue;
            }
            let cand = (group_size[root], root);
            match best {
                Some((s, r)) if (cand.0, std::cmp::Reverse(cand.1)) <= (s, std::cmp::Reverse(r)) => {}
                _ => best = Some(cand),
            }
        }
        if let Some((_, target)) = best {
            parent[own] = target;
            group_size[target] += group_size[own];
        }
    }

    // relabel groups densely in raster order of first appearance
    let mut new_label = vec![u32::MAX; ncomp];
    let mut next = 0u32;
    let mut out = vec![0u32; pixels];
    for p in 0..pixels {
        let root = find(&mut parent, comp[p]);
        if new_label[root] == u32::MAX {
            new_label[root] = next;
            next += 1;
        }
        out[p] = new_label[root];
    }
    out
}

/// Pools a pixel map onto segments by median (even counts average the two
/// middle values).
pub fn pool_median(seg: &SegmentedImage, map: &ScalarMap) -> Result<SegmentField> {
    if map.width != seg.width() || map.height != seg.height() {
        return Err(Error::DimMismatch(format!(
            "map is {}x{}, segmentation is {}x{}",
            map.width,
            map.height,
            seg.width(),
            seg.height()
        )));
    }
    let mut per_segment: Vec<Vec<f32>> = vec![Vec::new(); seg.segment_count];
    for (i, &lbl) in seg.labels.iter().enumerate() {
        per_segment[lbl as usize].push(map.values[i]);
    }
    let values = per_segment
        .into_iter()
        .map(|mut vs| {
            vs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = vs.len();
            let m = if n % 2 == 1 {
                vs[n / 2] as f64
            } else {
                (vs[n / 2 - 1] as f64 + vs[n / 2] as f64) / 2.0
            };
            m.clamp(0.0, 1.0)
        })
        .collect();
    Ok(SegmentField::new(values, seg.scale_tag))
}

/// Pools a pixel map onto segments by mean (used for segment-averaged
/// training labels).
pub fn pool_mean(seg: &SegmentedImage, map: &ScalarMap) -> Result<SegmentField> {
    if map.width != seg.width() || map.height != seg.height() {
        return Err(Error::DimMismatch(format!(
            "map is {}x{}, segmentation is {}x{}",
            map.width,
            map.height,
            seg.width(),
            seg.height()
        )));
    }
    let mut sums = vec![0.0f64; seg.segment_count];
    for (i, &lbl) in seg.labels.iter().enumerate() {
        sums[lbl as usize] += map.values[i] as f64;
    }
    let values = sums
        .iter()
        .zip(&seg.pixel_counts)
        .map(|(&s, &c)| (s / c as f64).clamp(0.0, 1.0))
        .collect();
    Ok(SegmentField::new(values, seg.scale_tag))
}

/// Expands a segment field back to a piecewise-constant pixel map.
pub fn segment_field_to_pixels(seg: &SegmentedImage, field: &SegmentField) -> Result<ScalarMap> {
    if field.len() != seg.segment_count {
        return Err(Error::DimMismatch(format!(
            "field has {} values, segmentation has {} segments",
            field.len(),
            seg.segment_count
        )));
    }
    let values = seg
        .labels
        .iter()
        .map(|&lbl| field.values[lbl as usize] as f32)
        .collect();
    ScalarMap::new(seg.width(), seg.height(), values)
}

/// Label map rendered as a 16-bit grayscale PNG for debugging.
pub fn labels_to_png16(seg: &SegmentedImage, path: impl AsRef<std::path::Path>) -> Result<()> {
    let buf: Vec<u16> = seg.labels.iter().map(|&l| l as u16).collect();
    let img =
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(seg.width() as u32, seg.height() as u32, buf)
            .expect("buffer sized from label map");
    let path = path.as_ref();
    img.save(path).map_err(|e| Error::Format { path: path.to_path_buf(), reason: e.to_string() })
}

/// Segment borders drawn in red over the source image.
pub fn boundary_overlay(seg: &SegmentedImage, src: &RgbImage) -> Result<RgbImage> {
    if src.width != seg.width() || src.height != seg.height() {
        return Err(Error::DimMismatch("overlay source dims differ from segmentation".into()));
    }
    let (w, h) = (src.width, src.height);
    let mut data = src.data.clone();
    for y in 0..h {
        for x in 0..w {
            let s = seg.labels[y * w + x];
            let edge = (x + 1 < w && seg.labels[y * w + x + 1] != s)
                || (y + 1 < h && seg.labels[(y + 1) * w + x] != s);
            if edge {
                let i = 3 * (y * w + x);
                data[i] = 255;
                data[i + 1] = 32;
                data[i + 2] = 32;
            }
        }
    }
    RgbImage::new(w, h, data)
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;
    use crate::imagio::rgb_pixel_to_lab;
    use rand::{Rng, SeedableRng};

    fn uniform_lab(w: usize, h: usize, value: [f32; 3]) -> LabImage {
        lab_from_fn(w, h, |_, _| value)
    }

    fn assert_partition_invariants(seg: &SegmentedImage) {
        assert!(seg.labels.iter().all(|&l| (l as usize) < seg.segment_count));
        assert!(seg.pixel_counts.iter().all(|&c| c > 0));
        assert_eq!(seg.pixel_counts.iter().sum::<usize>(), seg.width() * seg.height());
        for (i, nbrs) in seg.adjacency.iter().enumerate() {
            for &j in nbrs {
                assert_ne!(i, j, "self-adjacency at {i}");
                assert!(seg.adjacency[j].contains(&i), "adjacency not symmetric: {i} {j}");
            }
        }
        for p in &seg.mean_pos {
            assert!((0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]));
        }
        // boundary flags match border ownership
        let (w, h) = (seg.width(), seg.height());
        let mut owns_border = vec![false; seg.segment_count];
        for y in 0..h {
            for x in 0..w {
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    owns_border[seg.labels[y * w + x] as usize] = true;
                }
            }
        }
        assert_eq!(owns_border, seg.boundary_flags);
    }

    fn assert_connected(seg: &SegmentedImage) {
        let (w, h) = (seg.width(), seg.height());
        let mut seen = vec![false; w * h];
        let mut counted = vec![0usize; seg.segment_count];
        for start in 0..w * h {
            if seen[start] {
                continue;
            }
            let lbl = seg.labels[start];
            counted[lbl as usize] += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(p) = stack.pop() {
                let (x, y) = (p % w, p / w);
                for q in [
                    (x > 0).then(|| p - 1),
                    (x + 1 < w).then(|| p + 1),
                    (y > 0).then(|| p - w),
                    (y + 1 < h).then(|| p + w),
                ]
                .into_iter()
                .flatten()
                {
                    if !seen[q] && seg.labels[q] == lbl {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        assert!(counted.iter().all(|&c| c == 1), "segment split into {counted:?} components");
    }

    #[test]
    fn uniform_image_splits_into_near_equal_quadrants() {
        let lab = uniform_lab(64, 64, [0.5, 0.5, 0.5]);
        let seg = slic(&lab, 4, 0.05).unwrap();
        assert_eq!(seg.segment_count, 4);
        assert_partition_invariants(&seg);
        assert_connected(&seg);
        for &c in &seg.pixel_counts {
            assert!((900..=1150).contains(&c), "segment size {c} far from 1024");
        }
    }

    #[test]
    fn rejects_bad_target_counts() {
        let lab = uniform_lab(16, 16, [0.5, 0.5, 0.5]);
        assert!(matches!(slic(&lab, 1, 0.05), Err(Error::InvalidArg(_))));
        assert!(matches!(slic(&lab, 257, 0.05), Err(Error::InvalidArg(_))));
    }

    #[test]
    fn photo_like_image_lands_near_requested_count() {
        // structured synthetic content: smooth gradient, blobs, speckle
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (w, h) = (321usize, 321usize);
        let mut data = Vec::with_capacity(3 * w * h);
        for y in 0..h {
            for x in 0..w {
                let mut r = (x * 255 / w) as i32;
                let mut g = (y * 255 / h) as i32;
                let mut b = 128i32;
                let dx = x as i32 - 110;
                let dy = y as i32 - 140;
                if dx * dx + dy * dy < 60 * 60 {
                    r = 220;
                    g = 40;
                    b = 60;
                }
                if x > 200 && x < 290 && y > 200 && y < 280 {
                    r = 30;
                    g = 180;
                    b = 90;
                }
                let noise = rng.gen_range(-10..=10);
                data.push((r + noise).clamp(0, 255) as u8);
                data.push((g + noise).clamp(0, 255) as u8);
                data.push((b + noise).clamp(0, 255) as u8);
            }
        }
        let rgb = RgbImage::new(w, h, data).unwrap();
        let mut lab_data = Vec::with_capacity(3 * w * h);
        for px in rgb.data.chunks_exact(3) {
            lab_data.extend_from_slice(&rgb_pixel_to_lab(px[0], px[1], px[2]));
        }
        let lab = LabImage { width: w, height: h, data: lab_data };
        let seg = slic(&lab, 200, 0.05).unwrap();
        assert!(
            (150..=260).contains(&seg.segment_count),
            "got {} segments for target 200",
            seg.segment_count
        );
        assert_partition_invariants(&seg);
        assert_connected(&seg);
    }

    #[test]
    fn median_pooling_on_constants_and_even_sets() {
        let seg = grid_segmentation(8, 8, 2, 2);
        let map = ScalarMap::constant(8, 8, 0.3);
        let field = pool_median(&seg, &map).unwrap();
        assert!(field.values.iter().all(|&v| (v - 0.3).abs() < 1e-6));

        // segment 0 is the 4x4 top-left block; give it {0,0,0,1} on an
        // otherwise zero map, spread over 16 pixels -> median 0
        let mut vals = vec![0.0f32; 64];
        vals[0] = 1.0;
        let map = ScalarMap::new(8, 8, vals).unwrap();
        let field = pool_median(&seg, &map).unwrap();
        assert_eq!(field.values[0], 0.0);

        // exact four-pixel segment check
        let lab = uniform_lab(4, 1, [0.2, 0.2, 0.2]);
        let seg4 = SegmentedImage::from_labels(lab, vec![0, 0, 0, 0], 1).unwrap();
        let map4 = ScalarMap::new(4, 1, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let f4 = pool_median(&seg4, &map4).unwrap();
        assert_eq!(f4.values[0], 0.0);

        let bad = ScalarMap::constant(5, 5, 0.1);
        assert!(matches!(pool_median(&seg, &bad), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn median_is_permutation_invariant_within_segments() {
        let seg = grid_segmentation(10, 6, 3, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let base: Vec<f32> = (0..60).map(|_| rng.gen::<f32>()).collect();
        let field0 = pool_median(&seg, &ScalarMap::new(10, 6, base.clone()).unwrap()).unwrap();
        // shuffle values within each segment
        let mut by_seg: Vec<Vec<usize>> = vec![Vec::new(); seg.segment_count];
        for (i, &l) in seg.labels.iter().enumerate() {
            by_seg[l as usize].push(i);
        }
        let mut shuffled = base.clone();
        for idxs in &by_seg {
            let mut vals: Vec<f32> = idxs.iter().map(|&i| base[i]).collect();
            for i in (1..vals.len()).rev() {
                let j = rng.gen_range(0..=i);
                vals.swap(i, j);
            }
            for (&i, &v) in idxs.iter().zip(&vals) {
                shuffled[i] = v;
            }
        }
        let field1 = pool_median(&seg, &ScalarMap::new(10, 6, shuffled).unwrap()).unwrap();
        assert_eq!(field0.values, field1.values);
    }

    #[test]
    fn field_to_pixels_roundtrip() {
        let seg = grid_segmentation(12, 12, 3, 3);
        let field = SegmentField::new((0..9).map(|i| i as f64 / 10.0).collect(), seg.scale_tag);
        let map = segment_field_to_pixels(&seg, &field).unwrap();
        assert!(map.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let back = pool_median(&seg, &map).unwrap();
        for (a, b) in back.values.iter().zip(&field.values) {
            assert!((a - b).abs() < 1e-6);
        }

        let single = SegmentedImage::from_labels(
            uniform_lab(4, 2, [0.1, 0.5, 0.5]),
            vec![0; 8],
            1,
        )
        .unwrap();
        let m = segment_field_to_pixels(&single, &SegmentField::new(vec![0.42], 1)).unwrap();
        assert!(m.values.iter().all(|&v| (v - 0.42).abs() < 1e-6));

        let wrong = SegmentField::new(vec![0.1; 4], seg.scale_tag);
        assert!(matches!(segment_field_to_pixels(&seg, &wrong), Err(Error::DimMismatch(_))));
    }
}
