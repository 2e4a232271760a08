//! Affinity-graph construction (intra-image and integrated multilayer) and
//! the closed-form manifold-ranking solver.

mod solver;

pub use solver::{propagate, seed_ratio, RankingSolver};

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::superpixel::SegmentedImage;

/// Block structure of an integrated graph: the node range of every image,
/// followed by `cluster_count` cluster nodes.
#[derive(Debug, Clone)]
pub struct GraphPartition {
    pub image_ranges: Vec<std::ops::Range<usize>>,
    pub cluster_count: usize,
}

/// Sparse symmetric nonnegative weight matrix with per-node degrees.
///
/// Weights lie in `[0,1]` with a zero diagonal. Isolated nodes receive an
/// epsilon degree so the ranking system stays positive definite.
#[derive(Debug, Clone)]
pub struct AffinityGraph {
    size: usize,
    rows: Vec<Vec<(usize, f64)>>,
    degrees: Vec<f64>,
    pub partition: Option<GraphPartition>,
}

const ISOLATED_DEGREE: f64 = 1e-12;

impl AffinityGraph {
    /// Builds a graph from undirected edges `(i, j, w)`. Each pair may appear
    /// once; both orientations are stored.
    pub fn from_edges(size: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); size];
        for (i, j, w) in edges {
            if i >= size || j >= size {
                return Err(Error::InvalidArg(format!("edge ({i},{j}) out of bounds for {size} nodes")));
            }
            if i == j {
                return Err(Error::InvalidArg(format!("self-loop at node {i}")));
            }
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidArg(format!("weight {w} for edge ({i},{j}) outside [0,1]")));
            }
            if w == 0.0 {
                continue;
            }
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        let mut degrees = vec![0.0f64; size];
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(j, _)| j);
            for win in row.windows(2) {
                if win[0].0 == win[1].0 {
                    return Err(Error::InvalidArg(format!("duplicate edge ({i},{})", win[0].0)));
                }
            }
            degrees[i] = row.iter().map(|&(_, w)| w).sum();
            if degrees[i] == 0.0 {
                degrees[i] = ISOLATED_DEGREE;
            }
        }
        Ok(Self { size, rows, degrees, partition: None })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(n, _)| n)
            .map(|p| self.rows[i][p].1)
            .unwrap_or(0.0)
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum::<usize>() / 2
    }

    /// Coordinate-list text dump: one `i j w` line per stored direction,
    /// 0-based, sorted by (i, j).
    pub fn to_coo_text(&self) -> String {
        let mut out = String::new();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out.push_str(&format!("{} {} {:.17e}\n", i, j, w));
            }
        }
        out
    }
}

/// Symmetric 3x3 solve via the adjugate; the matrix must be nonsingular.
fn solve3(m: &[[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let inv = [
        [
            (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det,
        ],
        [
            (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det,
        ],
        [
            (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det,
        ],
    ];
    let mut x = [0.0; 3];
    for r in 0..3 {
        x[r] = inv[r][0] * b[0] + inv[r][1] * b[1] + inv[r][2] * b[2];
    }
    x
}

/// Intra-image affinity graph: edges exactly on segment adjacency, weighted
/// by `exp(-dx' S^-1 dx)` where `S` is the second moment of mean-Lab
/// differences over all adjacent pairs, regularized against rank
/// deficiency.
pub fn intra_graph(seg: &SegmentedImage) -> Result<AffinityGraph> {
    let n = seg.segment_count;
    if n < 2 {
        return Err(Error::InvalidArg(format!("intra graph needs at least 2 segments, got {n}")));
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for &j in &seg.adjacency[i] {
            if j > i {
                pairs.push((i, j));
            }
        }
    }
    let mut sigma = [[0.0f64; 3]; 3];
    for &(i, j) in &pairs {
        let d = [
            seg.mean_lab[i][0] - seg.mean_lab[j][0],
            seg.mean_lab[i][1] - seg.mean_lab[j][1],
            seg.mean_lab[i][2] - seg.mean_lab[j][2],
        ];
        for r in 0..3 {
            for c in 0..3 {
                sigma[r][c] += d[r] * d[c];
            }
        }
    }
    if !pairs.is_empty() {
        let inv_count = 1.0 / pairs.len() as f64;
        for row in &mut sigma {
            for v in row {
                *v *= inv_count;
            }
        }
    }
    regularize_covariance(&mut sigma);
    let edges = pairs.into_iter().map(|(i, j)| {
        let d = [
            seg.mean_lab[i][0] - seg.mean_lab[j][0],
            seg.mean_lab[i][1] - seg.mean_lab[j][1],
            seg.mean_lab[i][2] - seg.mean_lab[j][2],
        ];
        let x = solve3(&sigma, d);
        let q = d[0] * x[0] + d[1] * x[1] + d[2] * x[2];
        (i, j, (-q.max(0.0)).exp())
    });
    AffinityGraph::from_edges(n, edges)
}

/// Trace-scaled ridge plus an absolute floor, keeping the edge covariance
/// invertible for rank-deficient edge sets.
pub fn regularize_covariance(sigma: &mut [[f64; 3]; 3]) {
    let trace = sigma[0][0] + sigma[1][1] + sigma[2][2];
    let ridge = 1e-6 * trace / 3.0 + 1e-12;
    for d in 0..3 {
        sigma[d][d] += ridge;
    }
}

/// K-means clustering of intra-image node colors; cluster centroids become
/// the inter-image nodes of the integrated graph.
#[derive(Debug, Clone)]
pub struct ClusterLayer {
    pub centroids: Vec<[f64; 3]>,
    pub assignment: Vec<usize>,
    pub k: usize,
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// K-means with k-means++ seeding, a fixed RNG seed, and at most 100 Lloyd
/// iterations (stops early once centroids move less than 1e-6).
/// Nearest-centroid ties break toward the lowest index.
pub fn build_cluster_layer(points: &[[f64; 3]], k: usize, seed: u64) -> Result<ClusterLayer> {
    if k < 2 {
        return Err(Error::InvalidArg(format!("cluster count {k} must be at least 2")));
    }
    if points.len() < k {
        return Err(Error::InvalidArg(format!(
            "cannot form {k} clusters from {} nodes",
            points.len()
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<[f64; 3]> = Vec::with_capacity(k);
    let mut chosen = vec![false; points.len()];
    let first = rng.gen_range(0..points.len());
    centroids.push(points[first]);
    chosen[first] = true;
    let mut dist2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist2.iter().enumerate() {
                target -= d;
                if target <= 0.0 && d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| {
                dist2
                    .iter()
                    .enumerate()
                    .rev()
                    .find(|(_, &d)| d > 0.0)
                    .map(|(i, _)| i)
                    .unwrap()
            })
        } else {
            // all remaining points coincide with chosen centroids
            match chosen.iter().position(|&c| !c) {
                Some(i) => i,
                None => break,
            }
        };
        chosen[next] = true;
        centroids.push(points[next]);
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, centroids.last().unwrap());
            if d < dist2[i] {
                dist2[i] = d;
            }
        }
    }
    while centroids.len() < k {
        // duplicate-heavy input: pad with copies of existing centroids
        let c = centroids[centroids.len() % centroids.len().max(1)];
        centroids.push(c);
    }

    let mut assignment = vec![0usize; points.len()];
    for _ in 0..100 {
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0usize);
            for (c, cen) in centroids.iter().enumerate() {
                let d = sq_dist(p, cen);
                if d < best.0 {
                    best = (d, c);
                }
            }
            assignment[i] = best.1;
        }
        // refill empty clusters with the point farthest from its centroid
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            counts[a] += 1;
        }
        for c in 0..k {
            while counts[c] == 0 {
                let (mut far_i, mut far_d) = (usize::MAX, -1.0);
                for (i, p) in points.iter().enumerate() {
                    if counts[assignment[i]] <= 1 {
                        continue;
                    }
                    let d = sq_dist(p, &centroids[assignment[i]]);
                    if d > far_d {
                        far_d = d;
                        far_i = i;
                    }
                }
                if far_i == usize::MAX {
                    break;
                }
                counts[assignment[far_i]] -= 1;
                assignment[far_i] = c;
                counts[c] += 1;
                centroids[c] = points[far_i];
            }
        }
        let mut sums = vec![[0.0f64; 3]; k];
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i];
            for d in 0..3 {
                sums[a][d] += p[d];
            }
        }
        let mut max_move = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let m = [
                sums[c][0] / counts[c] as f64,
                sums[c][1] / counts[c] as f64,
                sums[c][2] / counts[c] as f64,
            ];
            max_move = max_move.max(sq_dist(&m, &centroids[c]).sqrt());
            centroids[c] = m;
        }
        if max_move < 1e-6 {
            break;
        }
    }
    // final assignment against converged centroids
    for (i, p) in points.iter().enumerate() {
        let mut best = (f64::INFINITY, 0usize);
        for (c, cen) in centroids.iter().enumerate() {
            let d = sq_dist(p, cen);
            if d < best.0 {
                best = (d, c);
            }
        }
        assignment[i] = best.1;
    }
    Ok(ClusterLayer { centroids, assignment, k })
}

/// Assembles the integrated graph: block-diagonal intra-image graphs, edges
/// from every intra node to its own cluster centroid, and symmetric k-NN
/// edges among centroids. Distances are plain L2 norms scaled by `sigma`.
pub fn integrated_graph(
    intra: &[AffinityGraph],
    node_lab: &[[f64; 3]],
    layer: &ClusterLayer,
    sigma: f64,
    knn: usize,
) -> Result<AffinityGraph> {
    if sigma <= 0.0 {
        return Err(Error::InvalidArg("sigma must be positive".into()));
    }
    let n: usize = intra.iter().map(|g| g.size()).sum();
    if node_lab.len() != n || layer.assignment.len() != n {
        return Err(Error::DimMismatch(format!(
            "{} intra nodes vs {} colors vs {} assignments",
            n,
            node_lab.len(),
            layer.assignment.len()
        )));
    }
    let k = layer.k;
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let mut ranges = Vec::with_capacity(intra.len());
    let mut offset = 0usize;
    for g in intra {
        for i in 0..g.size() {
            for &(j, w) in g.neighbors(i) {
                if j > i {
                    edges.push((offset + i, offset + j, w));
                }
            }
        }
        ranges.push(offset..offset + g.size());
        offset += g.size();
    }
    // intra node <-> owning centroid
    for (i, lab) in node_lab.iter().enumerate() {
        let c = layer.assignment[i];
        let w = (-(sq_dist(lab, &layer.centroids[c]).sqrt()) / sigma).exp();
        if w > 0.0 {
            edges.push((i, n + c, w.min(1.0)));
        }
    }
    // symmetric k-NN among centroids
    let keff = knn.min(k.saturating_sub(1)).max(1);
    let mut pairs = std::collections::BTreeSet::new();
    for i in 0..k {
        let mut order: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            sq_dist(&layer.centroids[i], &layer.centroids[a])
                .partial_cmp(&sq_dist(&layer.centroids[i], &layer.centroids[b]))
                .unwrap()
                .then(a.cmp(&b))
        });
        for &j in order.iter().take(keff) {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    for (i, j) in pairs {
        let w = (-(sq_dist(&layer.centroids[i], &layer.centroids[j]).sqrt()) / sigma).exp();
        if w > 0.0 {
            edges.push((n + i, n + j, w.min(1.0)));
        }
    }
    let mut g = AffinityGraph::from_edges(n + k, edges)?;
    g.partition = Some(GraphPartition { image_ranges: ranges, cluster_count: k });
    Ok(g)
}

/// Binary per-node seed vector.
#[derive(Debug, Clone)]
pub struct SeedVector {
    pub mask: Vec<bool>,
}

impl SeedVector {
    pub fn none(size: usize) -> Self {
        Self { mask: vec![false; size] }
    }

    pub fn from_indices(size: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = vec![false; size];
        for i in indices {
            mask[i] = true;
        }
        Self { mask }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Appends `extra` zero entries (cluster-layer padding).
    pub fn padded(&self, extra: usize) -> Self {
        let mut mask = self.mask.clone();
        mask.extend(std::iter::repeat(false).take(extra));
        Self { mask }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Rescales values to `[0,1]` by min-max; a constant field maps to zeros.
pub fn min_max_normalize(values: &mut [f64]) {
    let mut mn = f64::INFINITY;
    let mut mx = f64::NEG_INFINITY;
    for &v in values.iter() {
        mn = mn.min(v);
        mx = mx.max(v);
    }
    if values.is_empty() || mx <= mn {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let span = mx - mn;
    for v in values.iter_mut() {
        *v = ((*v - mn) / span).clamp(0.0, 1.0);
    }
}

/// Maps `[-1,1]` ratio values onto `[0,1]` by `(x+1)/2`.
pub fn half_shift_normalize(values: &mut [f64]) {
    for v in values.iter_mut() {
        *v = ((*v + 1.0) / 2.0).clamp(0.0, 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::superpixel::test_util::{grid_segmentation, lab_from_fn};
    use crate::superpixel::SegmentedImage;

    #[test]
    fn uniform_color_edges_have_unit_weight() {
        let lab = lab_from_fn(8, 8, |_, _| [0.4, 0.5, 0.5]);
        let labels: Vec<u32> = (0..64).map(|p| if p % 8 < 4 { 0 } else { 1 }).collect();
        let seg = SegmentedImage::from_labels(lab, labels, 2).unwrap();
        let g = intra_graph(&seg).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
    }

    #[test]
    fn rank_deficient_covariance_matches_dense_oracle() {
        // two segments, one edge: the edge covariance is rank one
        let lab = lab_from_fn(8, 2, |x, _| if x < 4 { [0.2, 0.4, 0.6] } else { [0.7, 0.5, 0.3] });
        let labels: Vec<u32> = (0..16).map(|p| if p % 8 < 4 { 0 } else { 1 }).collect();
        let seg = SegmentedImage::from_labels(lab, labels, 2).unwrap();
        let g = intra_graph(&seg).unwrap();
        let w = g.weight(0, 1);
        assert!(w > 0.0 && w <= 1.0);

        // dense oracle with nalgebra on the same regularized matrix
        let d = [
            seg.mean_lab[0][0] - seg.mean_lab[1][0],
            seg.mean_lab[0][1] - seg.mean_lab[1][1],
            seg.mean_lab[0][2] - seg.mean_lab[1][2],
        ];
        let mut sigma = [[0.0f64; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                sigma[r][c] = d[r] * d[c];
            }
        }
        regularize_covariance(&mut sigma);
        let m = nalgebra::Matrix3::from_fn(|r, c| sigma[r][c]);
        let dv = nalgebra::Vector3::new(d[0], d[1], d[2]);
        let q = (dv.transpose() * m.try_inverse().unwrap() * dv)[0];
        assert!((w - (-q).exp()).abs() < 1e-12);
    }

    #[test]
    fn non_adjacent_pairs_have_zero_weight() {
        let seg = grid_segmentation(9, 3, 3, 1);
        let g = intra_graph(&seg).unwrap();
        assert_eq!(g.weight(0, 2), 0.0);
        assert!(g.weight(0, 1) > 0.0);
    }

    #[test]
    fn cluster_layer_recovers_separated_blobs() {
        let mut points = Vec::new();
        for i in 0..40 {
            let t = (i % 8) as f64 * 1e-4;
            points.push([0.1 + t, 0.2, 0.3]);
        }
        for i in 0..40 {
            let t = (i % 8) as f64 * 1e-4;
            points.push([0.8, 0.9 - t, 0.6]);
        }
        let layer = build_cluster_layer(&points, 2, 5).unwrap();
        let mean_a: [f64; 3] = {
            let mut m = [0.0; 3];
            for p in &points[..40] {
                for d in 0..3 {
                    m[d] += p[d] / 40.0;
                }
            }
            m
        };
        let dist_to_a: Vec<f64> = layer.centroids.iter().map(|c| sq_dist(c, &mean_a).sqrt()).collect();
        let close = dist_to_a.iter().filter(|&&d| d < 1e-3).count();
        assert_eq!(close, 1, "exactly one centroid should sit on blob A: {dist_to_a:?}");
        // members agree within blobs
        assert!(layer.assignment[..40].windows(2).all(|w| w[0] == w[1]));
        assert!(layer.assignment[40..].windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn cluster_layer_degenerate_cases() {
        let points: Vec<[f64; 3]> = (0..5).map(|i| [i as f64, 0.0, 0.0]).collect();
        let layer = build_cluster_layer(&points, 5, 1).unwrap();
        let mut seen = layer.assignment.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 5, "every node must own a cluster");
        for (i, &a) in layer.assignment.iter().enumerate() {
            assert!(sq_dist(&points[i], &layer.centroids[a]) < 1e-12);
        }
        assert!(matches!(build_cluster_layer(&points, 6, 1), Err(Error::InvalidArg(_))));
    }

    #[test]
    fn cluster_layer_is_deterministic() {
        let points: Vec<[f64; 3]> = (0..60)
            .map(|i| [((i * 37) % 100) as f64 / 100.0, ((i * 53) % 100) as f64 / 100.0, 0.5])
            .collect();
        let a = build_cluster_layer(&points, 7, 42).unwrap();
        let b = build_cluster_layer(&points, 7, 42).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.centroids, b.centroids);
    }

    #[test]
    fn integrated_graph_unit_weights_at_zero_distance() {
        let seg = grid_segmentation(8, 4, 2, 1);
        let g1 = intra_graph(&seg).unwrap();
        let node_lab = vec![[0.1, 0.2, 0.3], [0.9, 0.8, 0.7]];
        let layer = ClusterLayer {
            centroids: vec![[0.1, 0.2, 0.3], [0.1, 0.2, 0.3]],
            assignment: vec![0, 1],
            k: 2,
        };
        let g = integrated_graph(std::slice::from_ref(&g1), &node_lab, &layer, 0.25, 5).unwrap();
        // node 0 sits exactly at centroid 0
        assert_eq!(g.weight(0, 2), 1.0);
        // identical centroids are mutually nearest
        assert_eq!(g.weight(2, 3), 1.0);
        assert_eq!(g.size(), 4);
    }

    #[test]
    fn integrated_graph_matches_hand_assembly() {
        // one image, 4 segments in a row, K=2
        let seg = grid_segmentation(8, 2, 4, 1);
        let g1 = intra_graph(&seg).unwrap();
        let node_lab: Vec<[f64; 3]> = seg.mean_lab.clone();
        let layer = build_cluster_layer(&node_lab, 2, 9).unwrap();
        let sigma = 0.25;
        let g = integrated_graph(std::slice::from_ref(&g1), &node_lab, &layer, sigma, 5).unwrap();

        let n = 4;
        let total = n + 2;
        let mut dense = vec![vec![0.0f64; total]; total];
        for i in 0..n {
            for j in 0..n {
                dense[i][j] = g1.weight(i, j);
            }
        }
        for i in 0..n {
            let c = layer.assignment[i];
            let d = sq_dist(&node_lab[i], &layer.centroids[c]).sqrt();
            dense[i][n + c] = (-d / sigma).exp();
            dense[n + c][i] = dense[i][n + c];
        }
        // K=2: each centroid's 1-NN set is the other one
        let d = sq_dist(&layer.centroids[0], &layer.centroids[1]).sqrt();
        dense[n][n + 1] = (-d / sigma).exp();
        dense[n + 1][n] = dense[n][n + 1];

        for i in 0..total {
            for j in 0..total {
                assert!(
                    (g.weight(i, j) - dense[i][j]).abs() < 1e-12,
                    "mismatch at ({i},{j}): {} vs {}",
                    g.weight(i, j),
                    dense[i][j]
                );
            }
        }
        // block symmetry
        for i in 0..total {
            for j in 0..total {
                assert_eq!(g.weight(i, j), g.weight(j, i));
            }
        }
    }

    #[test]
    fn normalization_rules() {
        let mut v = vec![0.25, 0.25, 0.25];
        min_max_normalize(&mut v);
        assert_eq!(v, vec![0.0, 0.0, 0.0]);

        let mut v = vec![1.0, 0.0];
        min_max_normalize(&mut v);
        assert_eq!(v, vec![1.0, 0.0]);

        let mut v = vec![-1.0, 0.0, 1.0];
        half_shift_normalize(&mut v);
        assert_eq!(v, vec![0.0, 0.5, 1.0]);
    }
}
