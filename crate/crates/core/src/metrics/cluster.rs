//! Agglomerative clustering on cosine distance with average linkage.

/// Merge threshold on average cosine distance.
pub const UNIQUENESS_TAU: f64 = 0.015;

/// `1 − cos(a, b)`, clamped to [0, 2]. A zero vector is at distance 1 from
/// everything, itself included.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// Clusters as sorted member-index lists, ordered by smallest member.
///
/// Clusters merge while the smallest average linkage is `<= tau`. Equal
/// linkages merge the pair whose (smallest member, smallest member) key is
/// lexicographically first.
#[allow(clippy::needless_range_loop)]
pub fn average_linkage_clusters(points: &[Vec<f64>], tau: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // linkage matrix between live clusters, indexed like `clusters`
    let mut link: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| cosine_distance(&points[i], &points[j]))
                .collect()
        })
        .collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let d = link[i][j];
                // clusters stay ordered by smallest member, so index order is key order
                if d <= tau && best.is_none_or(|(_, _, b)| d < b) {
                    best = Some((i, j, d));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let (si, sj) = (clusters[i].len() as f64, clusters[j].len() as f64);
        for k in 0..clusters.len() {
            if k != i && k != j {
                let d = (si * link[i][k] + sj * link[j][k]) / (si + sj);
                link[i][k] = d;
                link[k][i] = d;
            }
        }
        let moved = clusters.remove(j);
        clusters[i].extend(moved);
        clusters[i].sort_unstable();
        link.remove(j);
        link.iter_mut().for_each(|row| {
            row.remove(j);
        });
    }
    clusters
}
