//! Independent reference implementations used as test oracles.

use blinkid::cluster::Clustering;
use blinkid::events::Event;

/// Textbook sequential DBSCAN with an O(N^2) neighbor scan. Clusters are
/// numbered in the order their seed core point is met; a border point stays
/// with the first cluster that reaches it.
pub fn reference_dbscan(events: &[Event], eps: f64, min_pts: usize) -> Clustering {
    let n = events.len();
    let close = |i: usize, j: usize| {
        let dx = events[i].x as f64 - events[j].x as f64;
        let dy = events[i].y as f64 - events[j].y as f64;
        dx * dx + dy * dy <= eps * eps
    };
    let neighbors = |i: usize| (0..n).filter(|&j| close(i, j)).collect::<Vec<_>>();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut n_clusters = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = neighbors(i);
        if nb.len() < min_pts {
            continue;
        }
        let c = n_clusters;
        n_clusters += 1;
        label[i] = Some(c);
        let mut queue = nb;
        let mut k = 0;
        while k < queue.len() {
            let j = queue[k];
            k += 1;
            if label[j].is_none() {
                label[j] = Some(c);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nb_j = neighbors(j);
            if nb_j.len() >= min_pts {
                queue.extend(nb_j);
            }
        }
    }
    let mut clusters = vec![Vec::new(); n_clusters];
    let mut noise = Vec::new();
    for (i, l) in label.iter().enumerate() {
        match l {
            Some(c) => clusters[*c].push(i),
            None => noise.push(i),
        }
    }
    Clustering { clusters, noise }
}

/// Direct recomputation: count over pi times the largest squared distance to
/// the mean position.
pub fn shape_ratio(pts: &[(u16, u16)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let r = pts
        .iter()
        .map(|p| ((p.0 as f64 - mx).powi(2) + (p.1 as f64 - my).powi(2)).sqrt())
        .fold(0.0, f64::max);
    n / (std::f64::consts::PI * r * r)
}
