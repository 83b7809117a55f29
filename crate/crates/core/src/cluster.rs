//! Time-window accumulation, DBSCAN and the roundness/size filter that turns
//! event clusters into [`Target`]s.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::Event;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Neighborhood radius in pixels.
    pub eps: f64,
    /// Neighbors (self included) needed for a core point.
    pub min_pts: usize,
    /// Minimum events per disc area, `N_e / (pi |b - d|^2)`.
    pub shape_ratio: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub window_us: u64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            eps: 3.0,
            min_pts: 4,
            shape_ratio: 0.9,
            n_min: 5,
            n_max: 50_000,
            window_us: 100_000,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParam(format!("eps {} must be > 0", self.eps)));
        }
        if self.min_pts < 1 {
            return Err(Error::InvalidParam("min_pts must be >= 1".into()));
        }
        if !(self.shape_ratio > 0.0 && self.shape_ratio < 1.0) {
            return Err(Error::InvalidParam(format!(
                "shape ratio {} must lie in (0, 1)",
                self.shape_ratio
            )));
        }
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(Error::InvalidParam(format!(
                "need 1 <= n_min ({}) <= n_max ({})",
                self.n_min, self.n_max
            )));
        }
        if self.window_us == 0 {
            return Err(Error::InvalidParam("window_us must be > 0".into()));
        }
        Ok(())
    }
}

/// An instantaneous beacon detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub x: f64,
    pub y: f64,
    /// Number of events in the cluster.
    pub size: usize,
    /// Mean event polarity in [-1, 1].
    pub polarity: f64,
    pub window_end_us: u64,
}

/// Events with `t0 <= t < t0 + dt` from a time-sorted slice.
pub fn accumulate_window(events: &[Event], t0: u64, dt: u64) -> &[Event] {
    let end = t0.saturating_add(dt);
    let a = events.partition_point(|e| e.t_us < t0);
    let b = events.partition_point(|e| e.t_us < end);
    &events[a..b.max(a)]
}

/// Walks a sorted stream window by window.
#[derive(Debug, Clone)]
pub struct WindowCursor<'a> {
    events: &'a [Event],
    pos: usize,
}

impl<'a> WindowCursor<'a> {
    pub fn new(events: &'a [Event]) -> Self {
        WindowCursor { events, pos: 0 }
    }

    /// Returns the events in `[start, end)`; never rewinds past events
    /// already handed out.
    pub fn take_until(&mut self, start: u64, end: u64) -> &'a [Event] {
        let rest = &self.events[self.pos..];
        let skip = rest.partition_point(|e| e.t_us < start);
        let len = rest[skip..].partition_point(|e| e.t_us < end);
        let out = &rest[skip..skip + len];
        self.pos += skip + len;
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Clustering {
    /// Event indices per cluster, ascending; clusters ordered by their
    /// earliest core event.
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

struct PixelGroup {
    members: Vec<usize>,
    neighbors: Vec<usize>,
}

/// DBSCAN over pixel coordinates.
///
/// Events sharing a pixel have identical neighborhoods, so the search runs on
/// distinct pixels weighted by their event count. Border events reachable
/// from several clusters join the cluster whose seed core event comes first
/// in input order, which is what the sequential algorithm produces.
pub fn dbscan(events: &[Event], eps: f64, min_pts: usize) -> Clustering {
    let mut index: HashMap<(u16, u16), usize> = HashMap::new();
    let mut groups: Vec<PixelGroup> = Vec::new();
    let mut coords: Vec<(i32, i32)> = Vec::new();
    for (i, e) in events.iter().enumerate() {
        let g = *index.entry((e.x, e.y)).or_insert_with(|| {
            groups.push(PixelGroup {
                members: Vec::new(),
                neighbors: Vec::new(),
            });
            coords.push((e.x as i32, e.y as i32));
            groups.len() - 1
        });
        groups[g].members.push(i);
    }

    let reach = eps.floor() as i32;
    let offsets: Vec<(i32, i32)> = (-reach..=reach)
        .flat_map(|dy| (-reach..=reach).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= eps * eps)
        .collect();
    for g in 0..groups.len() {
        let (x, y) = coords[g];
        let mut nb = Vec::new();
        for &(dx, dy) in &offsets {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx > u16::MAX as i32 || ny > u16::MAX as i32 {
                continue;
            }
            if let Some(&h) = index.get(&(nx as u16, ny as u16)) {
                nb.push(h);
            }
        }
        groups[g].neighbors = nb;
    }

    let core: Vec<bool> = groups
        .iter()
        .map(|g| {
            g.neighbors
                .iter()
                .map(|&h| groups[h].members.len())
                .sum::<usize>()
                >= min_pts
        })
        .collect();

    // Groups are numbered by first appearance, so scanning them in order
    // meets each component at its earliest core event.
    let mut label: Vec<Option<usize>> = vec![None; groups.len()];
    let mut n_clusters = 0;
    let mut stack = Vec::new();
    for g in 0..groups.len() {
        if !core[g] || label[g].is_some() {
            continue;
        }
        let c = n_clusters;
        n_clusters += 1;
        label[g] = Some(c);
        stack.push(g);
        while let Some(h) = stack.pop() {
            for &k in &groups[h].neighbors {
                if core[k] && label[k].is_none() {
                    label[k] = Some(c);
                    stack.push(k);
                }
            }
        }
    }
    for g in 0..groups.len() {
        if !core[g] {
            label[g] = groups[g]
                .neighbors
                .iter()
                .filter(|&&h| core[h])
                .filter_map(|&h| label[h])
                .min();
        }
    }

    let mut clusters = vec![Vec::new(); n_clusters];
    let mut noise = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        match label[g] {
            Some(c) => clusters[c].extend_from_slice(&group.members),
            None => noise.extend_from_slice(&group.members),
        }
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    noise.sort_unstable();
    Clustering { clusters, noise }
}

/// Barycenter of the given events.
pub fn barycenter(events: &[Event], members: &[usize]) -> (f64, f64) {
    let n = members.len().max(1) as f64;
    let (sx, sy) = members.iter().fold((0.0, 0.0), |(sx, sy), &i| {
        (sx + events[i].x as f64, sy + events[i].y as f64)
    });
    (sx / n, sy / n)
}

/// `N_e / (pi |b - d|^2)`, with `d` the event farthest from the barycenter.
/// A cluster collapsed on one pixel is perfectly compact: `+inf`.
pub fn shape_ratio(events: &[Event], members: &[usize]) -> f64 {
    let (bx, by) = barycenter(events, members);
    let r2 = members
        .iter()
        .map(|&i| {
            let (dx, dy) = (events[i].x as f64 - bx, events[i].y as f64 - by);
            dx * dx + dy * dy
        })
        .fold(0.0, f64::max);
    if r2 == 0.0 {
        f64::INFINITY
    } else {
        members.len() as f64 / (PI * r2)
    }
}

/// Keeps round clusters within the size bounds and reduces them to targets.
pub fn filter_clusters(
    clusters: &[Vec<usize>],
    events: &[Event],
    params: &ClusterParams,
    window_end_us: u64,
) -> Vec<Target> {
    clusters
        .iter()
        .filter(|c| c.len() >= params.n_min && c.len() <= params.n_max)
        .filter(|c| shape_ratio(events, c) > params.shape_ratio)
        .map(|c| {
            let (x, y) = barycenter(events, c);
            let polarity = c.iter().map(|&i| events[i].p as f64).sum::<f64>() / c.len() as f64;
            Target {
                x,
                y,
                size: c.len(),
                polarity,
                window_end_us,
            }
        })
        .collect()
}

/// Clusters one window and filters it.
pub fn detect_targets(events: &[Event], params: &ClusterParams, window_end_us: u64) -> Vec<Target> {
    let clustering = dbscan(events, params.eps, params.min_pts);
    filter_clusters(&clustering.clusters, events, params, window_end_us)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: u64, x: u16, y: u16) -> Event {
        Event::new(t, x, y, 1)
    }

    #[test]
    fn window_membership() {
        let es = [ev(10, 0, 0), ev(20, 0, 0), ev(30, 0, 0)];
        assert_eq!(accumulate_window(&es, 15, 10), &es[1..2]);
        assert!(accumulate_window(&[], 0, 10).is_empty());
        assert_eq!(accumulate_window(&es, 0, 1000), &es[..]);
    }

    #[test]
    fn cursor_advances() {
        let es = [ev(10, 0, 0), ev(20, 0, 0), ev(30, 0, 0), ev(45, 0, 0)];
        let mut c = WindowCursor::new(&es);
        assert_eq!(c.take_until(0, 25).len(), 2);
        assert_eq!(c.take_until(25, 40), &es[2..3]);
        assert_eq!(c.take_until(0, 100), &es[3..]);
    }

    #[test]
    fn dbscan_single_dense_pixel() {
        let es: Vec<_> = (0..10).map(|t| ev(t, 5, 5)).collect();
        let c = dbscan(&es, 1.0, 5);
        assert_eq!(c.clusters, vec![(0..10).collect::<Vec<_>>()]);
        assert!(c.noise.is_empty());
    }

    #[test]
    fn dbscan_sparse_is_noise() {
        let es = [ev(0, 0, 0), ev(1, 100, 0)];
        let c = dbscan(&es, 3.0, 3);
        assert!(c.clusters.is_empty());
        assert_eq!(c.noise, vec![0, 1]);
    }

    #[test]
    fn dbscan_border_goes_to_first_seed() {
        // Cores at (6,5) and (4,5) with 4-neighborhoods; (5,5) is a border
        // point of both. The right core comes first in input order.
        let es = [
            ev(0, 6, 5),
            ev(0, 7, 5),
            ev(0, 6, 4),
            ev(0, 6, 6),
            ev(0, 4, 5),
            ev(0, 3, 5),
            ev(0, 4, 4),
            ev(0, 4, 6),
            ev(0, 5, 5),
        ];
        let c = dbscan(&es, 1.0, 5);
        assert_eq!(c.clusters, vec![vec![0, 1, 2, 3, 8], vec![4, 5, 6, 7]]);
        assert!(c.noise.is_empty());
    }

    #[test]
    fn filter_examples() {
        // N_e = 20 on a ring of radius 2.5 around (10,10): ratio 20/(pi 6.25) > 0.8
        let p = ClusterParams {
            shape_ratio: 0.8,
            ..ClusterParams::default()
        };
        let mut es = Vec::new();
        for _ in 0..10 {
            es.push(Event::new(0, 10, 10, 1));
        }
        // farthest events at distance 2.5 from the barycenter: put pairs
        // symmetrically so the barycenter stays at the center
        for _ in 0..5 {
            es.push(Event::new(0, 8, 10, 1));
            es.push(Event::new(0, 12, 10, -1));
        }
        let members: Vec<usize> = (0..20).collect();
        let r = shape_ratio(&es, &members);
        assert!((r - 20.0 / (PI * 4.0)).abs() < 1e-12);
        let t = filter_clusters(std::slice::from_ref(&members), &es, &p, 99);
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].x, t[0].y, t[0].size), (10.0, 10.0, 20));
        assert!((t[0].polarity - 10.0 / 20.0).abs() < 1e-12);

        // too small
        let small: Vec<usize> = (0..4).collect();
        assert!(filter_clusters(&[small], &es, &p, 0).is_empty());

        // 30 events with the farthest 10 px away
        let mut sparse = vec![Event::new(0, 50, 50, 1); 29];
        sparse.push(Event::new(0, 50, 60, 1));
        let members: Vec<usize> = (0..30).collect();
        let (_, by) = barycenter(&sparse, &members);
        let d = 60.0 - by;
        assert!(30.0 / (PI * d * d) < 0.8);
        assert!(filter_clusters(&[members], &sparse, &p, 0).is_empty());
    }

    #[test]
    fn eq1_arithmetic() {
        assert!(20.0 / (PI * 2.5f64.powi(2)) > 0.8);
        assert!((20.0 / (PI * 6.25) - 1.0186).abs() < 1e-3);
        assert!((30.0 / (PI * 100.0) - 0.0955).abs() < 1e-3);
    }

    #[test]
    fn single_pixel_cluster_passes_shape() {
        let es = vec![Event::new(0, 3, 3, -1); 6];
        let m: Vec<usize> = (0..6).collect();
        assert_eq!(shape_ratio(&es, &m), f64::INFINITY);
        let t = filter_clusters(&[m], &es, &ClusterParams::default(), 0);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].polarity, -1.0);
    }

    #[test]
    fn params_validation() {
        assert!(ClusterParams::default().validate().is_ok());
        let bad = ClusterParams {
            shape_ratio: 1.5,
            ..ClusterParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = ClusterParams {
            n_min: 10,
            n_max: 5,
            ..ClusterParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
