mod common;

use blinkid::cluster::{filter_clusters, shape_ratio, ClusterParams};
use blinkid::events::Event;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::oracle::shape_ratio as ratio_oracle;

fn events_of(pts: &[(u16, u16)]) -> Vec<Event> {
    pts.iter()
        .enumerate()
        .map(|(i, &(x, y))| Event::new(i as u64, x, y, 1))
        .collect()
}

#[test]
fn ratio_matches_oracle_on_1000_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5a9e);
    for k in 0..1000 {
        let n = rng.gen_range(2..300);
        let w = rng.gen_range(1..40u16);
        let h = rng.gen_range(1..40u16);
        let pts: Vec<(u16, u16)> = (0..n)
            .map(|_| (rng.gen_range(0..w), rng.gen_range(0..h)))
            .collect();
        let events = events_of(&pts);
        let members: Vec<usize> = (0..n).collect();
        let got = shape_ratio(&events, &members);
        let want = ratio_oracle(&pts);
        if want.is_infinite() {
            assert!(got.is_infinite(), "cluster {k}");
        } else {
            assert!(
                (got - want).abs() <= 1e-9 * want.max(1.0),
                "cluster {k}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn filled_disc_passes_line_fails() {
    let mut disc = Vec::new();
    for y in 0..9u16 {
        for x in 0..9u16 {
            let (dx, dy) = (x as i32 - 4, y as i32 - 4);
            if dx * dx + dy * dy <= 16 {
                disc.push((x + 100, y + 100));
            }
        }
    }
    let line: Vec<(u16, u16)> = (0..40).map(|x| (x, 5)).collect();
    let params = ClusterParams::default();
    for (pts, keep) in [(disc, true), (line, false)] {
        let events = events_of(&pts);
        let members: Vec<usize> = (0..pts.len()).collect();
        assert_eq!(
            filter_clusters(&[members], &events, &params, 0).len(),
            keep as usize
        );
    }
}

#[test]
fn size_bounds_are_inclusive() {
    let params = ClusterParams {
        n_min: 5,
        n_max: 7,
        ..ClusterParams::default()
    };
    let events = events_of(&[(3, 3); 9]);
    let kept: Vec<usize> = (3..=9)
        .filter(|&n| !filter_clusters(&[(0..n).collect()], &events, &params, 0).is_empty())
        .collect();
    assert_eq!(kept, vec![5, 6, 7]);
}

#[test]
fn target_is_barycenter_with_mean_polarity() {
    let events = vec![
        Event::new(0, 10, 10, 1),
        Event::new(1, 12, 10, 1),
        Event::new(2, 11, 11, -1),
        Event::new(3, 11, 9, 1),
        Event::new(4, 11, 10, 1),
    ];
    let params = ClusterParams {
        n_min: 1,
        ..ClusterParams::default()
    };
    let t = filter_clusters(&[(0..5).collect()], &events, &params, 77);
    assert_eq!(t.len(), 1);
    assert_eq!(
        (t[0].x, t[0].y, t[0].size, t[0].window_end_us),
        (11.0, 10.0, 5, 77)
    );
    assert!((t[0].polarity - 0.6).abs() < 1e-12);
}

proptest! {
    #[test]
    fn ratio_oracle_agrees(pts in prop::collection::vec((0u16..64, 0u16..64), 2..200)) {
        let events = events_of(&pts);
        let members: Vec<usize> = (0..pts.len()).collect();
        let got = shape_ratio(&events, &members);
        let want = ratio_oracle(&pts);
        prop_assert!(got == want || (got - want).abs() <= 1e-9 * want.max(1.0));
    }

    /// Raising the threshold never admits a cluster that a lower one rejected.
    #[test]
    fn filter_is_monotone_in_threshold(
        clusters in prop::collection::vec(prop::collection::vec((0u16..30, 0u16..30), 1..60), 1..12),
        lo in 0.01f64..0.98,
        step in 0.0f64..0.5,
    ) {
        let hi = (lo + step).min(0.99);
        let mut events = Vec::new();
        let mut members = Vec::new();
        for c in &clusters {
            let start = events.len();
            events.extend(events_of(c));
            members.push((start..events.len()).collect::<Vec<_>>());
        }
        let base = ClusterParams { n_min: 1, ..ClusterParams::default() };
        let loose = filter_clusters(&members, &events, &ClusterParams { shape_ratio: lo, ..base.clone() }, 0);
        let tight = filter_clusters(&members, &events, &ClusterParams { shape_ratio: hi, ..base }, 0);
        prop_assert!(tight.len() <= loose.len());
        for t in &tight {
            prop_assert!(loose.iter().any(|l| l.x == t.x && l.y == t.y && l.size == t.size));
        }
    }
}
