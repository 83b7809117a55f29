#![allow(dead_code)]

pub mod oracle;

use blinkid::events::{BeaconSpec, Distractor, Event, NoiseSpec, Scene, SensorConfig, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// One static beacon on the default sensor, no noise.
pub fn static_beacon(payload: u32, f_beacon: f64, duration_s: f64) -> Scene {
    Scene {
        sensor: SensorConfig::default(),
        duration_s,
        beacons: vec![BeaconSpec::fixed(payload, f_beacon, 3.0, 320.0, 240.0)],
        noise: NoiseSpec::default(),
    }
}

/// A 1 kHz beacon on a circular path at 80 to 130 px/s, hidden for 150 ms
/// once, over light background noise. Geometry is drawn from `seed`.
pub fn turning_beacon(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7475_726e);
    let radius: f64 = rng.gen_range(60.0..100.0);
    let speed: f64 = rng.gen_range(80.0..130.0);
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let hide: f64 = rng.gen_range(1.0..2.5);
    Scene {
        sensor: SensorConfig::default(),
        duration_s: 4.0,
        beacons: vec![BeaconSpec {
            payload: 42,
            f_beacon: 1000.0,
            radius: 3.0,
            trajectory: Trajectory::Arc {
                cx: 320.0,
                cy: 240.0,
                radius,
                omega: sign * speed / radius,
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
            },
            occlusions: vec![[hide, hide + 0.15]],
            phase_s: 0.0,
        }],
        noise: NoiseSpec {
            background_rate: 0.01,
            distractors: Vec::new(),
        },
    }
}

fn blinker(x: f64, y: f64, radius: f64, switch_rate_hz: f64) -> Distractor {
    Distractor {
        trajectory: Trajectory::Static { x, y },
        radius,
        switch_rate_hz,
    }
}

/// Randomly switching discs of several sizes and rates plus background
/// noise, without any beacon.
pub fn noise_only(duration_s: f64) -> Scene {
    Scene {
        sensor: SensorConfig::default(),
        duration_s,
        beacons: Vec::new(),
        noise: NoiseSpec {
            background_rate: 0.02,
            distractors: vec![
                blinker(100.0, 100.0, 2.0, 500.0),
                blinker(300.0, 200.0, 3.0, 1000.0),
                blinker(500.0, 350.0, 5.0, 2000.0),
                blinker(200.0, 400.0, 4.0, 200.0),
                blinker(550.0, 80.0, 6.0, 50.0),
                Distractor {
                    trajectory: Trajectory::Arc {
                        cx: 320.0,
                        cy: 240.0,
                        radius: 80.0,
                        omega: 1.0,
                        phase: 0.0,
                    },
                    radius: 3.0,
                    switch_rate_hz: 800.0,
                },
            ],
        },
    }
}

/// A static 1 kHz beacon hidden for `hidden_s` starting at 1 s.
pub fn occluded_beacon(hidden_s: f64) -> Scene {
    let mut scene = static_beacon(42, 1000.0, 3.0);
    scene.beacons[0].occlusions = vec![[1.0, 1.0 + hidden_s]];
    scene
}

/// Blobs of varied density on a small grid, plus scattered points.
pub fn random_events(rng: &mut ChaCha8Rng) -> Vec<Event> {
    let n = rng.gen_range(0..=500);
    let blobs: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..6))
        .map(|_| {
            (
                rng.gen_range(0.0..60.0),
                rng.gen_range(0.0..60.0),
                rng.gen_range(0.5..4.0),
            )
        })
        .collect();
    (0..n)
        .map(|i| {
            let (x, y) = if rng.gen_bool(0.2) {
                (rng.gen_range(0.0..64.0), rng.gen_range(0.0..64.0))
            } else {
                let (bx, by, s) = blobs[rng.gen_range(0..blobs.len())];
                (bx + rng.gen_range(-s..=s), by + rng.gen_range(-s..=s))
            };
            let p = if rng.gen_bool(0.5) { 1 } else { -1 };
            Event::new(
                i as u64,
                x.clamp(0.0, 63.0) as u16,
                y.clamp(0.0, 63.0) as u16,
                p,
            )
        })
        .collect()
}
