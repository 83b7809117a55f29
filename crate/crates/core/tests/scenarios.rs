mod common;

use blinkid::pipeline::{self, PipelineConfig, RunMode};
use blinkid::tracker::TrackStatus;
use common::*;

#[test]
fn clean_static_beacon_is_identified() {
    let (stream, truth) = static_beacon(42, 1000.0, 2.0).simulate(1).unwrap();
    let report = pipeline::run(&stream, Some(&truth), &PipelineConfig::default()).unwrap();
    assert_eq!(report.mar, Some(100.0));
    assert_eq!(report.valid_tracks, 1);
    assert_eq!(report.identifications.len(), 1);
    assert_eq!(report.identifications[0].1, 42);
}

#[test]
fn track_survives_short_occlusion() {
    let (stream, truth) = occluded_beacon(0.2).simulate(5).unwrap();
    let report = pipeline::run(&stream, Some(&truth), &PipelineConfig::default()).unwrap();
    let valid: Vec<_> = report.tracks.iter().filter(|t| t.ever_valid).collect();
    assert_eq!(valid.len(), 1, "{:?}", report.identifications);
    let t = valid[0];
    assert!(t.created_us < 1_000_000);
    assert_eq!(t.ended_us, None);
    assert_eq!(t.final_status, TrackStatus::Valid);
    assert_eq!(report.identifications, vec![(t.id, 42)]);
}

#[test]
fn long_occlusion_ends_the_track() {
    let (stream, truth) = occluded_beacon(0.8).simulate(5).unwrap();
    let report = pipeline::run(&stream, Some(&truth), &PipelineConfig::default()).unwrap();
    let first = report.tracks.iter().find(|t| t.ever_valid).unwrap();
    assert!(first.ended_us.is_some());
    assert!(report.tracks.iter().filter(|t| t.ever_valid).count() >= 2);
}

#[test]
fn runs_are_deterministic() {
    let (stream, truth) = turning_beacon(3).simulate(3).unwrap();
    let cfg = PipelineConfig::default();
    let a = pipeline::run(&stream, Some(&truth), &cfg)
        .unwrap()
        .to_json()
        .unwrap();
    let b = pipeline::run(&stream, Some(&truth), &cfg)
        .unwrap()
        .to_json()
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn concurrent_matches_deterministic() {
    let (stream, truth) = turning_beacon(4).simulate(4).unwrap();
    let mut cfg = PipelineConfig::default();
    let a = pipeline::run(&stream, Some(&truth), &cfg).unwrap();
    cfg.mode = RunMode::Concurrent;
    let b = pipeline::run(&stream, Some(&truth), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn simulation_is_seeded() {
    let scene = turning_beacon(9);
    let (a, _) = scene.simulate(11).unwrap();
    let (b, _) = scene.simulate(11).unwrap();
    let (c, _) = scene.simulate(12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn empty_stream_gives_empty_report() {
    let stream = blinkid::events::EventStream::new(64, 64, Vec::new());
    let report = pipeline::run(&stream, None, &PipelineConfig::default()).unwrap();
    assert!(report.tracks.is_empty());
    assert_eq!(report.mar, None);
}
