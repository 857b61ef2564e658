use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use iqlidar::config::parse_config;
use iqlidar::experiment::{recipe, run_analyze, run_simulate, run_sweep, SweepParam};
use iqlidar::formats::parse_depth_map_bin;
use iqlidar::{
    beat_frequency, build_depth_map, build_readout_schedule, readout_frame, Acquisition,
    ArrayConfig, ChirpConfig, DspConfig, Error, PeakQuality, ReadoutMode, Scene, SPEED_OF_LIGHT,
};

const BASE: &str =
    "seed = 7\n[laser]\nbandwidth = 10e9\nperiod = 1e-3\nlinewidth = 20e3\n[noise]\nsnr_db = 10\n\
                    [array]\nn = 3\n[scene]\nkind = \"staircase\"\nrange = 1.0\nstep = 0.02\n";

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn noiseless_map(scene: &Scene) -> iqlidar::DepthMap {
    let chirp = ChirpConfig::new(0.0, 10e9, 1e-3).unwrap();
    let fs = (4.0 * beat_frequency(scene.max_range().max(1.0), chirp.slope())).max(64e3);
    let acq = Acquisition::noiseless(chirp, fs);
    let schedule =
        build_readout_schedule(&ArrayConfig::new(scene.size(), ReadoutMode::RowColumn)).unwrap();
    let frame = readout_frame(scene, &schedule, &acq, 0).unwrap();
    build_depth_map(&frame, &DspConfig::default()).unwrap()
}

#[test]
fn flat_scene_recovers_one_metre() {
    let map = noiseless_map(&Scene::flat(8, 1.0, 1.0).unwrap());
    let sub_bin = 0.05 * SPEED_OF_LIGHT / (2.0 * 10e9);
    assert_eq!(map.estimates.len(), 64);
    for e in &map.estimates {
        assert_eq!(e.quality, PeakQuality::Ok);
        assert!((e.range - 1.0).abs() < sub_bin, "{}", e.range);
    }
}

#[test]
fn empty_scene_has_no_peaks() {
    let map = noiseless_map(&Scene::empty(4));
    assert!(map
        .estimates
        .iter()
        .all(|e| e.quality == PeakQuality::NoPeak));
}

#[test]
fn staircase_is_monotone_in_columns() {
    let map = noiseless_map(&Scene::staircase(8, 1.0, 0.05, 1.0).unwrap());
    for row in 0..8 {
        for col in 1..8 {
            assert!(
                map.get(row, col).range > map.get(row, col - 1).range,
                "row {row} col {col}"
            );
        }
    }
}

#[test]
fn recipe_8x8_lands_near_one_metre() {
    let cfg = recipe("paper_8x8_1m").unwrap().parse().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_simulate(&cfg, dir.path()).unwrap();
    let bin = SPEED_OF_LIGHT / (2.0 * cfg.chirp.bandwidth);
    assert_eq!(out.maps[0].estimates.len(), 64);
    for e in &out.maps[0].estimates {
        assert!((e.range - 1.0).abs() < 0.25 * bin, "{}", e.range);
    }
    let report = out.report.unwrap();
    assert!(report.pooled_sigma.unwrap() > 0.0);
    let (n, values) =
        parse_depth_map_bin(&fs::read(dir.path().join("depth_map.bin")).unwrap()).unwrap();
    assert_eq!(n, 8);
    assert_eq!(values, out.maps[0].ranges());
}

#[test]
fn reruns_are_byte_identical_and_manifest_is_sufficient() {
    let cfg = parse_config(&format!("{BASE}[output]\nspectra = true\ntraces = true\n")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_simulate(&cfg, &dir.path().join("a")).unwrap();
    run_simulate(&cfg, &dir.path().join("b")).unwrap();
    let a = tree(&dir.path().join("a"));
    assert_eq!(a, tree(&dir.path().join("b")));
    assert!(a.contains_key("spectra/pixel_r02_c01.csv"));

    let manifest: serde_json::Value = serde_json::from_slice(&a["manifest.json"]).unwrap();
    let listed: Vec<&str> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    let mut keys: Vec<&str> = a.keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(listed, keys);
    let rebuilt = parse_config(manifest["config"].as_str().unwrap()).unwrap();
    run_simulate(&rebuilt, &dir.path().join("c")).unwrap();
    assert_eq!(a, tree(&dir.path().join("c")));
}

#[test]
fn seed_changes_noisy_output() {
    let cfg = parse_config(BASE).unwrap();
    let other = cfg.clone().with_seed(8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_simulate(&cfg, &dir.path().join("a")).unwrap();
    run_simulate(&other, &dir.path().join("b")).unwrap();
    let (a, b) = (tree(&dir.path().join("a")), tree(&dir.path().join("b")));
    assert_ne!(a["depth_map.csv"], b["depth_map.csv"]);
}

#[test]
fn analyze_reproduces_simulation() {
    let cfg = parse_config(&format!("{BASE}[output]\ntraces = true\n")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    run_simulate(&cfg, &sim).unwrap();
    let ana = dir.path().join("ana");
    run_analyze(&sim, &ana, None).unwrap();
    let (s, a) = (tree(&sim), tree(&ana));
    for file in [
        "depth_map.csv",
        "depth_map.bin",
        "accuracy_report.csv",
        "summary.json",
        "config.toml",
    ] {
        assert_eq!(s[file], a[file], "{file}");
    }
}

#[test]
fn analyze_without_traces_names_missing_file() {
    let cfg = parse_config(BASE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_simulate(&cfg, dir.path()).unwrap();
    let err = run_analyze(dir.path(), &dir.path().join("ana"), None).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert!(err.to_string().contains("frame_0000.iqt"), "{err}");
}

#[test]
fn unwritable_output_is_io_error() {
    let cfg = parse_config(BASE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let err = run_simulate(&cfg, &blocker.join("out")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert!(err.to_string().contains("file"), "{err}");
}

#[test]
fn sweep_array_size_counts_interconnects() {
    let cfg = parse_config(BASE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rows = run_sweep(&cfg, SweepParam::ArraySize, &[4.0, 8.0, 16.0], dir.path()).unwrap();
    let rc: Vec<usize> = rows.iter().map(|r| r.interconnects_row_column).collect();
    let direct: Vec<usize> = rows.iter().map(|r| r.interconnects_direct).collect();
    assert_eq!(rc, [8, 16, 32]);
    assert_eq!(direct, [16, 64, 256]);
    let csv = fs::read_to_string(dir.path().join("sweep_N.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("N,sigma_r_m,sigma_r_over_r,"));
}

#[test]
fn sweep_bandwidth_tracks_resolution() {
    let cfg = parse_config(BASE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rows = run_sweep(
        &cfg,
        SweepParam::Bandwidth,
        &[10e9, 100e9, 600e9],
        dir.path(),
    )
    .unwrap();
    let ratios: Vec<f64> = rows
        .iter()
        .map(|r| {
            assert!(r.resolution.pass(), "{r:?}");
            r.resolution.measured.unwrap() / r.resolution.nominal
        })
        .collect();
    for r in &ratios {
        assert!((r / ratios[0] - 1.0).abs() < 0.1, "{ratios:?}");
    }
    assert!((rows[2].resolution.nominal - 249.8e-6).abs() < 0.1e-6);
}

#[test]
fn sweep_rejects_bad_requests() {
    let cfg = parse_config(BASE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        run_sweep(&cfg, SweepParam::Snr, &[], dir.path()),
        Err(Error::Usage(_))
    ));
    assert!(matches!(
        "bandwith".parse::<SweepParam>(),
        Err(Error::Usage(_))
    ));
    assert!(matches!(
        run_sweep(&cfg, SweepParam::ArraySize, &[2.5], dir.path()),
        Err(Error::Usage(_))
    ));
}
