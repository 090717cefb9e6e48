use std::path::Path;

use lidarfield::dataset_io::{load_dataset, write_dataset, write_synth, FRAMES};
use lidarfield::Error;
use lidarfield_core::dataset::Dataset;
use lidarfield_core::synth::{generate_dataset, textured_room};

fn small_room() -> (lidarfield_core::synth::SceneSpec, lidarfield_core::synth::SynthOutput) {
    let spec = textured_room().with_resolution(16, 16);
    let out = generate_dataset(&spec).unwrap();
    (spec, out)
}

fn max_diff<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn assert_close(original: &Dataset, loaded: &Dataset) {
    assert_eq!(original.frames.len(), loaded.frames.len());
    for (a, b) in original.frames.iter().zip(&loaded.frames) {
        assert_eq!((a.id, a.split, a.camera), (b.id, b.split, b.camera));
        assert_eq!(a.timestamp, b.timestamp);
        assert!((a.pose.translation.vector - b.pose.translation.vector).norm() < 1e-12);
        assert!(a.pose.rotation.angle_to(&b.pose.rotation) < 1e-9);
        let rgb = max_diff(a.image.pixels().iter().flatten(), b.image.pixels().iter().flatten());
        assert!(rgb <= 0.5 / 255.0 + 1e-12, "rgb {rgb}");
        let (da, db) = (a.depth.as_ref().unwrap(), b.depth.as_ref().unwrap());
        assert!(max_diff(da.pixels().iter(), db.pixels().iter()) <= 0.0005 + 1e-12);
        let (na, nb) = (a.normals.as_ref().unwrap(), b.normals.as_ref().unwrap());
        assert!(max_diff(na.pixels().iter().flatten(), nb.pixels().iter().flatten()) <= 1.0 / 127.0);
        assert_eq!(a.sky, b.sky);
    }
    let (ga, gb) = (original.gt_cloud.as_ref().unwrap(), loaded.gt_cloud.as_ref().unwrap());
    assert_eq!(ga.len(), gb.len());
    let worst = ga.positions.iter().zip(&gb.positions).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-5);
}

#[test]
fn synthetic_dataset_round_trips_within_quantization() {
    let (spec, out) = small_room();
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), &spec, &out).unwrap();
    for f in ["cameras.json", "frames.jsonl", "trajectory.txt", "trajectory_estimate.txt", "scene.json", "gt_cloud.ply"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert_close(&out.dataset, &load_dataset(dir.path()).unwrap());
}

#[test]
fn rewriting_a_loaded_dataset_is_stable() {
    let (_, out) = small_room();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_dataset(a.path(), &out.dataset).unwrap();
    let once = load_dataset(a.path()).unwrap();
    write_dataset(b.path(), &once).unwrap();
    let twice = load_dataset(b.path()).unwrap();
    assert_eq!(once, twice);
}

#[test]
fn missing_image_names_its_path() {
    let (_, out) = small_room();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &out.dataset).unwrap();
    let gone = dir.path().join("images/000003.png");
    std::fs::remove_file(&gone).unwrap();
    let err = load_dataset(dir.path()).unwrap_err();
    assert!(err.to_string().contains("images/000003.png"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

fn rewrite_frames(root: &Path, edit: impl Fn(&str) -> String) {
    let path = root.join(FRAMES);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    lines[1] = edit(&lines[1]);
    std::fs::write(&path, lines.join("\n")).unwrap();
}

#[test]
fn non_unit_quaternion_names_the_frame() {
    let (_, out) = small_room();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &out.dataset).unwrap();
    rewrite_frames(dir.path(), |line| {
        let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
        v["rotation"] = serde_json::json!([0.0, 0.0, 0.0, 1.01]);
        v.to_string()
    });
    let err = load_dataset(dir.path()).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Format { .. }));
    assert!(msg.contains("line 2") && msg.contains("frame 1"), "{msg}");
}

#[test]
fn malformed_record_names_the_line() {
    let (_, out) = small_room();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &out.dataset).unwrap();
    rewrite_frames(dir.path(), |_| "{\"id\": 1".into());
    let msg = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(msg.contains("frames.jsonl") && msg.contains("line 2"), "{msg}");
}

#[test]
fn raw_depth_of_2000_is_two_meters() {
    let (_, out) = small_room();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &out.dataset).unwrap();
    let path = dir.path().join("depth/000000.png");
    let file = std::fs::File::create(&path).unwrap();
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), 16, 16);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut data = Vec::new();
    for _ in 0..256 {
        data.extend_from_slice(&2000u16.to_be_bytes());
    }
    enc.write_header().unwrap().write_image_data(&data).unwrap();
    let ds = load_dataset(dir.path()).unwrap();
    let depth = ds.frames[0].depth.as_ref().unwrap();
    assert!(depth.pixels().iter().all(|d| *d == 2.0));
}

#[test]
fn mismatched_image_size_rejected() {
    let (_, out) = small_room();
    let mut ds = out.dataset.clone();
    ds.frames[2].image = lidarfield_core::image::Image::filled(8, 8, [0.0; 3]);
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &ds).unwrap();
    let msg = load_dataset(dir.path()).unwrap_err().to_string();
    assert!(msg.contains("images/000002.png") && msg.contains("8x8"), "{msg}");
}
