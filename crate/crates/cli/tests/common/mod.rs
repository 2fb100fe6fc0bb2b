#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use earmetrics_core::augment::ImageBuffer;
use earmetrics_core::dataset::{reference_records, Gender};
use earmetrics_core::geometry::LandmarkFile;
use earmetrics_core::synthetic::gender_scaled_landmarks;

pub fn earmetrics(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_earmetrics"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

pub fn summary(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON summary on stdout")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Labels CSV with the reference age/gender distribution; image files are
/// not created.
pub fn write_reference_labels(dir: &Path) -> PathBuf {
    let path = dir.join("labels.csv");
    let mut text = String::from("subject_id,age,gender,image\n");
    for r in reference_records() {
        text += &format!(
            "{},{},{},{}\n",
            r.subject_id,
            r.age,
            r.gender,
            r.image_path.display()
        );
    }
    std::fs::write(&path, text).unwrap();
    path
}

/// Gender-scaled synthetic landmark files `<dir>/landmarks/sNNN.json` and a
/// matching labels CSV.
pub fn write_landmark_corpus(
    dir: &Path,
    n_female: usize,
    n_male: usize,
    seed: u64,
) -> (PathBuf, PathBuf) {
    let lm_dir = dir.join("landmarks");
    std::fs::create_dir_all(&lm_dir).unwrap();
    let mut labels = String::from("subject_id,age,gender,image\n");
    for (i, (lm, g)) in gender_scaled_landmarks(n_female, n_male, 0.97, seed)
        .iter()
        .enumerate()
    {
        let id = format!("s{i:03}");
        let file = LandmarkFile::from_landmarks(format!("{id}.png"), lm);
        std::fs::write(lm_dir.join(format!("{id}.json")), file.to_json()).unwrap();
        let g = match g {
            Gender::Female => "female",
            Gender::Male => "male",
        };
        labels += &format!("{id},{},{g},{id}.png\n", 18 + (i % 50));
    }
    let labels_path = dir.join("labels.csv");
    std::fs::write(&labels_path, labels).unwrap();
    (lm_dir, labels_path)
}

pub fn textured(w: usize, h: usize, seed: usize) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, 3, |x, y, c| {
        (30 + (x * 7 + y * 13 + c * 5 + seed * 11) % 190) as u8
    })
    .unwrap()
}

pub fn write_png(path: &Path, img: &ImageBuffer) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, img.encode_png()).unwrap();
}

/// Every regular file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
