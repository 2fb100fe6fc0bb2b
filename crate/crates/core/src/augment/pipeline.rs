use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply, is_image_path, AugmentError, AugmentationPlan, ImageBuffer, Result, Transform};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SourceImage {
    pub path: PathBuf,
    pub subject_id: String,
    /// Empty when the input directory is not split into class folders.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ManifestRow {
    pub output_path: String,
    pub source_path: String,
    pub transform_id: String,
    pub subject_id: String,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentSummary {
    pub sources: usize,
    pub written: usize,
    /// Inputs that could not be decoded, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
    /// Sorted by output path.
    pub manifest: Vec<ManifestRow>,
}

pub fn output_name(stem: &str, t: &Transform) -> String {
    format!("{stem}__{}.png", t.id())
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let io = |source| AugmentError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut v = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io)?;
    v.sort();
    Ok(v)
}

/// Images directly in `dir` (unlabelled) and in its immediate
/// subdirectories (labelled by folder name), sorted by path.
pub fn collect_sources(dir: &Path) -> Result<Vec<SourceImage>> {
    let mut out = Vec::new();
    let stem = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    for entry in read_dir_sorted(dir)? {
        if entry.is_dir() {
            let label = entry
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            for f in read_dir_sorted(&entry)? {
                if f.is_file() && is_image_path(&f) {
                    out.push(SourceImage {
                        subject_id: stem(&f),
                        path: f,
                        label: label.clone(),
                    });
                }
            }
        } else if is_image_path(&entry) {
            out.push(SourceImage {
                subject_id: stem(&entry),
                path: entry,
                label: String::new(),
            });
        }
    }
    out.sort();
    Ok(out)
}

/// Apply every transform of `plan` to each source, writing
/// `out_dir/[label/]<stem>__<transform-id>.png`. Unreadable sources are
/// skipped and reported. Sources are processed in parallel, one decoded
/// image per worker at a time.
pub fn augment_images(
    sources: &[SourceImage],
    plan: &AugmentationPlan,
    out_dir: &Path,
    resize_to: Option<usize>,
) -> Result<AugmentSummary> {
    if sources.is_empty() {
        return Err(AugmentError::EmptyInput);
    }
    for t in &plan.transforms {
        t.validate()?;
    }
    let results: Vec<Result<std::result::Result<Vec<ManifestRow>, (PathBuf, String)>>> = sources
        .par_iter()
        .map(|src| {
            let img = match ImageBuffer::load(&src.path) {
                Ok(img) => img,
                Err(e) => return Ok(Err((src.path.clone(), e.to_string()))),
            };
            let img = match resize_to {
                Some(s) => img.resized(s, s),
                None => img,
            };
            let dir = if src.label.is_empty() {
                out_dir.to_path_buf()
            } else {
                out_dir.join(&src.label)
            };
            std::fs::create_dir_all(&dir).map_err(|source| AugmentError::Io {
                path: dir.clone(),
                source,
            })?;
            let stem = src.path.file_stem().unwrap_or_default().to_string_lossy();
            let mut rows = Vec::with_capacity(plan.len());
            for t in &plan.transforms {
                let out = apply(t, &img)?;
                let path = dir.join(output_name(&stem, t));
                crate::fsutil::write_replace(&path, &out.encode_png()).map_err(|source| {
                    AugmentError::Io {
                        path: path.clone(),
                        source,
                    }
                })?;
                rows.push(ManifestRow {
                    output_path: path.to_string_lossy().into_owned(),
                    source_path: src.path.to_string_lossy().into_owned(),
                    transform_id: t.id(),
                    subject_id: src.subject_id.clone(),
                    label: src.label.clone(),
                });
            }
            Ok(Ok(rows))
        })
        .collect();
    let mut summary = AugmentSummary {
        sources: sources.len(),
        ..Default::default()
    };
    for r in results {
        match r? {
            Ok(rows) => summary.manifest.extend(rows),
            Err((path, msg)) => {
                warn!("skipping {}: {msg}", path.display());
                summary.skipped.push((path, msg));
            }
        }
    }
    summary.manifest.sort();
    summary.written = summary.manifest.len();
    Ok(summary)
}

/// [`collect_sources`] + [`augment_images`], then the manifest CSV written
/// atomically to `manifest`.
pub fn augment_dataset(
    in_dir: &Path,
    out_dir: &Path,
    plan: &AugmentationPlan,
    manifest: &Path,
    resize_to: Option<usize>,
) -> Result<AugmentSummary> {
    let sources = collect_sources(in_dir)?;
    let summary = augment_images(&sources, plan, out_dir, resize_to)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &summary.manifest {
        w.serialize(row).expect("in-memory CSV");
    }
    let bytes = w.into_inner().expect("in-memory CSV");
    crate::fsutil::write_atomic(manifest, &bytes).map_err(|source| AugmentError::Io {
        path: manifest.to_path_buf(),
        source,
    })?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::default_plan;

    fn write_png(path: &Path, img: &ImageBuffer) {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, img.encode_png()).unwrap();
    }

    #[test]
    fn folder_labels_and_skips() {
        let dir = tempfile::tempdir().unwrap();
        let inp = dir.path().join("in");
        let img = ImageBuffer::from_fn(6, 5, 3, |x, y, c| (x * 40 + y * 9 + c) as u8).unwrap();
        write_png(&inp.join("female/s002.png"), &img);
        write_png(&inp.join("male/s001.png"), &img);
        std::fs::write(inp.join("male/broken.png"), b"not a png").unwrap();
        std::fs::write(inp.join("notes.txt"), b"ignored").unwrap();
        let out = dir.path().join("out");
        let manifest = dir.path().join("m.csv");
        let s = augment_dataset(&inp, &out, &default_plan(3), &manifest, None).unwrap();
        assert_eq!(s.sources, 3);
        assert_eq!(s.written, 110);
        assert_eq!(s.skipped.len(), 1);
        assert!(out.join("male/s001__flip_h.png").exists());
        assert!(out.join("female/s002__sharpen_2.png").exists());
        let text = std::fs::read_to_string(&manifest).unwrap();
        assert!(text.starts_with("output_path,source_path,transform_id,subject_id,label\n"));
        assert_eq!(text.lines().count(), 111);
        for row in &s.manifest {
            let expect = if row.subject_id == "s001" {
                "male"
            } else {
                "female"
            };
            assert_eq!(row.label, expect);
        }
        let mut sorted = s.manifest.clone();
        sorted.sort();
        assert_eq!(sorted, s.manifest);
    }

    #[test]
    fn empty_input_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            augment_images(&[], &default_plan(0), dir.path(), None),
            Err(AugmentError::EmptyInput)
        ));
    }
}
