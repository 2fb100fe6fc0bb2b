use std::collections::BTreeMap;
use std::path::Path;

use earmetrics_core::augment::{
    apply, augment_dataset, collect_sources, default_plan, ImageBuffer, Transform, DEFAULT_PLAN_LEN,
};

fn textured(w: usize, h: usize, seed: usize) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, 3, |x, y, c| {
        (40 + ((x * 31 + y * 17 + c * 7 + seed * 13) % 160)) as u8
    })
    .unwrap()
}

fn write_sources(dir: &Path, n: usize, size: usize) {
    for i in 0..n {
        let label = if i % 2 == 0 { "female" } else { "male" };
        let path = dir.join(label).join(format!("s{i:04}.png"));
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, textured(size, size, i).encode_png()).unwrap();
    }
}

fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn output_counts_follow_plan_length() {
    assert_eq!(DEFAULT_PLAN_LEN, 55);
    for (n, expect) in [(269, 14_795), (272, 14_960)] {
        let tmp = tempfile::tempdir().unwrap();
        let inp = tmp.path().join("in");
        write_sources(&inp, n, 4);
        let out = tmp.path().join("out");
        let s = augment_dataset(
            &inp,
            &out,
            &default_plan(0),
            &tmp.path().join("m.csv"),
            None,
        )
        .unwrap();
        assert_eq!(s.written, expect);
        assert_eq!(tree_bytes(&out).len(), expect);
        let manifest = std::fs::read_to_string(tmp.path().join("m.csv")).unwrap();
        assert_eq!(manifest.lines().count(), expect + 1);
    }
}

#[test]
fn every_variant_differs_from_its_source() {
    let img = textured(24, 20, 5);
    let plan = default_plan(11);
    let mut ids: Vec<String> = plan.transforms.iter().map(Transform::id).collect();
    for t in &plan.transforms {
        let out = apply(t, &img).unwrap();
        assert_eq!((out.width, out.height, out.channels), (24, 20, 3));
        assert_ne!(out.data, img.data, "{}", t.id());
    }
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), DEFAULT_PLAN_LEN);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let inp = tmp.path().join("in");
    write_sources(&inp, 6, 32);
    let before = tree_bytes(&inp);
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("out{k}"));
        let manifest = tmp.path().join(format!("m{k}.csv"));
        augment_dataset(&inp, &out, &default_plan(42), &manifest, Some(16)).unwrap();
        let text = std::fs::read_to_string(&manifest).unwrap();
        runs.push((tree_bytes(&out), text.replace(&format!("out{k}"), "out")));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(tree_bytes(&inp), before);

    let other = tmp.path().join("other");
    augment_dataset(
        &inp,
        &other,
        &default_plan(43),
        &tmp.path().join("o.csv"),
        Some(16),
    )
    .unwrap();
    let differing = tree_bytes(&other)
        .iter()
        .filter(|(k, v)| runs[0].0.get(*k) != Some(*v))
        .count();
    // only the dropout variants depend on the seed
    assert!(differing > 0 && differing < runs[0].0.len());
}

#[test]
fn resize_applies_before_transforms() {
    let tmp = tempfile::tempdir().unwrap();
    let inp = tmp.path().join("in");
    write_sources(&inp, 1, 40);
    let out = tmp.path().join("out");
    augment_dataset(
        &inp,
        &out,
        &default_plan(0),
        &tmp.path().join("m.csv"),
        Some(25),
    )
    .unwrap();
    let sources = collect_sources(&out).unwrap();
    assert_eq!(sources.len(), DEFAULT_PLAN_LEN);
    for s in sources {
        let img = ImageBuffer::load(&s.path).unwrap();
        assert_eq!((img.width, img.height), (25, 25));
    }
}
