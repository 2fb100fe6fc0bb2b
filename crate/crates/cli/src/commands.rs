use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use earmetrics_core::augment::{augment_dataset, default_plan};
use earmetrics_core::dataset::{
    self, ingest_reader, stratified_split, AgeGroup, SplitConfig, SplitManifest, StratumCounts,
    SubjectRecord, Subset, Task,
};
use earmetrics_core::fsutil::write_atomic;
use earmetrics_core::geometry::{
    extract_features, extract_features_lenient, fit_normalizer, read_feature_csv, select_features,
    write_feature_csv, FeatureMask, FeatureRow, LandmarkFile, ThresholdRule, FEATURE_NAMES,
};
use earmetrics_core::tabular::{
    evaluate, train_forest, train_logreg, train_mlp, train_svm, Classifier, EvaluationReport,
    ForestConfig, LabeledDataset, LogRegConfig, MlpConfig, ModelFile, ModelKind, Preprocessing,
    SvmConfig, TrainedModel,
};
use earmetrics_core::tinycnn::{
    evaluate_accuracy, init_model, two_stage_finetune, ArchSpec, CnnModel, ImageDataset, SgdConfig,
};
use log::{info, warn};
use serde_json::{json, Value};

use crate::args::{
    AugmentArgs, EvalArgs, ExtractArgs, FinetuneArgs, IngestArgs, SplitArgs, TabularData, TrainArgs,
};
use crate::error::{CliError, Result};

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).map_err(|e| CliError::data(path.display(), e))
}

fn read_labels(path: &Path, image_dir: &Path, check_files: bool) -> Result<Vec<SubjectRecord>> {
    let f = std::fs::File::open(path).map_err(|e| CliError::data(path.display(), e))?;
    ingest_reader(f, image_dir, check_files).map_err(|e| match e {
        dataset::DatasetError::InvalidConfig(m) => CliError::Usage(m),
        other => CliError::data(path.display(), other),
    })
}

pub fn ingest(a: &IngestArgs) -> Result<Value> {
    let dir = a.images.clone().unwrap_or_else(|| parent_dir(&a.labels));
    let records = read_labels(&a.labels, &dir, true)?;
    let mut genders: BTreeMap<String, usize> = BTreeMap::new();
    let mut groups: BTreeMap<&str, usize> = AgeGroup::ALL.iter().map(|g| (g.label(), 0)).collect();
    for r in &records {
        *genders.entry(r.gender.to_string()).or_default() += 1;
        *groups.get_mut(r.age_group().label()).expect("known group") += 1;
    }
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&records).expect("records serialize");
        write_output(out, text.as_bytes())?;
    }
    Ok(json!({
        "command": "ingest",
        "subjects": records.len(),
        "gender": genders,
        "age_groups": groups,
        "with_landmarks": records.iter().filter(|r| r.landmarks_path.is_some()).count(),
        "out": a.out,
    }))
}

fn landmark_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| CliError::data(path.display(), e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no landmark .json files",
            path.display()
        )));
    }
    Ok(files)
}

pub fn extract(a: &ExtractArgs) -> Result<Value> {
    let mut rows = Vec::new();
    let mut warnings = 0;
    for f in landmark_files(&a.landmarks)? {
        let lf = LandmarkFile::read(&f).map_err(|e| CliError::data(f.display(), e))?;
        let lm = lf.to_landmarks();
        let features = if a.lenient {
            let (v, zero) =
                extract_features_lenient(&lm).map_err(|e| CliError::data(f.display(), e))?;
            for z in &zero {
                warn!("{}: {} is zero", f.display(), FEATURE_NAMES[z.feature]);
            }
            warnings += zero.len();
            v
        } else {
            extract_features(&lm).map_err(|e| CliError::data(f.display(), e))?
        };
        let subject_id = f
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        rows.push(FeatureRow {
            subject_id,
            features,
        });
    }
    let mut buf = Vec::new();
    write_feature_csv(&mut buf, &rows)?;
    write_output(&a.out, &buf)?;
    Ok(json!({
        "command": "extract",
        "rows": rows.len(),
        "warnings": warnings,
        "out": a.out,
    }))
}

pub fn augment(a: &AugmentArgs) -> Result<Value> {
    let manifest = a
        .manifest
        .clone()
        .unwrap_or_else(|| a.out.join("manifest.csv"));
    let resize = (a.resize > 0).then_some(a.resize);
    let plan = default_plan(a.seed);
    let s = augment_dataset(&a.input, &a.out, &plan, &manifest, resize)?;
    Ok(json!({
        "command": "augment",
        "plan": plan.name,
        "transforms": plan.len(),
        "sources": s.sources,
        "written": s.written,
        "skipped": s.skipped.iter().map(|(p, m)| json!({"path": p, "error": m})).collect::<Vec<_>>(),
        "manifest": manifest,
    }))
}

fn parse_override(spec: &str) -> Result<(String, StratumCounts)> {
    let bad = || {
        CliError::Usage(format!(
            "counts override `{spec}` is not of the form stratum=test:val"
        ))
    };
    let (name, counts) = spec.split_once('=').ok_or_else(bad)?;
    let (t, v) = counts.split_once(':').ok_or_else(bad)?;
    Ok((
        name.trim().to_string(),
        StratumCounts {
            test: t.trim().parse().map_err(|_| bad())?,
            val: v.trim().parse().map_err(|_| bad())?,
        },
    ))
}

fn counts_json(m: &SplitManifest, records: &[SubjectRecord]) -> Value {
    let counts: BTreeMap<String, Value> = m
        .stratum_counts(records)
        .into_iter()
        .map(|(k, (tr, va, te))| (k, json!({"train": tr, "val": va, "test": te})))
        .collect();
    json!(counts)
}

pub fn split(a: &SplitArgs) -> Result<Value> {
    // the split needs ids and labels only, so image files need not exist
    let records = read_labels(&a.labels, &parent_dir(&a.labels), false)?;
    let mut cfg = SplitConfig::new(a.seed);
    cfg.test_frac = a.test_frac;
    cfg.val_frac = a.val_frac;
    for spec in &a.counts_override {
        let (k, c) = parse_override(spec)?;
        cfg.counts_override.insert(k, c);
    }
    let m = stratified_split(&records, a.task, &cfg)?;
    if let Some(out) = &a.out {
        write_output(out, m.to_json().as_bytes())?;
    }
    Ok(json!({
        "command": "split",
        "task": a.task,
        "seed": a.seed,
        "train": m.train.len(),
        "val": m.val.len(),
        "test": m.test.len(),
        "strata": counts_json(&m, &records),
        "out": a.out,
    }))
}

/// Feature rows joined to their labels, in feature-file order.
struct Joined {
    rows: Vec<FeatureRow>,
    labels: Vec<usize>,
    records: Vec<SubjectRecord>,
}

fn load_tabular(d: &TabularData) -> Result<Joined> {
    let records = read_labels(&d.labels, &parent_dir(&d.labels), false)?;
    let f =
        std::fs::File::open(&d.features).map_err(|e| CliError::data(d.features.display(), e))?;
    let rows = read_feature_csv(f, &d.features.display().to_string())?;
    let by_id: HashMap<&str, &SubjectRecord> =
        records.iter().map(|r| (r.subject_id.as_str(), r)).collect();
    let mut kept = Vec::new();
    let mut labels = Vec::new();
    let mut matched = Vec::new();
    let mut unlabelled = 0;
    for row in rows {
        match by_id.get(row.subject_id.as_str()) {
            Some(r) => {
                labels.push(d.task.label(r));
                matched.push((*r).clone());
                kept.push(row);
            }
            None => unlabelled += 1,
        }
    }
    if unlabelled > 0 {
        warn!(
            "{unlabelled} feature rows have no entry in {}",
            d.labels.display()
        );
    }
    if kept.is_empty() {
        return Err(CliError::Data(format!(
            "no subject of {} appears in {}",
            d.features.display(),
            d.labels.display()
        )));
    }
    Ok(Joined {
        rows: kept,
        labels,
        records: matched,
    })
}

fn raw_dataset(j: &Joined, idx: &[usize], task: Task) -> Result<LabeledDataset> {
    let rows: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| j.rows[i].features.as_slice().to_vec())
        .collect();
    let labels = idx.iter().map(|&i| j.labels[i]).collect();
    let mut ds = LabeledDataset::from_rows(&rows, labels, task.class_names().len())?;
    ds.class_names = task.class_names();
    ds.subject_ids = idx.iter().map(|&i| j.rows[i].subject_id.clone()).collect();
    Ok(ds)
}

fn subset_indices(j: &Joined, m: &SplitManifest, subset: Subset) -> Vec<usize> {
    (0..j.rows.len())
        .filter(|&i| m.subset_of(&j.rows[i].subject_id) == Some(subset))
        .collect()
}

fn load_manifest(path: &Path) -> Result<SplitManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(path.display(), e))?;
    SplitManifest::from_json(&text).map_err(|e| CliError::data(path.display(), e))
}

fn choose_mask(a: &TrainArgs, train: &LabeledDataset) -> Result<Option<FeatureMask>> {
    let rule = match a.select.as_str() {
        "none" => return Ok(None),
        "reference" => return Ok(Some(FeatureMask::reference())),
        "mean" => ThresholdRule::MeanImportance,
        other => ThresholdRule::Fixed(other.parse().map_err(|_| {
            CliError::Usage(format!(
                "--select `{other}`: expected none, mean, reference or a number"
            ))
        })?),
    };
    let forest = train_forest(
        train,
        &ForestConfig {
            n_trees: a.select_trees,
            seed: a.seed,
            ..Default::default()
        },
    )?;
    Ok(Some(select_features(&forest.feature_importances, rule)?))
}

fn report_json(r: &EvaluationReport) -> Value {
    json!({
        "accuracy": r.accuracy,
        "n": r.n,
        "confusion": r.confusion,
        "per_class_recall": r.per_class_recall,
    })
}

pub fn train(a: &TrainArgs) -> Result<Value> {
    let task = a.data.task;
    let j = load_tabular(&a.data)?;
    let manifest = match &a.manifest {
        Some(p) => load_manifest(p)?,
        None => stratified_split(&j.records, task, &SplitConfig::new(a.seed))?,
    };
    if manifest.task != task {
        return Err(CliError::Usage(format!(
            "manifest is for task {} but --task is {task}",
            manifest.task
        )));
    }
    let [tr, va, te] =
        [Subset::Train, Subset::Val, Subset::Test].map(|s| subset_indices(&j, &manifest, s));
    if tr.len() < 2 {
        return Err(CliError::Data(format!(
            "only {} training subjects have features",
            tr.len()
        )));
    }
    let train_raw = raw_dataset(&j, &tr, task)?;
    let rows: Vec<Vec<f64>> = (0..train_raw.n_samples())
        .map(|i| train_raw.row(i).to_vec())
        .collect();
    let normalization = fit_normalizer(&rows)?;
    let mut pre = Preprocessing {
        normalization: Some(normalization),
        mask: None,
    };
    let z_train = pre.apply_dataset(&train_raw)?;
    pre.mask = choose_mask(a, &z_train)?;
    let train_ds = pre.apply_dataset(&train_raw)?;
    if let Some(m) = &pre.mask {
        info!("selected features: {:?}", m.selected_names());
    }

    let model = match a.model {
        ModelKind::Logreg => TrainedModel::Logreg(train_logreg(
            &train_ds,
            &LogRegConfig {
                l2_lambda: a.lambda,
                ..Default::default()
            },
        )?),
        ModelKind::Forest => TrainedModel::Forest(train_forest(
            &train_ds,
            &ForestConfig {
                n_trees: a.trees,
                seed: a.seed,
                ..Default::default()
            },
        )?),
        ModelKind::Svm => TrainedModel::Svm(train_svm(
            &train_ds,
            &SvmConfig {
                c: a.c,
                gamma: a.gamma,
                max_iter: a.svm_max_iter,
                ..Default::default()
            },
        )?),
        ModelKind::Mlp => {
            let hidden: [usize; 3] = a.hidden.clone().try_into().map_err(|h: Vec<usize>| {
                CliError::Usage(format!("--hidden needs exactly 3 widths, got {}", h.len()))
            })?;
            TrainedModel::Mlp(train_mlp(
                &train_ds,
                &MlpConfig {
                    hidden,
                    learning_rate: a.lr,
                    epochs: a.epochs,
                    batch_size: a.batch_size,
                    seed: a.seed,
                    ..Default::default()
                },
            )?)
        }
    };
    let file = ModelFile::new(
        task.to_string(),
        task.class_names(),
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        pre,
        Some(a.seed),
        model,
    );
    write_output(&a.out, file.to_json().as_bytes())?;

    let eval_subset = |idx: &[usize]| -> Result<Option<Value>> {
        if idx.is_empty() {
            return Ok(None);
        }
        let ds = file
            .preprocessing
            .apply_dataset(&raw_dataset(&j, idx, task)?)?;
        Ok(Some(report_json(&evaluate(&file.model, &ds)?)))
    };
    Ok(json!({
        "command": "train",
        "task": task,
        "model": a.model,
        "seed": a.seed,
        "class_names": task.class_names(),
        "selected_features": file.preprocessing.mask.as_ref().map(|m| m.selected_names()),
        "n_train": tr.len(),
        "train": eval_subset(&tr)?,
        "val": eval_subset(&va)?,
        "test": eval_subset(&te)?,
        "accuracy": eval_subset(&te)?.map(|r| r["accuracy"].clone()),
        "out": a.out,
    }))
}

fn crop_of(crop: usize) -> Option<usize> {
    (crop > 0).then_some(crop)
}

fn load_images(dir: &Path, size: usize) -> Result<ImageDataset> {
    Ok(ImageDataset::from_folder(dir, Some(size))?)
}

pub fn finetune(a: &FinetuneArgs) -> Result<Value> {
    let crop = crop_of(a.crop);
    if crop.is_some_and(|c| c >= a.size) {
        return Err(CliError::Usage(format!(
            "--crop {} must be smaller than --size {}",
            a.crop, a.size
        )));
    }
    let target = load_images(&a.target, a.size)?;
    let domain = a
        .domain
        .as_deref()
        .map(|d| load_images(d, a.size))
        .transpose()?;
    let val = a
        .val
        .as_deref()
        .map(|d| load_images(d, a.size))
        .transpose()?;
    if let Some(v) = &val {
        if v.class_names != target.class_names {
            return Err(CliError::Data(format!(
                "validation classes {:?} differ from target classes {:?}",
                v.class_names, target.class_names
            )));
        }
    }
    let input = target
        .input_shape(crop)
        .ok_or_else(|| CliError::Data(format!("{}: no images", a.target.display())))?;
    let base = match &a.base {
        Some(p) => CnnModel::load(p)?,
        None => init_model(
            &ArchSpec {
                input,
                conv_channels: a.channels.clone(),
                kernel: a.kernel,
                dropout: a.dropout,
            },
            target.num_classes(),
            a.seed,
        )?,
    };
    let target_cfg = SgdConfig {
        global_lr: a.lr,
        epochs: a.target_epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        last_layer_multiplier: a.head_multiplier,
        crop,
    };
    let domain_cfg = SgdConfig {
        epochs: if domain.is_some() { a.domain_epochs } else { 0 },
        ..target_cfg.clone()
    };
    let (model, report) = two_stage_finetune(
        &base,
        domain.as_ref().unwrap_or(&target),
        &target,
        &domain_cfg,
        &target_cfg,
        val.as_ref(),
    )?;
    model
        .save(&a.out)
        .map_err(|e| CliError::data(a.out.display(), e))?;
    if let Some(log_path) = &a.log {
        let mut w = csv_writer();
        for row in &report.log {
            w.serialize(row).expect("in-memory CSV");
        }
        write_output(log_path, &w.into_inner().expect("in-memory CSV"))?;
    }
    Ok(json!({
        "command": "finetune",
        "seed": a.seed,
        "class_names": target.class_names,
        "parameters": model.param_count(),
        "stages": report.stages.iter().map(|s| json!({
            "stage": s.stage,
            "classes": s.classes,
            "samples": s.samples,
            "final_loss": s.epoch_losses.last(),
        })).collect::<Vec<_>>(),
        "validation_accuracy": report.validation_accuracy,
        "out": a.out,
    }))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

pub fn eval(a: &EvalArgs) -> Result<Value> {
    let text =
        std::fs::read_to_string(&a.model).map_err(|e| CliError::data(a.model.display(), e))?;
    let kind: Value =
        serde_json::from_str(&text).map_err(|e| CliError::data(a.model.display(), e))?;
    if kind.get("layers").is_some() {
        let model = CnnModel::from_json(&text).map_err(|e| CliError::data(a.model.display(), e))?;
        let dir = a
            .images
            .as_ref()
            .ok_or_else(|| CliError::Usage("evaluating a checkpoint needs --images".into()))?;
        let ds = load_images(dir, a.size)?;
        let accuracy = evaluate_accuracy(&model, &ds, crop_of(a.crop))?;
        return Ok(json!({
            "command": "eval",
            "model": "cnn",
            "n": ds.len(),
            "accuracy": accuracy,
        }));
    }
    let file = ModelFile::from_json(&text).map_err(|e| CliError::data(a.model.display(), e))?;
    let (features, labels, task) = match (&a.features, &a.labels, a.task) {
        (Some(f), Some(l), Some(t)) => (f.clone(), l.clone(), t),
        _ => {
            return Err(CliError::Usage(
                "evaluating a model file needs --features, --labels and --task".into(),
            ))
        }
    };
    if file.task != task.to_string() {
        return Err(CliError::Usage(format!(
            "model was trained for task {} but --task is {task}",
            file.task
        )));
    }
    let j = load_tabular(&TabularData {
        features,
        labels,
        task,
    })?;
    let (idx, subset) = match &a.manifest {
        Some(p) => {
            let m = load_manifest(p)?;
            let subset = match a.subset.as_str() {
                "train" => Subset::Train,
                "val" => Subset::Val,
                _ => Subset::Test,
            };
            (subset_indices(&j, &m, subset), a.subset.clone())
        }
        None => ((0..j.rows.len()).collect(), "all".to_string()),
    };
    if idx.is_empty() {
        return Err(CliError::Data(format!(
            "no subjects with features in subset {subset}"
        )));
    }
    let raw = raw_dataset(&j, &idx, task)?;
    let predicted = (0..raw.n_samples())
        .map(|i| file.predict_raw(&raw.row(i).to_vec()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let report = earmetrics_core::tabular::evaluate_predictions(
        &raw.labels,
        &predicted,
        file.model.n_classes(),
    )?;
    Ok(json!({
        "command": "eval",
        "model": file.model.kind(),
        "task": task,
        "subset": subset,
        "class_names": file.class_names,
        "report": report_json(&report),
        "accuracy": report.accuracy,
    }))
}
