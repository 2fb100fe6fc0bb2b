//! Subject records, age binning, and stratified subject-independent splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("age {0} is below the minimum of 18")]
    Underage(u32),
    #[error("line {line}: duplicate subject `{id}`")]
    DuplicateSubject { id: String, line: usize },
    #[error("line {line}: missing file {}", path.display())]
    MissingFile { path: PathBuf, line: usize },
    #[error("line {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("stratum `{0}` has no subjects")]
    EmptyStratum(String),
    #[error("invalid split configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Gender::Female),
            "male" | "m" => Ok(Gender::Male),
            other => Err(format!("unknown gender `{other}` (expected female|male)")),
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Female => "female",
            Gender::Male => "male",
        })
    }
}

/// Five age bins; the last one is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeGroup {
    #[serde(rename = "18-28")]
    From18To28,
    #[serde(rename = "29-38")]
    From29To38,
    #[serde(rename = "39-48")]
    From39To48,
    #[serde(rename = "49-58")]
    From49To58,
    #[serde(rename = "59-68+")]
    From59,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 5] = [
        AgeGroup::From18To28,
        AgeGroup::From29To38,
        AgeGroup::From39To48,
        AgeGroup::From49To58,
        AgeGroup::From59,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AgeGroup::From18To28 => "18-28",
            AgeGroup::From29To38 => "29-38",
            AgeGroup::From39To48 => "39-48",
            AgeGroup::From49To58 => "49-58",
            AgeGroup::From59 => "59-68+",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

pub fn assign_age_group(age: u32) -> Result<AgeGroup> {
    Ok(match age {
        0..=17 => return Err(DatasetError::Underage(age)),
        18..=28 => AgeGroup::From18To28,
        29..=38 => AgeGroup::From29To38,
        39..=48 => AgeGroup::From39To48,
        49..=58 => AgeGroup::From49To58,
        _ => AgeGroup::From59,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub age: u32,
    pub gender: Gender,
    pub image_path: PathBuf,
    pub landmarks_path: Option<PathBuf>,
}

impl SubjectRecord {
    pub fn age_group(&self) -> AgeGroup {
        // ingest guarantees age >= 18
        assign_age_group(self.age).unwrap_or(AgeGroup::From18To28)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Age,
    Gender,
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "age" => Ok(Task::Age),
            "gender" => Ok(Task::Gender),
            other => Err(format!("unknown task `{other}` (expected age|gender)")),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Age => "age",
            Task::Gender => "gender",
        })
    }
}

impl Task {
    pub fn class_names(self) -> Vec<String> {
        match self {
            Task::Age => AgeGroup::ALL
                .iter()
                .map(|g| g.label().to_string())
                .collect(),
            Task::Gender => vec!["female".into(), "male".into()],
        }
    }

    /// Class id of a record under this task; also its stratum.
    pub fn label(self, r: &SubjectRecord) -> usize {
        match self {
            Task::Age => r.age_group().index(),
            Task::Gender => r.gender as usize,
        }
    }
}

/// Parse a labels CSV (`subject_id,age,gender,image[,landmarks]`), resolving
/// file columns against `image_dir` and requiring them to exist.
pub fn ingest(labels_csv: &Path, image_dir: &Path) -> Result<Vec<SubjectRecord>> {
    let f = std::fs::File::open(labels_csv)?;
    ingest_reader(f, image_dir, true)
}

pub fn ingest_reader<R: Read>(
    input: R,
    image_dir: &Path,
    check_files: bool,
) -> Result<Vec<SubjectRecord>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = r
        .headers()
        .map_err(|e| DatasetError::MalformedRow {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let required = |name: &str| {
        col(name).ok_or_else(|| DatasetError::MalformedRow {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let (c_id, c_age, c_gender, c_image) = (
        required("subject_id")?,
        required("age")?,
        required("gender")?,
        required("image")?,
    );
    let c_lm = col("landmarks");

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| DatasetError::MalformedRow {
            line,
            message: e.to_string(),
        })?;
        let cell = |c: usize| rec.get(c).map(str::trim).unwrap_or("");
        let malformed = |message: String| DatasetError::MalformedRow { line, message };

        let subject_id = cell(c_id).to_string();
        if subject_id.is_empty() {
            return Err(malformed("empty subject_id".into()));
        }
        let age: u32 = cell(c_age)
            .parse()
            .map_err(|_| malformed(format!("age `{}` is not a whole number", cell(c_age))))?;
        assign_age_group(age)?;
        let gender: Gender = cell(c_gender).parse().map_err(malformed)?;
        if cell(c_image).is_empty() {
            return Err(malformed("empty image path".into()));
        }
        let image_path = image_dir.join(cell(c_image));
        let landmarks_path = c_lm
            .map(cell)
            .filter(|s| !s.is_empty())
            .map(|s| image_dir.join(s));
        if check_files {
            for p in std::iter::once(&image_path).chain(landmarks_path.as_ref()) {
                if !p.is_file() {
                    return Err(DatasetError::MissingFile {
                        path: p.clone(),
                        line,
                    });
                }
            }
        }
        if !seen.insert(subject_id.clone()) {
            return Err(DatasetError::DuplicateSubject {
                id: subject_id,
                line,
            });
        }
        out.push(SubjectRecord {
            subject_id,
            age,
            gender,
            image_path,
            landmarks_path,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumCounts {
    pub test: usize,
    pub val: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
    /// Explicit per-stratum counts keyed by class name (e.g. `"male"`),
    /// replacing the fractional rule for those strata.
    #[serde(default)]
    pub counts_override: BTreeMap<String, StratumCounts>,
}

impl SplitConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            test_frac: 0.2,
            val_frac: 0.125,
            seed,
            counts_override: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub task: Task,
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn subset_of(&self, id: &str) -> Option<Subset> {
        // lists are sorted
        let has = |v: &[String]| v.binary_search_by(|s| s.as_str().cmp(id)).is_ok();
        if has(&self.train) {
            Some(Subset::Train)
        } else if has(&self.val) {
            Some(Subset::Val)
        } else if has(&self.test) {
            Some(Subset::Test)
        } else {
            None
        }
    }

    pub fn ids(&self, subset: Subset) -> &[String] {
        match subset {
            Subset::Train => &self.train,
            Subset::Val => &self.val,
            Subset::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-class (train, val, test) counts, keyed by class name.
    pub fn stratum_counts(
        &self,
        records: &[SubjectRecord],
    ) -> BTreeMap<String, (usize, usize, usize)> {
        let names = self.task.class_names();
        let mut out: BTreeMap<String, (usize, usize, usize)> =
            names.iter().map(|n| (n.clone(), (0, 0, 0))).collect();
        for r in records {
            let entry = out
                .get_mut(&names[self.task.label(r)])
                .expect("known class");
            match self.subset_of(&r.subject_id) {
                Some(Subset::Train) => entry.0 += 1,
                Some(Subset::Val) => entry.1 += 1,
                Some(Subset::Test) => entry.2 += 1,
                None => {}
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn floor_frac(frac: f64, n: usize) -> usize {
    // absorb representation error such as 0.2 * 35 = 6.999...
    (frac * n as f64 + 1e-9).floor() as usize
}

/// Split each class stratum separately: `⌊test_frac·n⌋` subjects to test,
/// then `⌊val_frac·(n − test)⌋` of the remainder to validation, the rest to
/// training. Subjects are drawn uniformly with a seeded shuffle.
pub fn stratified_split(
    records: &[SubjectRecord],
    task: Task,
    cfg: &SplitConfig,
) -> Result<SplitManifest> {
    for (name, f) in [("test_frac", cfg.test_frac), ("val_frac", cfg.val_frac)] {
        if !(0.0..1.0).contains(&f) {
            return Err(DatasetError::InvalidConfig(format!(
                "{name} = {f} must lie in [0, 1)"
            )));
        }
    }
    let names = task.class_names();
    for key in cfg.counts_override.keys() {
        if !names.contains(key) {
            return Err(DatasetError::InvalidConfig(format!(
                "override for unknown stratum `{key}`"
            )));
        }
    }
    let mut strata: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); names.len()];
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.subject_id.as_str()) {
            return Err(DatasetError::DuplicateSubject {
                id: r.subject_id.clone(),
                line: 0,
            });
        }
        strata[task.label(r)].insert(r.subject_id.as_str());
    }

    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (k, members) in strata.into_iter().enumerate() {
        let n = members.len();
        if n == 0 {
            return Err(DatasetError::EmptyStratum(names[k].clone()));
        }
        let (n_test, n_val) = match cfg.counts_override.get(&names[k]) {
            Some(c) => {
                if c.test + c.val > n {
                    return Err(DatasetError::InvalidConfig(format!(
                        "override for `{}` asks for {} subjects but the stratum has {n}",
                        names[k],
                        c.test + c.val
                    )));
                }
                (c.test, c.val)
            }
            None => {
                let t = floor_frac(cfg.test_frac, n);
                (t, floor_frac(cfg.val_frac, n - t))
            }
        };
        let mut ids: Vec<&str> = members.into_iter().collect();
        let mut rng = rng::stream(cfg.seed, k as u64);
        ids.shuffle(&mut rng);
        test.extend(ids[..n_test].iter().map(|s| s.to_string()));
        val.extend(ids[n_test..n_test + n_val].iter().map(|s| s.to_string()));
        train.extend(ids[n_test + n_val..].iter().map(|s| s.to_string()));
    }
    train.sort();
    val.sort();
    test.sort();
    Ok(SplitManifest {
        task,
        seed: cfg.seed,
        train,
        val,
        test,
    })
}

/// Subjects whose (age group, gender) counts follow the five-bin by two-gender
/// distribution table of the reference dataset: 338 subjects, 150 female and
/// 188 male.
pub const REFERENCE_DISTRIBUTION: [(AgeGroup, usize, usize); 5] = [
    (AgeGroup::From18To28, 35, 36),
    (AgeGroup::From29To38, 32, 43),
    (AgeGroup::From39To48, 27, 45),
    (AgeGroup::From49To58, 27, 33),
    (AgeGroup::From59, 29, 31),
];

/// Records with the [`REFERENCE_DISTRIBUTION`] counts; ages are spread
/// deterministically across each bin.
pub fn reference_records() -> Vec<SubjectRecord> {
    let mut out = Vec::new();
    let mut next = 0;
    for (group, female, male) in REFERENCE_DISTRIBUTION {
        let base = 18 + 10 * group.index() as u32 + u32::from(group.index() > 0);
        for (gender, count) in [(Gender::Female, female), (Gender::Male, male)] {
            for i in 0..count {
                next += 1;
                out.push(SubjectRecord {
                    subject_id: format!("s{next:03}"),
                    age: base + (i as u32 % 10),
                    gender,
                    image_path: PathBuf::from(format!("s{next:03}.png")),
                    landmarks_path: None,
                });
            }
        }
    }
    out
}
