//! Dataset manifests, label binarization, stratified splits and balanced
//! subsampling.
//!
//! A manifest file is JSON Lines: a header object
//! `{"classes": [...], "source": "..."}` followed by one record per line
//! `{"id": "...", "path": "...", "labels": [...]}`. Records may also carry
//! an optional `caption` (used by search) and an optional `split`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Split membership of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One image of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "is_unassigned")]
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

fn is_unassigned(split: &Split) -> bool {
    *split == Split::Unassigned
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, path: impl Into<PathBuf>, labels: &[&str]) -> Self {
        ImageRecord {
            id: id.into(),
            path: path.into(),
            labels: labels.iter().map(|l| l.to_string()).collect(),
            split: Split::Unassigned,
            caption: None,
        }
    }

    pub fn has_label(&self, class: &str) -> bool {
        self.labels.iter().any(|l| l == class)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    classes: Vec<String>,
    #[serde(default)]
    source: String,
}

/// A validated dataset description.
#[derive(Debug, Clone)]
pub struct Manifest {
    classes: Vec<String>,
    records: Vec<ImageRecord>,
    source: String,
    root: Option<PathBuf>,
    by_id: HashMap<String, usize>,
}

impl PartialEq for Manifest {
    fn eq(&self, other: &Self) -> bool {
        self.classes == other.classes && self.records == other.records && self.source == other.source
    }
}

impl Manifest {
    /// Build a manifest, validating ids and labels. Record labels are
    /// de-duplicated and re-ordered to follow class order.
    pub fn new(classes: Vec<String>, mut records: Vec<ImageRecord>, source: impl Into<String>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Validation("manifest declares no classes".into()));
        }
        let mut class_pos = HashMap::with_capacity(classes.len());
        for (i, c) in classes.iter().enumerate() {
            if class_pos.insert(c.as_str(), i).is_some() {
                return Err(Error::Validation(format!("duplicate class `{c}`")));
            }
        }
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter_mut().enumerate() {
            if by_id.insert(rec.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate id `{}`", rec.id)));
            }
            let mut idx = Vec::with_capacity(rec.labels.len());
            for label in &rec.labels {
                match class_pos.get(label.as_str()) {
                    Some(&p) => idx.push(p),
                    None => {
                        return Err(Error::Validation(format!(
                            "record `{}` has label `{label}` not in classes",
                            rec.id
                        )))
                    }
                }
            }
            idx.sort_unstable();
            idx.dedup();
            rec.labels = idx.into_iter().map(|p| classes[p].clone()).collect();
        }
        Ok(Manifest {
            classes,
            records,
            source: source.into(),
            root: None,
            by_id,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Directory relative record paths are resolved against.
    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn with_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.root = Some(root.into());
        self
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    pub fn record(&self, id: &str) -> Option<&ImageRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn resolve_path(&self, record: &ImageRecord) -> PathBuf {
        match &self.root {
            Some(root) if record.path.is_relative() => root.join(&record.path),
            _ => record.path.clone(),
        }
    }

    /// Records in `split` (all records for `None`), in manifest order.
    pub fn records_in(&self, split: Option<Split>) -> impl Iterator<Item = &ImageRecord> {
        self.records
            .iter()
            .filter(move |r| split.is_none_or(|s| r.split == s))
    }

    pub fn ids_in(&self, split: Option<Split>) -> Vec<String> {
        self.records_in(split).map(|r| r.id.clone()).collect()
    }

    /// True when every record already carries a split assignment.
    pub fn is_split(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.split != Split::Unassigned)
    }

    /// Index of the stratum a record belongs to: its first label in class
    /// order, or `classes.len()` for unlabeled records.
    fn stratum(&self, record: &ImageRecord) -> usize {
        record
            .labels
            .first()
            .and_then(|l| self.class_index(l))
            .unwrap_or(self.classes.len())
    }

    /// Serialize back to the JSON Lines manifest format.
    pub fn to_jsonl(&self) -> String {
        let header = Header {
            classes: self.classes.clone(),
            source: self.source.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }
}

/// Parse manifest text. `location` names the source in error messages.
pub fn parse_manifest(text: &str, location: &str) -> Result<Manifest> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::parse(location, "missing header line"))?;
    let header: Header =
        serde_json::from_str(first).map_err(|e| Error::parse(format!("{location}:1"), e))?;
    let mut records = Vec::new();
    for (n, line) in lines {
        let rec: ImageRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(format!("{location}:{}", n + 1), e))?;
        records.push(rec);
    }
    Manifest::new(header.classes, records, header.source)
}

/// Load and validate a manifest file. Relative record paths resolve
/// against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = parse_manifest(&text, &path.display().to_string())?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(manifest.with_root(root))
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let f = SplitFractions { train, val, test };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Validation(format!("split fractions must be positive: {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("split fractions must sum to 1: {parts:?}")));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` items. Each count is the
    /// floor or ceiling of its target; ties go to train, then val.
    fn apportion(&self, n: usize) -> [usize; 3] {
        let targets = [self.train, self.val, self.test].map(|f| f * n as f64);
        let mut counts = targets.map(|t| (t + 1e-9).floor() as usize);
        let mut rest = n - counts.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        let frac = |i: usize| targets[i] - counts[i] as f64;
        order.sort_by(|&a, &b| frac(b).partial_cmp(&frac(a)).unwrap().then(a.cmp(&b)));
        for &i in order.iter().cycle() {
            if rest == 0 {
                break;
            }
            counts[i] += 1;
            rest -= 1;
        }
        counts
    }
}

/// Assign every record to train/val/test, stratified by each record's first
/// label in class order. Within a stratum records are ordered by a keyed
/// hash of `(seed, id)`, so the assignment does not depend on file order.
pub fn split_dataset(manifest: &Manifest, seed: u64, fractions: SplitFractions) -> Result<Manifest> {
    fractions.validate()?;
    if manifest.is_empty() {
        return Err(Error::Empty("cannot split an empty manifest".into()));
    }
    let mut strata: BTreeMap<usize, Vec<(u64, usize)>> = BTreeMap::new();
    for (i, rec) in manifest.records.iter().enumerate() {
        let key = seed::derive_seed(seed, &format!("split:{}", rec.id));
        strata.entry(manifest.stratum(rec)).or_default().push((key, i));
    }
    let mut out = manifest.clone();
    for members in strata.values_mut() {
        members.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| manifest.records[a.1].id.cmp(&manifest.records[b.1].id)));
        let [n_train, n_val, _] = fractions.apportion(members.len());
        for (pos, &(_, i)) in members.iter().enumerate() {
            out.records[i].split = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

/// One-vs-all labels for `class`: `+1` when the record carries the label,
/// `-1` otherwise. Output follows manifest order.
pub fn binarize_labels(manifest: &Manifest, class: &str, split: Option<Split>) -> Result<Vec<(String, i8)>> {
    if manifest.class_index(class).is_none() {
        return Err(Error::UnknownClass(class.to_string()));
    }
    Ok(manifest
        .records_in(split)
        .map(|r| (r.id.clone(), if r.has_label(class) { 1 } else { -1 }))
        .collect())
}

/// Subsample so positives and negatives are equally frequent. The minority
/// side is kept whole; the majority side is sampled without replacement.
/// Output preserves input order.
pub fn balanced_subset(pairs: &[(String, i8)], seed: u64) -> Result<Vec<(String, i8)>> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..pairs.len()).partition(|&i| pairs[i].1 > 0);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass("balanced subset".into()));
    }
    let (minority, majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    let mut rng = seed::rng_for(seed, "balanced-subset");
    let mut keep: Vec<usize> = index::sample(&mut rng, majority.len(), minority.len())
        .into_iter()
        .map(|k| majority[k])
        .chain(minority)
        .collect();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| pairs[i].clone()).collect())
}

/// Subset of `split` in which every class has the same number of records
/// (the smallest class count). Records are grouped by their first label in
/// class order; unlabeled records are excluded. Returned ids are sorted.
pub fn class_balanced_subset(manifest: &Manifest, split: Option<Split>, seed: u64) -> Result<Vec<String>> {
    let k = manifest.classes.len();
    let mut groups: Vec<Vec<&str>> = vec![Vec::new(); k];
    for rec in manifest.records_in(split) {
        let s = manifest.stratum(rec);
        if s < k {
            groups[s].push(rec.id.as_str());
        }
    }
    if let Some(empty) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Empty(format!(
            "class `{}` has no records in the {} split",
            manifest.classes[empty],
            split.map_or("full", Split::as_str)
        )));
    }
    let per_class = groups.iter().map(Vec::len).min().unwrap_or(0);
    let mut rng = seed::rng_for(seed, "class-balanced-subset");
    let mut ids = Vec::with_capacity(per_class * k);
    for group in &mut groups {
        group.sort_unstable();
        ids.extend(index::sample(&mut rng, group.len(), per_class).into_iter().map(|i| group[i].to_string()));
    }
    ids.sort_unstable();
    Ok(ids)
}
