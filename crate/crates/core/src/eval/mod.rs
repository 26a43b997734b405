//! Evaluation protocol: class-balanced average precision, label-balanced
//! accuracy with validation-tuned thresholds, confusion matrices with a
//! prior column, and content–style correlation.

mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{balanced_subset, binarize_labels, class_balanced_subset, Manifest, Split};
use crate::error::{Error, Result};
use crate::seed;

pub use report::{render_report, ClassResult, EvalReport, ReportFormat, REPORT_FORMAT};

/// Decision values of every class for a set of records. Rows are kept in
/// ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    classes: Vec<String>,
    ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn new(classes: Vec<String>, mut rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Empty("score table has no classes".into()));
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Validation(format!("duplicate id `{}` in score table", w[0].0)));
        }
        for (id, r) in &rows {
            if r.len() != classes.len() {
                return Err(Error::DimensionMismatch {
                    expected: classes.len(),
                    actual: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("non-finite score for `{id}`")));
            }
        }
        let (ids, rows) = rows.into_iter().unzip();
        Ok(ScoreTable { classes, ids, rows })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, id: &str) -> Option<&[f64]> {
        self.ids
            .binary_search_by(|p| p.as_str().cmp(id))
            .ok()
            .map(|i| self.rows[i].as_slice())
    }

    pub fn require(&self, id: &str) -> Result<&[f64]> {
        self.row(id).ok_or_else(|| Error::MissingId {
            id: id.to_string(),
            context: "score table".into(),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids.iter().map(String::as_str).zip(self.rows.iter().map(Vec::as_slice))
    }

    fn column(&self, class: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| Error::UnknownClass(class.to_string()))
    }

    /// Score of `class` for `id`.
    pub fn score(&self, id: &str, class: &str) -> Result<f64> {
        let k = self.column(class)?;
        Ok(self.require(id)?[k])
    }
}

/// Non-interpolated average precision: the mean, over positives, of the
/// precision at each positive's rank. Ranking is by descending score with
/// ties broken by position in the input (callers pass records in id
/// order).
pub fn average_precision(scores: &[f64], labels: &[i8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Validation("non-finite score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] > 0 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::Validation("average precision needs at least one positive".into()));
    }
    Ok(sum / hits as f64)
}

/// How the evaluation subset is balanced for AP.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceProtocol {
    /// One subset in which every class has equal prevalence (`1/K`), shared
    /// by all classes.
    #[default]
    ClassUniform,
    /// A separate positive/negative balanced subset per class.
    PerClassBinary,
}

impl BalanceProtocol {
    pub fn name(self) -> &'static str {
        match self {
            BalanceProtocol::ClassUniform => "class_uniform",
            BalanceProtocol::PerClassBinary => "per_class_binary",
        }
    }
}

impl std::str::FromStr for BalanceProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class_uniform" => Ok(BalanceProtocol::ClassUniform),
            "per_class_binary" => Ok(BalanceProtocol::PerClassBinary),
            other => Err(Error::Validation(format!("unknown balance protocol `{other}`"))),
        }
    }
}

/// Per-class AP on a balanced subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ApSummary {
    pub per_class: Vec<(String, f64)>,
    pub mean_ap: f64,
    /// Size of the evaluated subset (largest per-class subset under
    /// [`BalanceProtocol::PerClassBinary`]).
    pub subset_size: usize,
}

fn labeled_pairs(manifest: &Manifest, ids: &[String], class: &str) -> Result<Vec<(String, i8)>> {
    ids.iter()
        .map(|id| {
            let rec = manifest.record(id).ok_or_else(|| Error::MissingId {
                id: id.clone(),
                context: "manifest".into(),
            })?;
            Ok((id.clone(), if rec.has_label(class) { 1 } else { -1 }))
        })
        .collect()
}

fn ap_on(table: &ScoreTable, pairs: &[(String, i8)], k: usize) -> Result<f64> {
    let mut scores = Vec::with_capacity(pairs.len());
    for (id, _) in pairs {
        scores.push(table.require(id)?[k]);
    }
    let labels: Vec<i8> = pairs.iter().map(|p| p.1).collect();
    average_precision(&scores, &labels)
}

/// Balanced mean AP of `table` over `split` of the manifest.
pub fn balanced_mean_ap(
    table: &ScoreTable,
    manifest: &Manifest,
    split: Option<Split>,
    seed: u64,
    protocol: BalanceProtocol,
) -> Result<ApSummary> {
    let classes = manifest.classes();
    let cols: Vec<usize> = classes.iter().map(|c| table.column(c)).collect::<Result<_>>()?;
    let shared = match protocol {
        BalanceProtocol::ClassUniform => Some(class_balanced_subset(manifest, split, seed)?),
        BalanceProtocol::PerClassBinary => None,
    };
    let results: Vec<Result<(f64, usize)>> = classes
        .par_iter()
        .zip(&cols)
        .map(|(class, &k)| {
            let pairs = match &shared {
                Some(ids) => labeled_pairs(manifest, ids, class)?,
                None => {
                    let all = binarize_labels(manifest, class, split)?;
                    balanced_subset(&all, seed::derive_seed(seed, &format!("ap:{class}")))
                        .map_err(|_| Error::Validation(format!("class `{class}` lacks positives or negatives in the split")))?
                }
            };
            let ap = ap_on(table, &pairs, k).map_err(|e| match e {
                Error::MissingId { .. } => e,
                other => Error::Validation(format!("class `{class}`: {other}")),
            })?;
            Ok((ap, pairs.len()))
        })
        .collect();
    let mut per_class = Vec::with_capacity(classes.len());
    let mut subset_size = 0;
    for (class, r) in classes.iter().zip(results) {
        let (ap, n) = r?;
        subset_size = subset_size.max(n);
        per_class.push((class.clone(), ap));
    }
    let mean_ap = per_class.iter().map(|p| p.1).sum::<f64>() / per_class.len() as f64;
    Ok(ApSummary {
        per_class,
        mean_ap,
        subset_size,
    })
}

/// Mean of true-positive and true-negative rates for `score > threshold`.
/// On a positive/negative balanced set this is plain accuracy.
pub fn balanced_accuracy_at(scores: &[f64], labels: &[i8], threshold: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let (mut tp, mut p, mut tn, mut n) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        if y > 0 {
            p += 1;
            tp += usize::from(s > threshold);
        } else {
            n += 1;
            tn += usize::from(s < threshold);
        }
    }
    if p == 0 || n == 0 {
        return Err(Error::SingleClass("balanced accuracy".into()));
    }
    Ok(0.5 * (tp as f64 / p as f64 + tn as f64 / n as f64))
}

/// Threshold maximizing balanced accuracy. Candidates are midpoints between
/// consecutive distinct scores plus one point beyond each end; the smallest
/// maximizing candidate wins.
pub fn tune_threshold(scores: &[f64], labels: &[i8]) -> Result<f64> {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let first = *sorted.first().ok_or_else(|| Error::Empty("no scores to tune a threshold on".into()))?;
    let last = *sorted.last().expect("non-empty");
    let mut candidates = vec![first - 1.0];
    candidates.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(last + 1.0);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for t in candidates {
        let acc = balanced_accuracy_at(scores, labels, t)?;
        if acc > best.0 {
            best = (acc, t);
        }
    }
    Ok(best.1)
}

/// Accuracy of `score > threshold` on a positive/negative balanced subset
/// of `pairs` drawn with `seed`. `score` supplies the decision value of an id.
pub fn balanced_accuracy(
    pairs: &[(String, i8)],
    score: impl Fn(&str) -> Result<f64>,
    seed: u64,
    threshold: f64,
) -> Result<f64> {
    let subset = balanced_subset(pairs, seed)?;
    let scores: Vec<f64> = subset.iter().map(|(id, _)| score(id)).collect::<Result<_>>()?;
    let labels: Vec<i8> = subset.iter().map(|p| p.1).collect();
    balanced_accuracy_at(&scores, &labels, threshold)
}

/// Row-normalized confusion matrix with a prior column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub classes: Vec<String>,
    /// `matrix[true][predicted]`, rows sum to 1.
    pub matrix: Vec<Vec<f64>>,
    /// Empirical distribution of ground-truth labels.
    pub prior: Vec<f64>,
    pub records: usize,
}

/// Confusion over explicit `ids`. The prediction is the argmax of the score
/// row (lowest class index on ties); a record contributes one row entry per
/// ground-truth label. Classes that never occur as a true label get an
/// all-zero row.
pub fn confusion_from(table: &ScoreTable, manifest: &Manifest, ids: &[String]) -> Result<Confusion> {
    let classes = manifest.classes();
    let k = classes.len();
    let cols: Vec<usize> = classes.iter().map(|c| table.column(c)).collect::<Result<_>>()?;
    let mut counts = vec![vec![0usize; k]; k];
    let mut label_counts = vec![0usize; k];
    let mut records = 0;
    for id in ids {
        let rec = manifest.record(id).ok_or_else(|| Error::MissingId {
            id: id.clone(),
            context: "manifest".into(),
        })?;
        if rec.labels.is_empty() {
            continue;
        }
        let row = table.require(id)?;
        let mut predicted = 0;
        for c in 1..k {
            if row[cols[c]] > row[cols[predicted]] {
                predicted = c;
            }
        }
        for label in &rec.labels {
            let t = manifest.class_index(label).expect("labels validated against classes");
            counts[t][predicted] += 1;
            label_counts[t] += 1;
        }
        records += 1;
    }
    let total: usize = label_counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty("no labeled records for the confusion matrix".into()));
    }
    let matrix = counts
        .iter()
        .map(|row| {
            let n: usize = row.iter().sum();
            row.iter()
                .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
                .collect()
        })
        .collect();
    Ok(Confusion {
        classes: classes.to_vec(),
        matrix,
        prior: label_counts.iter().map(|&c| c as f64 / total as f64).collect(),
        records,
    })
}

/// Confusion on the class-balanced subset of `split`.
pub fn confusion_matrix(table: &ScoreTable, manifest: &Manifest, split: Option<Split>, seed: u64) -> Result<Confusion> {
    if manifest.records_in(split).next().is_none() {
        return Err(Error::Empty(format!(
            "the {} split is empty",
            split.map_or("full", Split::as_str)
        )));
    }
    let ids = class_balanced_subset(manifest, split, seed)?;
    confusion_from(table, manifest, &ids)
}

/// Pearson correlation. Returns `(0, true)` when either series has zero
/// variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, bool)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Empty("correlation of empty series".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Ok((0.0, true));
    }
    Ok(((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0), false))
}

/// Correlation of content scores (rows) against binary style labels
/// (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// `(row, column)` cells whose series had zero variance.
    pub degenerate: Vec<(usize, usize)>,
}

/// Pearson correlation between every content score series and every style
/// indicator over the records of `split`. `content` maps id → one score per
/// entry of `row_names`.
pub fn content_style_correlation(
    row_names: &[String],
    content: &BTreeMap<String, Vec<f64>>,
    manifest: &Manifest,
    split: Option<Split>,
) -> Result<CorrelationMatrix> {
    let recs: Vec<_> = manifest.records_in(split).collect();
    if recs.is_empty() {
        return Err(Error::Empty("no records to correlate".into()));
    }
    let mut series = vec![Vec::with_capacity(recs.len()); row_names.len()];
    for rec in &recs {
        let v = content.get(&rec.id).ok_or_else(|| Error::MissingId {
            id: rec.id.clone(),
            context: "content scores".into(),
        })?;
        if v.len() != row_names.len() {
            return Err(Error::DimensionMismatch {
                expected: row_names.len(),
                actual: v.len(),
            });
        }
        for (s, &x) in series.iter_mut().zip(v) {
            s.push(x);
        }
    }
    let mut values = Vec::with_capacity(row_names.len());
    let mut degenerate = Vec::new();
    for (r, s) in series.iter().enumerate() {
        let mut row = Vec::with_capacity(manifest.classes().len());
        for (c, class) in manifest.classes().iter().enumerate() {
            let indicator: Vec<f64> = recs.iter().map(|rec| f64::from(u8::from(rec.has_label(class)))).collect();
            let (rho, flagged) = pearson(s, &indicator)?;
            if flagged {
                degenerate.push((r, c));
            }
            row.push(rho);
        }
        values.push(row);
    }
    Ok(CorrelationMatrix {
        rows: row_names.to_vec(),
        columns: manifest.classes().to_vec(),
        values,
        degenerate,
    })
}

/// Inputs of a full evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalSetup<'a> {
    pub manifest: &'a Manifest,
    /// Scores of the evaluated split.
    pub scores: &'a ScoreTable,
    pub split: Split,
    /// Validation scores used to tune per-class thresholds; thresholds are 0
    /// without them.
    pub validation: Option<&'a ScoreTable>,
    pub seed: u64,
    pub protocol: BalanceProtocol,
    /// Label recorded in the report (channel or fusion mode).
    pub model: &'a str,
}

/// Run the whole protocol and assemble a report.
pub fn evaluate(setup: &EvalSetup<'_>, correlation: Option<CorrelationMatrix>) -> Result<EvalReport> {
    let m = setup.manifest;
    let split = Some(setup.split);
    let ap = balanced_mean_ap(setup.scores, m, split, seed::derive_seed(setup.seed, "eval:ap"), setup.protocol)?;
    let mut classes = Vec::with_capacity(m.classes().len());
    for (class, ap) in &ap.per_class {
        let threshold = match setup.validation {
            Some(val) => {
                let pairs = balanced_subset(
                    &binarize_labels(m, class, Some(Split::Val))?,
                    seed::derive_seed(setup.seed, &format!("threshold:{class}")),
                )?;
                let scores: Vec<f64> = pairs.iter().map(|(id, _)| val.score(id, class)).collect::<Result<_>>()?;
                let labels: Vec<i8> = pairs.iter().map(|p| p.1).collect();
                tune_threshold(&scores, &labels)?
            }
            None => 0.0,
        };
        let accuracy = balanced_accuracy(
            &binarize_labels(m, class, split)?,
            |id| setup.scores.score(id, class),
            seed::derive_seed(setup.seed, &format!("accuracy:{class}")),
            threshold,
        )?;
        classes.push(ClassResult {
            class: class.clone(),
            ap: *ap,
            accuracy,
            threshold,
        });
    }
    let confusion = confusion_matrix(setup.scores, m, split, seed::derive_seed(setup.seed, "eval:confusion"))?;
    EvalReport::new(
        setup.model,
        setup.split,
        setup.seed,
        setup.protocol,
        ap.subset_size,
        classes,
        confusion,
        correlation,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageRecord;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Precision and recall from first principles at every cut-off; AP as
    /// the sum of precision times recall increments.
    fn brute_force_ap(scores: &[f64], labels: &[i8]) -> f64 {
        let n = scores.len();
        let positives = labels.iter().filter(|&&y| y > 0).count() as f64;
        let mut order: Vec<usize> = (0..n).collect();
        // selection sort: highest remaining score, earliest position first
        for i in 0..n {
            let mut best = i;
            for j in i + 1..n {
                let (a, b) = (order[j], order[best]);
                if scores[a] > scores[b] || (scores[a] == scores[b] && a < b) {
                    best = j;
                }
            }
            order.swap(i, best);
        }
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for k in 1..=n {
            let retrieved = &order[..k];
            let tp = retrieved.iter().filter(|&&i| labels[i] > 0).count() as f64;
            let precision = tp / k as f64;
            let recall = tp / positives;
            ap += precision * (recall - prev_recall);
            prev_recall = recall;
        }
        ap
    }

    #[test]
    fn hand_enumerated_example() {
        let ap = average_precision(&[0.9, 0.8, 0.1], &[-1, 1, 1]).unwrap();
        assert!((ap - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_ranking_is_one() {
        for n in 1..20 {
            let labels: Vec<i8> = (0..n).map(|i| if i < (n + 1) / 2 { 1 } else { -1 }).collect();
            let scores: Vec<f64> = (0..n).map(|i| -(i as f64)).collect();
            assert_eq!(average_precision(&scores, &labels).unwrap(), 1.0);
        }
    }

    #[test]
    fn needs_a_positive() {
        assert!(average_precision(&[0.1, 0.2], &[-1, -1]).is_err());
    }

    #[test]
    fn matches_brute_force_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=8usize {
            for pattern in 1u32..(1 << n) {
                let labels: Vec<i8> = (0..n).map(|i| if pattern >> i & 1 == 1 { 1 } else { -1 }).collect();
                // coarse scores so ties occur
                let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64 * 0.25).collect();
                let ap = average_precision(&scores, &labels).unwrap();
                assert!((ap - brute_force_ap(&scores, &labels)).abs() <= 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn invariant_under_monotone_transform(
            scores in proptest::collection::vec(-5.0f64..5.0, 1..40),
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut labels: Vec<i8> = scores.iter().map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
            labels[0] = 1;
            let transformed: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() + 3.0).collect();
            prop_assert_eq!(
                average_precision(&scores, &labels).unwrap(),
                average_precision(&transformed, &labels).unwrap()
            );
        }

        #[test]
        fn ap_lies_in_unit_interval(scores in proptest::collection::vec(-1.0f64..1.0, 2..30)) {
            let labels: Vec<i8> = (0..scores.len()).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
            let ap = average_precision(&scores, &labels).unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));
        }
    }

    #[test]
    fn random_ranker_ap_tracks_prevalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1000;
        let labels: Vec<i8> = (0..n).map(|i| if i < n / 2 { 1 } else { -1 }).collect();
        let mut total = 0.0;
        for _ in 0..1000 {
            let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            total += average_precision(&scores, &labels).unwrap();
        }
        assert!((total / 1000.0 - 0.5).abs() <= 0.02);
    }

    fn manifest(classes: &[&str], per_class: usize, split: Split) -> Manifest {
        let mut records = Vec::new();
        for (c, class) in classes.iter().enumerate() {
            for i in 0..per_class {
                let mut r = ImageRecord::new(format!("{c:02}-{i:05}"), format!("{c}/{i}.png"), &[class]);
                r.split = split;
                records.push(r);
            }
        }
        Manifest::new(classes.iter().map(|s| s.to_string()).collect(), records, "synthetic").unwrap()
    }

    fn table_from(m: &Manifest, f: impl Fn(&ImageRecord, usize) -> f64) -> ScoreTable {
        let rows = m
            .records()
            .iter()
            .map(|r| (r.id.clone(), (0..m.classes().len()).map(|k| f(r, k)).collect()))
            .collect();
        ScoreTable::new(m.classes().to_vec(), rows).unwrap()
    }

    #[test]
    fn perfect_classifier_has_unit_mean_ap() {
        let m = manifest(&["a", "b", "c"], 20, Split::Test);
        let t = table_from(&m, |r, k| if r.has_label(&m.classes()[k]) { 1.0 } else { 0.0 });
        for protocol in [BalanceProtocol::ClassUniform, BalanceProtocol::PerClassBinary] {
            let s = balanced_mean_ap(&t, &m, Some(Split::Test), 1, protocol).unwrap();
            assert_eq!(s.mean_ap, 1.0);
        }
    }

    #[test]
    fn random_baseline_is_inverse_class_count() {
        let classes: Vec<String> = (0..25).map(|i| format!("s{i}")).collect();
        let names: Vec<&str> = classes.iter().map(String::as_str).collect();
        let m = manifest(&names, 200, Split::Test);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut total = 0.0;
        for trial in 0..10 {
            let t = table_from(&m, |_, _| 0.0);
            let rows = t.iter().map(|(id, _)| (id.to_string(), (0..25).map(|_| rng.random()).collect())).collect();
            let t = ScoreTable::new(classes.clone(), rows).unwrap();
            total += balanced_mean_ap(&t, &m, Some(Split::Test), trial, BalanceProtocol::ClassUniform)
                .unwrap()
                .mean_ap;
        }
        assert!((total / 10.0 - 0.043).abs() < 0.01, "{}", total / 10.0);
    }

    #[test]
    fn constant_scores_on_binary_balanced_subsets_average_half() {
        let m = manifest(&["a", "b", "c", "d"], 50, Split::Test);
        let t = table_from(&m, |_, _| 0.0);
        let mut total = 0.0;
        for seed in 0..40 {
            total += balanced_mean_ap(&t, &m, Some(Split::Test), seed, BalanceProtocol::PerClassBinary)
                .unwrap()
                .mean_ap;
        }
        assert!((total / 40.0 - 0.5).abs() < 0.1, "{}", total / 40.0);
    }

    #[test]
    fn missing_scores_are_reported() {
        let m = manifest(&["a", "b"], 3, Split::Test);
        let t = ScoreTable::new(m.classes().to_vec(), vec![("00-00000".into(), vec![0.0, 1.0])]).unwrap();
        assert!(balanced_mean_ap(&t, &m, Some(Split::Test), 0, BalanceProtocol::ClassUniform).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let pairs: Vec<(String, i8)> = (0..10).map(|i| (format!("{i}"), if i < 5 { 1 } else { -1 })).collect();
        let perfect = balanced_accuracy(&pairs, |id| Ok(if id.parse::<u32>().unwrap() < 5 { 1.0 } else { -1.0 }), 0, 0.0).unwrap();
        assert_eq!(perfect, 1.0);
        assert!(balanced_accuracy(&pairs[..5], |_| Ok(0.0), 0, 0.0).is_err());
    }

    #[test]
    fn random_scores_give_chance_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pairs: Vec<(String, i8)> = (0..2000).map(|i| (format!("{i:05}"), if i % 4 == 0 { 1 } else { -1 })).collect();
        let scores: BTreeMap<String, f64> = pairs.iter().map(|(id, _)| (id.clone(), rng.random_range(-1.0..1.0))).collect();
        let mut total = 0.0;
        for seed in 0..10 {
            total += balanced_accuracy(&pairs, |id| Ok(scores[id]), seed, 0.0).unwrap();
        }
        assert!((total / 10.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn negated_twin_accuracies_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pairs: Vec<(String, i8)> = (0..300).map(|i| (format!("{i:04}"), if i % 3 == 0 { 1 } else { -1 })).collect();
        let scores: BTreeMap<String, f64> = pairs.iter().map(|(id, _)| (id.clone(), rng.random_range(-1.0..1.0))).collect();
        for seed in 0..5 {
            let t = 0.123;
            let a = balanced_accuracy(&pairs, |id| Ok(scores[id]), seed, t).unwrap();
            let b = balanced_accuracy(&pairs, |id| Ok(-scores[id]), seed, -t).unwrap();
            assert_eq!(a + b, 1.0);
        }
    }

    #[test]
    fn tuned_threshold_separates_shifted_scores() {
        let scores = [2.0, 2.5, 3.0, 0.1, 0.2, 0.3];
        let labels = [1, 1, 1, -1, -1, -1];
        let t = tune_threshold(&scores, &labels).unwrap();
        assert!(t > 0.3 && t < 2.0);
        assert_eq!(balanced_accuracy_at(&scores, &labels, t).unwrap(), 1.0);
    }

    #[test]
    fn confusion_hand_tally() {
        let mut records = vec![
            ImageRecord::new("r0", "0.png", &["a"]),
            ImageRecord::new("r1", "1.png", &["a"]),
            ImageRecord::new("r2", "2.png", &["b"]),
            ImageRecord::new("r3", "3.png", &["b", "c"]),
            ImageRecord::new("r4", "4.png", &["c"]),
        ];
        records.iter_mut().for_each(|r| r.split = Split::Test);
        let m = Manifest::new(vec!["a".into(), "b".into(), "c".into()], records, "t").unwrap();
        let rows = vec![
            ("r0".into(), vec![0.9, 0.1, 0.0]), // a → a
            ("r1".into(), vec![0.2, 0.2, 0.1]), // a → a (tie, lowest index)
            ("r2".into(), vec![0.0, 0.1, 0.5]), // b → c
            ("r3".into(), vec![0.0, 0.7, 0.2]), // b, c → b
            ("r4".into(), vec![0.0, 0.0, 0.3]), // c → c
        ];
        let t = ScoreTable::new(m.classes().to_vec(), rows).unwrap();
        let ids: Vec<String> = (0..5).map(|i| format!("r{i}")).collect();
        let c = confusion_from(&t, &m, &ids).unwrap();
        assert_eq!(c.matrix, vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5], vec![0.0, 0.5, 0.5]]);
        assert_eq!(c.prior, vec![2.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0]);
        assert_eq!(c.records, 5);
    }

    #[test]
    fn confusion_identity_and_constant() {
        let m = manifest(&["a", "b", "c"], 10, Split::Test);
        let perfect = table_from(&m, |r, k| f64::from(u8::from(r.has_label(&m.classes()[k]))));
        let c = confusion_matrix(&perfect, &m, Some(Split::Test), 0).unwrap();
        for (i, row) in c.matrix.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
        let constant = table_from(&m, |_, k| if k == 2 { 1.0 } else { 0.0 });
        let c = confusion_matrix(&constant, &m, Some(Split::Test), 0).unwrap();
        assert!(c.matrix.iter().all(|row| row == &vec![0.0, 0.0, 1.0]));
        assert!(confusion_matrix(&constant, &m, Some(Split::Val), 0).is_err());
    }

    #[test]
    fn confusion_rows_are_stochastic() {
        let m = manifest(&["a", "b", "c", "d"], 25, Split::Test);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows = m.records().iter().map(|r| (r.id.clone(), (0..4).map(|_| rng.random()).collect())).collect();
        let t = ScoreTable::new(m.classes().to_vec(), rows).unwrap();
        let c = confusion_matrix(&t, &m, Some(Split::Test), 3).unwrap();
        for row in &c.matrix {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        assert!((c.prior.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn pearson_examples() {
        let x = [0.0, 1.0, 1.0, 0.0, 1.0];
        assert!((pearson(&x, &x).unwrap().0 - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&x, &[2.0; 5]).unwrap(), (0.0, true));
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 5.0, 9.0];
        // sxy = 11, sxx = 5, syy = 26
        let expected = 11.0 / (5.0f64.sqrt() * 26.0f64.sqrt());
        assert!((pearson(&x, &y).unwrap().0 - expected).abs() <= 1e-9);
    }

    #[test]
    fn independent_series_are_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        assert!(pearson(&x, &y).unwrap().0.abs() < 0.05);
    }

    #[test]
    fn content_correlation_identity_series() {
        let m = manifest(&["a", "b"], 20, Split::Test);
        let content: BTreeMap<String, Vec<f64>> = m
            .records()
            .iter()
            .map(|r| (r.id.clone(), vec![f64::from(u8::from(r.has_label("a"))), 0.5]))
            .collect();
        let c = content_style_correlation(&["x".into(), "flat".into()], &content, &m, Some(Split::Test)).unwrap();
        assert!((c.values[0][0] - 1.0).abs() < 1e-12);
        assert!((c.values[0][1] + 1.0).abs() < 1e-12);
        assert_eq!(c.degenerate, vec![(1, 0), (1, 1)]);
    }
}
