//! Precision/recall evaluation: per-class average precision and its mean.
//!
//! Items are ranked by descending score, breaking ties by ascending original
//! index. Average precision is the recall-weighted sum of precisions along
//! that ranking, which equals the mean of the precision values at the ranks
//! where positives sit. [`reference_average_precision`] recomputes AP by a
//! structurally different O(N²) counting argument and exists purely to
//! cross-check [`average_precision`].

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Precision/recall trace along the full ranking.
#[derive(Debug, Clone)]
pub struct PrCurve {
    /// Item indices in rank order (score descending, index ascending).
    pub ranking: Vec<usize>,
    /// Precision after each rank (1-based rank `k` lives at `[k - 1]`).
    pub precision: Vec<f64>,
    /// Recall after each rank.
    pub recall: Vec<f64>,
}

fn check_inputs(scores: &[f32], labels: &[bool], class: &str) -> Result<usize> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            "precision/recall inputs",
            format!("{} labels", scores.len()),
            format!("{}", labels.len()),
        ));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("cannot rank zero items".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite score while ranking class {class:?}"
        )));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::NoPositives { class: class.to_string() });
    }
    Ok(positives)
}

/// Rank items and trace precision and recall after every rank. Errors if the
/// class has no positive items (recall would be undefined); `class` only
/// labels that error.
pub fn pr_curve(scores: &[f32], labels: &[bool], class: &str) -> Result<PrCurve> {
    let positives = check_inputs(scores, labels, class)?;
    let mut ranking: Vec<usize> = (0..scores.len()).collect();
    ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut precision = Vec::with_capacity(ranking.len());
    let mut recall = Vec::with_capacity(ranking.len());
    let mut tp = 0usize;
    for (k, &item) in ranking.iter().enumerate() {
        if labels[item] {
            tp += 1;
        }
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / positives as f64);
    }
    Ok(PrCurve { ranking, precision, recall })
}

/// Average precision: the sum of `(recall_k - recall_{k-1}) * precision_k`
/// over the ranking. `class` only labels the no-positives error.
pub fn average_precision(scores: &[f32], labels: &[bool], class: &str) -> Result<f64> {
    let curve = pr_curve(scores, labels, class)?;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in curve.precision.iter().zip(&curve.recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    Ok(ap)
}

/// Independent AP computation for cross-checking: for each positive item,
/// count how many items outrank it (higher score, or equal score with an
/// index no larger) and how many of those are positive; average those
/// precision fractions. No sorting involved.
pub fn reference_average_precision(scores: &[f32], labels: &[bool], class: &str) -> Result<f64> {
    let positives = check_inputs(scores, labels, class)?;
    let mut total = 0.0f64;
    for t in 0..scores.len() {
        if !labels[t] {
            continue;
        }
        let mut at_or_above = 0usize;
        let mut positive_above = 0usize;
        for j in 0..scores.len() {
            let outranks = scores[j] > scores[t] || (scores[j] == scores[t] && j <= t);
            if outranks {
                at_or_above += 1;
                if labels[j] {
                    positive_above += 1;
                }
            }
        }
        total += positive_above as f64 / at_or_above as f64;
    }
    Ok(total / positives as f64)
}

/// Per-class APs and their mean over the classes where AP is defined.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    /// `None` marks a class with no positive items, excluded from the mean.
    pub per_class_ap: Vec<Option<f64>>,
    pub mean_ap: f64,
}

/// One-vs-rest evaluation of a score matrix. `scores` is `[N, C]`; item `i`
/// has true class `labels[i]`. Classes without positives are reported as
/// `None`, logged, and excluded from the mean; it is an error for every
/// class to be empty.
pub fn evaluate(scores: &Tensor, labels: &[usize], class_names: &[String]) -> Result<EvalReport> {
    if scores.rank() != 2 {
        return Err(Error::shape("evaluate scores", "[N, C]", format!("{:?}", scores.dims())));
    }
    let (n, c) = (scores.dims()[0], scores.dims()[1]);
    if labels.len() != n {
        return Err(Error::shape("evaluate labels", format!("{n}"), format!("{}", labels.len())));
    }
    if class_names.len() != c {
        return Err(Error::shape(
            "evaluate class names",
            format!("{c}"),
            format!("{}", class_names.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let mut per_class_ap = Vec::with_capacity(c);
    for (class_idx, name) in class_names.iter().enumerate() {
        let column: Vec<f32> = (0..n).map(|i| scores.get(&[i, class_idx])).collect();
        let mask: Vec<bool> = labels.iter().map(|&l| l == class_idx).collect();
        match average_precision(&column, &mask, name) {
            Ok(ap) => per_class_ap.push(Some(ap)),
            Err(Error::NoPositives { class }) => {
                log::warn!("class {class:?} has no positive items; excluded from the mean");
                per_class_ap.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let defined: Vec<f64> = per_class_ap.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::InvalidArgument(
            "no class has positive items; mean AP undefined".into(),
        ));
    }
    let mean_ap = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(EvalReport { class_names: class_names.to_vec(), per_class_ap, mean_ap })
}

impl EvalReport {
    /// Human-readable table: one `name<TAB>AP` line per class (six decimals,
    /// `undefined` for empty classes), then a final `mAP` line.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for (name, ap) in self.class_names.iter().zip(&self.per_class_ap) {
            match ap {
                Some(v) => {
                    let _ = writeln!(out, "{name}\t{v:.6}");
                }
                None => {
                    let _ = writeln!(out, "{name}\tundefined");
                }
            }
        }
        let _ = writeln!(out, "mAP\t{:.6}", self.mean_ap);
        out
    }

    /// Machine-readable CSV in the same column layout as a score file: an
    /// `id,<class names>` header and a single `AP` row with full-precision
    /// values.
    pub fn machine(&self) -> String {
        let mut out = format!("id,{}\n", self.class_names.join(","));
        out.push_str("AP");
        for ap in &self.per_class_ap {
            match ap {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push_str(",undefined"),
            }
        }
        out.push('\n');
        out
    }

    /// Write the text report to `path` and the machine form alongside it at
    /// `path` + `.csv`.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.text()).map_err(|e| Error::io(path, e))?;
        let mut csv = path.as_os_str().to_owned();
        csv.push(".csv");
        let csv = Path::new(&csv);
        std::fs::write(csv, self.machine()).map_err(|e| Error::io(csv, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example_matches_hand_arithmetic() {
        // Ranking: 0.9(+), 0.8(-), 0.7(+), 0.6(+).
        // Precisions at the positive ranks: 1/1, 2/3, 3/4.
        let scores = [0.9, 0.8, 0.7, 0.6];
        let labels = [true, false, true, true];
        let ap = average_precision(&scores, &labels, "test").unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0 + 3.0 / 4.0) / 3.0).abs() < 1e-12);
        let curve = pr_curve(&scores, &labels, "test").unwrap();
        assert_eq!(curve.ranking, [0, 1, 2, 3]);
        assert_eq!(curve.precision, [1.0, 0.5, 2.0 / 3.0, 0.75]);
        assert_eq!(curve.recall, [1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn extreme_rankings_hit_the_bounds() {
        // Perfect ranking -> 1; single positive ranked dead last -> 1/N.
        let perfect = average_precision(&[0.9, 0.8, 0.1], &[true, true, false], "t").unwrap();
        assert_eq!(perfect, 1.0);
        let worst = average_precision(&[0.9, 0.8, 0.1], &[false, false, true], "t").unwrap();
        assert!((worst - 1.0 / 3.0).abs() < 1e-12);
        let all = average_precision(&[0.5, 0.4], &[true, true], "t").unwrap();
        assert_eq!(all, 1.0);
    }

    #[test]
    fn ties_break_by_original_index() {
        // Equal scores: the earlier item ranks first.
        let ap_late = average_precision(&[0.5, 0.5], &[false, true], "t").unwrap();
        assert!((ap_late - 0.5).abs() < 1e-12);
        let ap_early = average_precision(&[0.5, 0.5], &[true, false], "t").unwrap();
        assert_eq!(ap_early, 1.0);
        let curve = pr_curve(&[0.3, 0.7, 0.3], &[true, false, true], "t").unwrap();
        assert_eq!(curve.ranking, [1, 0, 2]);
    }

    #[test]
    fn monotone_score_transforms_leave_ap_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(2..15);
            let scores: Vec<f32> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            labels[0] = true;
            let base = average_precision(&scores, &labels, "t").unwrap();
            let squashed: Vec<f32> = scores.iter().map(|s| (s * 0.5).tanh()).collect();
            let shifted: Vec<f32> = scores.iter().map(|s| s * 7.3 + 2.0).collect();
            for other in [&squashed, &shifted] {
                let ap = average_precision(other, &labels, "t").unwrap();
                assert!((ap - base).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oracle_agrees_with_the_curve_formulation_under_heavy_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..300 {
            let n = rng.gen_range(1..=20);
            // Quantized scores force frequent exact ties.
            let scores: Vec<f32> = (0..n).map(|_| rng.gen_range(0..=6) as f32 / 6.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            labels[rng.gen_range(0..n)] = true;
            let fast = average_precision(&scores, &labels, "t").unwrap();
            let slow = reference_average_precision(&scores, &labels, "t").unwrap();
            assert!(
                (fast - slow).abs() < 1e-9,
                "trial {trial}: {fast} vs {slow} on {scores:?} {labels:?}"
            );
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            average_precision(&[0.5], &[false], "empty-class"),
            Err(Error::NoPositives { class }) if class == "empty-class"
        ));
        assert!(average_precision(&[], &[], "t").is_err());
        assert!(average_precision(&[0.1, 0.2], &[true], "t").is_err());
        assert!(average_precision(&[f32::NAN, 0.2], &[true, false], "t").is_err());
    }

    #[test]
    fn evaluate_reports_per_class_and_mean() {
        // Two items of class 0, one of class 1, none of class 2.
        let scores = Tensor::from_vec(
            &[3, 3],
            vec![
                0.8, 0.1, 0.1, // item 0, class 0
                0.2, 0.6, 0.2, // item 1, class 1
                0.7, 0.2, 0.1, // item 2, class 0
            ],
        )
        .unwrap();
        let labels = [0usize, 1, 0];
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let report = evaluate(&scores, &labels, &names).unwrap();
        // Class a: column [0.8, 0.2, 0.7], positives {0, 2} -> ranks 1 and 2.
        assert!((report.per_class_ap[0].unwrap() - 1.0).abs() < 1e-12);
        // Class b: column [0.1, 0.6, 0.2], positive {1} tops the ranking.
        assert!((report.per_class_ap[1].unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(report.per_class_ap[2], None);
        assert!((report.mean_ap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_rejects_label_and_shape_mismatches() {
        let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let scores = Tensor::from_vec(&[2, 2], vec![0.9, 0.1, 0.1, 0.9]).unwrap();
        assert!(evaluate(&scores, &[0, 2], &names).is_err()); // label range
        assert!(evaluate(&scores, &[0], &names).is_err()); // label count
        assert!(evaluate(&scores, &[0, 1], &names[..1].to_vec().as_slice()).is_err());
        let flat = Tensor::from_vec(&[4], vec![0.0; 4]).unwrap();
        assert!(evaluate(&flat, &[0, 1], &names).is_err());
        // All classes empty -> mean undefined.
        let one_sided = evaluate(&scores, &[0, 0], &names);
        assert!(one_sided.is_ok()); // class b empty but a defined
        assert_eq!(one_sided.unwrap().per_class_ap[1], None);
    }

    #[test]
    fn report_serializations_are_stable() {
        let report = EvalReport {
            class_names: vec!["a".into(), "b".into()],
            per_class_ap: vec![Some(0.5), None],
            mean_ap: 0.5,
        };
        assert_eq!(report.text(), "a\t0.500000\nb\tundefined\nmAP\t0.500000\n");
        assert_eq!(report.machine(), "id,a,b\nAP,0.5,undefined\n");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.txt");
        report.save(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), report.text());
        assert_eq!(
            std::fs::read_to_string(dir.path().join("report.txt.csv")).unwrap(),
            report.machine()
        );
    }

    #[test]
    fn recall_is_monotone_and_ends_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = rng.gen_range(1..12);
            let scores: Vec<f32> = (0..n).map(|_| rng.gen_range(0..4) as f32).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            labels[0] = true;
            let curve = pr_curve(&scores, &labels, "t").unwrap();
            for w in curve.recall.windows(2) {
                assert!(w[1] >= w[0]);
            }
            assert_eq!(*curve.recall.last().unwrap(), 1.0);
        }
    }
}
