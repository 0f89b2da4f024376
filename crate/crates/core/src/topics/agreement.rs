//! Cohen's kappa for binary topic labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnnotationSet, TopicError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub n_items: usize,
    /// Both raters gave one identical constant label, so chance agreement
    /// is 1 and kappa is reported as 1.
    pub degenerate: bool,
}

impl AgreementReport {
    /// From a 2x2 table: `both_yes`, `a_yes_b_no`, `a_no_b_yes`, `both_no`.
    pub fn from_contingency(both_yes: u64, a_yes_b_no: u64, a_no_b_yes: u64, both_no: u64) -> Self {
        let n = both_yes + a_yes_b_no + a_no_b_yes + both_no;
        let a_yes = both_yes + a_yes_b_no;
        let b_yes = both_yes + a_no_b_yes;
        // Integer numerators keep p_o - p_e exact up to one final division.
        let agree = (both_yes + both_no) as u128 * n as u128;
        let chance = a_yes as u128 * b_yes as u128 + (n - a_yes) as u128 * (n - b_yes) as u128;
        let total = n as u128 * n as u128;
        let nf = n as f64;
        let observed_agreement = (both_yes + both_no) as f64 / nf;
        let expected_agreement = chance as f64 / total as f64;
        if chance == total {
            return Self { kappa: 1.0, observed_agreement, expected_agreement, n_items: n as usize, degenerate: true };
        }
        let kappa = (agree as f64 - chance as f64) / (total as f64 - chance as f64);
        Self { kappa, observed_agreement, expected_agreement, n_items: n as usize, degenerate: false }
    }
}

/// Two-rater kappa over aligned binary label sequences.
pub fn cohens_kappa(a: &[bool], b: &[bool]) -> Result<AgreementReport, TopicError> {
    if a.len() != b.len() {
        return Err(TopicError::InvalidInput(format!("label sequences differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(TopicError::InvalidInput("no items to compare".into()));
    }
    let mut t = [0u64; 4];
    for (&x, &y) in a.iter().zip(b) {
        t[match (x, y) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        }] += 1;
    }
    Ok(AgreementReport::from_contingency(t[0], t[1], t[2], t[3]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAgreement {
    pub topic_id: String,
    /// Keyed by `(annotator, annotator)` with the first lexicographically smaller.
    pub pairs: BTreeMap<(String, String), AgreementReport>,
    pub mean_kappa: Option<f64>,
}

/// Mean pairwise kappa for one topic over items each pair labeled in common.
///
/// A conversation counts as positive for an annotator when any of their
/// records for it marks the topic with label 1.
pub fn mean_pairwise_kappa(annotations: &AnnotationSet, topic_id: &str) -> PairwiseAgreement {
    let by_annotator = annotations.labels_for_topic(topic_id);
    let annotators: Vec<&String> = by_annotator.keys().collect();
    let mut pairs = BTreeMap::new();
    for (i, a) in annotators.iter().enumerate() {
        for b in &annotators[i + 1..] {
            let (la, lb) = (&by_annotator[*a], &by_annotator[*b]);
            let (xs, ys): (Vec<bool>, Vec<bool>) =
                la.iter().filter_map(|(conv, x)| lb.get(conv).map(|y| (*x, *y))).unzip();
            if let Ok(report) = cohens_kappa(&xs, &ys) {
                pairs.insert(((*a).clone(), (*b).clone()), report);
            }
        }
    }
    let mean_kappa =
        (!pairs.is_empty()).then(|| pairs.values().map(|r: &AgreementReport| r.kappa).sum::<f64>() / pairs.len() as f64);
    PairwiseAgreement { topic_id: topic_id.to_string(), pairs, mean_kappa }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_table() {
        let r = AgreementReport::from_contingency(20, 5, 10, 15);
        assert!((r.observed_agreement - 0.7).abs() < 1e-12);
        assert!((r.expected_agreement - 0.5).abs() < 1e-12);
        assert!((r.kappa - 0.4).abs() < 1e-12);
    }

    #[test]
    fn independent_table_is_zero() {
        let r = AgreementReport::from_contingency(6, 14, 9, 21);
        assert!((r.observed_agreement - 0.54).abs() < 1e-12);
        assert!((r.expected_agreement - 0.54).abs() < 1e-12);
        assert!(r.kappa.abs() < 1e-12);
    }

    #[test]
    fn identical_mixed_labels() {
        let x = [true, false, true, true, false];
        assert_eq!(cohens_kappa(&x, &x).unwrap().kappa, 1.0);
    }

    #[test]
    fn constant_equal_raters_are_degenerate() {
        let r = cohens_kappa(&[true; 4], &[true; 4]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.kappa, 1.0);
    }

    #[test]
    fn length_mismatch_and_empty() {
        assert!(cohens_kappa(&[true], &[]).is_err());
        assert!(cohens_kappa(&[], &[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn kappa_is_bounded(pairs in proptest::collection::vec((proptest::bool::ANY, proptest::bool::ANY), 1..200)) {
            let (a, b): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
            let r = cohens_kappa(&a, &b).unwrap();
            proptest::prop_assert!((-1.0..=1.0).contains(&r.kappa), "{}", r.kappa);
            if a.iter().any(|x| *x) && a.iter().any(|x| !*x) {
                proptest::prop_assert_eq!(cohens_kappa(&a, &a).unwrap().kappa, 1.0);
            }
        }
    }
}
