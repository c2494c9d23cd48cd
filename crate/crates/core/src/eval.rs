//! Sampled-candidate ranking evaluation: each held-out positive is ranked
//! against a fixed number of concepts the user never interacted with.

use std::cmp::Ordering;
use std::fmt::Write as _;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mf::{predict_all_for_user, ranking_order, MfParams};
use crate::train::RatingMatrix;

pub const DEFAULT_NEGATIVES: usize = 99;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalInstance {
    pub user: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

impl EvalInstance {
    /// Positive first, then the negatives in sampled order.
    pub fn candidates(&self) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.negatives.len() + 1);
        c.push(self.positive);
        c.extend_from_slice(&self.negatives);
        c
    }
}

/// One instance per `(user, concept)` test pair, with `negatives` concepts
/// drawn without replacement from those the user touched in neither split.
pub fn build_eval_instances(
    train: &RatingMatrix,
    test: &[(usize, usize)],
    negatives: usize,
    seed: u64,
) -> Result<Vec<EvalInstance>> {
    if test.is_empty() {
        return Err(Error::Config("test split is empty".into()));
    }
    let n = train.concepts();
    let mut test_items: Vec<Vec<usize>> = vec![Vec::new(); train.users()];
    for &(u, k) in test {
        if u >= train.users() || k >= n {
            return Err(Error::IndexOutOfRange(format!("test pair ({u}, {k})")));
        }
        test_items[u].push(k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(test.len());
    for &(u, k) in test {
        let mut seen = vec![false; n];
        for c in train.user_items(u).into_iter().chain(test_items[u].iter().copied()) {
            seen[c] = true;
        }
        let eligible: Vec<usize> = (0..n).filter(|c| !seen[*c]).collect();
        if eligible.len() < negatives {
            return Err(Error::NotEnoughNegatives {
                user: u.to_string(),
                available: eligible.len(),
                requested: negatives,
            });
        }
        let picked = rand::seq::index::sample(&mut rng, eligible.len(), negatives);
        out.push(EvalInstance { user: u, positive: k, negatives: picked.iter().map(|i| eligible[i]).collect() });
    }
    Ok(out)
}

/// 1-based rank of `positive` among scored candidates, or `None` if absent.
pub fn rank_of(scored: &[(usize, f64)], positive: usize) -> Option<usize> {
    let pos = *scored.iter().find(|c| c.0 == positive)?;
    Some(1 + scored.iter().filter(|c| c.0 != positive && ranking_order(c, &pos) == Ordering::Less).count())
}

pub fn hr_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

/// Single-positive NDCG: the ideal ranking puts the positive first.
pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// NDCG@K for arbitrary graded relevances listed in ranked order, normalized
/// by the ideal ordering of the same relevances.
pub fn ndcg_multi(ranked_relevance: &[f64], k: usize) -> f64 {
    let dcg = |rels: &[f64]| -> f64 { rels.iter().take(k).enumerate().map(|(i, r)| r / ((i + 2) as f64).log2()).sum() };
    let mut ideal = ranked_relevance.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let z = dcg(&ideal);
    if z == 0.0 {
        0.0
    } else {
        dcg(ranked_relevance) / z
    }
}

pub fn reciprocal_rank(rank: usize) -> f64 {
    1.0 / rank as f64
}

/// Fraction of negatives scored strictly below the positive, ties at half.
pub fn auc_single(positive: f64, negatives: &[f64]) -> f64 {
    if negatives.is_empty() {
        return 1.0;
    }
    let credit: f64 = negatives
        .iter()
        .map(|&s| match s.total_cmp(&positive) {
            Ordering::Less => 1.0,
            Ordering::Equal => 0.5,
            Ordering::Greater => 0.0,
        })
        .sum();
    credit / negatives.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceOutcome {
    pub rank: usize,
    pub auc: f64,
}

/// Scores are aligned with `inst.candidates()`.
pub fn score_instance(inst: &EvalInstance, scores: &[f64]) -> Result<InstanceOutcome> {
    let cands = inst.candidates();
    if scores.len() != cands.len() {
        return Err(Error::Shape(format!("{} scores for {} candidates", scores.len(), cands.len())));
    }
    let scored: Vec<(usize, f64)> = cands.into_iter().zip(scores.iter().copied()).collect();
    let rank = rank_of(&scored, inst.positive).expect("positive is always a candidate");
    Ok(InstanceOutcome { rank, auc: auc_single(scores[0], &scores[1..]) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "hr@1")]
    pub hr1: f64,
    #[serde(rename = "hr@5")]
    pub hr5: f64,
    #[serde(rename = "hr@10")]
    pub hr10: f64,
    #[serde(rename = "hr@20")]
    pub hr20: f64,
    #[serde(rename = "ndcg@5")]
    pub ndcg5: f64,
    #[serde(rename = "ndcg@10")]
    pub ndcg10: f64,
    #[serde(rename = "ndcg@20")]
    pub ndcg20: f64,
    pub mrr: f64,
    pub auc: f64,
    pub n_instances: usize,
}

impl MetricReport {
    pub fn aggregate(outcomes: &[InstanceOutcome]) -> Self {
        let n = outcomes.len();
        let mean = |f: &dyn Fn(&InstanceOutcome) -> f64| -> f64 {
            if n == 0 {
                0.0
            } else {
                outcomes.iter().map(f).sum::<f64>() / n as f64
            }
        };
        MetricReport {
            hr1: mean(&|o| hr_at_k(o.rank, 1)),
            hr5: mean(&|o| hr_at_k(o.rank, 5)),
            hr10: mean(&|o| hr_at_k(o.rank, 10)),
            hr20: mean(&|o| hr_at_k(o.rank, 20)),
            ndcg5: mean(&|o| ndcg_at_k(o.rank, 5)),
            ndcg10: mean(&|o| ndcg_at_k(o.rank, 10)),
            ndcg20: mean(&|o| ndcg_at_k(o.rank, 20)),
            mrr: mean(&|o| reciprocal_rank(o.rank)),
            auc: mean(&|o| o.auc),
            n_instances: n,
        }
    }

    /// `(key, value)` pairs in report order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("hr@1", self.hr1.to_string()),
            ("hr@5", self.hr5.to_string()),
            ("hr@10", self.hr10.to_string()),
            ("hr@20", self.hr20.to_string()),
            ("ndcg@5", self.ndcg5.to_string()),
            ("ndcg@10", self.ndcg10.to_string()),
            ("ndcg@20", self.ndcg20.to_string()),
            ("mrr", self.mrr.to_string()),
            ("auc", self.auc.to_string()),
            ("n_instances", self.n_instances.to_string()),
        ]
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metric report serializes");
        s.push('\n');
        s
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("metric\tvalue\n");
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k}\t{v}");
        }
        s
    }
}

/// Ranks every instance with the factorization scorer.
pub fn evaluate(
    params: &MfParams,
    e_users: &Array2<f64>,
    e_concepts: &Array2<f64>,
    instances: &[EvalInstance],
) -> Result<MetricReport> {
    let outcomes = instances
        .par_iter()
        .map(|inst| {
            let scores = predict_all_for_user(params, e_users, e_concepts, inst.user, &inst.candidates())?;
            score_instance(inst, &scores)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::aggregate(&outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_arithmetic() {
        let train = RatingMatrix::new(2, 200, vec![(0, 0, 1.0), (1, 5, 2.0)]).unwrap();
        let test = [(0, 1), (0, 2), (1, 3)];
        let inst = build_eval_instances(&train, &test, 99, 3).unwrap();
        assert_eq!(inst.len(), 3);
        for i in &inst {
            assert_eq!(i.candidates().len(), 100);
            let mut sorted = i.negatives.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), 99);
            let forbidden: &[usize] = if i.user == 0 { &[0, 1, 2] } else { &[5, 3] };
            assert!(i.negatives.iter().all(|k| !forbidden.contains(k)));
        }
        assert_eq!(inst, build_eval_instances(&train, &test, 99, 3).unwrap());
    }

    #[test]
    fn too_few_negatives_names_user() {
        let trip: Vec<_> = (0..150).map(|k| (7, k, 1.0)).collect();
        let train = RatingMatrix::new(8, 200, trip).unwrap();
        let err = build_eval_instances(&train, &[(7, 199)], 99, 0).unwrap_err();
        assert!(matches!(err, Error::NotEnoughNegatives { ref user, available: 49, requested: 99 } if user == "7"));
        assert!(build_eval_instances(&train, &[], 99, 0).is_err());
    }

    #[test]
    fn single_instance_metrics() {
        assert_eq!(hr_at_k(1, 5), 1.0);
        assert_eq!(hr_at_k(6, 5), 0.0);
        assert_eq!(ndcg_at_k(1, 5), 1.0);
        assert_eq!(ndcg_at_k(3, 5), 0.5);
        assert_eq!(ndcg_at_k(11, 10), 0.0);
        assert_eq!(reciprocal_rank(4), 0.25);
        let mean_rr = (reciprocal_rank(1) + reciprocal_rank(100)) / 2.0;
        assert_eq!(mean_rr, 0.505);
    }

    #[test]
    fn auc_conventions() {
        assert_eq!(auc_single(1.0, &[0.0; 99]), 1.0);
        let mut negs = vec![0.0; 90];
        negs.extend(vec![2.0; 9]);
        assert!((auc_single(1.0, &negs) - 90.0 / 99.0).abs() < 1e-15);
        assert_eq!(auc_single(0.3, &[0.3; 99]), 0.5);
    }

    #[test]
    fn ties_rank_by_concept_index() {
        let scored = [(4, 1.0), (2, 1.0), (9, 1.0)];
        assert_eq!(rank_of(&scored, 2), Some(1));
        assert_eq!(rank_of(&scored, 4), Some(2));
        assert_eq!(rank_of(&scored, 9), Some(3));
        assert_eq!(rank_of(&scored, 5), None);
    }

    #[test]
    fn multi_positive_ndcg() {
        assert_eq!(ndcg_multi(&[1.0, 0.0, 0.0], 3), 1.0);
        assert_eq!(ndcg_multi(&[0.0, 0.0, 1.0], 3), 0.5);
        assert_eq!(ndcg_multi(&[0.0, 0.0], 2), 0.0);
        // Two positives at ranks 2 and 3 versus ideal ranks 1 and 2.
        let expected = (1.0 / 3f64.log2() + 0.5) / (1.0 + 1.0 / 3f64.log2());
        assert!((ndcg_multi(&[0.0, 1.0, 1.0], 3) - expected).abs() < 1e-15);
    }

    #[test]
    fn report_keys_and_order() {
        let r = MetricReport::aggregate(&[InstanceOutcome { rank: 1, auc: 1.0 }]);
        let json = r.to_json();
        let keys = ["hr@1", "hr@5", "hr@10", "hr@20", "ndcg@5", "ndcg@10", "ndcg@20", "mrr", "auc", "n_instances"];
        let mut last = 0;
        for k in keys {
            let at = json.find(&format!("\"{k}\"")).unwrap();
            assert!(at >= last);
            last = at;
        }
        assert!(r.to_tsv().contains("hr@10\t1\n"));
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
