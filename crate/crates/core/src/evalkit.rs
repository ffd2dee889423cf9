//! Test-case construction and ranking metrics.
//!
//! A test case ranks one held-out positive image against every other image
//! of the same item. Recall@10 and NDCG@10 are averaged over cases with more
//! than ten candidate images; AUC is averaged over all cases. Cases whose item
//! has a single image have nothing to rank against and are dropped.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ImageId, Interaction, ItemId, UserId};
use crate::error::Result;

pub const K: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub user: UserId,
    pub item: ItemId,
    pub positive: ImageId,
    /// `P_i \ {positive}`, in id order.
    pub negatives: Vec<ImageId>,
}

impl TestCase {
    pub fn n_candidates(&self) -> usize {
        self.negatives.len() + 1
    }

    /// Whether the case counts towards Recall@10 / NDCG@10.
    pub fn counts_for_top_k(&self) -> bool {
        self.n_candidates() > K
    }

    pub fn candidates(&self) -> impl Iterator<Item = ImageId> + '_ {
        std::iter::once(self.positive).chain(self.negatives.iter().copied())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSet {
    pub cases: Vec<TestCase>,
    pub degenerate_cases: usize,
}

impl CaseSet {
    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }
}

/// One case per held-out interaction. Train images of the item are included
/// as negatives.
pub fn build_test_cases(d: &Dataset, held_out: &[Interaction]) -> CaseSet {
    let mut set = CaseSet::default();
    for it in held_out {
        let negatives: Vec<ImageId> = d
            .images_of_item(it.item)
            .iter()
            .copied()
            .filter(|&p| p != it.image)
            .collect();
        if negatives.is_empty() {
            set.degenerate_cases += 1;
            continue;
        }
        set.cases.push(TestCase {
            user: it.user,
            item: it.item,
            positive: it.image,
            negatives,
        });
    }
    set
}

/// 1 if the positive is within the top `k`, else 0.
pub fn recall_at_k(rank: usize, k: usize) -> f64 {
    debug_assert!(rank >= 1);
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

/// With a single relevant item the ideal DCG is 1.
pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    debug_assert!(rank >= 1);
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// Fraction of negatives scored below the positive, ties counting half.
pub fn auc_case(score_pos: f64, scores_neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &s in scores_neg {
        if s < score_pos {
            wins += 1.0;
        } else if s == score_pos {
            wins += 0.5;
        }
    }
    wins / scores_neg.len() as f64
}

/// 1-based rank of the positive when candidates are sorted by descending
/// score, ties broken by ascending image id.
pub fn rank_of_positive(positive: (ImageId, f64), negatives: &[(ImageId, f64)]) -> usize {
    let (pid, ps) = positive;
    1 + negatives
        .iter()
        .filter(|&&(id, s)| s > ps || (s == ps && id < pid))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseMetrics {
    pub rank: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub auc: f64,
    pub counts_for_top_k: bool,
}

pub fn case_metrics(case: &TestCase, pos_score: f64, neg_scores: &[f64]) -> CaseMetrics {
    let negs: Vec<(ImageId, f64)> = case
        .negatives
        .iter()
        .copied()
        .zip(neg_scores.iter().copied())
        .collect();
    let rank = rank_of_positive((case.positive, pos_score), &negs);
    CaseMetrics {
        rank,
        recall: recall_at_k(rank, K),
        ndcg: ndcg_at_k(rank, K),
        auc: auc_case(pos_score, neg_scores),
        counts_for_top_k: case.counts_for_top_k(),
    }
}

/// Scores a (user, image) pair; higher means more likely authored.
pub trait Scorer: Sync {
    fn score(&self, user: UserId, image: ImageId) -> Result<f64>;
}

impl<F> Scorer for F
where
    F: Fn(UserId, ImageId) -> Result<f64> + Sync,
{
    fn score(&self, user: UserId, image: ImageId) -> Result<f64> {
        self(user, image)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub recall_at_10: f64,
    pub ndcg_at_10: f64,
    pub auc: f64,
    pub n_cases_total: usize,
    pub n_cases_gt10: usize,
    pub degenerate_cases: usize,
}

/// Per-case metrics for every case, in the order given.
pub fn score_cases(scorer: &dyn Scorer, cases: &[TestCase]) -> Result<Vec<CaseMetrics>> {
    cases
        .par_iter()
        .map(|case| {
            let pos = scorer.score(case.user, case.positive)?;
            let negs = case
                .negatives
                .iter()
                .map(|&p| scorer.score(case.user, p))
                .collect::<Result<Vec<_>>>()?;
            Ok(case_metrics(case, pos, &negs))
        })
        .collect()
}

/// Macro-averaged metrics. Sums run in (user, positive) order so the result
/// does not depend on the order of `cases`. Empty denominators give 0.
pub fn evaluate_with(scorer: &dyn Scorer, cases: &CaseSet) -> Result<MetricReport> {
    let metrics = score_cases(scorer, &cases.cases)?;
    let mut keyed: Vec<((UserId, ImageId), CaseMetrics)> = cases
        .cases
        .iter()
        .map(|c| (c.user, c.positive))
        .zip(metrics)
        .collect();
    keyed.sort_by_key(|(k, _)| *k);

    let (mut recall, mut ndcg, mut auc) = (0.0, 0.0, 0.0);
    let mut gt10 = 0usize;
    for (_, m) in &keyed {
        auc += m.auc;
        if m.counts_for_top_k {
            recall += m.recall;
            ndcg += m.ndcg;
            gt10 += 1;
        }
    }
    let total = keyed.len();
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(MetricReport {
        recall_at_10: mean(recall, gt10),
        ndcg_at_10: mean(ndcg, gt10),
        auc: mean(auc, total),
        n_cases_total: total,
        n_cases_gt10: gt10,
        degenerate_cases: cases.degenerate_cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Record;
    use crate::error::Error;

    #[test]
    fn recall_boundaries() {
        assert_eq!(recall_at_k(1, 10), 1.0);
        assert_eq!(recall_at_k(10, 10), 1.0);
        assert_eq!(recall_at_k(11, 10), 0.0);
    }

    #[test]
    fn ndcg_values() {
        assert_eq!(ndcg_at_k(1, 10), 1.0);
        assert_eq!(ndcg_at_k(3, 10), 0.5);
        assert_eq!(ndcg_at_k(11, 10), 0.0);
    }

    #[test]
    fn auc_values() {
        assert_eq!(auc_case(1.0, &[0.0, 0.5]), 1.0);
        assert_eq!(auc_case(0.5, &[0.0, 1.0]), 0.5);
        assert_eq!(auc_case(0.3, &[0.3, 0.3, 0.3]), 0.5);
    }

    #[test]
    fn ties_rank_lower_id_first() {
        assert_eq!(
            rank_of_positive((ImageId(5), 1.0), &[(ImageId(2), 1.0), (ImageId(9), 1.0)]),
            2
        );
        assert_eq!(rank_of_positive((ImageId(1), 1.0), &[(ImageId(2), 1.0)]), 1);
    }

    fn item_dataset(sizes: &[usize]) -> Dataset {
        let mut recs = Vec::new();
        for (i, &n) in sizes.iter().enumerate() {
            for k in 0..n {
                recs.push(Record::new(
                    format!("u{k}"),
                    format!("i{i}"),
                    format!("i{i}p{k}"),
                    "",
                ));
            }
        }
        Dataset::from_records(recs, "restaurant").unwrap()
    }

    #[test]
    fn cases_use_the_item_images() {
        let d = item_dataset(&[3, 12, 1]);
        let held = [
            d.interactions()[1].clone(),  // item 0, p1
            d.interactions()[3].clone(),  // item 1
            d.interactions()[15].clone(), // item 2, single image
        ];
        let set = build_test_cases(&d, &held);
        assert_eq!(set.len(), 2);
        assert_eq!(set.degenerate_cases, 1);
        assert_eq!(set.cases[0].negatives, vec![ImageId(0), ImageId(2)]);
        assert!(!set.cases[0].counts_for_top_k());
        assert!(set.cases[1].counts_for_top_k());
        assert_eq!(set.cases[1].n_candidates(), 12);
    }

    #[test]
    fn perfect_ranking_of_fifteen() {
        let d = item_dataset(&[15]);
        let set = build_test_cases(&d, &[d.interactions()[4].clone()]);
        let scorer =
            |_: UserId, p: ImageId| -> Result<f64> { Ok(if p == ImageId(4) { 1.0 } else { 0.0 }) };
        let r = evaluate_with(&scorer, &set).unwrap();
        assert_eq!((r.recall_at_10, r.ndcg_at_10, r.auc), (1.0, 1.0, 1.0));
        assert_eq!((r.n_cases_total, r.n_cases_gt10), (1, 1));
    }

    #[test]
    fn auc_is_macro_averaged() {
        let d = item_dataset(&[3, 3]);
        // Case A: positive on top; case B: positive between its negatives.
        let set = build_test_cases(
            &d,
            &[d.interactions()[0].clone(), d.interactions()[4].clone()],
        );
        let scorer = |_: UserId, p: ImageId| -> Result<f64> {
            Ok(match p.0 {
                0 => 3.0,
                1 | 2 => 1.0,
                3 => 5.0,
                4 => 2.0,
                _ => 0.0,
            })
        };
        let r = evaluate_with(&scorer, &set).unwrap();
        assert_eq!(r.auc, 0.75);
        assert_eq!(r.n_cases_gt10, 0);
        assert_eq!(r.recall_at_10, 0.0);
    }

    #[test]
    fn missing_scores_propagate() {
        let d = item_dataset(&[3]);
        let set = build_test_cases(&d, &[d.interactions()[0].clone()]);
        let scorer = |_: UserId, p: ImageId| -> Result<f64> { Err(Error::MissingEmbedding(p)) };
        assert!(matches!(
            evaluate_with(&scorer, &set),
            Err(Error::MissingEmbedding(_))
        ));
    }
}
