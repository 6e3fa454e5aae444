//! Accuracy and explainability metrics, and the sweep runner.
//!
//! * RMSE over held-out ratings, in rating units.
//! * nDCG@k over the full unrated candidate list, with graded gains equal to
//!   the held-out rating when it is at least [`RELEVANCE_THRESHOLD`].
//! * MEP: fraction of a user's top-n that is explainable (score above θ).
//! * MER: fraction of a user's explainable unrated items that made the top-n.

mod experiment;

pub use experiment::{
    run_experiment, Aggregate, Cell, CellFailure, ExperimentConfig, GridShape, MetricsReport, ModelTag,
    ReportRow, REPORT_HEADER,
};

use crate::dataset::{DatasetSplit, RatingMatrix, RatingRecord};
use crate::error::{Error, Result};
use crate::neighborhood::ExplainabilityMatrix;
use crate::ranking;
use crate::rbm::RbmRecommender;

/// Held-out ratings at or above this count as relevant.
pub const RELEVANCE_THRESHOLD: u8 = 4;

pub const DEFAULT_TOP_N: usize = 10;

/// Anything that can score every item for a user.
pub trait Recommender {
    /// Per-item scores; rating units when [`Recommender::predicts_ratings`].
    fn scores(&self, user: usize) -> Result<Vec<f64>>;

    fn predicts_ratings(&self) -> bool;
}

impl Recommender for RbmRecommender<'_> {
    fn scores(&self, user: usize) -> Result<Vec<f64>> {
        self.predict_user(user)
    }

    fn predicts_ratings(&self) -> bool {
        true
    }
}

/// Root mean squared error over `truth`. An empty test set scores 0.
pub fn rmse(predict: impl Fn(usize, usize) -> Option<f64>, truth: &[RatingRecord]) -> Result<f64> {
    if truth.is_empty() {
        return Ok(0.0);
    }
    let mut sq = 0.0;
    for r in truth {
        let p = predict(r.user, r.item).ok_or(Error::MissingPrediction {
            user: r.user,
            item: r.item,
        })?;
        let e = f64::from(r.rating) - p;
        sq += e * e;
    }
    Ok((sq / truth.len() as f64).sqrt())
}

pub fn relevance_gain(rating: u8) -> f64 {
    if rating >= RELEVANCE_THRESHOLD {
        f64::from(rating)
    } else {
        0.0
    }
}

fn dcg(gains: impl Iterator<Item = f64>) -> f64 {
    gains
        .enumerate()
        .map(|(p, g)| g / ((p + 2) as f64).log2())
        .sum()
}

/// Normalized DCG of the first `k` entries of `ranked`. `gains` lists the
/// items with their gains; unlisted items gain 0. Zero when no item has a
/// positive gain.
pub fn ndcg_at_k(ranked: &[usize], gains: &[(usize, f64)], k: usize) -> f64 {
    let mut ideal: Vec<f64> = gains.iter().map(|&(_, g)| g).filter(|&g| g > 0.0).collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(ideal.into_iter().take(k));
    if idcg == 0.0 {
        return 0.0;
    }
    let gain_of = |item: usize| {
        gains
            .iter()
            .find(|&&(i, _)| i == item)
            .map_or(0.0, |&(_, g)| g)
    };
    dcg(ranked.iter().take(k).map(|&i| gain_of(i))) / idcg
}

/// Mean explainability precision over users with non-empty lists.
pub fn mep(lists: &[(usize, Vec<usize>)], expl: &ExplainabilityMatrix, theta: f64) -> f64 {
    let per_user: Vec<f64> = lists
        .iter()
        .filter(|(_, list)| !list.is_empty())
        .map(|(u, list)| {
            let hits = list.iter().filter(|&&i| expl.score(*u, i) > theta).count();
            hits as f64 / list.len() as f64
        })
        .collect();
    mean(&per_user)
}

/// Mean explainability recall: per user, recommended explainable items over
/// all explainable items the user has not rated in `train`. Users with no
/// such items are skipped.
pub fn mer(lists: &[(usize, Vec<usize>)], expl: &ExplainabilityMatrix, theta: f64, train: &RatingMatrix) -> f64 {
    let per_user: Vec<f64> = lists
        .iter()
        .filter_map(|(u, list)| {
            let candidates = expl
                .row(*u)
                .iter()
                .filter(|&&(i, s)| s > theta && !train.is_rated(*u, i))
                .count();
            if candidates == 0 {
                return None;
            }
            let hits = list.iter().filter(|&&i| expl.score(*u, i) > theta).count();
            Some(hits as f64 / candidates as f64)
        })
        .collect();
    mean(&per_user)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// All four metrics for one model on one split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    /// Absent for models that only rank.
    pub rmse: Option<f64>,
    pub ndcg: f64,
    pub mep: f64,
    pub mer: f64,
}

/// Evaluates every user with at least one held-out rating: RMSE on the
/// held-out pairs, nDCG@`n` and MEP/MER on the top-`n` unrated items.
pub fn evaluate(
    rec: &dyn Recommender,
    split: &DatasetSplit,
    expl: &ExplainabilityMatrix,
    n: usize,
    theta: f64,
) -> Result<Metrics> {
    let mut sq = 0.0;
    let mut n_test = 0usize;
    let mut ndcgs = Vec::new();
    let mut lists = Vec::new();
    for (user, test) in split.test_by_user().into_iter().enumerate() {
        if test.is_empty() {
            continue;
        }
        let scores = rec.scores(user)?;
        if rec.predicts_ratings() {
            for r in &test {
                let e = f64::from(r.rating) - scores[r.item];
                sq += e * e;
            }
            n_test += test.len();
        }
        let top = ranking::top_n_unrated(&scores, split.train.row(user), n);
        let gains: Vec<(usize, f64)> = test.iter().map(|r| (r.item, relevance_gain(r.rating))).collect();
        ndcgs.push(ndcg_at_k(&top, &gains, n));
        lists.push((user, top));
    }
    let rmse = (rec.predicts_ratings() && n_test > 0).then(|| (sq / n_test as f64).sqrt());
    Ok(Metrics {
        rmse,
        ndcg: mean(&ndcgs),
        mep: mep(&lists, expl, theta),
        mer: mer(&lists, expl, theta, &split.train),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(user: usize, item: usize, rating: u8) -> RatingRecord {
        RatingRecord {
            user,
            item,
            rating,
            timestamp: 0,
        }
    }

    /// DCG straight from the definition, 1-based positions.
    fn brute_dcg(order: &[usize], gain: &dyn Fn(usize) -> f64, k: usize) -> f64 {
        let mut total = 0.0;
        for p in 1..=order.len().min(k) {
            total += gain(order[p - 1]) / (p as f64 + 1.0).log2();
        }
        total
    }

    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for (i, &x) in items.iter().enumerate() {
            let mut rest = items.to_vec();
            rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn rmse_examples() {
        let truth = [rec(0, 0, 3), rec(0, 1, 5)];
        assert_eq!(rmse(|_, i| Some([3.0, 5.0][i]), &truth).unwrap(), 0.0);
        assert_eq!(rmse(|_, i| Some([4.0, 4.0][i]), &truth).unwrap(), 1.0);
        let r = rmse(|_, i| Some([4.0, 3.0][i]), &truth).unwrap();
        assert!((r - (2.5f64).sqrt()).abs() < 1e-12);
        assert!((r - 1.5811388300841898).abs() < 1e-12);
        assert!(matches!(
            rmse(|_, i| (i == 0).then_some(1.0), &truth),
            Err(Error::MissingPrediction { user: 0, item: 1 })
        ));
    }

    #[test]
    fn ndcg_worked_example() {
        let gains = [(0, 3.0), (1, 2.0), (2, 0.0)];
        assert_eq!(ndcg_at_k(&[0, 1, 2], &gains, 10), 1.0);
        let got = ndcg_at_k(&[2, 0, 1], &gains, 10);
        let want = (3.0 / 3f64.log2() + 2.0 / 4f64.log2()) / (3.0 / 2f64.log2() + 2.0 / 3f64.log2());
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.6788).abs() < 1e-4);

        let gain = |i: usize| [3.0, 2.0, 0.0][i];
        let best = permutations(&[0, 1, 2])
            .iter()
            .map(|p| brute_dcg(p, &gain, 10))
            .fold(0.0, f64::max);
        assert!((best - (3.0 + 2.0 / 3f64.log2())).abs() < 1e-12);
        assert!((brute_dcg(&[2, 0, 1], &gain, 10) / best - got).abs() < 1e-12);
    }

    #[test]
    fn ndcg_edge_cases() {
        let gains = [(7, 4.0)];
        assert_eq!(ndcg_at_k(&[1, 2, 3], &gains, 3), 0.0);
        assert_eq!(ndcg_at_k(&[1, 2, 3], &[(1, 0.0)], 3), 0.0);
        assert_eq!(ndcg_at_k(&[], &gains, 10), 0.0);
        // relevant item beyond the cutoff
        assert_eq!(ndcg_at_k(&[1, 2, 7], &gains, 2), 0.0);
    }

    #[test]
    fn relevance_gain_threshold() {
        assert_eq!(relevance_gain(3), 0.0);
        assert_eq!(relevance_gain(4), 4.0);
        assert_eq!(relevance_gain(5), 5.0);
    }

    fn expl_with(rows: Vec<Vec<(usize, f64)>>, n_items: usize) -> ExplainabilityMatrix {
        ExplainabilityMatrix::from_rows(10, n_items, rows).unwrap()
    }

    #[test]
    fn mep_examples() {
        let expl = expl_with(
            vec![(0..8).map(|i| (i, 0.3)).collect(), (0..6).map(|i| (i, 0.1)).collect()],
            10,
        );
        let lists = vec![(0, (0..10).collect()), (1, (0..10).collect())];
        assert!((mep(&lists, &expl, 0.0) - 0.7).abs() < 1e-12);
        assert_eq!(mep(&lists, &expl, 1.0), 0.0);
        let all = vec![(0, (0..8).collect::<Vec<_>>())];
        assert_eq!(mep(&all, &expl, 0.0), 1.0);
        // empty lists are excluded
        let with_empty = vec![(0, (0..8).collect::<Vec<_>>()), (1, vec![])];
        assert_eq!(mep(&with_empty, &expl, 0.0), 1.0);
    }

    #[test]
    fn mer_examples() {
        let train = RatingMatrix::from_records(2, 10, 5, &[rec(0, 9, 4)]).unwrap();
        let expl = expl_with(
            vec![vec![(0, 0.2), (1, 0.2), (2, 0.2), (3, 0.2), (9, 0.5)], vec![(4, 0.1)]],
            10,
        );
        let one = vec![(0, vec![2, 5, 6])];
        assert!((mer(&one, &expl, 0.0, &train) - 0.25).abs() < 1e-12);
        let full = vec![(0, vec![0, 1, 2, 3])];
        assert_eq!(mer(&full, &expl, 0.0, &train), 1.0);
        let none = vec![(0, vec![5, 6])];
        assert_eq!(mer(&none, &expl, 0.0, &train), 0.0);
        // at 0.2 neither user has an unrated explainable item left, so both drop out
        let both = vec![(0, vec![0, 1, 2, 3]), (1, vec![7])];
        assert_eq!(mer(&both, &expl, 0.05, &train), 0.5);
        assert_eq!(mer(&both, &expl, 0.2, &train), 0.0);
    }

    #[test]
    fn mer_can_rise_with_theta() {
        let train = RatingMatrix::from_records(1, 4, 5, &[]).unwrap();
        let expl = expl_with(vec![vec![(0, 0.9), (1, 0.1), (2, 0.1), (3, 0.1)]], 4);
        let lists = vec![(0, vec![0])];
        assert_eq!(mer(&lists, &expl, 0.0, &train), 0.25);
        assert_eq!(mer(&lists, &expl, 0.5, &train), 1.0);
    }

    proptest! {
        #[test]
        fn ndcg_is_bounded_and_maximal_at_ideal(gains in prop::collection::vec(0u8..=5, 1..7)) {
            let g: Vec<(usize, f64)> = gains.iter().enumerate().map(|(i, &x)| (i, f64::from(x))).collect();
            let items: Vec<usize> = (0..gains.len()).collect();
            let gain = |i: usize| f64::from(gains[i]);
            let perms = permutations(&items);
            let ideal = perms.iter().map(|p| brute_dcg(p, &gain, 10)).fold(0.0, f64::max);
            for p in &perms {
                let v = ndcg_at_k(p, &g, 10);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
                if ideal > 0.0 {
                    prop_assert!((v - brute_dcg(p, &gain, 10) / ideal).abs() < 1e-9);
                } else {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }

        #[test]
        fn permuting_below_the_cutoff_leaves_ndcg_unchanged(
            gains in prop::collection::vec(0u8..=5, 12..16),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let g: Vec<(usize, f64)> = gains.iter().enumerate().map(|(i, &x)| (i, f64::from(x))).collect();
            let ranked: Vec<usize> = (0..gains.len()).collect();
            let mut shuffled = ranked.clone();
            shuffled[10..].shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(ndcg_at_k(&ranked, &g, 10), ndcg_at_k(&shuffled, &g, 10));
        }

        #[test]
        fn mep_and_mer_fall_as_theta_rises(
            scores in prop::collection::vec(0.0f64..1.0, 12),
            list in prop::collection::btree_set(0usize..12, 1..6),
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let expl = expl_with(vec![scores.iter().copied().enumerate().collect()], 12);
            let train = RatingMatrix::from_records(1, 12, 5, &[]).unwrap();
            let lists = vec![(0, list.into_iter().collect::<Vec<_>>())];
            prop_assert!(mep(&lists, &expl, hi) <= mep(&lists, &expl, lo));
            // MER's numerator shrinks with theta too; its denominator shrinks as well
            let hits = |t: f64| lists[0].1.iter().filter(|&&i| expl.score(0, i) > t).count();
            prop_assert!(hits(hi) <= hits(lo));
            let _ = train;
        }

        #[test]
        fn rmse_is_zero_iff_exact(ratings in prop::collection::vec(1u8..=5, 1..20), bump in 0usize..20) {
            let truth: Vec<RatingRecord> = ratings.iter().enumerate().map(|(i, &r)| rec(0, i, r)).collect();
            prop_assert_eq!(rmse(|_, i| Some(f64::from(ratings[i])), &truth).unwrap(), 0.0);
            let off = bump % ratings.len();
            let r = rmse(|_, i| Some(f64::from(ratings[i]) + if i == off { 0.5 } else { 0.0 }), &truth).unwrap();
            prop_assert!(r > 0.0);
        }
    }
}
