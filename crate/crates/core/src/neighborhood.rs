//! User-user cosine neighborhoods and neighborhood explainability scores.
//!
//! The explainability score of item `i` for user `u` is the summed rating that
//! `u`'s `k` nearest neighbors gave `i` (missing ratings count as zero), divided
//! by `k` times the rating-scale maximum. It is zero exactly when no neighbor has
//! rated the item and one when every neighbor gave it the top rating.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use crate::dataset::{IdMap, RatingMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 50;

const EXPL_MAGIC: &str = "#erbm-expl v1";

/// Cosine similarity of two sparse vectors sorted by index. Missing entries
/// are zero; a zero-norm vector has similarity 0 with everything.
pub fn cosine_similarity(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut dot = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    let na: f64 = a.iter().map(|&(_, x)| x * x).sum();
    let nb: f64 = b.iter().map(|&(_, x)| x * x).sum();
    similarity_from_parts(dot, na, nb)
}

fn similarity_from_parts(dot: f64, norm_sq_a: f64, norm_sq_b: f64) -> f64 {
    if norm_sq_a == 0.0 || norm_sq_b == 0.0 {
        return 0.0;
    }
    (dot / (norm_sq_a * norm_sq_b).sqrt()).min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub user: usize,
    pub similarity: f64,
}

/// Each user's nearest other users, most similar first.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborModel {
    k: usize,
    lists: Vec<Vec<Neighbor>>,
}

impl NeighborModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_users(&self) -> usize {
        self.lists.len()
    }

    pub fn neighbors(&self, user: usize) -> &[Neighbor] {
        &self.lists[user]
    }

    /// The model for a smaller `k`. Neighbor order is total, so this equals
    /// recomputing from scratch.
    pub fn truncated(&self, k: usize) -> NeighborModel {
        let k = k.min(self.k);
        NeighborModel {
            k,
            lists: self
                .lists
                .iter()
                .map(|l| l[..k.min(l.len())].to_vec())
                .collect(),
        }
    }
}

/// Finds each user's `k` most similar users by cosine similarity over raw
/// ratings. Ties go to the smaller user index; lists hold
/// `min(k, n_users - 1)` entries.
pub fn k_nearest_neighbors(matrix: &RatingMatrix, k: usize) -> Result<NeighborModel> {
    if k == 0 {
        return Err(Error::Config("neighbor count k must be at least 1".into()));
    }
    let n_users = matrix.n_users();
    let mut raters: Vec<Vec<(usize, f64)>> = vec![Vec::new(); matrix.n_items()];
    let mut norm_sq = vec![0.0; n_users];
    for (u, norm) in norm_sq.iter_mut().enumerate() {
        for &(i, r) in matrix.row(u) {
            let r = f64::from(r);
            raters[i].push((u, r));
            *norm += r * r;
        }
    }

    let mut dots = vec![0.0; n_users];
    let mut lists = Vec::with_capacity(n_users);
    for u in 0..n_users {
        dots.iter_mut().for_each(|d| *d = 0.0);
        for &(i, r) in matrix.row(u) {
            let r = f64::from(r);
            for &(x, rx) in &raters[i] {
                dots[x] += r * rx;
            }
        }
        let mut candidates: Vec<Neighbor> = (0..n_users)
            .filter(|&x| x != u)
            .map(|x| Neighbor {
                user: x,
                similarity: similarity_from_parts(dots[x], norm_sq[u], norm_sq[x]),
            })
            .collect();
        let cmp = |a: &Neighbor, b: &Neighbor| {
            b.similarity
                .total_cmp(&a.similarity)
                .then(a.user.cmp(&b.user))
        };
        if k < candidates.len() {
            candidates.select_nth_unstable_by(k, cmp);
            candidates.truncate(k);
        }
        candidates.sort_unstable_by(cmp);
        lists.push(candidates);
    }
    Ok(NeighborModel { k, lists })
}

/// Explainability score of `item` for `user` under the given neighborhood.
pub fn explainability_score(
    matrix: &RatingMatrix,
    neighbors: &NeighborModel,
    user: usize,
    item: usize,
) -> f64 {
    let nbrs = neighbors.neighbors(user);
    if nbrs.is_empty() {
        return 0.0;
    }
    let sum: u32 = nbrs
        .iter()
        .map(|n| u32::from(matrix.get(n.user, item).unwrap_or(0)))
        .sum();
    score_from_sum(sum, nbrs.len(), matrix.scale())
}

fn score_from_sum(sum: u32, n_neighbors: usize, scale: u8) -> f64 {
    f64::from(sum) / (n_neighbors as f64 * f64::from(scale))
}

/// Explainability scores for every (user, item) pair, stored sparsely: rows
/// hold only the positive scores. Row `u` is the conditioning vector for user `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplainabilityMatrix {
    k: usize,
    threshold: f64,
    n_items: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl ExplainabilityMatrix {
    pub fn from_neighbors(matrix: &RatingMatrix, neighbors: &NeighborModel) -> Self {
        let n_items = matrix.n_items();
        let mut sums = vec![0u32; n_items];
        let rows = (0..matrix.n_users())
            .map(|u| {
                let nbrs = neighbors.neighbors(u);
                sums.iter_mut().for_each(|s| *s = 0);
                for n in nbrs {
                    for &(i, r) in matrix.row(n.user) {
                        sums[i] += u32::from(r);
                    }
                }
                sums.iter()
                    .enumerate()
                    .filter(|&(_, &s)| s > 0)
                    .map(|(i, &s)| (i, score_from_sum(s, nbrs.len(), matrix.scale())))
                    .collect()
            })
            .collect();
        ExplainabilityMatrix {
            k: neighbors.k(),
            threshold: 0.0,
            n_items,
            rows,
        }
    }

    /// Builds the matrix from raw sparse rows, as read from disk or built by hand.
    pub fn from_rows(k: usize, n_items: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for row in &mut rows {
            row.retain(|&(_, s)| s != 0.0);
            row.sort_unstable_by_key(|&(i, _)| i);
            for &(i, s) in row.iter() {
                if i >= n_items || !(0.0..=1.0).contains(&s) {
                    return Err(Error::Config(format!(
                        "explainability entry ({i}, {s}) out of range"
                    )));
                }
            }
        }
        Ok(ExplainabilityMatrix {
            k,
            threshold: 0.0,
            n_items,
            rows,
        })
    }

    /// Sets the bar a score must strictly exceed for an item to count as explainable.
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn n_users(&self) -> usize {
        self.rows.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Positive scores of the user's row, sorted by item.
    pub fn row(&self, user: usize) -> &[(usize, f64)] {
        &self.rows[user]
    }

    pub fn dense_row(&self, user: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_items];
        for &(i, s) in &self.rows[user] {
            out[i] = s;
        }
        out
    }

    pub fn score(&self, user: usize, item: usize) -> f64 {
        let row = &self.rows[user];
        row.binary_search_by_key(&item, |&(i, _)| i)
            .map(|pos| row[pos].1)
            .unwrap_or(0.0)
    }

    pub fn is_explainable(&self, user: usize, item: usize) -> bool {
        self.score(user, item) > self.threshold
    }

    pub fn header(&self) -> String {
        format!("{EXPL_MAGIC} k={}", self.k)
    }

    /// Writes `user item score` lines (external ids, 6 decimals) for every
    /// positive score.
    pub fn write<W: Write>(&self, mut out: W, users: &IdMap, items: &IdMap) -> Result<()> {
        writeln!(out, "{}", self.header())?;
        for (u, row) in self.rows.iter().enumerate() {
            for &(i, s) in row {
                writeln!(out, "{}\t{}\t{:.6}", users.external(u), items.external(i), s)?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R, users: &IdMap, items: &IdMap) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::format("explainability", "empty file"))?;
        let k = header
            .trim()
            .strip_prefix(EXPL_MAGIC)
            .and_then(|rest| rest.trim().strip_prefix("k="))
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| Error::format("explainability", format!("bad header {header:?}")))?;
        let mut rows = vec![Vec::new(); users.len()];
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let lineno = idx + 2;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed = match fields.as_slice() {
                [u, i, s] => u
                    .parse::<u64>()
                    .ok()
                    .and_then(|u| users.index(u))
                    .zip(i.parse::<u64>().ok().and_then(|i| items.index(i)))
                    .zip(s.parse::<f64>().ok()),
                _ => None,
            };
            let ((u, i), s) = parsed.ok_or_else(|| Error::parse(lineno, "expected `user item score`"))?;
            rows[u].push((i, s));
        }
        Self::from_rows(k, items.len(), rows)
    }
}

/// Neighbors at `k` on `matrix`, then every explainability score.
pub fn explainability_matrix(matrix: &RatingMatrix, k: usize) -> Result<ExplainabilityMatrix> {
    let neighbors = k_nearest_neighbors(matrix, k)?;
    Ok(ExplainabilityMatrix::from_neighbors(matrix, &neighbors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RatingRecord;
    use proptest::prelude::*;

    fn matrix(n_users: usize, n_items: usize, entries: &[(usize, usize, u8)]) -> RatingMatrix {
        let records: Vec<RatingRecord> = entries
            .iter()
            .map(|&(user, item, rating)| RatingRecord {
                user,
                item,
                rating,
                timestamp: 0,
            })
            .collect();
        RatingMatrix::from_records(n_users, n_items, 5, &records).unwrap()
    }

    fn brute_cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    #[test]
    fn cosine_examples() {
        let a = [(0, 4.0), (1, 2.0)];
        let b = [(0, 2.0), (1, 4.0)];
        assert_eq!(cosine_similarity(&a, &a), 1.0);
        assert_eq!(cosine_similarity(&a, &[(2, 1.0), (3, 5.0)]), 0.0);
        assert!((cosine_similarity(&a, &b) - 0.8).abs() < 1e-15);
        assert!((brute_cosine(&[4.0, 2.0], &[2.0, 4.0]) - 0.8).abs() < 1e-15);
        assert_eq!(cosine_similarity(&a, &[]), 0.0);
    }

    #[test]
    fn neighbor_lists_are_clamped_to_other_users() {
        let m = matrix(2, 2, &[(0, 0, 3), (1, 1, 4)]);
        let model = k_nearest_neighbors(&m, 5).unwrap();
        assert_eq!(model.neighbors(0).len(), 1);
        assert_eq!(model.neighbors(0)[0].user, 1);
        assert_eq!(model.neighbors(1)[0].user, 0);
        assert!(k_nearest_neighbors(&m, 0).is_err());
    }

    #[test]
    fn identical_user_ranks_first() {
        let m = matrix(
            4,
            3,
            &[(0, 0, 5), (0, 1, 3), (1, 2, 4), (2, 0, 5), (2, 1, 3), (3, 0, 1)],
        );
        let model = k_nearest_neighbors(&m, 2).unwrap();
        assert_eq!(model.neighbors(0)[0], Neighbor { user: 2, similarity: 1.0 });
    }

    #[test]
    fn neighbor_order_matches_exhaustive_sort() {
        let entries = [
            (0, 0, 5), (0, 1, 3), (0, 3, 1),
            (1, 0, 4), (1, 2, 2),
            (2, 1, 5), (2, 2, 5), (2, 3, 2),
            (3, 0, 1), (3, 1, 1), (3, 2, 1), (3, 3, 1),
        ];
        let m = matrix(4, 4, &entries);
        let dense: Vec<Vec<f64>> = (0..4)
            .map(|u| (0..4).map(|i| m.get(u, i).map_or(0.0, f64::from)).collect())
            .collect();
        for k in 1..=3 {
            let model = k_nearest_neighbors(&m, k).unwrap();
            for u in 0..4 {
                let mut all: Vec<(usize, f64)> = (0..4)
                    .filter(|&x| x != u)
                    .map(|x| (x, brute_cosine(&dense[u], &dense[x])))
                    .collect();
                all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                let got: Vec<usize> = model.neighbors(u).iter().map(|n| n.user).collect();
                let want: Vec<usize> = all.iter().take(k).map(|p| p.0).collect();
                assert_eq!(got, want, "user {u}, k {k}");
                for (n, (_, s)) in model.neighbors(u).iter().zip(&all) {
                    assert!((n.similarity - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn truncation_equals_recomputation() {
        // (n mod 7, 5n mod 11) repeats only every 77 steps
        let entries: Vec<(usize, usize, u8)> = (0..30)
            .map(|n| (n % 7, (n * 5) % 11, 1 + (n % 5) as u8))
            .collect();
        let m = matrix(7, 11, &entries);
        let big = k_nearest_neighbors(&m, 6).unwrap();
        for k in 1..=6 {
            assert_eq!(big.truncated(k), k_nearest_neighbors(&m, k).unwrap());
        }
    }

    #[test]
    fn explainability_score_examples() {
        // user 0's neighbors are users 1 and 2 (k = 2)
        let m = matrix(
            4,
            3,
            &[(0, 0, 5), (1, 0, 5), (1, 1, 4), (2, 0, 5), (2, 1, 5), (1, 2, 5), (2, 2, 5)],
        );
        let model = k_nearest_neighbors(&m, 2).unwrap();
        let nbrs: Vec<usize> = model.neighbors(0).iter().map(|n| n.user).collect();
        assert_eq!(nbrs, vec![1, 2]);
        assert_eq!(explainability_score(&m, &model, 0, 1), 0.9);
        assert_eq!(explainability_score(&m, &model, 0, 2), 1.0);
        // nobody rated item 1
        let m2 = matrix(3, 2, &[(0, 0, 3), (1, 0, 4)]);
        let model2 = k_nearest_neighbors(&m2, 1).unwrap();
        assert_eq!(explainability_score(&m2, &model2, 0, 1), 0.0);
    }

    #[test]
    fn single_user_matrix_is_all_zero() {
        let m = matrix(1, 3, &[(0, 0, 4), (0, 2, 2)]);
        let expl = explainability_matrix(&m, 10).unwrap();
        assert!(expl.row(0).is_empty());
        assert_eq!(expl.dense_row(0), vec![0.0; 3]);
    }

    #[test]
    fn matrix_matches_entrywise_scores() {
        let entries = [
            (0, 0, 5), (0, 2, 3), (1, 0, 4), (1, 1, 2), (1, 4, 5),
            (2, 2, 1), (2, 3, 4), (3, 0, 2), (3, 3, 3), (3, 4, 4), (4, 1, 5),
        ];
        let m = matrix(5, 5, &entries);
        for k in 1..=4 {
            let model = k_nearest_neighbors(&m, k).unwrap();
            let expl = ExplainabilityMatrix::from_neighbors(&m, &model);
            for u in 0..5 {
                for i in 0..5 {
                    assert_eq!(expl.score(u, i), explainability_score(&m, &model, u, i));
                }
            }
        }
    }

    #[test]
    fn threshold_is_strict() {
        let expl = ExplainabilityMatrix::from_rows(1, 2, vec![vec![(0, 0.4)]]).unwrap();
        assert!(expl.is_explainable(0, 0));
        assert!(!expl.is_explainable(0, 1));
        let strict = expl.with_threshold(0.4);
        assert!(!strict.is_explainable(0, 0));
    }

    #[test]
    fn file_round_trip_keeps_six_decimals() {
        let users = IdMap::from_ids([10, 20]);
        let items = IdMap::from_ids([7, 8, 9]);
        let expl = ExplainabilityMatrix::from_rows(
            3,
            3,
            vec![vec![(0, 0.123_456_7), (2, 1.0)], vec![(1, 0.5)]],
        )
        .unwrap();
        let mut buf = Vec::new();
        expl.write(&mut buf, &users, &items).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "#erbm-expl v1 k=3\n10\t7\t0.123457\n10\t9\t1.000000\n20\t8\t0.500000\n");
        let back = ExplainabilityMatrix::read(buf.as_slice(), &users, &items).unwrap();
        assert_eq!(back.k(), 3);
        assert_eq!(back.score(0, 0), 0.123457);
        assert_eq!(back.score(1, 1), 0.5);
    }

    fn arb_vec() -> impl Strategy<Value = Vec<(usize, f64)>> {
        prop::collection::btree_map(0usize..20, 1u8..=5, 0..15)
            .prop_map(|m| m.into_iter().map(|(i, r)| (i, f64::from(r))).collect())
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_and_bounded(a in arb_vec(), b in arb_vec()) {
            let s = cosine_similarity(&a, &b);
            prop_assert_eq!(s, cosine_similarity(&b, &a));
            prop_assert!((0.0..=1.0).contains(&s));
        }

        #[test]
        fn cosine_is_scale_invariant(a in arb_vec(), b in arb_vec(), c in 0.1f64..10.0) {
            let scaled: Vec<(usize, f64)> = a.iter().map(|&(i, x)| (i, x * c)).collect();
            prop_assert!((cosine_similarity(&a, &b) - cosine_similarity(&scaled, &b)).abs() < 1e-12);
        }

        #[test]
        fn scores_are_bounded_and_zero_iff_unsupported(
            cells in prop::collection::btree_map((0usize..8, 0usize..10), 1u8..=5, 0..50),
            k in 1usize..8,
        ) {
            let entries: Vec<(usize, usize, u8)> = cells.into_iter().map(|((u, i), r)| (u, i, r)).collect();
            let m = matrix(8, 10, &entries);
            let model = k_nearest_neighbors(&m, k).unwrap();
            let expl = ExplainabilityMatrix::from_neighbors(&m, &model);
            for u in 0..8 {
                for i in 0..10 {
                    let s = expl.score(u, i);
                    prop_assert!((0.0..=1.0).contains(&s));
                    let supported = model.neighbors(u).iter().any(|n| m.is_rated(n.user, i));
                    prop_assert_eq!(s > 0.0, supported);
                }
            }
        }

        #[test]
        fn raising_a_neighbor_rating_never_lowers_the_score(
            cells in prop::collection::btree_map((0usize..6, 0usize..6), 1u8..=4, 1..30),
            pick in 0usize..100,
        ) {
            let entries: Vec<(usize, usize, u8)> = cells.into_iter().map(|((u, i), r)| (u, i, r)).collect();
            let m = matrix(6, 6, &entries);
            let model = k_nearest_neighbors(&m, 3).unwrap();
            let (eu, ei, _) = entries[pick % entries.len()];
            let raised: Vec<(usize, usize, u8)> = entries
                .iter()
                .map(|&(u, i, r)| if (u, i) == (eu, ei) { (u, i, r + 1) } else { (u, i, r) })
                .collect();
            let m2 = matrix(6, 6, &raised);
            // neighbor sets held fixed: monotonicity is a property of the score formula
            for u in 0..6 {
                prop_assert!(explainability_score(&m2, &model, u, ei) >= explainability_score(&m, &model, u, ei));
            }
        }
    }
}
