use std::cmp::Ordering;

/// Orders items by descending score, breaking ties toward the smaller index.
pub fn by_score_desc(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// The `n` best-scoring items the user has not rated.
///
/// `rated` is the user's row of a rating matrix, sorted by item.
pub fn top_n_unrated(scores: &[f64], rated: &[(usize, u8)], n: usize) -> Vec<usize> {
    let mut rated_iter = rated.iter().map(|&(i, _)| i).peekable();
    let mut candidates = Vec::with_capacity(scores.len().saturating_sub(rated.len()));
    for item in 0..scores.len() {
        if rated_iter.peek() == Some(&item) {
            rated_iter.next();
            continue;
        }
        candidates.push(item);
    }
    let cmp = by_score_desc(scores);
    if n < candidates.len() {
        candidates.select_nth_unstable_by(n, &cmp);
        candidates.truncate(n);
    }
    candidates.sort_unstable_by(&cmp);
    candidates
}
