//! Comparator recommenders: user-based kNN and most-popular. The plain RBM
//! comparator is [`crate::rbm`] trained with [`ExplainabilityMode::Disabled`].

use crate::dataset::RatingMatrix;
use crate::error::{Error, Result};
use crate::eval::Recommender;
use crate::neighborhood::NeighborModel;
use crate::ranking;
use crate::rbm::ExplainabilityMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    UserKnn,
    MostPopular,
    PlainRbm,
}

impl BaselineKind {
    pub fn tag(self) -> &'static str {
        match self {
            BaselineKind::UserKnn => "user_knn",
            BaselineKind::MostPopular => "most_popular",
            BaselineKind::PlainRbm => "plain_rbm",
        }
    }

    /// The RBM mode a baseline trains with, if it is an RBM at all.
    pub fn rbm_mode(self) -> Option<ExplainabilityMode> {
        match self {
            BaselineKind::PlainRbm => Some(ExplainabilityMode::Disabled),
            _ => None,
        }
    }
}

fn fallback(matrix: &RatingMatrix, user: usize) -> f64 {
    matrix
        .user_mean(user)
        .or_else(|| matrix.global_mean())
        .unwrap_or((1.0 + f64::from(matrix.scale())) / 2.0)
}

/// Similarity-weighted mean of the ratings `user`'s neighbors gave `item`.
///
/// Only neighbors with positive similarity who rated the item count. Without
/// any, the prediction falls back to the user's mean rating, then the global
/// mean.
pub fn user_knn_predict(matrix: &RatingMatrix, neighbors: &NeighborModel, user: usize, item: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for n in neighbors.neighbors(user) {
        if n.similarity <= 0.0 {
            continue;
        }
        if let Some(r) = matrix.get(n.user, item) {
            num += n.similarity * f64::from(r);
            den += n.similarity;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        fallback(matrix, user)
    }
}

pub struct UserKnn<'a> {
    pub matrix: &'a RatingMatrix,
    pub neighbors: &'a NeighborModel,
}

impl UserKnn<'_> {
    /// [`user_knn_predict`] for every item at once.
    pub fn predict_user(&self, user: usize) -> Vec<f64> {
        let n_items = self.matrix.n_items();
        let mut num = vec![0.0; n_items];
        let mut den = vec![0.0; n_items];
        for n in self.neighbors.neighbors(user) {
            if n.similarity <= 0.0 {
                continue;
            }
            for &(i, r) in self.matrix.row(n.user) {
                num[i] += n.similarity * f64::from(r);
                den[i] += n.similarity;
            }
        }
        let fb = fallback(self.matrix, user);
        num.iter()
            .zip(&den)
            .map(|(&a, &b)| if b > 0.0 { a / b } else { fb })
            .collect()
    }

    pub fn top_n(&self, user: usize, n: usize) -> Vec<usize> {
        ranking::top_n_unrated(&self.predict_user(user), self.matrix.row(user), n)
    }
}

impl Recommender for UserKnn<'_> {
    fn scores(&self, user: usize) -> Result<Vec<f64>> {
        if user >= self.matrix.n_users() {
            return Err(Error::UnknownUser(user));
        }
        Ok(self.predict_user(user))
    }

    fn predicts_ratings(&self) -> bool {
        true
    }
}

/// Items ranked by training rating count, ties toward the smaller index.
pub struct MostPopular<'a> {
    matrix: &'a RatingMatrix,
    counts: Vec<f64>,
}

impl<'a> MostPopular<'a> {
    pub fn new(matrix: &'a RatingMatrix) -> Self {
        let counts = matrix.item_counts().into_iter().map(|c| c as f64).collect();
        MostPopular { matrix, counts }
    }

    pub fn top_n(&self, user: usize, n: usize) -> Vec<usize> {
        ranking::top_n_unrated(&self.counts, self.matrix.row(user), n)
    }
}

impl Recommender for MostPopular<'_> {
    fn scores(&self, user: usize) -> Result<Vec<f64>> {
        if user >= self.matrix.n_users() {
            return Err(Error::UnknownUser(user));
        }
        Ok(self.counts.clone())
    }

    fn predicts_ratings(&self) -> bool {
        false
    }
}

pub fn most_popular_top_n(matrix: &RatingMatrix, user: usize, n: usize) -> Vec<usize> {
    MostPopular::new(matrix).top_n(user, n)
}
