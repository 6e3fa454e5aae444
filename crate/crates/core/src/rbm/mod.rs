//! Conditional RBM over normalized ratings with an explainability layer.
//!
//! Visible units `v` carry a user's normalized ratings, hidden units `h` are
//! binary features and the conditioning layer `m` carries the user's
//! explainability scores. The conditionals are
//!
//! ```text
//! p(h_j = 1 | v, m) = σ(a_j + Σ_i v_i W_ij + Σ_i m_i D_ij)
//! p(v_i = 1 | h)    = σ(b_i + Σ_j h_j W_ij)
//! p(m_i = 1 | h)    = σ(c_i + Σ_j h_j D_ij)
//! ```
//!
//! One parameter set is shared by all users; each user contributes its own
//! visible configuration, restricted to the items it rated.

mod exact;
mod io;
mod train;

pub use exact::{exact_distribution, ExactDistribution, ENUMERATION_LIMIT};
pub use io::{read_model, write_model, ModelFile};
pub use train::{
    cd_step, train, Deltas, EpochStats, GibbsState, HiddenStatistics, TrainConfig, TrainLog,
};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::DatasetSplit;
use crate::error::{Error, Result};
use crate::neighborhood::ExplainabilityMatrix;
use crate::ranking;

/// Whether the explainability layer takes part in the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ExplainabilityMode {
    #[default]
    Conditioned,
    /// Plain RBM: `D ≡ 0`, `c ≡ 0` and `m` is ignored.
    Disabled,
}

impl ExplainabilityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExplainabilityMode::Conditioned => "conditioned",
            ExplainabilityMode::Disabled => "disabled",
        }
    }
}

impl std::str::FromStr for ExplainabilityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditioned" => Ok(ExplainabilityMode::Conditioned),
            "disabled" => Ok(ExplainabilityMode::Disabled),
            _ => Err(Error::Config(format!("unknown explainability mode {s:?}"))),
        }
    }
}

/// How `m` behaves in the negative phase of contrastive divergence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum MTreatment {
    /// `m` stays at its observed scores.
    #[default]
    Clamped,
    /// `m` is resampled from `p(m | h)` like the visible layer.
    Reconstructed,
}

impl MTreatment {
    pub fn as_str(self) -> &'static str {
        match self {
            MTreatment::Clamped => "clamped",
            MTreatment::Reconstructed => "reconstructed",
        }
    }
}

impl std::str::FromStr for MTreatment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamped" => Ok(MTreatment::Clamped),
            "reconstructed" => Ok(MTreatment::Reconstructed),
            _ => Err(Error::Config(format!("unknown m treatment {s:?}"))),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights and biases of the conditional RBM.
///
/// `W` and `D` are stored item-major: entry `(i, j)` lives at `i * hidden + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct RbmParams {
    n_items: usize,
    hidden: usize,
    mode: ExplainabilityMode,
    weights: Vec<f64>,
    expl_weights: Vec<f64>,
    hidden_bias: Vec<f64>,
    visible_bias: Vec<f64>,
    expl_bias: Vec<f64>,
}

impl RbmParams {
    pub fn zeros(n_items: usize, hidden: usize, mode: ExplainabilityMode) -> Self {
        RbmParams {
            n_items,
            hidden,
            mode,
            weights: vec![0.0; n_items * hidden],
            expl_weights: vec![0.0; n_items * hidden],
            hidden_bias: vec![0.0; hidden],
            visible_bias: vec![0.0; n_items],
            expl_bias: vec![0.0; n_items],
        }
    }

    /// Zero biases; `W` (and `D` when conditioned) drawn from `N(0, std²)`.
    ///
    /// `D` comes from its own generator so that plain and conditioned models
    /// built from the same seed share their `W`.
    pub fn random<R: Rng>(
        n_items: usize,
        hidden: usize,
        mode: ExplainabilityMode,
        std: f64,
        w_rng: &mut R,
        d_rng: &mut R,
    ) -> Result<Self> {
        let normal = Normal::new(0.0, std)
            .map_err(|e| Error::Config(format!("initial weight std {std}: {e}")))?;
        let mut params = Self::zeros(n_items, hidden, mode);
        for w in &mut params.weights {
            *w = normal.sample(w_rng);
        }
        if mode == ExplainabilityMode::Conditioned {
            for d in &mut params.expl_weights {
                *d = normal.sample(d_rng);
            }
        }
        Ok(params)
    }

    /// Assembles parameters from flat item-major buffers.
    pub fn from_parts(
        mode: ExplainabilityMode,
        hidden: usize,
        weights: Vec<f64>,
        expl_weights: Vec<f64>,
        hidden_bias: Vec<f64>,
        visible_bias: Vec<f64>,
        expl_bias: Vec<f64>,
    ) -> Result<Self> {
        let n_items = visible_bias.len();
        let checks = [
            ("W", weights.len(), n_items * hidden),
            ("D", expl_weights.len(), n_items * hidden),
            ("a", hidden_bias.len(), hidden),
            ("c", expl_bias.len(), n_items),
        ];
        for (what, actual, expected) in checks {
            if actual != expected {
                return Err(Error::Dimension {
                    what,
                    expected,
                    actual,
                });
            }
        }
        Ok(RbmParams {
            n_items,
            hidden,
            mode,
            weights,
            expl_weights,
            hidden_bias,
            visible_bias,
            expl_bias,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn mode(&self) -> ExplainabilityMode {
        self.mode
    }

    pub fn conditioned(&self) -> bool {
        self.mode == ExplainabilityMode::Conditioned
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn expl_weights(&self) -> &[f64] {
        &self.expl_weights
    }

    pub fn expl_weights_mut(&mut self) -> &mut [f64] {
        &mut self.expl_weights
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.hidden_bias
    }

    pub fn hidden_bias_mut(&mut self) -> &mut [f64] {
        &mut self.hidden_bias
    }

    pub fn visible_bias(&self) -> &[f64] {
        &self.visible_bias
    }

    pub fn visible_bias_mut(&mut self) -> &mut [f64] {
        &mut self.visible_bias
    }

    pub fn expl_bias(&self) -> &[f64] {
        &self.expl_bias
    }

    pub fn expl_bias_mut(&mut self) -> &mut [f64] {
        &mut self.expl_bias
    }

    pub fn w(&self, item: usize, j: usize) -> f64 {
        self.weights[item * self.hidden + j]
    }

    pub fn d(&self, item: usize, j: usize) -> f64 {
        self.expl_weights[item * self.hidden + j]
    }

    pub fn is_finite(&self) -> bool {
        [
            &self.weights,
            &self.expl_weights,
            &self.hidden_bias,
            &self.visible_bias,
            &self.expl_bias,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
    }

    fn weight_row(&self, item: usize) -> &[f64] {
        &self.weights[item * self.hidden..(item + 1) * self.hidden]
    }

    fn expl_row(&self, item: usize) -> &[f64] {
        &self.expl_weights[item * self.hidden..(item + 1) * self.hidden]
    }

    /// Hidden pre-activations for sparse `v` and `m` (item-sorted, zeros omitted).
    /// `m` is ignored in disabled mode.
    pub(crate) fn hidden_input(&self, v: &[(usize, f64)], m: &[(usize, f64)]) -> Vec<f64> {
        let mut x = self.hidden_bias.clone();
        for &(i, vi) in v {
            for (xj, w) in x.iter_mut().zip(self.weight_row(i)) {
                *xj += vi * w;
            }
        }
        if self.conditioned() {
            for &(i, mi) in m {
                for (xj, d) in x.iter_mut().zip(self.expl_row(i)) {
                    *xj += mi * d;
                }
            }
        }
        x
    }

    pub(crate) fn hidden_probs(&self, v: &[(usize, f64)], m: &[(usize, f64)]) -> Vec<f64> {
        let mut x = self.hidden_input(v, m);
        x.iter_mut().for_each(|z| *z = sigmoid(*z));
        x
    }

    pub(crate) fn visible_prob(&self, item: usize, h: &[f64]) -> f64 {
        let dot: f64 = self.weight_row(item).iter().zip(h).map(|(w, hj)| w * hj).sum();
        sigmoid(self.visible_bias[item] + dot)
    }

    pub(crate) fn expl_prob(&self, item: usize, h: &[f64]) -> f64 {
        let dot: f64 = self.expl_row(item).iter().zip(h).map(|(d, hj)| d * hj).sum();
        sigmoid(self.expl_bias[item] + dot)
    }

    fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::Dimension {
                what,
                expected,
                actual,
            })
        }
    }
}

fn to_sparse(dense: &[f64]) -> Vec<(usize, f64)> {
    dense
        .iter()
        .enumerate()
        .filter(|&(_, &x)| x != 0.0)
        .map(|(i, &x)| (i, x))
        .collect()
}

/// `p(h_j = 1 | v, m)` for every hidden unit, from dense `v` and `m`.
pub fn hidden_activation(params: &RbmParams, v: &[f64], m: &[f64]) -> Result<Vec<f64>> {
    RbmParams::check_len("visible vector", params.n_items, v.len())?;
    RbmParams::check_len("explainability vector", params.n_items, m.len())?;
    Ok(params.hidden_probs(&to_sparse(v), &to_sparse(m)))
}

/// `p(v_i = 1 | h)` for every item.
pub fn visible_activation(params: &RbmParams, h: &[f64]) -> Result<Vec<f64>> {
    RbmParams::check_len("hidden vector", params.hidden, h.len())?;
    Ok((0..params.n_items).map(|i| params.visible_prob(i, h)).collect())
}

/// `p(m_i = 1 | h)` for every item.
pub fn explainability_activation(params: &RbmParams, h: &[f64]) -> Result<Vec<f64>> {
    RbmParams::check_len("hidden vector", params.hidden, h.len())?;
    Ok((0..params.n_items).map(|i| params.expl_prob(i, h)).collect())
}

/// Mean-field predictions for every item, in rating units.
///
/// `visible` holds the user's normalized ratings (item-sorted; its support is
/// the rated mask) and `m` the user's positive explainability scores.
pub fn predict_ratings(params: &RbmParams, visible: &[(usize, f64)], m: &[(usize, f64)], scale: u8) -> Vec<f64> {
    let h = params.hidden_probs(visible, m);
    let scale = f64::from(scale);
    (0..params.n_items)
        .map(|i| params.visible_prob(i, &h) * scale)
        .collect()
}

/// A trained RBM bound to the data it scores users against.
pub struct RbmRecommender<'a> {
    pub params: &'a RbmParams,
    pub split: &'a DatasetSplit,
    pub expl: &'a ExplainabilityMatrix,
}

impl RbmRecommender<'_> {
    pub fn predict_user(&self, user: usize) -> Result<Vec<f64>> {
        if user >= self.split.n_users() {
            return Err(Error::UnknownUser(user));
        }
        let visible = self.split.train.normalized_row(user);
        let m = if self.params.conditioned() {
            self.expl.row(user)
        } else {
            &[]
        };
        Ok(predict_ratings(self.params, &visible, m, self.split.scale()))
    }

    pub fn top_n(&self, user: usize, n: usize) -> Result<Vec<usize>> {
        let scores = self.predict_user(user)?;
        Ok(ranking::top_n_unrated(&scores, self.split.train.row(user), n))
    }
}

/// Unrated items ranked by predicted rating, ties toward the smaller item index.
pub fn top_n(
    params: &RbmParams,
    user: usize,
    n: usize,
    split: &DatasetSplit,
    expl: &ExplainabilityMatrix,
) -> Result<Vec<usize>> {
    RbmRecommender {
        params,
        split,
        expl,
    }
    .top_n(user, n)
}
