//! Contrastive-divergence training.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ExplainabilityMode, MTreatment, RbmParams};
use crate::dataset::DatasetSplit;
use crate::error::{Error, Result};
use crate::neighborhood::ExplainabilityMatrix;

/// Whether positive-phase hidden statistics use `p(h | v, m)` or a binary sample of it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum HiddenStatistics {
    #[default]
    MeanField,
    Sampled,
}

impl HiddenStatistics {
    pub fn as_str(self) -> &'static str {
        match self {
            HiddenStatistics::MeanField => "mean_field",
            HiddenStatistics::Sampled => "sampled",
        }
    }
}

impl std::str::FromStr for HiddenStatistics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_field" => Ok(HiddenStatistics::MeanField),
            "sampled" => Ok(HiddenStatistics::Sampled),
            _ => Err(Error::Config(format!("unknown hidden statistics {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Number of hidden units `f`.
    pub hidden_units: usize,
    pub epochs: usize,
    /// Learning rate for `W`, `a` and `b`.
    pub learning_rate_w: f64,
    /// Learning rate for `D` and `c`.
    pub learning_rate_d: f64,
    /// Gibbs steps per update. Zero is accepted by [`cd_step`] (the
    /// reconstruction is then the data itself) but not by [`train`].
    pub cd_steps: usize,
    pub batch_size: usize,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    /// First epoch (0-based) that uses `momentum_final`.
    pub momentum_switch_epoch: usize,
    pub weight_decay: f64,
    pub init_std: f64,
    pub seed: u64,
    pub explainability_mode: ExplainabilityMode,
    pub m_treatment: MTreatment,
    pub hidden_statistics: HiddenStatistics,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_units: 50,
            epochs: 30,
            learning_rate_w: 0.01,
            learning_rate_d: 0.01,
            cd_steps: 1,
            batch_size: 32,
            momentum_initial: 0.5,
            momentum_final: 0.9,
            momentum_switch_epoch: 5,
            weight_decay: 1e-4,
            init_std: 0.01,
            seed: 0,
            explainability_mode: ExplainabilityMode::Conditioned,
            m_treatment: MTreatment::Clamped,
            hidden_statistics: HiddenStatistics::MeanField,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.hidden_units == 0 {
            return bad("hidden_units must be positive".into());
        }
        if !(self.learning_rate_w > 0.0 && self.learning_rate_d > 0.0) {
            return bad(format!(
                "learning rates must be positive (W {}, D {})",
                self.learning_rate_w, self.learning_rate_d
            ));
        }
        if self.cd_steps == 0 {
            return bad("cd_steps must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        for (name, m) in [
            ("momentum_initial", self.momentum_initial),
            ("momentum_final", self.momentum_final),
        ] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("{name} must lie in [0, 1), got {m}"));
            }
        }
        if !(self.weight_decay >= 0.0 && self.init_std > 0.0) {
            return bad("weight_decay must be non-negative and init_std positive".into());
        }
        Ok(())
    }
}

/// Parameter deltas from one contrastive-divergence step, learning rates applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Deltas {
    pub weights: Vec<f64>,
    pub expl_weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub visible_bias: Vec<f64>,
    pub expl_bias: Vec<f64>,
}

impl Deltas {
    pub fn zeros(n_items: usize, hidden: usize) -> Self {
        Deltas {
            weights: vec![0.0; n_items * hidden],
            expl_weights: vec![0.0; n_items * hidden],
            hidden_bias: vec![0.0; hidden],
            visible_bias: vec![0.0; n_items],
            expl_bias: vec![0.0; n_items],
        }
    }

    fn clear(&mut self) {
        for v in [
            &mut self.weights,
            &mut self.expl_weights,
            &mut self.hidden_bias,
            &mut self.visible_bias,
            &mut self.expl_bias,
        ] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn is_zero(&self) -> bool {
        [
            &self.weights,
            &self.expl_weights,
            &self.hidden_bias,
            &self.visible_bias,
            &self.expl_bias,
        ]
        .iter()
        .all(|v| v.iter().all(|&x| x == 0.0))
    }
}

fn bernoulli<R: Rng>(p: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// One contrastive-divergence step for a single user.
///
/// `visible` holds the user's normalized ratings sorted by item; items absent
/// from it are unrated and receive no `W` or `b` update. `m` holds the user's
/// positive explainability scores. Hidden units are sampled as binaries to drive
/// the Gibbs chain; the final reconstruction statistics use probabilities.
pub fn cd_step<R: Rng>(
    params: &RbmParams,
    visible: &[(usize, f64)],
    m: &[(usize, f64)],
    config: &TrainConfig,
    rng: &mut R,
) -> Deltas {
    let mut deltas = Deltas::zeros(params.n_items(), params.hidden());
    accumulate_cd(params, visible, m, config, rng, &mut deltas);
    deltas
}

fn accumulate_cd<R: Rng>(
    params: &RbmParams,
    visible: &[(usize, f64)],
    m: &[(usize, f64)],
    config: &TrainConfig,
    rng: &mut R,
    acc: &mut Deltas,
) {
    let f = params.hidden();
    let n_items = params.n_items();
    let conditioned = params.conditioned();
    let reconstruct_m = conditioned && config.m_treatment == MTreatment::Reconstructed;
    let m: &[(usize, f64)] = if conditioned { m } else { &[] };

    let h_data_p = params.hidden_probs(visible, m);
    let h_data: Vec<f64> = match config.hidden_statistics {
        HiddenStatistics::MeanField => h_data_p.clone(),
        HiddenStatistics::Sampled => h_data_p.iter().map(|&p| bernoulli(p, rng)).collect(),
    };

    // Negative phase: visible values at rated items, dense m when reconstructed.
    let mut v_neg: Vec<f64> = visible.iter().map(|&(_, v)| v).collect();
    let mut m_neg: Option<Vec<f64>> = None;
    let h_neg: Vec<f64>;
    if config.cd_steps == 0 {
        h_neg = h_data.clone();
    } else {
        let mut h_state: Vec<f64> = match config.hidden_statistics {
            HiddenStatistics::Sampled => h_data.clone(),
            HiddenStatistics::MeanField => h_data_p.iter().map(|&p| bernoulli(p, rng)).collect(),
        };
        let mut step = 1;
        loop {
            for (slot, &(i, _)) in v_neg.iter_mut().zip(visible) {
                *slot = params.visible_prob(i, &h_state);
            }
            let m_probs: Option<Vec<f64>> = reconstruct_m
                .then(|| (0..n_items).map(|i| params.expl_prob(i, &h_state)).collect());
            if step == config.cd_steps {
                let v_sparse: Vec<(usize, f64)> =
                    visible.iter().zip(&v_neg).map(|(&(i, _), &p)| (i, p)).collect();
                h_neg = match &m_probs {
                    Some(mp) => params.hidden_probs(&v_sparse, &dense_to_pairs(mp)),
                    None => params.hidden_probs(&v_sparse, m),
                };
                m_neg = m_probs;
                break;
            }
            let v_sample: Vec<(usize, f64)> = visible
                .iter()
                .zip(&v_neg)
                .map(|(&(i, _), &p)| (i, bernoulli(p, rng)))
                .filter(|&(_, x)| x != 0.0)
                .collect();
            let h_p = match &m_probs {
                Some(mp) => {
                    let m_sample: Vec<(usize, f64)> = mp
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| (i, bernoulli(p, rng)))
                        .filter(|&(_, x)| x != 0.0)
                        .collect();
                    params.hidden_probs(&v_sample, &m_sample)
                }
                None => params.hidden_probs(&v_sample, m),
            };
            h_state = h_p.iter().map(|&p| bernoulli(p, rng)).collect();
            step += 1;
        }
    }

    let lr_w = config.learning_rate_w;
    for (&(i, v), &vn) in visible.iter().zip(&v_neg) {
        acc.visible_bias[i] += lr_w * (v - vn);
        let row = &mut acc.weights[i * f..(i + 1) * f];
        for ((dw, &hd), &hn) in row.iter_mut().zip(&h_data).zip(&h_neg) {
            *dw += lr_w * (v * hd - vn * hn);
        }
    }
    for ((da, &hd), &hn) in acc.hidden_bias.iter_mut().zip(&h_data).zip(&h_neg) {
        *da += lr_w * (hd - hn);
    }

    if !conditioned {
        return;
    }
    let lr_d = config.learning_rate_d;
    match &m_neg {
        None => {
            // m clamped: <m h>_data - <m h>_recon differ only through h, and c gets no update.
            for &(i, mi) in m {
                let row = &mut acc.expl_weights[i * f..(i + 1) * f];
                for ((dd, &hd), &hn) in row.iter_mut().zip(&h_data).zip(&h_neg) {
                    *dd += lr_d * (mi * hd - mi * hn);
                }
            }
        }
        Some(m_recon) => {
            let mut m_data = vec![0.0; n_items];
            for &(i, mi) in m {
                m_data[i] = mi;
            }
            for i in 0..n_items {
                let (md, mr) = (m_data[i], m_recon[i]);
                acc.expl_bias[i] += lr_d * (md - mr);
                let row = &mut acc.expl_weights[i * f..(i + 1) * f];
                for ((dd, &hd), &hn) in row.iter_mut().zip(&h_data).zip(&h_neg) {
                    *dd += lr_d * (md * hd - mr * hn);
                }
            }
        }
    }
}

fn dense_to_pairs(dense: &[f64]) -> Vec<(usize, f64)> {
    dense.iter().copied().enumerate().collect()
}

/// State of a block Gibbs chain over binary units. Units outside `mask` stay
/// at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsState {
    pub v: Vec<f64>,
    pub h: Vec<f64>,
    pub m: Vec<f64>,
    pub mask: Vec<bool>,
}

impl GibbsState {
    pub fn new(v: Vec<f64>, m: Vec<f64>, mask: Vec<bool>, hidden: usize) -> Self {
        GibbsState {
            v,
            h: vec![0.0; hidden],
            m,
            mask,
        }
    }

    fn visible_pairs(&self) -> Vec<(usize, f64)> {
        self.v
            .iter()
            .enumerate()
            .filter(|&(i, &x)| self.mask[i] && x != 0.0)
            .map(|(i, &x)| (i, x))
            .collect()
    }

    /// `p(h | v, m)` at the current visible state.
    pub fn hidden_probs(&self, params: &RbmParams) -> Vec<f64> {
        let m: Vec<(usize, f64)> = self.m.iter().copied().enumerate().filter(|&(_, x)| x != 0.0).collect();
        params.hidden_probs(&self.visible_pairs(), &m)
    }

    /// One sweep: sample `h` given `(v, m)`, then `v` (and `m` when
    /// reconstructed) given `h`.
    pub fn sweep<R: Rng>(&mut self, params: &RbmParams, m_treatment: MTreatment, rng: &mut R) {
        let hp = self.hidden_probs(params);
        for (h, p) in self.h.iter_mut().zip(hp) {
            *h = bernoulli(p, rng);
        }
        for i in 0..self.v.len() {
            self.v[i] = if self.mask[i] {
                bernoulli(params.visible_prob(i, &self.h), rng)
            } else {
                0.0
            };
        }
        if params.conditioned() && m_treatment == MTreatment::Reconstructed {
            for i in 0..self.m.len() {
                self.m[i] = bernoulli(params.expl_prob(i, &self.h), rng);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    /// RMSE, in normalized units, of the mean-field reconstruction of every
    /// training rating after the epoch.
    pub reconstruction_rmse: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

struct Velocity {
    weights: Vec<f64>,
    expl_weights: Vec<f64>,
    hidden_bias: Vec<f64>,
    visible_bias: Vec<f64>,
    expl_bias: Vec<f64>,
}

fn apply(param: &mut [f64], vel: &mut [f64], delta: &[f64], momentum: f64, scale: f64, decay: f64) {
    for ((p, v), &d) in param.iter_mut().zip(vel.iter_mut()).zip(delta) {
        *v = momentum * *v + d * scale - decay * *p;
        *p += *v;
    }
}

/// Trains one shared parameter set on every user's training ratings.
///
/// Users are visited in a seeded shuffle each epoch and grouped into
/// minibatches; deltas are averaged over the batch and applied with momentum
/// and weight decay on `W` and `D`.
pub fn train(
    split: &DatasetSplit,
    expl: &ExplainabilityMatrix,
    config: &TrainConfig,
) -> Result<(RbmParams, TrainLog)> {
    config.validate()?;
    let mode = config.explainability_mode;
    let conditioned = mode == ExplainabilityMode::Conditioned;
    if conditioned && (expl.n_users() != split.n_users() || expl.n_items() != split.n_items()) {
        return Err(Error::Config(format!(
            "explainability matrix is {}x{}, split is {}x{}",
            expl.n_users(),
            expl.n_items(),
            split.n_users(),
            split.n_items()
        )));
    }

    let n_items = split.n_items();
    let f = config.hidden_units;
    let mut w_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut d_rng = ChaCha8Rng::seed_from_u64(config.seed);
    d_rng.set_stream(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);

    let mut params = RbmParams::random(n_items, f, mode, config.init_std, &mut w_rng, &mut d_rng)?;
    let visible: Vec<Vec<(usize, f64)>> = (0..split.n_users())
        .map(|u| split.train.normalized_row(u))
        .collect();
    let m_row = |u: usize| -> &[(usize, f64)] {
        if conditioned {
            expl.row(u)
        } else {
            &[]
        }
    };
    let mut order: Vec<usize> = (0..split.n_users()).filter(|&u| !visible[u].is_empty()).collect();

    let mut acc = Deltas::zeros(n_items, f);
    let mut vel = Velocity {
        weights: vec![0.0; n_items * f],
        expl_weights: vec![0.0; n_items * f],
        hidden_bias: vec![0.0; f],
        visible_bias: vec![0.0; n_items],
        expl_bias: vec![0.0; n_items],
    };
    let mut log = TrainLog::default();

    for epoch in 0..config.epochs {
        let momentum = if epoch < config.momentum_switch_epoch {
            config.momentum_initial
        } else {
            config.momentum_final
        };
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            acc.clear();
            for &u in batch {
                accumulate_cd(&params, &visible[u], m_row(u), config, &mut rng, &mut acc);
            }
            let scale = 1.0 / batch.len() as f64;
            let decay_w = config.learning_rate_w * config.weight_decay;
            apply(&mut params.weights, &mut vel.weights, &acc.weights, momentum, scale, decay_w);
            apply(&mut params.hidden_bias, &mut vel.hidden_bias, &acc.hidden_bias, momentum, scale, 0.0);
            apply(&mut params.visible_bias, &mut vel.visible_bias, &acc.visible_bias, momentum, scale, 0.0);
            if conditioned {
                let decay_d = config.learning_rate_d * config.weight_decay;
                apply(&mut params.expl_weights, &mut vel.expl_weights, &acc.expl_weights, momentum, scale, decay_d);
                apply(&mut params.expl_bias, &mut vel.expl_bias, &acc.expl_bias, momentum, scale, 0.0);
            }
        }
        if !params.is_finite() {
            return Err(Error::Divergence { epoch: epoch + 1 });
        }
        log.epochs.push(EpochStats {
            epoch: epoch + 1,
            reconstruction_rmse: reconstruction_rmse(&params, &visible, m_row),
        });
    }
    Ok((params, log))
}

fn reconstruction_rmse<'a>(
    params: &RbmParams,
    visible: &[Vec<(usize, f64)>],
    m_row: impl Fn(usize) -> &'a [(usize, f64)],
) -> f64 {
    let mut sq = 0.0;
    let mut n = 0usize;
    for (u, v) in visible.iter().enumerate() {
        if v.is_empty() {
            continue;
        }
        let h = params.hidden_probs(v, m_row(u));
        for &(i, x) in v {
            let r = params.visible_prob(i, &h) - x;
            sq += r * r;
        }
        n += v.len();
    }
    if n == 0 {
        0.0
    } else {
        (sq / n as f64).sqrt()
    }
}
