//! Brute-force Boltzmann distribution for small models.
//!
//! The energy is the one whose conditionals are the model's activations:
//!
//! ```text
//! E(v, h | m) = -Σ_i v_i b_i - Σ_j h_j a_j - Σ_ij v_i W_ij h_j - Σ_ij m_i D_ij h_j - Σ_i m_i c_i
//! ```
//!
//! With `m` clamped the last term is a constant and drops out of `p(v, h | m)`.
//! With `m` free, the table covers binary `(v, h, m)` jointly.

use super::RbmParams;
use crate::error::{Error, Result};

/// Largest number of binary units enumerated.
pub const ENUMERATION_LIMIT: usize = 20;

/// Probabilities of every binary state. State index bits hold `v` first, then
/// `h`, then `m` when it is modeled.
#[derive(Clone, Debug)]
pub struct ExactDistribution {
    n_items: usize,
    hidden: usize,
    clamped_m: Option<Vec<f64>>,
    probs: Vec<f64>,
}

/// Tabulates `p(v, h | m)` for clamped `m`, or the joint `p(v, h, m)` when
/// `m` is `None`.
pub fn exact_distribution(params: &RbmParams, m: Option<&[f64]>) -> Result<ExactDistribution> {
    let n = params.n_items();
    let f = params.hidden();
    if let Some(m) = m {
        if m.len() != n {
            return Err(Error::Dimension {
                what: "explainability vector",
                expected: n,
                actual: m.len(),
            });
        }
    }
    let units = n + f + if m.is_some() { 0 } else { n };
    if units > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            units,
            limit: ENUMERATION_LIMIT,
        });
    }

    let mut dist = ExactDistribution {
        n_items: n,
        hidden: f,
        clamped_m: m.map(<[f64]>::to_vec),
        probs: Vec::new(),
    };
    let neg_energy: Vec<f64> = (0..1usize << units)
        .map(|s| -dist.energy(params, s))
        .collect();
    let max = neg_energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = neg_energy.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    dist.probs = unnorm.into_iter().map(|p| p / z).collect();
    Ok(dist)
}

impl ExactDistribution {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probability(&self, state: usize) -> f64 {
        self.probs[state]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn models_m(&self) -> bool {
        self.clamped_m.is_none()
    }

    fn bit(state: usize, k: usize) -> f64 {
        ((state >> k) & 1) as f64
    }

    pub fn v(&self, state: usize, i: usize) -> f64 {
        Self::bit(state, i)
    }

    pub fn h(&self, state: usize, j: usize) -> f64 {
        Self::bit(state, self.n_items + j)
    }

    /// `m_i` in the state: the clamped value, or the state's bit when modeled.
    pub fn m(&self, state: usize, i: usize) -> f64 {
        match &self.clamped_m {
            Some(m) => m[i],
            None => Self::bit(state, self.n_items + self.hidden + i),
        }
    }

    fn energy(&self, params: &RbmParams, s: usize) -> f64 {
        let (n, f) = (self.n_items, self.hidden);
        let mut e = 0.0;
        for i in 0..n {
            let v = self.v(s, i);
            let m = self.m(s, i);
            e -= v * params.visible_bias()[i];
            if self.clamped_m.is_none() {
                e -= m * params.expl_bias()[i];
            }
            for j in 0..f {
                let h = self.h(s, j);
                e -= v * params.w(i, j) * h + m * params.d(i, j) * h;
            }
        }
        for j in 0..f {
            e -= self.h(s, j) * params.hidden_bias()[j];
        }
        e
    }

    /// `Σ_s p(s) g(s)`.
    pub fn expectation(&self, g: impl Fn(usize) -> f64) -> f64 {
        self.probs.iter().enumerate().map(|(s, &p)| p * g(s)).sum()
    }

    /// `P(target | given)` over states; both predicates see the state index.
    fn conditional(&self, given: impl Fn(usize) -> bool, target: impl Fn(usize) -> bool) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (s, &p) in self.probs.iter().enumerate() {
            if given(s) {
                den += p;
                if target(s) {
                    num += p;
                }
            }
        }
        num / den
    }

    fn matches(&self, s: usize, offset: usize, bits: &[bool]) -> bool {
        bits.iter()
            .enumerate()
            .all(|(k, &b)| (Self::bit(s, offset + k) == 1.0) == b)
    }

    /// `p(h_j = 1 | v, m)` from the table. `m_bits` is required exactly when
    /// `m` is modeled.
    pub fn hidden_conditional(&self, v: &[bool], m_bits: Option<&[bool]>) -> Vec<f64> {
        let mo = self.n_items + self.hidden;
        (0..self.hidden)
            .map(|j| {
                self.conditional(
                    |s| {
                        self.matches(s, 0, v)
                            && m_bits.is_none_or(|mb| self.matches(s, mo, mb))
                    },
                    |s| self.h(s, j) == 1.0,
                )
            })
            .collect()
    }

    /// `p(v_i = 1 | h)` from the table.
    pub fn visible_conditional(&self, h: &[bool]) -> Vec<f64> {
        (0..self.n_items)
            .map(|i| self.conditional(|s| self.matches(s, self.n_items, h), |s| self.v(s, i) == 1.0))
            .collect()
    }

    /// `p(m_i = 1 | h)` from the joint table; `None` when `m` is clamped.
    pub fn explainability_conditional(&self, h: &[bool]) -> Option<Vec<f64>> {
        if !self.models_m() {
            return None;
        }
        let mo = self.n_items + self.hidden;
        Some(
            (0..self.n_items)
                .map(|i| {
                    self.conditional(
                        |s| self.matches(s, self.n_items, h),
                        |s| Self::bit(s, mo + i) == 1.0,
                    )
                })
                .collect(),
        )
    }

    /// `E[v_i h_j]`, item-major.
    pub fn visible_hidden_moments(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_items * self.hidden);
        for i in 0..self.n_items {
            for j in 0..self.hidden {
                out.push(self.expectation(|s| self.v(s, i) * self.h(s, j)));
            }
        }
        out
    }

    /// `E[m_i h_j]`, item-major.
    pub fn expl_hidden_moments(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_items * self.hidden);
        for i in 0..self.n_items {
            for j in 0..self.hidden {
                out.push(self.expectation(|s| self.m(s, i) * self.h(s, j)));
            }
        }
        out
    }
}
