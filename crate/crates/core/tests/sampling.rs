//! Sampling statistics checked against exact enumeration.

use erbm::rbm::{
    cd_step, exact_distribution, sigmoid, ExplainabilityMode, GibbsState, MTreatment, RbmParams, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CHAINS: usize = 100_000;
const BURN_IN: usize = 25;

fn model() -> RbmParams {
    // 3 visible, 2 hidden; weights large enough to couple the layers
    RbmParams::from_parts(
        ExplainabilityMode::Conditioned,
        2,
        vec![1.2, -0.8, 0.5, 1.4, -1.1, 0.3],
        vec![0.9, -0.4, -1.3, 0.7, 0.6, 1.0],
        vec![-0.3, 0.4],
        vec![0.2, -0.5, 0.1],
        vec![-0.6, 0.3, 0.2],
    )
    .unwrap()
}

struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    n: usize,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            sum: vec![0.0; len],
            sum_sq: vec![0.0; len],
            n: 0,
        }
    }

    fn add(&mut self, xs: &[f64]) {
        for ((s, q), &x) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(xs) {
            *s += x;
            *q += x * x;
        }
        self.n += 1;
    }

    /// (mean, standard error) per entry.
    fn stats(&self) -> Vec<(f64, f64)> {
        let n = self.n as f64;
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(&s, &q)| {
                let mean = s / n;
                let var = (q / n - mean * mean) * n / (n - 1.0);
                (mean, (var / n).sqrt())
            })
            .collect()
    }
}

fn products(a: &[f64], h: &[f64]) -> Vec<f64> {
    a.iter().flat_map(|&x| h.iter().map(move |&y| x * y)).collect()
}

fn assert_within_3se(what: &str, got: &Moments, exact: &[f64]) {
    for (idx, ((mean, se), &want)) in got.stats().into_iter().zip(exact).enumerate() {
        assert!(
            (mean - want).abs() <= 3.0 * se,
            "{what}[{idx}]: empirical {mean} vs exact {want} (se {se})"
        );
    }
}

#[test]
fn clamped_chain_matches_exact_visible_hidden_moments() {
    let params = model();
    let m = [0.8, 0.0, 0.35];
    let exact = exact_distribution(&params, Some(&m)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut vh = Moments::new(6);
    let mut mh = Moments::new(6);
    for _ in 0..CHAINS {
        let v0: Vec<f64> = (0..3).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let mut state = GibbsState::new(v0, m.to_vec(), vec![true; 3], 2);
        for _ in 0..BURN_IN {
            state.sweep(&params, MTreatment::Clamped, &mut rng);
        }
        vh.add(&products(&state.v, &state.h));
        mh.add(&products(&state.m, &state.h));
    }
    assert_within_3se("<v h>", &vh, &exact.visible_hidden_moments());
    assert_within_3se("<m h>", &mh, &exact.expl_hidden_moments());
}

#[test]
fn reconstructed_chain_matches_exact_joint_moments() {
    let params = model();
    let exact = exact_distribution(&params, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut vh = Moments::new(6);
    let mut mh = Moments::new(6);
    for _ in 0..CHAINS {
        let v0: Vec<f64> = (0..3).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let m0: Vec<f64> = (0..3).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
        let mut state = GibbsState::new(v0, m0, vec![true; 3], 2);
        for _ in 0..BURN_IN {
            state.sweep(&params, MTreatment::Reconstructed, &mut rng);
        }
        vh.add(&products(&state.v, &state.h));
        mh.add(&products(&state.m, &state.h));
    }
    assert_within_3se("<v h>", &vh, &exact.visible_hidden_moments());
    assert_within_3se("<m h>", &mh, &exact.expl_hidden_moments());
}

/// Expected CD-1 deltas for one user, summing over every binary hidden
/// sample of the chain.
fn expected_cd1(params: &RbmParams, v: &[(usize, f64)], m: &[(usize, f64)]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let (n, f) = (params.n_items(), params.hidden());
    let hidden_probs = |v: &[(usize, f64)]| -> Vec<f64> {
        (0..f)
            .map(|j| {
                let mut x = params.hidden_bias()[j];
                for &(i, vi) in v {
                    x += vi * params.w(i, j);
                }
                for &(i, mi) in m {
                    x += mi * params.d(i, j);
                }
                sigmoid(x)
            })
            .collect()
    };
    let hd = hidden_probs(v);
    let mut dw = vec![0.0; n * f];
    let mut dd = vec![0.0; n * f];
    let mut da = hd.clone();
    let mut db = vec![0.0; n];
    for &(i, vi) in v {
        db[i] = vi;
        for j in 0..f {
            dw[i * f + j] = vi * hd[j];
        }
    }
    for &(i, mi) in m {
        for j in 0..f {
            dd[i * f + j] = mi * hd[j];
        }
    }
    for s in 0..1usize << f {
        let h: Vec<f64> = (0..f).map(|j| ((s >> j) & 1) as f64).collect();
        let p: f64 = (0..f).map(|j| if h[j] == 1.0 { hd[j] } else { 1.0 - hd[j] }).product();
        let vn: Vec<(usize, f64)> = v
            .iter()
            .map(|&(i, _)| {
                let x = params.visible_bias()[i] + (0..f).map(|j| params.w(i, j) * h[j]).sum::<f64>();
                (i, sigmoid(x))
            })
            .collect();
        let hn = hidden_probs(&vn);
        for &(i, x) in &vn {
            db[i] -= p * x;
            for j in 0..f {
                dw[i * f + j] -= p * x * hn[j];
            }
        }
        for j in 0..f {
            da[j] -= p * hn[j];
        }
        for &(i, mi) in m {
            for j in 0..f {
                dd[i * f + j] -= p * mi * hn[j];
            }
        }
    }
    (dw, dd, da, db)
}

#[test]
fn cd1_deltas_average_to_the_enumerated_expectation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = {
        let mut gen = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let (n, f) = (5, 3);
        RbmParams::from_parts(ExplainabilityMode::Conditioned, f, gen(n * f), gen(n * f), gen(f), gen(n), gen(n)).unwrap()
    };
    // items 1 and 3 unrated
    let v = [(0, 0.8), (2, 0.2), (4, 1.0)];
    let m = [(1, 0.6), (2, 0.3)];
    let config = TrainConfig {
        learning_rate_w: 1.0,
        learning_rate_d: 1.0,
        ..TrainConfig::default()
    };
    let (ew, ed, ea, eb) = expected_cd1(&params, &v, &m);

    let mut mw = Moments::new(ew.len());
    let mut md = Moments::new(ed.len());
    let mut ma = Moments::new(ea.len());
    let mut mb = Moments::new(eb.len());
    let mut chain = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20_000 {
        let d = cd_step(&params, &v, &m, &config, &mut chain);
        for i in [1, 3] {
            assert!(d.weights[i * 3..(i + 1) * 3].iter().all(|&x| x == 0.0));
            assert_eq!(d.visible_bias[i], 0.0);
        }
        assert!(d.expl_bias.iter().all(|&x| x == 0.0));
        mw.add(&d.weights);
        md.add(&d.expl_weights);
        ma.add(&d.hidden_bias);
        mb.add(&d.visible_bias);
    }
    for (what, got, want) in [("W", &mw, &ew), ("D", &md, &ed), ("a", &ma, &ea), ("b", &mb, &eb)] {
        for (idx, ((mean, se), &w)) in got.stats().into_iter().zip(want).enumerate() {
            // zero-variance entries must match to rounding
            let tol = (4.0 * se).max(1e-12);
            assert!((mean - w).abs() <= tol, "{what}[{idx}]: {mean} vs {w} (se {se})");
        }
    }
}
