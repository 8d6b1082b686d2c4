//! Convex-concave machinery for the rates.
//!
//! Each rate is `R_k = r_{k,1} - r_{k,2}` with both parts concave log-dets.
//! Linearizing `r_{k,2}` at an expansion point gives a concave minorant
//! `R̃_k` that touches `R_k` there with the same gradient.

use std::f64::consts::LN_2;

use crate::error::Result;
use crate::network::{check_covariances, CovarianceSet, EffectiveNetwork};
use crate::realdec::{frob_inner, symmetrize_in_place, RealMat, SpdFactor};

/// Affine function `Q ↦ constant + ⟨gradient, Q⟩`.
#[derive(Debug, Clone)]
pub struct AffineBound {
    pub constant: f64,
    pub gradient: RealMat,
}

impl AffineBound {
    pub fn value_at(&self, q: &RealMat) -> f64 {
        self.constant + frob_inner(&self.gradient, q)
    }
}

/// Tangent upper bound of `log₂ det(Q)` at `q_ref`:
/// `log₂det(Q_ref) + Tr(Q_ref⁻¹ (Q - Q_ref)) / ln 2`.
pub fn logdet_majorizer(q_ref: &RealMat) -> Result<AffineBound> {
    let f = SpdFactor::new(q_ref)?;
    let n = q_ref.nrows() as f64;
    Ok(AffineBound {
        constant: f.log2det() - n / LN_2,
        gradient: f.inverse() / LN_2,
    })
}

/// Linearization data of all `r_{k,2}` at an expansion point.
#[derive(Debug, Clone)]
pub struct SurrogateState {
    pub expansion: CovarianceSet,
    /// `r_{k,2}` at the expansion point.
    pub const_terms: Vec<f64>,
    /// Row-major `K × K`: `D_ki = ∂r_{k,2}/∂P_i` at the expansion point; zero for `i = k`.
    pub grads: Vec<RealMat>,
    /// `Σ_{i≠k} ⟨D_ki, P_i^(l)⟩`.
    anchor: Vec<f64>,
}

impl SurrogateState {
    pub fn grad(&self, k: usize, i: usize) -> &RealMat {
        &self.grads[k * self.expansion.users() + i]
    }
}

/// Linearizes every user's interference term at `at`.
pub fn build_surrogate(e: &EffectiveNetwork, at: &CovarianceSet) -> Result<SurrogateState> {
    check_covariances(e, &at.mats)?;
    let k_users = e.users;
    let dim = e.tx_dim();
    let mut const_terms = Vec::with_capacity(k_users);
    let mut grads = Vec::with_capacity(k_users * k_users);
    let mut anchor = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let interference = e.received_covariance(k, &at.mats, Some(k));
        let f = SpdFactor::new(&interference)?;
        const_terms.push(0.5 * f.log2det());
        let mut lin = 0.0;
        for i in 0..k_users {
            if i == k {
                grads.push(RealMat::zeros(dim, dim));
                continue;
            }
            let mut d = e.ht(k, i) * f.solve(e.h(k, i)) * (0.5 / LN_2);
            symmetrize_in_place(&mut d);
            lin += frob_inner(&d, &at.mats[i]);
            grads.push(d);
        }
        anchor.push(lin);
    }
    Ok(SurrogateState {
        expansion: at.clone(),
        const_terms,
        grads,
        anchor,
    })
}

/// Value of `R̃_k` and its gradient with respect to every `P_i`.
#[derive(Debug, Clone)]
pub struct SurrogateEval {
    pub value: f64,
    pub grads: Vec<RealMat>,
}

/// `R̃_k(p)` with its gradient.
pub fn surrogate_rate(
    s: &SurrogateState,
    e: &EffectiveNetwork,
    p: &CovarianceSet,
    k: usize,
) -> Result<SurrogateEval> {
    let engine = SurrogateEngine::new(e, s);
    let point = engine.evaluate(&p.mats)?;
    let mut weights = vec![0.0; e.users];
    weights[k] = 1.0;
    Ok(SurrogateEval {
        value: point.values[k],
        grads: engine.weighted_gradient(&point, &weights),
    })
}

/// Batched evaluation of all `R̃_k` at one point, sharing the receive
/// covariance factorizations between values and gradients.
pub struct SurrogateEngine<'a> {
    net: &'a EffectiveNetwork,
    state: &'a SurrogateState,
}

/// Values of all surrogates at one point plus the inverses needed for gradients.
pub struct SurrogatePoint {
    pub values: Vec<f64>,
    received_inv: Vec<RealMat>,
}

impl<'a> SurrogateEngine<'a> {
    pub fn new(net: &'a EffectiveNetwork, state: &'a SurrogateState) -> Self {
        SurrogateEngine { net, state }
    }

    pub fn network(&self) -> &EffectiveNetwork {
        self.net
    }

    pub fn evaluate(&self, p: &[RealMat]) -> Result<SurrogatePoint> {
        let e = self.net;
        let s = self.state;
        let mut values = Vec::with_capacity(e.users);
        let mut received_inv = Vec::with_capacity(e.users);
        for k in 0..e.users {
            let total = e.received_covariance(k, p, None);
            let f = SpdFactor::new(&total)?;
            let lin: f64 = (0..e.users)
                .filter(|&i| i != k)
                .map(|i| frob_inner(s.grad(k, i), &p[i]))
                .sum();
            values.push(0.5 * f.log2det() - s.const_terms[k] - (lin - s.anchor[k]));
            received_inv.push(f.inverse());
        }
        Ok(SurrogatePoint {
            values,
            received_inv,
        })
    }

    /// `∇_{P_i} Σ_k w_k R̃_k` for every `i`.
    pub fn weighted_gradient(&self, point: &SurrogatePoint, weights: &[f64]) -> Vec<RealMat> {
        let e = self.net;
        let dim = e.tx_dim();
        let mut out = vec![RealMat::zeros(dim, dim); e.users];
        for (k, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let scaled = &point.received_inv[k] * (w * 0.5 / LN_2);
            for (i, g) in out.iter_mut().enumerate() {
                let x = &scaled * e.h(k, i);
                g.gemm(1.0, e.ht(k, i), &x, 1.0);
                if i != k {
                    *g -= self.state.grad(k, i) * w;
                }
            }
        }
        for g in &mut out {
            symmetrize_in_place(g);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_effective, draw_scenario, rates, ScenarioConfig, SignalingMode};
    use crate::realdec::log2det_spd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> RealMat {
        let g = RealMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &g * g.transpose() * scale + RealMat::identity(n, n) * 1e-3
    }

    fn random_feasible(rng: &mut ChaCha8Rng, e: &EffectiveNetwork) -> CovarianceSet {
        let dim = e.tx_dim();
        CovarianceSet {
            mode: SignalingMode::Igs,
            mats: e
                .power_budget
                .iter()
                .map(|&b| {
                    let m = random_psd(rng, dim, 1.0);
                    let t = rng.random_range(0.0..1.0) * b / m.trace();
                    m * t
                })
                .collect(),
        }
    }

    fn network(seed: u64, users: usize, n: usize) -> EffectiveNetwork {
        let cfg = ScenarioConfig { users, n_tx: n, n_rx: n, snr_db: 10.0, ..Default::default() };
        build_effective(&draw_scenario(&cfg, seed).unwrap()).unwrap()
    }

    #[test]
    fn majorizer_touches_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let i2 = RealMat::identity(2, 2);
        let b = logdet_majorizer(&i2).unwrap();
        let q = &i2 * 2.0;
        assert!((b.value_at(&q) - 2.0 / LN_2).abs() < 1e-14);
        assert!(b.value_at(&q) >= log2det_spd(&q).unwrap());
        for _ in 0..500 {
            let q_ref = random_psd(&mut rng, 4, 1.0);
            let q = random_psd(&mut rng, 4, 1.0);
            let b = logdet_majorizer(&q_ref).unwrap();
            assert!((b.value_at(&q_ref) - log2det_spd(&q_ref).unwrap()).abs() <= 1e-10);
            assert!(b.value_at(&q) >= log2det_spd(&q).unwrap() - 1e-12);
        }
    }

    #[test]
    fn single_user_surrogate_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = network(3, 1, 2);
        let at = random_feasible(&mut rng, &e);
        let s = build_surrogate(&e, &at).unwrap();
        assert!(s.grads.iter().all(|g| g.amax() == 0.0));
        for _ in 0..20 {
            let p = random_feasible(&mut rng, &e);
            let v = surrogate_rate(&s, &e, &p, 0).unwrap().value;
            assert!((v - rates(&e, &p).unwrap().rates[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn touching_and_minorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..10 {
            let e = network(seed, 3, 2);
            let at = random_feasible(&mut rng, &e);
            let s = build_surrogate(&e, &at).unwrap();
            let exact = rates(&e, &at).unwrap();
            for k in 0..3 {
                let v = surrogate_rate(&s, &e, &at, k).unwrap().value;
                assert!((v - exact.rates[k]).abs() <= 1e-10);
            }
            for _ in 0..50 {
                let p = random_feasible(&mut rng, &e);
                let r = rates(&e, &p).unwrap();
                for k in 0..3 {
                    assert!(surrogate_rate(&s, &e, &p, k).unwrap().value <= r.rates[k] + 1e-9);
                }
            }
        }
    }

    /// Central differences of `f` along the symmetric unit directions of `P_i`.
    fn fd_gradient(f: &dyn Fn(&CovarianceSet) -> f64, p: &CovarianceSet, i: usize, h: f64) -> RealMat {
        let n = p.mats[i].nrows();
        let mut g = RealMat::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let mut plus = p.clone();
                let mut minus = p.clone();
                plus.mats[i][(a, b)] += h;
                minus.mats[i][(a, b)] -= h;
                if a != b {
                    plus.mats[i][(b, a)] += h;
                    minus.mats[i][(b, a)] -= h;
                }
                let d = (f(&plus) - f(&minus)) / (2.0 * h);
                // A symmetric perturbation of an off-diagonal pair picks up 2 G_ab.
                let v = if a == b { d } else { d / 2.0 };
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }

    fn rel_err(a: &RealMat, b: &RealMat) -> f64 {
        (a - b).norm() / b.norm().max(1e-12)
    }

    #[test]
    fn interference_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = network(6, 2, 2);
        let at = random_feasible(&mut rng, &e);
        let s = build_surrogate(&e, &at).unwrap();
        for k in 0..2 {
            let i = 1 - k;
            let r2 = |p: &CovarianceSet| rates(&e, p).unwrap().r2[k];
            let fd = fd_gradient(&r2, &at, i, 1e-5);
            assert!(rel_err(s.grad(k, i), &fd) <= 1e-4, "k={k}: {}", rel_err(s.grad(k, i), &fd));
        }
    }

    #[test]
    fn surrogate_gradient_matches_exact_rate_gradient_at_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let e = network(8, 3, 2);
        let at = random_feasible(&mut rng, &e);
        let s = build_surrogate(&e, &at).unwrap();
        for k in 0..3 {
            let eval = surrogate_rate(&s, &e, &at, k).unwrap();
            let rk = |p: &CovarianceSet| rates(&e, p).unwrap().rates[k];
            for i in 0..3 {
                let fd = fd_gradient(&rk, &at, i, 1e-5);
                assert!(rel_err(&eval.grads[i], &fd) <= 1e-4);
            }
        }
    }

    #[test]
    fn surrogate_is_concave_along_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = network(10, 3, 1);
        let at = random_feasible(&mut rng, &e);
        let s = build_surrogate(&e, &at).unwrap();
        for _ in 0..100 {
            let p = random_feasible(&mut rng, &e);
            let q = random_feasible(&mut rng, &e);
            let t = rng.random_range(0.01..0.99);
            let mix = CovarianceSet {
                mode: SignalingMode::Igs,
                mats: p.mats.iter().zip(&q.mats).map(|(a, b)| a * t + b * (1.0 - t)).collect(),
            };
            for k in 0..3 {
                let f = |c: &CovarianceSet| surrogate_rate(&s, &e, c, k).unwrap().value;
                assert!(f(&mix) >= t * f(&p) + (1.0 - t) * f(&q) - 1e-9);
            }
        }
    }

    #[test]
    fn interference_gradients_are_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let e = network(12, 3, 2);
        let s = build_surrogate(&e, &random_feasible(&mut rng, &e)).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                assert!(crate::realdec::min_eigenvalue(s.grad(k, i)) >= -1e-12);
            }
        }
    }
}
