//! The K-user interference channel: scenario draws, effective per-link
//! matrices, per-user aggregate noise covariances and rate/EE evaluation.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hwi::{effective_link, gamma_real, DistortionParams, HwiLinkModel, ImbalanceParams};
use crate::realdec::{min_eigenvalue, symmetrize_in_place, ComplexMat, RealMat, SpdFactor};

/// Parameters from which a random scenario is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub users: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    /// `10 log10(P / σ²_R)`.
    pub snr_db: f64,
    pub a_tx: f64,
    /// Receive amplitude imbalance; `None` ties it to `a_tx`.
    pub a_rx: Option<f64>,
    /// Same phase error at both ends, degrees.
    pub phase_deg: f64,
    pub sigma2_tx: f64,
    pub sigma2_rx: f64,
    pub eta: f64,
    pub p_static: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            users: 2,
            n_tx: 1,
            n_rx: 1,
            snr_db: 10.0,
            a_tx: 0.6,
            a_rx: None,
            phase_deg: 5.0,
            sigma2_tx: 0.2,
            sigma2_rx: 1.0,
            eta: 1.0,
            p_static: 1.0,
        }
    }
}

impl ScenarioConfig {
    pub fn power_budget(&self) -> f64 {
        self.sigma2_rx * 10f64.powf(self.snr_db / 10.0)
    }

    pub fn tx_imbalance(&self) -> ImbalanceParams {
        ImbalanceParams::scalar(self.a_tx, self.phase_deg.to_radians())
    }

    pub fn rx_imbalance(&self) -> ImbalanceParams {
        ImbalanceParams::scalar(self.a_rx.unwrap_or(self.a_tx), self.phase_deg.to_radians())
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.n_tx == 0 || self.n_rx == 0 {
            return Err(Error::Config("users and antenna counts must be positive".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        if !(self.eta > 0.0) || !(self.p_static >= 0.0) {
            return Err(Error::Config("eta must be positive and p_static non-negative".into()));
        }
        if !(self.sigma2_rx > 0.0) {
            return Err(Error::Config("sigma2_rx must be positive".into()));
        }
        self.tx_imbalance().validate()?;
        self.rx_imbalance().validate()?;
        DistortionParams {
            sigma2_tx: self.sigma2_tx,
            sigma2_rx: self.sigma2_rx,
        }
        .validate()
    }
}

/// Full description of a K-user MIMO IC with impairments.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkScenario {
    pub users: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    /// Row-major `users × users` grid; entry `k * users + i` is `H_ki`, the
    /// link from transmitter `i` to receiver `k`.
    pub channels: Vec<ComplexMat>,
    pub tx_imb: ImbalanceParams,
    pub rx_imb: ImbalanceParams,
    pub distortion: DistortionParams,
    pub power_budget: Vec<f64>,
    pub eta: Vec<f64>,
    pub p_static: Vec<f64>,
    pub seed: Option<u64>,
}

impl NetworkScenario {
    pub fn channel(&self, k: usize, i: usize) -> &ComplexMat {
        &self.channels[k * self.users + i]
    }

    pub fn channel_mut(&mut self, k: usize, i: usize) -> &mut ComplexMat {
        &mut self.channels[k * self.users + i]
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.users;
        if k == 0 || self.n_tx == 0 || self.n_rx == 0 {
            return Err(Error::InvalidScenario("empty network".into()));
        }
        if self.channels.len() != k * k {
            return Err(Error::InvalidScenario(format!(
                "expected {} channels, got {}",
                k * k,
                self.channels.len()
            )));
        }
        if let Some(h) = self.channels.iter().find(|h| h.shape() != (self.n_rx, self.n_tx)) {
            return Err(Error::InvalidScenario(format!(
                "channel has shape {:?}, expected ({}, {})",
                h.shape(),
                self.n_rx,
                self.n_tx
            )));
        }
        for (name, v) in [
            ("power_budget", &self.power_budget),
            ("eta", &self.eta),
            ("p_static", &self.p_static),
        ] {
            if v.len() != k {
                return Err(Error::InvalidScenario(format!("{name} has {} entries, expected {k}", v.len())));
            }
        }
        if self.power_budget.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidScenario("power budgets must be positive".into()));
        }
        if self.eta.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::InvalidScenario("eta must be positive".into()));
        }
        if self.p_static.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidScenario("static power must be non-negative".into()));
        }
        self.tx_imb.validate()?;
        self.rx_imb.validate()?;
        self.distortion.validate()?;
        if self.distortion.sigma2_rx <= 0.0 {
            return Err(Error::InvalidScenario(
                "sigma2_rx must be positive (zero receive noise makes the noise covariance singular)".into(),
            ));
        }
        Ok(())
    }

    /// Same scenario with perfect I/Q branches (distortion noise kept).
    pub fn without_imbalance(&self) -> NetworkScenario {
        NetworkScenario {
            tx_imb: ImbalanceParams::ideal(),
            rx_imb: ImbalanceParams::ideal(),
            ..self.clone()
        }
    }
}

/// Draws i.i.d. `CN(0, 1)` channels for the configured network.
pub fn draw_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<NetworkScenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.5f64.sqrt()).expect("valid normal");
    let k = cfg.users;
    let channels = (0..k * k)
        .map(|_| {
            ComplexMat::from_fn(cfg.n_rx, cfg.n_tx, |_, _| {
                let re = normal.sample(&mut rng);
                let im = normal.sample(&mut rng);
                Complex64::new(re, im)
            })
        })
        .collect();
    let s = NetworkScenario {
        users: k,
        n_tx: cfg.n_tx,
        n_rx: cfg.n_rx,
        channels,
        tx_imb: cfg.tx_imbalance(),
        rx_imb: cfg.rx_imbalance(),
        distortion: DistortionParams {
            sigma2_tx: cfg.sigma2_tx,
            sigma2_rx: cfg.sigma2_rx,
        },
        power_budget: vec![cfg.power_budget(); k],
        eta: vec![cfg.eta; k],
        p_static: vec![cfg.p_static; k],
        seed: Some(seed),
    };
    s.validate()?;
    Ok(s)
}

/// Precomputed effective links and per-user noise covariances.
#[derive(Debug, Clone)]
pub struct EffectiveNetwork {
    pub users: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    /// Row-major `users × users`, same indexing as the scenario channels.
    pub links: Vec<HwiLinkModel>,
    pub noise_cov: Vec<RealMat>,
    pub power_budget: Vec<f64>,
    pub eta: Vec<f64>,
    pub p_static: Vec<f64>,
    h_tilde_t: Vec<RealMat>,
}

impl EffectiveNetwork {
    pub fn link(&self, k: usize, i: usize) -> &HwiLinkModel {
        &self.links[k * self.users + i]
    }

    /// `H̃_ki`.
    pub fn h(&self, k: usize, i: usize) -> &RealMat {
        &self.links[k * self.users + i].h_tilde
    }

    /// `H̃_kiᵀ`.
    pub fn ht(&self, k: usize, i: usize) -> &RealMat {
        &self.h_tilde_t[k * self.users + i]
    }

    /// `C̲_{z,k} + Σ_{i ∈ S} H̃_ki P_i H̃_kiᵀ` where `S` is all users, minus
    /// `exclude` when given.
    pub fn received_covariance(&self, k: usize, p: &[RealMat], exclude: Option<usize>) -> RealMat {
        let mut m = self.noise_cov[k].clone();
        for (i, pi) in p.iter().enumerate() {
            if Some(i) == exclude {
                continue;
            }
            let hp = self.h(k, i) * pi;
            m.gemm(1.0, &hp, self.ht(k, i), 1.0);
        }
        symmetrize_in_place(&mut m);
        m
    }

    /// Power consumed by user `k`: `η_k Tr(P_k) + P_{c,k}`.
    pub fn consumed_power(&self, k: usize, pk: &RealMat) -> f64 {
        self.eta[k] * pk.trace() + self.p_static[k]
    }

    pub fn tx_dim(&self) -> usize {
        2 * self.n_tx
    }
}

/// Builds the effective network of `s`.
pub fn build_effective(s: &NetworkScenario) -> Result<EffectiveNetwork> {
    build_effective_with(s, &s.tx_imb, &s.rx_imb)
}

/// Builds the effective network of `s` using the given imbalance parameters
/// in place of the scenario's own.
pub fn build_effective_with(
    s: &NetworkScenario,
    tx: &ImbalanceParams,
    rx: &ImbalanceParams,
) -> Result<EffectiveNetwork> {
    s.validate()?;
    let k = s.users;
    let links = s
        .channels
        .iter()
        .map(|h| effective_link(h, tx, rx))
        .collect::<Result<Vec<_>>>()?;
    let gamma = gamma_real(rx, s.n_rx)?;
    let ct = RealMat::identity(2 * s.n_tx, 2 * s.n_tx) * (0.5 * s.distortion.sigma2_tx);
    let cr = RealMat::identity(2 * s.n_rx, 2 * s.n_rx) * (0.5 * s.distortion.sigma2_rx);
    let noise_cov = (0..k)
        .map(|user| {
            let mut cd = cr.clone();
            for i in 0..k {
                let hr = &links[user * k + i].h_real;
                cd += hr * &ct * hr.transpose();
            }
            let mut cz = &gamma * cd * gamma.transpose();
            symmetrize_in_place(&mut cz);
            cz
        })
        .collect();
    let h_tilde_t = links.iter().map(|l| l.h_tilde.transpose()).collect();
    Ok(EffectiveNetwork {
        users: k,
        n_tx: s.n_tx,
        n_rx: s.n_rx,
        links,
        noise_cov,
        power_budget: s.power_budget.clone(),
        eta: s.eta.clone(),
        p_static: s.p_static.clone(),
        h_tilde_t,
    })
}

/// Improper (any symmetric PSD) or proper (`[[A, -B], [B, A]]`) signaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalingMode {
    Igs,
    Pgs,
}

/// Transmit covariances of all users in real-composite form.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub mode: SignalingMode,
    pub mats: Vec<RealMat>,
}

impl CovarianceSet {
    /// `P_k = fraction · P_k^max / (2 n_tx) · I` for every user.
    pub fn uniform(mode: SignalingMode, n_tx: usize, budgets: &[f64], fraction: f64) -> Self {
        let dim = 2 * n_tx;
        CovarianceSet {
            mode,
            mats: budgets
                .iter()
                .map(|&p| RealMat::identity(dim, dim) * (fraction * p / dim as f64))
                .collect(),
        }
    }

    pub fn zeros(mode: SignalingMode, users: usize, n_tx: usize) -> Self {
        CovarianceSet {
            mode,
            mats: vec![RealMat::zeros(2 * n_tx, 2 * n_tx); users],
        }
    }

    pub fn with_mode(&self, mode: SignalingMode) -> Self {
        CovarianceSet {
            mode,
            mats: self.mats.clone(),
        }
    }

    pub fn users(&self) -> usize {
        self.mats.len()
    }

    pub fn traces(&self) -> Vec<f64> {
        self.mats.iter().map(|m| m.trace()).collect()
    }
}

/// Rates and energy efficiencies of a covariance set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Bits per channel use.
    pub rates: Vec<f64>,
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    /// Per-user EE, bits per Joule.
    pub ee: Vec<f64>,
    pub global_ee: f64,
    pub sum_rate: f64,
    pub min_rate: f64,
    pub consumed_power: Vec<f64>,
}

impl RateReport {
    /// `min_k R_k / α_k` over users with positive weight.
    pub fn min_weighted_rate(&self, alphas: &[f64]) -> f64 {
        weighted_min(&self.rates, alphas)
    }

    /// `min_k E_k / α_k` over users with positive weight.
    pub fn min_weighted_ee(&self, alphas: &[f64]) -> f64 {
        weighted_min(&self.ee, alphas)
    }
}

pub(crate) fn weighted_min(values: &[f64], alphas: &[f64]) -> f64 {
    values
        .iter()
        .zip(alphas)
        .filter(|(_, &a)| a > 0.0)
        .map(|(v, a)| v / a)
        .fold(f64::INFINITY, f64::min)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Evaluates rates, per-user EE and global EE of `p` on network `e`.
pub fn rates(e: &EffectiveNetwork, p: &CovarianceSet) -> Result<RateReport> {
    check_covariances(e, &p.mats)?;
    let k = e.users;
    let mut r1 = Vec::with_capacity(k);
    let mut r2 = Vec::with_capacity(k);
    for user in 0..k {
        let interference = e.received_covariance(user, &p.mats, Some(user));
        let hp = e.h(user, user) * &p.mats[user];
        let mut total = interference.clone();
        total.gemm(1.0, &hp, e.ht(user, user), 1.0);
        symmetrize_in_place(&mut total);
        r1.push(0.5 * SpdFactor::new(&total)?.log2det());
        r2.push(0.5 * SpdFactor::new(&interference)?.log2det());
    }
    let rates: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| a - b).collect();
    let consumed: Vec<f64> = (0..k).map(|u| e.consumed_power(u, &p.mats[u])).collect();
    let ee = rates.iter().zip(&consumed).map(|(&r, &c)| ratio(r, c)).collect();
    let sum_rate: f64 = rates.iter().sum();
    let total_power: f64 = consumed.iter().sum();
    if rates.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("rates"));
    }
    Ok(RateReport {
        min_rate: rates.iter().copied().fold(f64::INFINITY, f64::min),
        global_ee: ratio(sum_rate, total_power),
        sum_rate,
        ee,
        rates,
        r1,
        r2,
        consumed_power: consumed,
    })
}

pub(crate) fn check_covariances(e: &EffectiveNetwork, mats: &[RealMat]) -> Result<()> {
    if mats.len() != e.users {
        return Err(Error::dims("covariance set", e.users, mats.len()));
    }
    let d = e.tx_dim();
    if let Some(m) = mats.iter().find(|m| m.shape() != (d, d)) {
        return Err(Error::dims("covariance", format!("{d}x{d}"), format!("{:?}", m.shape())));
    }
    Ok(())
}

/// Checks the documented invariants of a covariance set against budgets.
pub fn covariance_violation(p: &CovarianceSet, budgets: &[f64]) -> f64 {
    p.mats
        .iter()
        .zip(budgets)
        .map(|(m, &b)| {
            let tr = (m.trace() - b).max(0.0);
            let eig = (-min_eigenvalue(m)).max(0.0);
            tr.max(eig)
        })
        .fold(0.0, f64::max)
}
