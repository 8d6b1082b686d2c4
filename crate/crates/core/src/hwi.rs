//! Hardware-impairment model: I/Q imbalance at both ends plus additive
//! transmit/receive distortion.
//!
//! With imbalance the received signal is widely linear in the transmitted one,
//! `y = H̄1 x + H̄2 x* + z`, which becomes an ordinary linear map `H̃` once
//! everything is written in real-composite form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::realdec::{realify, ComplexMat, RealMat};

/// Amplitude/phase imbalance of the I/Q branches.
///
/// Either one value replicated across all antennas, or one value per antenna.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceParams {
    pub amplitude: Vec<f64>,
    /// Radians.
    pub phase: Vec<f64>,
}

impl ImbalanceParams {
    pub fn ideal() -> Self {
        Self::scalar(1.0, 0.0)
    }

    pub fn scalar(amplitude: f64, phase: f64) -> Self {
        ImbalanceParams {
            amplitude: vec![amplitude],
            phase: vec![phase],
        }
    }

    pub fn per_antenna(amplitude: Vec<f64>, phase: Vec<f64>) -> Self {
        ImbalanceParams { amplitude, phase }
    }

    pub fn is_ideal(&self) -> bool {
        self.amplitude.iter().all(|&a| a == 1.0) && self.phase.iter().all(|&p| p == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.amplitude.is_empty() || self.phase.is_empty() {
            return Err(Error::InvalidScenario("empty imbalance parameters".into()));
        }
        if let Some(a) = self.amplitude.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "imbalance amplitude must be positive, got {a}"
            )));
        }
        if self.phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidScenario("non-finite imbalance phase".into()));
        }
        Ok(())
    }

    /// Per-antenna `(amplitude, phase)` for an `n`-antenna device.
    fn resolve(&self, n: usize) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        let pick = |v: &[f64], what| -> Result<Vec<f64>> {
            match v.len() {
                1 => Ok(vec![v[0]; n]),
                len if len == n => Ok(v.to_vec()),
                len => Err(Error::dims(what, n, len)),
            }
        };
        let a = pick(&self.amplitude, "imbalance amplitude")?;
        let p = pick(&self.phase, "imbalance phase")?;
        Ok(a.into_iter().zip(p).collect())
    }
}

impl Default for ImbalanceParams {
    fn default() -> Self {
        Self::ideal()
    }
}

/// Variances of the additive proper distortion at the transmitter and the
/// aggregate receive noise (`C_T = σ²_T I`, `C_R = σ²_R I`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionParams {
    pub sigma2_tx: f64,
    pub sigma2_rx: f64,
}

impl DistortionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_tx >= 0.0) || !(self.sigma2_rx >= 0.0) {
            return Err(Error::InvalidScenario(format!(
                "distortion variances must be non-negative, got {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for DistortionParams {
    fn default() -> Self {
        DistortionParams {
            sigma2_tx: 0.2,
            sigma2_rx: 1.0,
        }
    }
}

/// Effective widely-linear model of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct HwiLinkModel {
    pub h1bar: ComplexMat,
    pub h2bar: ComplexMat,
    /// Real-composite map acting on `[Re x; Im x]`.
    pub h_tilde: RealMat,
    /// Impairment-free realification of the raw channel.
    pub h_real: RealMat,
}

fn imbalance_pair(p: &ImbalanceParams, n: usize) -> Result<(ComplexMat, ComplexMat)> {
    let entries = p.resolve(n)?;
    let mut m1 = ComplexMat::zeros(n, n);
    let mut m2 = ComplexMat::zeros(n, n);
    for (i, &(a, theta)) in entries.iter().enumerate() {
        let v1 = (Complex64::new(1.0, 0.0) + Complex64::from_polar(a, theta)) * 0.5;
        m1[(i, i)] = v1;
        m2[(i, i)] = Complex64::new(1.0, 0.0) - v1.conj();
    }
    Ok((m1, m2))
}

/// Transmit-side imbalance matrices `(V1, V2)` with `V2 = I - V1*`.
pub fn build_tx_imbalance(p: &ImbalanceParams, n: usize) -> Result<(ComplexMat, ComplexMat)> {
    imbalance_pair(p, n)
}

/// Receive-side imbalance matrices `(Γ1, Γ2)` with `Γ2 = I - Γ1*`.
pub fn build_rx_imbalance(p: &ImbalanceParams, n: usize) -> Result<(ComplexMat, ComplexMat)> {
    imbalance_pair(p, n)
}

/// Real composite of the widely linear map `x ↦ M1 x + M2 x*`:
/// `[[Re(M1+M2), -Im(M1-M2)], [Im(M1+M2), Re(M1-M2)]]`.
pub fn widely_linear_real(m1: &ComplexMat, m2: &ComplexMat) -> RealMat {
    let (r, c) = m1.shape();
    let mut out = RealMat::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let s = m1[(i, j)] + m2[(i, j)];
            let d = m1[(i, j)] - m2[(i, j)];
            out[(i, j)] = s.re;
            out[(i, j + c)] = -d.im;
            out[(i + r, j)] = s.im;
            out[(i + r, j + c)] = d.re;
        }
    }
    out
}

fn conj(m: &ComplexMat) -> ComplexMat {
    m.map(|z| z.conj())
}

/// Effective link `H̄1, H̄2, H̃` for raw channel `h` (`n_rx × n_tx`).
pub fn effective_link(
    h: &ComplexMat,
    tx: &ImbalanceParams,
    rx: &ImbalanceParams,
) -> Result<HwiLinkModel> {
    let (n_rx, n_tx) = h.shape();
    let (v1, v2) = build_tx_imbalance(tx, n_tx)?;
    let (g1, g2) = build_rx_imbalance(rx, n_rx)?;
    let h_conj = conj(h);
    let h1bar = &g1 * h * &v1 + &g2 * &h_conj * conj(&v2);
    let h2bar = &g1 * h * &v2 + &g2 * &h_conj * conj(&v1);
    let h_tilde = widely_linear_real(&h1bar, &h2bar);
    Ok(HwiLinkModel {
        h1bar,
        h2bar,
        h_tilde,
        h_real: realify(h),
    })
}

/// Real composite `Γ̲` of the receive imbalance, mapping `[Re y_rx; Im y_rx]`
/// to `[Re y; Im y]`.
///
/// Uses `Re(Γ1 - Γ2)` in the lower-right block; this is the form that matches
/// the sample covariance of simulated receive noise.
pub fn gamma_real(rx: &ImbalanceParams, n: usize) -> Result<RealMat> {
    let (g1, g2) = build_rx_imbalance(rx, n)?;
    Ok(widely_linear_real(&g1, &g2))
}
