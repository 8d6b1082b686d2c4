//! Versioned JSON files holding a drawn scenario exactly.
//!
//! Channel entries are stored as hexadecimal IEEE-754 bit patterns so a
//! round trip reproduces every bit.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hwi::{DistortionParams, ImbalanceParams};
use crate::network::NetworkScenario;
use crate::realdec::ComplexMat;

pub const FORMAT: &str = "igs-mimo-scenario";
pub const VERSION: u32 = 1;

/// Row-major complex matrix with hex-encoded parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<String>,
    pub im: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format: String,
    pub version: u32,
    pub users: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub seed: Option<u64>,
    pub tx_imbalance: ImbalanceParams,
    pub rx_imbalance: ImbalanceParams,
    pub distortion: DistortionParams,
    pub power_budget: Vec<f64>,
    pub eta: Vec<f64>,
    pub p_static: Vec<f64>,
    /// `channels[k * users + i]` is the link from transmitter `i` to receiver `k`.
    pub channels: Vec<HexMatrix>,
}

fn encode(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

fn decode(s: &str) -> Result<f64> {
    if s.len() != 16 {
        return Err(Error::InvalidScenario(format!("bit pattern {s:?} must have 16 hex digits")));
    }
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|e| Error::InvalidScenario(format!("bad bit pattern {s:?}: {e}")))
}

impl HexMatrix {
    pub fn from_matrix(m: &ComplexMat) -> Self {
        let (rows, cols) = m.shape();
        let entries: Vec<Complex64> = (0..rows).flat_map(|i| (0..cols).map(move |j| m[(i, j)])).collect();
        HexMatrix {
            rows,
            cols,
            re: entries.iter().map(|z| encode(z.re)).collect(),
            im: entries.iter().map(|z| encode(z.im)).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMat> {
        let n = self.rows * self.cols;
        if self.re.len() != n || self.im.len() != n {
            return Err(Error::dims("channel entries", n, self.re.len().min(self.im.len())));
        }
        let mut out = ComplexMat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let idx = i * self.cols + j;
                out[(i, j)] = Complex64::new(decode(&self.re[idx])?, decode(&self.im[idx])?);
            }
        }
        Ok(out)
    }
}

impl ScenarioFile {
    pub fn from_scenario(s: &NetworkScenario) -> Self {
        ScenarioFile {
            format: FORMAT.into(),
            version: VERSION,
            users: s.users,
            n_tx: s.n_tx,
            n_rx: s.n_rx,
            seed: s.seed,
            tx_imbalance: s.tx_imb.clone(),
            rx_imbalance: s.rx_imb.clone(),
            distortion: s.distortion,
            power_budget: s.power_budget.clone(),
            eta: s.eta.clone(),
            p_static: s.p_static.clone(),
            channels: s.channels.iter().map(HexMatrix::from_matrix).collect(),
        }
    }

    pub fn to_scenario(&self) -> Result<NetworkScenario> {
        if self.format != FORMAT {
            return Err(Error::InvalidScenario(format!("unknown format {:?}", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::InvalidScenario(format!("unsupported version {}", self.version)));
        }
        let s = NetworkScenario {
            users: self.users,
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            channels: self.channels.iter().map(HexMatrix::to_matrix).collect::<Result<_>>()?,
            tx_imb: self.tx_imbalance.clone(),
            rx_imb: self.rx_imbalance.clone(),
            distortion: self.distortion,
            power_budget: self.power_budget.clone(),
            eta: self.eta.clone(),
            p_static: self.p_static.clone(),
            seed: self.seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{draw_scenario, ScenarioConfig};

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ScenarioConfig { users: 3, n_tx: 2, n_rx: 3, ..Default::default() };
        let s = draw_scenario(&cfg, 42).unwrap();
        let text = ScenarioFile::from_scenario(&s).to_json().unwrap();
        let back = ScenarioFile::from_json(&text).unwrap().to_scenario().unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn special_values_survive() {
        for x in [0.0, -0.0, f64::MIN_POSITIVE, 1.0 / 3.0, -1e300] {
            assert_eq!(decode(&encode(x)).unwrap().to_bits(), x.to_bits());
        }
        assert!(decode("3ff").is_err());
        assert!(decode("zzzzzzzzzzzzzzzz").is_err());
    }

    #[test]
    fn wrong_version_and_shapes_are_rejected() {
        let s = draw_scenario(&ScenarioConfig::default(), 1).unwrap();
        let mut f = ScenarioFile::from_scenario(&s);
        f.version = 99;
        assert!(f.to_scenario().is_err());
        let mut f = ScenarioFile::from_scenario(&s);
        f.channels.pop();
        assert!(f.to_scenario().is_err());
        let mut f = ScenarioFile::from_scenario(&s);
        f.channels[0].re.pop();
        assert!(f.to_scenario().is_err());
        assert!(ScenarioFile::from_json("{\"format\": 1}").is_err());
    }
}
