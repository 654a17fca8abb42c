//! SIMM interest-rate delta margin.
//!
//! Sensitivities are PV01s: the change in value for a +1bp bump of one
//! zero-rate node, in currency per basis point. Weighted sensitivities are
//! aggregated with the tenor correlation matrix.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::termstructure::{TenorGrid, YieldCurve, BASIS_POINT, NUM_TENORS};

const DEFAULT_CONFIG: &str = include_str!("../config/simm_ir_delta.json");

/// Smallest eigenvalue accepted for a correlation matrix.
pub const PSD_TOLERANCE: f64 = -1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensitivityVector(pub [f64; NUM_TENORS]);

impl SensitivityVector {
    pub fn zero() -> Self {
        Self([0.0; NUM_TENORS])
    }

    pub fn values(&self) -> &[f64; NUM_TENORS] {
        &self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.map(|s| c * s))
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl std::ops::Add for SensitivityVector {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimmConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    risk_weights: [f64; NUM_TENORS],
    correlations: [[f64; NUM_TENORS]; NUM_TENORS],
    #[serde(default = "unit")]
    concentration_factor: f64,
}

fn unit() -> f64 {
    1.0
}

impl SimmConfig {
    pub fn new(
        risk_weights: [f64; NUM_TENORS],
        correlations: [[f64; NUM_TENORS]; NUM_TENORS],
        concentration_factor: f64,
    ) -> Result<Self> {
        let cfg = Self {
            version: None,
            risk_weights,
            correlations,
            concentration_factor,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uncorrelated tenors with the given weights.
    pub fn uncorrelated(risk_weights: [f64; NUM_TENORS]) -> Result<Self> {
        let mut rho = [[0.0; NUM_TENORS]; NUM_TENORS];
        for (k, row) in rho.iter_mut().enumerate() {
            row[k] = 1.0;
        }
        Self::new(risk_weights, rho, 1.0)
    }

    pub fn risk_weights(&self) -> &[f64; NUM_TENORS] {
        &self.risk_weights
    }

    pub fn correlations(&self) -> &[[f64; NUM_TENORS]; NUM_TENORS] {
        &self.correlations
    }

    pub fn concentration_factor(&self) -> f64 {
        self.concentration_factor
    }

    fn validate(&self) -> Result<()> {
        if self
            .risk_weights
            .iter()
            .any(|w| !(*w > 0.0 && w.is_finite()))
        {
            return Err(Error::config("risk weights must be positive"));
        }
        if !(self.concentration_factor > 0.0 && self.concentration_factor.is_finite()) {
            return Err(Error::config("concentration factor must be positive"));
        }
        let rho = &self.correlations;
        for k in 0..NUM_TENORS {
            if rho[k][k] != 1.0 {
                return Err(Error::config(format!(
                    "correlation diagonal at {k} is not 1"
                )));
            }
            for l in 0..NUM_TENORS {
                let v = rho[k][l];
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::config(format!(
                        "correlation ({k},{l}) = {v} outside [-1, 1]"
                    )));
                }
                if v != rho[l][k] {
                    return Err(Error::config(format!(
                        "correlation matrix not symmetric at ({k},{l})"
                    )));
                }
            }
        }
        let m = DMatrix::from_fn(NUM_TENORS, NUM_TENORS, |i, j| rho[i][j]);
        let min_eig = SymmetricEigen::new(m).eigenvalues.min();
        if min_eig < PSD_TOLERANCE {
            return Err(Error::config(format!(
                "correlation matrix is not positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_vec(self).expect("config serializes"),
        ))
    }
}

impl Default for SimmConfig {
    /// Bundled regular-volatility currency parameter set.
    fn default() -> Self {
        Self::from_json(DEFAULT_CONFIG).expect("bundled SIMM config is valid")
    }
}

/// PV01 at every tenor: `V(Y_k + 1bp) - V(Y)`, pricing the base curve once.
pub fn pv01_sensitivities<F>(mut pricer: F, curve: &YieldCurve) -> Result<SensitivityVector>
where
    F: FnMut(&YieldCurve) -> Result<f64>,
{
    let base = pricer(curve)?;
    let mut out = [0.0; NUM_TENORS];
    for (k, s) in out.iter_mut().enumerate() {
        let bumped = curve.bumped(k, BASIS_POINT);
        let v = pricer(&bumped).map_err(|e| Error::Sensitivity {
            tenor: k,
            source: Box::new(e),
        })?;
        *s = v - base;
    }
    Ok(SensitivityVector(out))
}

/// `sqrt(Σ_k Σ_l ρ_kl WS_k WS_l)` with `WS_k = RW_k · s_k · CR`.
pub fn delta_margin(s: &SensitivityVector, cfg: &SimmConfig) -> f64 {
    let mut ws = [0.0; NUM_TENORS];
    for k in 0..NUM_TENORS {
        ws[k] = cfg.risk_weights[k] * s.0[k] * cfg.concentration_factor;
    }
    let mut total = 0.0;
    for k in 0..NUM_TENORS {
        if ws[k] == 0.0 {
            continue;
        }
        let row = &cfg.correlations[k];
        let mut acc = 0.0;
        for l in 0..NUM_TENORS {
            acc += row[l] * ws[l];
        }
        total += ws[k] * acc;
    }
    total.max(0.0).sqrt()
}

/// Allocates sensitivities reported at arbitrary tenors onto the grid by
/// linear weights; mass outside the grid goes to the nearest end node.
pub fn allocate_to_grid(
    grid: &TenorGrid,
    tenors: &[f64],
    sensitivities: &[f64],
) -> Result<SensitivityVector> {
    if tenors.len() != sensitivities.len() {
        return Err(Error::Dimension {
            expected: tenors.len(),
            got: sensitivities.len(),
        });
    }
    let mut out = [0.0; NUM_TENORS];
    for (&tau, &s) in tenors.iter().zip(sensitivities) {
        let (left, w) = grid.locate(tau);
        out[left] += (1.0 - w) * s;
        out[left + 1] += w * s;
    }
    Ok(SensitivityVector(out))
}
