//! Delta-gamma loss sets for portfolios of European options.
//!
//! Over a horizon `dt` the portfolio loss is approximated by
//! `-Θ dt - Δᵀ dS - ½ dSᵀ Γ dS`. With independent assets and
//! `dS_i = σ_i √dt S_i X_i` the event `{loss > ℓ}` becomes the separable
//! quadratic superlevel set `{a + Σ (b_i x_i + c_i x_i²) >= ℓ}` in standard
//! normal coordinates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, QuadraticSuperlevel};
use crate::normal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FinanceError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("portfolio has no assets")]
    NoAssets,
    #[error("per-asset field '{field}' has {found} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("asset {asset} has net gamma {gamma} < 0; the loss set would not be convex")]
    NegativeGamma { asset: usize, gamma: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn positive(name: &'static str, value: f64) -> Result<f64, FinanceError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(FinanceError::InvalidParameter { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

/// Black-Scholes value and sensitivities; theta is per year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Greeks {
    pub price: f64,
    pub delta: f64,
    pub gamma: f64,
    pub theta: f64,
}

impl Greeks {
    fn scaled(self, k: f64) -> Self {
        Self {
            price: k * self.price,
            delta: k * self.delta,
            gamma: k * self.gamma,
            theta: k * self.theta,
        }
    }
}

pub fn bs_greeks(
    kind: OptionKind,
    spot: f64,
    strike: f64,
    vol: f64,
    rate: f64,
    maturity: f64,
) -> Result<Greeks, FinanceError> {
    positive("spot", spot)?;
    positive("strike", strike)?;
    positive("vol", vol)?;
    positive("maturity", maturity)?;
    if !rate.is_finite() {
        return Err(FinanceError::InvalidParameter {
            name: "rate",
            value: rate,
        });
    }
    let sqrt_t = maturity.sqrt();
    let d1 = ((spot / strike).ln() + (rate + 0.5 * vol * vol) * maturity) / (vol * sqrt_t);
    let d2 = d1 - vol * sqrt_t;
    let disc = strike * (-rate * maturity).exp();
    let gamma = normal::pdf(d1) / (spot * vol * sqrt_t);
    let decay = -spot * normal::pdf(d1) * vol / (2.0 * sqrt_t);
    Ok(match kind {
        OptionKind::Call => Greeks {
            price: spot * normal::cdf(d1) - disc * normal::cdf(d2),
            delta: normal::cdf(d1),
            gamma,
            theta: decay - rate * disc * normal::cdf(d2),
        },
        OptionKind::Put => Greeks {
            price: disc * normal::cdf(-d2) - spot * normal::cdf(-d1),
            delta: -normal::cdf(-d1),
            gamma,
            theta: decay + rate * disc * normal::cdf(-d2),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionPosition {
    pub kind: OptionKind,
    pub strike: f64,
    /// Years.
    pub maturity: f64,
    /// Signed number of contracts; negative is short.
    pub quantity: f64,
}

/// How the horizon `dt` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtConvention {
    /// `dt` is in years.
    #[default]
    Years,
    /// `dt` is in trading days; the horizon in years is `dt / trading_days`.
    TradingDays,
}

/// Independent assets, each carrying its own list of option positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSpec {
    pub spot: Vec<f64>,
    pub vol: Vec<f64>,
    pub rate: f64,
    pub dt: f64,
    pub positions: Vec<Vec<OptionPosition>>,
    pub loss_threshold: f64,
    #[serde(default = "default_trading_days")]
    pub trading_days: f64,
    #[serde(default)]
    pub dt_convention: DtConvention,
}

fn default_trading_days() -> f64 {
    250.0
}

impl PortfolioSpec {
    /// `n_assets` identical assets holding the same positions.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        n_assets: usize,
        spot: f64,
        vol: f64,
        rate: f64,
        dt: f64,
        positions: Vec<OptionPosition>,
        loss_threshold: f64,
    ) -> Self {
        Self {
            spot: vec![spot; n_assets],
            vol: vec![vol; n_assets],
            rate,
            dt,
            positions: vec![positions; n_assets],
            loss_threshold,
            trading_days: default_trading_days(),
            dt_convention: DtConvention::Years,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.spot.len()
    }

    /// Horizon in years under the selected convention.
    pub fn horizon_years(&self) -> f64 {
        match self.dt_convention {
            DtConvention::Years => self.dt,
            DtConvention::TradingDays => self.dt / self.trading_days,
        }
    }

    fn validate(&self) -> Result<(), FinanceError> {
        let n = self.n_assets();
        if n == 0 {
            return Err(FinanceError::NoAssets);
        }
        for (field, found) in [("vol", self.vol.len()), ("positions", self.positions.len())] {
            if found != n {
                return Err(FinanceError::LengthMismatch {
                    field,
                    expected: n,
                    found,
                });
            }
        }
        for (&s, &v) in self.spot.iter().zip(&self.vol) {
            positive("spot", s)?;
            positive("vol", v)?;
        }
        positive("dt", self.dt)?;
        positive("loss_threshold", self.loss_threshold)?;
        positive("trading_days", self.trading_days)?;
        Ok(())
    }

    /// Net greeks of the positions on asset `i`.
    pub fn asset_greeks(&self, i: usize) -> Result<Greeks, FinanceError> {
        let mut total = Greeks {
            price: 0.0,
            delta: 0.0,
            gamma: 0.0,
            theta: 0.0,
        };
        for p in &self.positions[i] {
            let g = bs_greeks(p.kind, self.spot[i], p.strike, self.vol[i], self.rate, p.maturity)?
                .scaled(p.quantity);
            total.price += g.price;
            total.delta += g.delta;
            total.gamma += g.gamma;
            total.theta += g.theta;
        }
        Ok(total)
    }
}

/// Delta-gamma loss set `{a + Σ (b_i x_i + c_i x_i²) >= ℓ}` with the risk
/// factors scaled by `1 / r_scale`:
/// `a = -Σ Θ_i dt`, `b_i = -Δ_i σ_i √dt S_i / r`, `c_i = -½ Γ_i (σ_i √dt S_i)² / r²`.
pub fn build_loss_set(spec: &PortfolioSpec, r_scale: f64) -> Result<QuadraticSuperlevel, FinanceError> {
    spec.validate()?;
    positive("r_scale", r_scale)?;
    let dt = spec.horizon_years();
    let n = spec.n_assets();
    let (mut a, mut b, mut c) = (0.0, Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let g = spec.asset_greeks(i)?;
        if g.gamma < 0.0 {
            return Err(FinanceError::NegativeGamma {
                asset: i,
                gamma: g.gamma,
            });
        }
        let move_sd = spec.vol[i] * dt.sqrt() * spec.spot[i];
        a -= g.theta * dt;
        b.push(-g.delta * move_sd / r_scale);
        c.push(-0.5 * g.gamma * move_sd * move_sd / (r_scale * r_scale));
    }
    Ok(QuadraticSuperlevel::new(a, b, c, spec.loss_threshold)?)
}
