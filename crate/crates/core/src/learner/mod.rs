//! The online learning loop: coding, conditional neurogenesis, memory
//! bookkeeping, block-coordinate dictionary update and element death.

mod dictionary;
mod memory;
pub mod snapshot;
mod state;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SparsityTarget;

pub use dictionary::Dictionary;
pub use memory::Memory;
pub use state::{
    neurogenesis_count, objective, BatchMetrics, BatchOutcome, LearnerState, UpdateStats,
};

/// Which parts of the adaptive machinery are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Fixed size: no births, no group-sparsity death.
    #[serde(rename = "ODL")]
    Odl,
    /// Fixed size, zero-norm elements are re-drawn at random.
    #[serde(rename = "ODL_STAR")]
    OdlStar,
    /// Births and deaths.
    #[serde(rename = "NODL")]
    Nodl,
    /// Births only.
    #[serde(rename = "NODL_PLUS")]
    NodlPlus,
    /// Deaths only.
    #[serde(rename = "NODL_MINUS")]
    NodlMinus,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Odl,
        Variant::OdlStar,
        Variant::Nodl,
        Variant::NodlPlus,
        Variant::NodlMinus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Odl => "ODL",
            Variant::OdlStar => "ODL_STAR",
            Variant::Nodl => "NODL",
            Variant::NodlPlus => "NODL_PLUS",
            Variant::NodlMinus => "NODL_MINUS",
        }
    }

    fn allows_births(self) -> bool {
        matches!(self, Variant::Nodl | Variant::NodlPlus)
    }

    fn allows_deaths(self) -> bool {
        matches!(self, Variant::Nodl | Variant::NodlMinus)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = match s.to_ascii_uppercase().as_str() {
            "ODL" => Variant::Odl,
            "ODL_STAR" | "ODL*" | "ODLSTAR" => Variant::OdlStar,
            "NODL" => Variant::Nodl,
            "NODL_PLUS" | "NODL+" => Variant::NodlPlus,
            "NODL_MINUS" | "NODL-" => Variant::NodlMinus,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown variant {s:?} (expected ODL, ODL_STAR, NODL, NODL_PLUS or NODL_MINUS)"
                )))
            }
        };
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub variant: Variant,
    /// Neurogenesis fires when the batch-average Pearson correlation is `<= gamma`.
    pub gamma: f64,
    /// Maximum number of births per batch.
    pub c_k: usize,
    /// Group-sparsity weight; columns with norm `<= lambda_g` are killed.
    pub lambda_g: f64,
    /// Target non-zeros per code (clamped to the dictionary size).
    pub beta_c: usize,
    /// Target non-zeros per dictionary element; `None` keeps elements dense.
    pub beta_d: Option<usize>,
    pub batch_size: usize,
    /// Stop the dictionary update once no column moves more than this (l2) in a sweep.
    pub bcd_tol: f64,
    pub bcd_max_sweeps: usize,
    /// Code against unit-norm copies of the columns.
    pub normalize_for_coding: bool,
    pub eps_beta: usize,
    pub eps_lambda: f64,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            variant: Variant::Nodl,
            gamma: 0.9,
            c_k: 50,
            lambda_g: 0.03,
            beta_c: 50,
            beta_d: Some(50),
            batch_size: 20,
            bcd_tol: 1e-6,
            bcd_max_sweeps: 100,
            normalize_for_coding: true,
            eps_beta: SparsityTarget::DEFAULT_EPS_BETA,
            eps_lambda: SparsityTarget::DEFAULT_EPS_LAMBDA,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda_g) {
            return bad(format!(
                "lambda_g must lie in [0, 1], got {}",
                self.lambda_g
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !self.bcd_tol.is_finite() || self.bcd_tol <= 0.0 {
            return bad(format!("bcd_tol must be positive, got {}", self.bcd_tol));
        }
        if self.bcd_max_sweeps == 0 {
            return bad("bcd_max_sweeps must be >= 1".into());
        }
        if !(self.eps_lambda > 0.0 && self.eps_lambda < 1.0) {
            return bad(format!(
                "eps_lambda must lie in (0, 1), got {}",
                self.eps_lambda
            ));
        }
        if self.beta_d == Some(0) {
            return bad("beta_d must be >= 1 when set".into());
        }
        Ok(())
    }

    /// The config with the variant's fixed parameters applied: births off
    /// means `c_k = 0`, deaths off means `lambda_g = 0`.
    pub fn resolved(&self) -> LearnerConfig {
        let mut c = self.clone();
        if !c.variant.allows_births() {
            c.c_k = 0;
        }
        if !c.variant.allows_deaths() {
            c.lambda_g = 0.0;
        }
        c
    }

    pub(crate) fn dict_target(&self, m: usize) -> Option<SparsityTarget> {
        self.beta_d
            .filter(|&b| b < m)
            .map(|b| SparsityTarget::with_tolerances(b, self.eps_beta, self.eps_lambda))
    }

    pub(crate) fn code_target(&self, k: usize) -> SparsityTarget {
        SparsityTarget::with_tolerances(self.beta_c.min(k), self.eps_beta, self.eps_lambda)
    }

    pub(crate) fn prunes_dead(&self) -> bool {
        self.variant.allows_deaths() && self.lambda_g > 0.0
    }

    pub(crate) fn reinits_dead(&self) -> bool {
        self.variant == Variant::OdlStar
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_parsing() {
        assert_eq!("nodl+".parse::<Variant>().unwrap(), Variant::NodlPlus);
        assert_eq!("ODL*".parse::<Variant>().unwrap(), Variant::OdlStar);
        assert_eq!("NODL_MINUS".parse::<Variant>().unwrap(), Variant::NodlMinus);
        assert!("foo".parse::<Variant>().is_err());
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.name()));
        }
    }

    #[test]
    fn resolution_forces_variant_parameters() {
        let base = LearnerConfig {
            c_k: 7,
            lambda_g: 0.2,
            ..Default::default()
        };
        let r = base.clone().with_variant(Variant::NodlPlus).resolved();
        assert_eq!((r.c_k, r.lambda_g), (7, 0.0));
        let r = base.clone().with_variant(Variant::NodlMinus).resolved();
        assert_eq!((r.c_k, r.lambda_g), (0, 0.2));
        for v in [Variant::Odl, Variant::OdlStar] {
            let r = base.clone().with_variant(v).resolved();
            assert_eq!((r.c_k, r.lambda_g), (0, 0.0));
        }
        let r = base.with_variant(Variant::Nodl).resolved();
        assert_eq!((r.c_k, r.lambda_g), (7, 0.2));
    }

    #[test]
    fn validation() {
        assert!(LearnerConfig::default().validate().is_ok());
        let bad = [
            LearnerConfig {
                gamma: 0.0,
                ..Default::default()
            },
            LearnerConfig {
                gamma: 1.5,
                ..Default::default()
            },
            LearnerConfig {
                lambda_g: 1.1,
                ..Default::default()
            },
            LearnerConfig {
                batch_size: 0,
                ..Default::default()
            },
            LearnerConfig {
                bcd_tol: 0.0,
                ..Default::default()
            },
            LearnerConfig {
                eps_lambda: 1.0,
                ..Default::default()
            },
            LearnerConfig {
                beta_d: Some(0),
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = serde_json::from_str::<LearnerConfig>(r#"{"gama": 0.5}"#);
        assert!(err.is_err());
        let ok: LearnerConfig =
            serde_json::from_str(r#"{"gamma": 0.5, "variant": "ODL"}"#).unwrap();
        assert_eq!(ok.gamma, 0.5);
        assert_eq!(ok.variant, Variant::Odl);
    }
}
