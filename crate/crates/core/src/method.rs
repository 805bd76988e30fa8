//! The four basis constructions behind one entry point.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algebraic::{self, AlgebraicMethod};
use crate::coeff::{AcousticParams, CoeffProvider};
use crate::error::{Error, Result};
use crate::explicit::{self, ExplicitMethod};
use crate::flops::FlopLedger;
use crate::poly2d::QTFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Expl1,
    Expl2,
    Alge1,
    Alge2,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Expl1, Method::Expl2, Method::Alge1, Method::Alge2];

    pub fn name(self) -> &'static str {
        match self {
            Method::Expl1 => "expl1",
            Method::Expl2 => "expl2",
            Method::Alge1 => "alge1",
            Method::Alge2 => "alge2",
        }
    }

    pub fn is_explicit(self) -> bool {
        matches!(self, Method::Expl1 | Method::Expl2)
    }

    /// Highest Taylor order of the coefficient the construction reads.
    pub fn kappa_order(self, d: usize) -> usize {
        d.saturating_sub(2)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Unknown {
                what: "method",
                name: s.to_string(),
            })
    }
}

/// Options shared by every construction.
#[derive(Clone, Copy, Debug, Default)]
pub struct BuildOptions {
    /// Rank cut for the SVD kernels; `None` uses the shape-based default.
    pub rank_tol: Option<f64>,
}

/// Local basis of `2d+1` functions centered at `x0`.
///
/// Explicit methods charge their operations to `ledger`; the algebraic ones
/// leave it untouched.
pub fn build_basis(
    method: Method,
    d: usize,
    x0: [f64; 2],
    provider: &CoeffProvider,
    params: &AcousticParams,
    opts: BuildOptions,
    ledger: &mut FlopLedger,
) -> Result<Vec<QTFunction>> {
    if d < 2 {
        return Err(Error::InvalidDegree {
            degree: d as i64,
            reason: "quasi-Trefftz spaces need d >= 2",
        });
    }
    let kappa = provider.kappa(x0, method.kappa_order(d), params);
    match method {
        Method::Expl1 => explicit::construct_basis(ExplicitMethod::Coupled, d, &kappa, params, ledger),
        Method::Expl2 => explicit::construct_basis(ExplicitMethod::Decoupled, d, &kappa, params, ledger),
        Method::Alge1 => {
            algebraic::construct_basis_algebraic(AlgebraicMethod::Coupled, d, &kappa, params, opts.rank_tol)
                .map(|b| b.functions)
        }
        Method::Alge2 => {
            algebraic::construct_basis_algebraic(AlgebraicMethod::Decoupled, d, &kappa, params, opts.rank_tol)
                .map(|b| b.functions)
        }
    }
}
