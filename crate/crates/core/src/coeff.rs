//! Taylor coefficients of the variable coefficient of the Helmholtz system.
//!
//! A [`CoeffProvider`] stores a single real function, either `ω²/c²` or
//! `1/c²` depending on its [`Scaling`]. Callers ask for the series of `1/c²`
//! through [`CoeffProvider::kappa`] and apply `ω²` or `iω/ρ` themselves.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly2d::{GradedPoly2, C64};

/// Frequency ω (s⁻¹) and constant density ρ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcousticParams {
    pub omega: f64,
    pub rho: f64,
}

impl AcousticParams {
    pub fn new(omega: f64, rho: f64) -> Result<Self> {
        let p = Self { omega, rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidParams(format!("rho must be positive, got {}", self.rho)));
        }
        if self.omega == 0.0 || !self.omega.is_finite() {
            return Err(Error::InvalidParams(format!("omega must be nonzero, got {}", self.omega)));
        }
        Ok(())
    }

    /// `iωρ`
    pub fn i_omega_rho(&self) -> C64 {
        C64::new(0.0, self.omega * self.rho)
    }

    /// `1/(iωρ) = −i/(ωρ)`
    pub fn inv_i_omega_rho(&self) -> C64 {
        C64::new(0.0, -1.0 / (self.omega * self.rho))
    }

    /// `iω/ρ`
    pub fn i_omega_over_rho(&self) -> C64 {
        C64::new(0.0, self.omega / self.rho)
    }

    pub fn omega_sq(&self) -> f64 {
        self.omega * self.omega
    }
}

/// What the stored function represents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Values are `ω²/c²`.
    #[default]
    OmegaSqOverCSq,
    /// Values are `1/c²`.
    InvCSq,
}

/// `coef · x^x_pow · y^y_pow` in global coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub x_pow: u32,
    pub y_pow: u32,
}

/// `amplitude · exp(−bx (x−cx)² − by (y−cy)²)`, where `bx` is `bx_left` for
/// `x ≤ cx` and `bx_right` otherwise. Equal widths give an ordinary gaussian;
/// different widths put a seam (a jump in the second x-derivative) at `x = cx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianTerm {
    pub amplitude: f64,
    pub center: [f64; 2],
    pub bx_left: f64,
    #[serde(default)]
    pub bx_right: Option<f64>,
    pub by: f64,
}

impl GaussianTerm {
    fn bx_for(&self, x: f64) -> f64 {
        if x <= self.center[0] {
            self.bx_left
        } else {
            self.bx_right.unwrap_or(self.bx_left)
        }
    }

    fn has_seam(&self) -> bool {
        self.bx_right.is_some_and(|b| b != self.bx_left)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoeffKind {
    Constant { value: f64 },
    ExplicitPolynomial { terms: Vec<Monomial> },
    SeparableGaussianSum { offset: f64, terms: Vec<GaussianTerm> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffProvider {
    #[serde(flatten)]
    pub kind: CoeffKind,
    #[serde(default)]
    pub scaling: Scaling,
}

impl CoeffProvider {
    pub fn constant(value: f64, scaling: Scaling) -> Self {
        Self {
            kind: CoeffKind::Constant { value },
            scaling,
        }
    }

    pub fn polynomial(terms: Vec<Monomial>, scaling: Scaling) -> Self {
        Self {
            kind: CoeffKind::ExplicitPolynomial { terms },
            scaling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidProvider(format!("{what} is not finite")))
            }
        };
        match &self.kind {
            CoeffKind::Constant { value } => finite(*value, "value"),
            CoeffKind::ExplicitPolynomial { terms } => {
                terms.iter().try_for_each(|t| finite(t.coef, "monomial coefficient"))
            }
            CoeffKind::SeparableGaussianSum { offset, terms } => {
                finite(*offset, "offset")?;
                for t in terms {
                    finite(t.amplitude, "amplitude")?;
                    for b in [t.bx_left, t.bx_right.unwrap_or(t.bx_left), t.by] {
                        if !(b >= 0.0) {
                            return Err(Error::InvalidProvider(
                                "gaussian widths must be non-negative".into(),
                            ));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Value of the stored function at a global point (the true, untruncated
    /// function, including any seam).
    pub fn value(&self, point: [f64; 2]) -> f64 {
        let [x, y] = point;
        match &self.kind {
            CoeffKind::Constant { value } => *value,
            CoeffKind::ExplicitPolynomial { terms } => terms
                .iter()
                .map(|t| t.coef * x.powi(t.x_pow as i32) * y.powi(t.y_pow as i32))
                .sum(),
            CoeffKind::SeparableGaussianSum { offset, terms } => {
                offset
                    + terms
                        .iter()
                        .map(|t| {
                            let dx = x - t.center[0];
                            let dy = y - t.center[1];
                            t.amplitude * (-t.bx_for(x) * dx * dx - t.by * dy * dy).exp()
                        })
                        .sum::<f64>()
            }
        }
    }

    /// Taylor polynomial of order `q` of the stored function about `x0`, in
    /// local coordinates. For a seam, the one-sided parameters on the side of
    /// `x0` are used.
    pub fn taylor(&self, x0: [f64; 2], q: usize) -> GradedPoly2 {
        let q = q as i64;
        match &self.kind {
            CoeffKind::Constant { value } => GradedPoly2::from_fn(x0, q, |k, _| {
                if k == 0 {
                    C64::new(*value, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
            CoeffKind::ExplicitPolynomial { terms } => {
                let mut out = GradedPoly2::zeros(x0, q);
                for t in terms {
                    let ax = binomial_shift(t.x_pow, x0[0]);
                    let ay = binomial_shift(t.y_pow, x0[1]);
                    for (i, cx) in ax.iter().enumerate() {
                        for (j, cy) in ay.iter().enumerate() {
                            if (i + j) as i64 <= q {
                                let m = GradedPoly2::monomial(x0, i + j, i, C64::new(t.coef * cx * cy, 0.0));
                                out = out.add(&m);
                            }
                        }
                    }
                }
                out
            }
            CoeffKind::SeparableGaussianSum { offset, terms } => {
                let qq = q as usize;
                let mut comps: Vec<Vec<C64>> =
                    (0..=qq).map(|k| vec![C64::new(0.0, 0.0); k + 1]).collect();
                comps[0][0].re += offset;
                for t in terms {
                    let tx = gaussian_taylor_1d(1.0, t.bx_for(x0[0]), t.center[0], x0[0], qq);
                    let ty = gaussian_taylor_1d(1.0, t.by, t.center[1], x0[1], qq);
                    for (k, comp) in comps.iter_mut().enumerate() {
                        for (l, c) in comp.iter_mut().enumerate() {
                            c.re += t.amplitude * tx[l] * ty[k - l];
                        }
                    }
                }
                GradedPoly2::new(x0, comps).expect("well-formed components")
            }
        }
    }

    /// Taylor polynomial of `1/c²` of order `q` about `x0`.
    pub fn kappa(&self, x0: [f64; 2], q: usize, params: &AcousticParams) -> GradedPoly2 {
        let t = self.taylor(x0, q);
        match self.scaling {
            Scaling::InvCSq => t,
            Scaling::OmegaSqOverCSq => t.scale(C64::new(1.0 / params.omega_sq(), 0.0)),
        }
    }

    /// `1/c²` at a global point.
    pub fn inv_c_sq(&self, point: [f64; 2], params: &AcousticParams) -> f64 {
        let v = self.value(point);
        match self.scaling {
            Scaling::InvCSq => v,
            Scaling::OmegaSqOverCSq => v / params.omega_sq(),
        }
    }

    /// x-positions where the stored function loses smoothness.
    pub fn seams(&self) -> Vec<f64> {
        match &self.kind {
            CoeffKind::SeparableGaussianSum { terms, .. } => terms
                .iter()
                .filter(|t| t.has_seam())
                .map(|t| t.center[0])
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Coefficients of `(x0 + X)^n` in powers of `X`.
fn binomial_shift(n: u32, x0: f64) -> Vec<f64> {
    let n = n as usize;
    let mut out = vec![0.0; n + 1];
    let mut binom = 1.0;
    for (i, o) in out.iter_mut().enumerate() {
        *o = binom * x0.powi((n - i) as i32);
        binom = binom * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

/// Taylor coefficients of `x ↦ a·exp(−b (x − shift)²)` about `x0`, orders `0..=q`.
pub fn gaussian_taylor_1d(a: f64, b: f64, shift: f64, x0: f64, q: usize) -> Vec<f64> {
    let u = x0 - shift;
    let mut t = Vec::with_capacity(q + 1);
    t.push(a * (-b * u * u).exp());
    for n in 0..q {
        let prev = if n >= 1 { t[n - 1] } else { 0.0 };
        t.push(-2.0 * b * (u * t[n] + prev) / (n + 1) as f64);
    }
    t
}

/// Acoustic parameters plus coefficient: everything defining a test case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub omega: f64,
    pub rho: f64,
    #[serde(flatten)]
    pub provider: CoeffProvider,
}

impl ProblemConfig {
    pub fn params(&self) -> Result<AcousticParams> {
        AcousticParams::new(self.omega, self.rho)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.provider.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ProblemConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Square domain with the polynomial `ω²/c² = 24 − 9y⁴ + 6y² + 6y`.
    pub fn case1() -> Self {
        let m = |coef, y_pow| Monomial {
            coef,
            x_pow: 0,
            y_pow,
        };
        Self {
            omega: PI / 2.0,
            rho: 4.0 / (PI * PI),
            provider: CoeffProvider::polynomial(
                vec![m(24.0, 0), m(-9.0, 4), m(6.0, 2), m(6.0, 1)],
                Scaling::OmegaSqOverCSq,
            ),
        }
    }

    /// Heated-jet coefficient
    /// `ω²/c² = 3.1e−5 − 2e−5 exp(−b (x−150)² − 0.001 (y+50)²)` with
    /// `b = 1e−4` for `x ≤ 150` and `b = 1e−6` beyond.
    pub fn case2() -> Self {
        Self {
            omega: PI / 2.0,
            rho: 4.0 / (PI * PI),
            provider: CoeffProvider {
                kind: CoeffKind::SeparableGaussianSum {
                    offset: 3.1e-5,
                    terms: vec![GaussianTerm {
                        amplitude: -2e-5,
                        center: [150.0, -50.0],
                        bx_left: 1e-4,
                        bx_right: Some(1e-6),
                        by: 1e-3,
                    }],
                },
                scaling: Scaling::OmegaSqOverCSq,
            },
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "case1" | "1" => Ok(Self::case1()),
            "case2" | "2" => Ok(Self::case2()),
            _ => Err(Error::Unknown {
                what: "preset",
                name: name.to_string(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(c: C64) -> f64 {
        assert_eq!(c.im, 0.0);
        c.re
    }

    #[test]
    fn case1_taylor_at_origin() {
        let t = ProblemConfig::case1().provider.taylor([0.0, 0.0], 4);
        assert_eq!(re(t.coeff(0, 0)), 24.0);
        assert_eq!(re(t.coeff(1, 0)), 6.0);
        assert_eq!(re(t.coeff(2, 0)), 6.0);
        assert_eq!(re(t.coeff(4, 0)), -9.0);
        for (k, l, c) in t.coeffs() {
            if l > 0 {
                assert_eq!(c.norm(), 0.0, "X-bearing coefficient ({k},{l})");
            }
        }
        assert_eq!(re(t.coeff(3, 0)), 0.0);
    }

    #[test]
    fn polynomial_components_vanish_above_its_degree() {
        let t = ProblemConfig::case1().provider.taylor([0.3, 0.8], 9);
        for k in 5..=9 {
            assert!(t.component(k).unwrap().iter().all(|c| c.norm() == 0.0));
        }
    }

    #[test]
    fn value_at_center_is_constant_term() {
        for cfg in [ProblemConfig::case1(), ProblemConfig::case2()] {
            for x0 in [[0.2, 0.7], [140.0, -30.0], [160.0, -70.0]] {
                let t = cfg.provider.taylor(x0, 3);
                let v = cfg.provider.value(x0);
                assert!((t.coeff(0, 0).re - v).abs() <= 1e-14 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_provider() {
        let p = CoeffProvider::constant(2.5, Scaling::InvCSq);
        let t = p.taylor([1.0, 1.0], 5);
        assert_eq!(re(t.coeff(0, 0)), 2.5);
        assert_eq!(t.degree(), 5);
        assert!(t.coeffs().skip(1).all(|(_, _, c)| c.norm() == 0.0));
    }

    #[test]
    fn gaussian_2d_second_order() {
        let (a, b, c) = (1.7, 0.4, 2.5);
        let p = CoeffProvider {
            kind: CoeffKind::SeparableGaussianSum {
                offset: 0.0,
                terms: vec![GaussianTerm {
                    amplitude: a,
                    center: [1.0, -2.0],
                    bx_left: b,
                    bx_right: None,
                    by: c,
                }],
            },
            scaling: Scaling::InvCSq,
        };
        let t = p.taylor([1.0, -2.0], 2);
        assert!((t.coeff(0, 0).re - a).abs() < 1e-15);
        assert_eq!(t.coeff(1, 0).norm() + t.coeff(1, 1).norm(), 0.0);
        assert!((t.coeff(2, 2).re + a * b).abs() < 1e-15); // X²
        assert!((t.coeff(2, 0).re + a * c).abs() < 1e-15); // Y²
        assert_eq!(t.coeff(2, 1).norm(), 0.0);
    }

    #[test]
    fn gaussian_1d_examples() {
        let t = gaussian_taylor_1d(1.0, 0.0, 3.0, 1.0, 4);
        assert_eq!(t, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let t = gaussian_taylor_1d(1.0, 0.7, 2.0, 2.0, 7);
        for n in (1..8).step_by(2) {
            assert_eq!(t[n], 0.0);
        }
        let e = (-1.0f64).exp();
        let t = gaussian_taylor_1d(1.0, 1.0, 0.0, 1.0, 2);
        assert!((t[0] - e).abs() < 1e-16);
        assert!((t[1] + 2.0 * e).abs() < 1e-15);
        assert!((t[2] - e).abs() < 1e-15);
    }

    #[test]
    fn seam_side_follows_center() {
        let p = ProblemConfig::case2().provider;
        assert_eq!(p.seams(), vec![150.0]);
        let left = p.taylor([149.0, -50.0], 2);
        let right = p.taylor([151.0, -50.0], 2);
        // Near the seam the X² coefficient is about −amp·b, with each side's b.
        assert!((left.coeff(2, 2).re / (2e-5 * 1e-4) - 1.0).abs() < 1e-3);
        assert!((right.coeff(2, 2).re / (2e-5 * 1e-6) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn json_config_round_trip() {
        let text = r#"{"kind": "constant", "omega": 2.0, "rho": 1.5, "value": 3.0}"#;
        let cfg = ProblemConfig::from_json(text).unwrap();
        assert_eq!(cfg.provider.scaling, Scaling::OmegaSqOverCSq);
        assert_eq!(cfg.params().unwrap().omega, 2.0);
        for c in [ProblemConfig::case1(), ProblemConfig::case2()] {
            let s = serde_json::to_string(&c).unwrap();
            assert_eq!(ProblemConfig::from_json(&s).unwrap(), c);
        }
        let bad = r#"{"kind": "constant", "omega": 2.0, "rho": -1.0, "value": 3.0}"#;
        assert!(ProblemConfig::from_json(bad).is_err());
        assert!(ProblemConfig::preset("case7").is_err());
    }

    #[test]
    fn params_validation() {
        assert!(AcousticParams::new(0.0, 1.0).is_err());
        assert!(AcousticParams::new(1.0, 0.0).is_err());
        let p = AcousticParams::new(2.0, 3.0).unwrap();
        let prod = p.i_omega_rho() * p.inv_i_omega_rho();
        assert!((prod - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn kappa_divides_by_omega_squared() {
        let cfg = ProblemConfig::case1();
        let params = cfg.params().unwrap();
        let k = cfg.provider.kappa([0.0, 0.0], 2, &params);
        assert!((k.coeff(0, 0).re - 24.0 / params.omega_sq()).abs() < 1e-14);
        assert!((cfg.provider.inv_c_sq([0.0, 0.0], &params) - 24.0 / params.omega_sq()).abs() < 1e-14);
    }
}
