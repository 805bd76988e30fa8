//! Graded bivariate polynomials with complex coefficients.
//!
//! A [`GradedPoly2`] stores its homogeneous components in local coordinates
//! `(X, Y) = (x − x0, y − y0)`. Component `k` holds `k+1` coefficients, entry
//! `ℓ` multiplying `X^ℓ Y^(k−ℓ)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flops::{FlopLedger, Step};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// `scale · n` as a complex factor; every derivative that is scaled by a
/// constant goes through this so the same factor is produced bit-for-bit.
#[inline]
pub fn deriv_factor(n: usize, scale: C64) -> C64 {
    scale * n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyJson", into = "PolyJson")]
pub struct GradedPoly2 {
    center: [f64; 2],
    comps: Vec<Vec<C64>>,
}

impl GradedPoly2 {
    pub fn new(center: [f64; 2], comps: Vec<Vec<C64>>) -> Result<Self> {
        for (k, c) in comps.iter().enumerate() {
            if c.len() != k + 1 {
                return Err(Error::InvalidDegree {
                    degree: k as i64,
                    reason: "homogeneous component k must hold k+1 coefficients",
                });
            }
        }
        Ok(Self { center, comps })
    }

    /// Builds from components that are known to be well formed.
    pub(crate) fn from_components(center: [f64; 2], comps: Vec<Vec<C64>>) -> Self {
        debug_assert!(comps.iter().enumerate().all(|(k, c)| c.len() == k + 1));
        Self { center, comps }
    }

    pub fn zero(center: [f64; 2]) -> Self {
        Self {
            center,
            comps: Vec::new(),
        }
    }

    /// All-zero coefficients up to `degree` (a negative degree gives the zero polynomial).
    pub fn zeros(center: [f64; 2], degree: i64) -> Self {
        Self::from_fn(center, degree, |_, _| ZERO)
    }

    pub fn from_fn(center: [f64; 2], degree: i64, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let comps = (0..=degree)
            .map(|k| {
                let k = k as usize;
                (0..=k).map(|l| f(k, l)).collect()
            })
            .collect();
        Self { center, comps }
    }

    /// Single monomial `c · X^l Y^(k−l)`.
    pub fn monomial(center: [f64; 2], k: usize, l: usize, c: C64) -> Self {
        assert!(l <= k);
        Self::from_fn(center, k as i64, |kk, ll| if kk == k && ll == l { c } else { ZERO })
    }

    pub fn degree(&self) -> i64 {
        self.comps.len() as i64 - 1
    }

    pub fn is_zero_poly(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn center(&self) -> [f64; 2] {
        self.center
    }

    pub fn components(&self) -> &[Vec<C64>] {
        &self.comps
    }

    pub fn component(&self, k: usize) -> Option<&[C64]> {
        self.comps.get(k).map(Vec::as_slice)
    }

    pub fn coeff(&self, k: usize, l: usize) -> C64 {
        self.comps
            .get(k)
            .and_then(|c| c.get(l))
            .copied()
            .unwrap_or(ZERO)
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        self.comps
            .iter()
            .enumerate()
            .flat_map(|(k, c)| c.iter().enumerate().map(move |(l, v)| (k, l, *v)))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs().map(|(_, _, c)| c.norm()).fold(0.0, f64::max)
    }

    /// Value at a global point.
    pub fn eval(&self, point: [f64; 2]) -> C64 {
        self.eval_local(point[0] - self.center[0], point[1] - self.center[1])
    }

    /// Value at local coordinates, Horner in `X` within each component.
    pub fn eval_local(&self, x: f64, y: f64) -> C64 {
        let mut total = ZERO;
        let mut ypow = Vec::with_capacity(self.comps.len());
        let mut yp = 1.0;
        for _ in 0..self.comps.len() {
            ypow.push(yp);
            yp *= y;
        }
        for (k, c) in self.comps.iter().enumerate() {
            let mut acc = c[k];
            for l in (0..k).rev() {
                acc = acc * x + c[l] * ypow[k - l];
            }
            total += acc;
        }
        total
    }

    pub fn grad(&self) -> (GradedPoly2, GradedPoly2) {
        let deg = self.degree() - 1;
        let dx = Self::from_fn(self.center, deg, |k, l| self.comps[k + 1][l + 1] * (l + 1) as f64);
        let dy = Self::from_fn(self.center, deg, |k, l| self.comps[k + 1][l] * (k + 1 - l) as f64);
        (dx, dy)
    }

    /// `scale · ∇p`, each coefficient formed as `deriv_factor(n, scale) · c`.
    pub fn grad_scaled(&self, scale: C64) -> (GradedPoly2, GradedPoly2) {
        let deg = self.degree() - 1;
        let dx = Self::from_fn(self.center, deg, |k, l| {
            deriv_factor(l + 1, scale) * self.comps[k + 1][l + 1]
        });
        let dy = Self::from_fn(self.center, deg, |k, l| {
            deriv_factor(k + 1 - l, scale) * self.comps[k + 1][l]
        });
        (dx, dy)
    }

    pub fn divergence(vx: &GradedPoly2, vy: &GradedPoly2) -> Result<GradedPoly2> {
        if vx.degree() != vy.degree() {
            return Err(Error::VelocityDegreeMismatch {
                vx: vx.degree(),
                vy: vy.degree(),
            });
        }
        let (dx, _) = vx.grad();
        let (_, dy) = vy.grad();
        Ok(dx.add(&dy))
    }

    pub fn laplacian(&self) -> GradedPoly2 {
        let deg = self.degree() - 2;
        Self::from_fn(self.center, deg, |k, l| {
            let c = &self.comps[k + 2];
            c[l + 2] * ((l + 2) * (l + 1)) as f64 + c[l] * ((k + 2 - l) * (k + 1 - l)) as f64
        })
    }

    pub fn add(&self, other: &GradedPoly2) -> GradedPoly2 {
        let deg = self.degree().max(other.degree());
        Self::from_fn(self.center, deg, |k, l| self.coeff(k, l) + other.coeff(k, l))
    }

    pub fn sub(&self, other: &GradedPoly2) -> GradedPoly2 {
        let deg = self.degree().max(other.degree());
        Self::from_fn(self.center, deg, |k, l| self.coeff(k, l) - other.coeff(k, l))
    }

    pub fn scale(&self, s: C64) -> GradedPoly2 {
        Self::from_fn(self.center, self.degree(), |k, l| self.comps[k][l] * s)
    }

    /// Drops every component above degree `q` (the Taylor truncation `T_q`).
    pub fn truncate(&self, q: i64) -> GradedPoly2 {
        let keep = (q + 1).clamp(0, self.comps.len() as i64) as usize;
        Self::from_components(self.center, self.comps[..keep].to_vec())
    }

    /// Full product, no truncation and no flop charging.
    pub fn mul(&self, other: &GradedPoly2) -> GradedPoly2 {
        if self.is_zero_poly() || other.is_zero_poly() {
            return Self::zero(self.center);
        }
        let deg = self.degree() + other.degree();
        let mut out = Self::zeros(self.center, deg);
        for (ka, a) in self.comps.iter().enumerate() {
            for (kb, b) in other.comps.iter().enumerate() {
                let dst = &mut out.comps[ka + kb];
                for (la, va) in a.iter().enumerate() {
                    for (lb, vb) in b.iter().enumerate() {
                        dst[la + lb] += va * vb;
                    }
                }
            }
        }
        out
    }

    pub fn with_center(mut self, center: [f64; 2]) -> Self {
        self.center = center;
        self
    }
}

/// Degree-`m` homogeneous component of `κ·λ`.
///
/// Entry `ℓ` is `Σ_{n=0..m} Σ_{j=max(0,n+ℓ−m)..min(n,ℓ)} κ^n_j λ^(m−n)_(ℓ−j)`.
/// Absent components of either factor count as zero and are skipped. Each
/// inner `j`-sum of `s` terms is charged `s` multiplications and `s − 1`
/// additions.
pub fn truncated_product(
    kappa: &[Vec<C64>],
    lam: &[Vec<C64>],
    m: usize,
    ledger: &mut FlopLedger,
) -> Vec<C64> {
    let mut out = vec![ZERO; m + 1];
    let mut muls = 0u64;
    let mut adds = 0u64;
    for (l, slot) in out.iter_mut().enumerate() {
        let mut acc = ZERO;
        for n in 0..=m {
            let (Some(kap), Some(lm)) = (kappa.get(n), lam.get(m - n)) else {
                continue;
            };
            let lo = (n + l).saturating_sub(m);
            let hi = n.min(l);
            let mut partial = kap[lo] * lm[l - lo];
            for j in lo + 1..=hi {
                partial += kap[j] * lm[l - j];
            }
            let s = (hi - lo + 1) as u64;
            muls += s;
            adds += s - 1;
            acc += partial;
        }
        *slot = acc;
    }
    ledger.charge(Step::Convolution, adds, muls);
    out
}

/// One quasi-Trefftz candidate `(p, vx, vy)` with `deg p ≤ d`, `deg v ≤ d−1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTFunction {
    pub d: usize,
    pub center: [f64; 2],
    pub p: GradedPoly2,
    pub vx: GradedPoly2,
    pub vy: GradedPoly2,
}

impl QTFunction {
    pub fn new(d: usize, p: GradedPoly2, vx: GradedPoly2, vy: GradedPoly2) -> Result<Self> {
        let d_i = d as i64;
        if d < 2 {
            return Err(Error::InvalidDegree {
                degree: d_i,
                reason: "quasi-Trefftz functions need d >= 2",
            });
        }
        if p.degree() > d_i || vx.degree() > d_i - 1 || vy.degree() > d_i - 1 {
            return Err(Error::InvalidDegree {
                degree: p.degree().max(vx.degree() + 1).max(vy.degree() + 1),
                reason: "component degrees exceed (d, d-1, d-1)",
            });
        }
        let center = p.center();
        if vx.center() != center || vy.center() != center {
            return Err(Error::InvalidDegree {
                degree: d_i,
                reason: "components must share one center",
            });
        }
        // Pad to full length so that packing and divergence see equal degrees.
        let pad = |q: &GradedPoly2, deg: i64| q.add(&GradedPoly2::zeros(center, deg));
        Ok(Self {
            d,
            center,
            p: pad(&p, d_i),
            vx: pad(&vx, d_i - 1),
            vy: pad(&vy, d_i - 1),
        })
    }

    pub fn eval(&self, point: [f64; 2]) -> [C64; 3] {
        [self.p.eval(point), self.vx.eval(point), self.vy.eval(point)]
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.p
            .max_abs_coeff()
            .max(self.vx.max_abs_coeff())
            .max(self.vy.max_abs_coeff())
    }

    pub fn add(&self, other: &QTFunction) -> QTFunction {
        QTFunction {
            d: self.d,
            center: self.center,
            p: self.p.add(&other.p),
            vx: self.vx.add(&other.vx),
            vy: self.vy.add(&other.vy),
        }
    }

    pub fn scale(&self, s: C64) -> QTFunction {
        QTFunction {
            d: self.d,
            center: self.center,
            p: self.p.scale(s),
            vx: self.vx.scale(s),
            vy: self.vy.scale(s),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PolyJson {
    degree: i64,
    center: [f64; 2],
    coeffs: Vec<Vec<[f64; 2]>>,
}

impl From<GradedPoly2> for PolyJson {
    fn from(p: GradedPoly2) -> Self {
        PolyJson {
            degree: p.degree(),
            center: p.center,
            coeffs: p
                .comps
                .iter()
                .map(|c| c.iter().map(|v| [v.re, v.im]).collect())
                .collect(),
        }
    }
}

impl TryFrom<PolyJson> for GradedPoly2 {
    type Error = Error;
    fn try_from(j: PolyJson) -> Result<Self> {
        if j.degree != j.coeffs.len() as i64 - 1 {
            return Err(Error::InvalidDegree {
                degree: j.degree,
                reason: "degree does not match the number of components",
            });
        }
        let comps = j
            .coeffs
            .into_iter()
            .map(|c| c.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect();
        GradedPoly2::new(j.center, comps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const O: [f64; 2] = [0.0, 0.0];

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn poly(terms: &[(usize, usize, f64)]) -> GradedPoly2 {
        let deg = terms.iter().map(|t| t.0).max().unwrap() as i64;
        let mut p = GradedPoly2::zeros(O, deg);
        for &(k, l, v) in terms {
            p.comps[k][l] += c(v);
        }
        p
    }

    #[test]
    fn eval_examples() {
        let p = GradedPoly2::new(O, vec![vec![c(3.0)]]).unwrap();
        assert_eq!(p.eval([7.0, -2.0]), c(3.0));
        let x = GradedPoly2::monomial(O, 1, 1, c(1.0));
        assert_eq!(x.eval([2.0, 5.0]), c(2.0));
        // X² + XY
        let q = poly(&[(2, 2, 1.0), (2, 1, 1.0)]);
        assert_eq!(q.eval([1.0, 1.0]), c(2.0));
    }

    #[test]
    fn eval_uses_local_coordinates() {
        let x = GradedPoly2::monomial([1.0, 2.0], 1, 1, c(1.0));
        assert_eq!(x.eval([3.0, 0.0]), c(2.0));
        assert_eq!(x.eval([1.0, 0.0]), c(0.0));
    }

    #[test]
    fn grad_examples() {
        let (dx, dy) = poly(&[(2, 2, 1.0)]).grad();
        assert_eq!(dx, poly(&[(1, 1, 2.0)]));
        assert_eq!(dy.max_abs_coeff(), 0.0);
        let (dx, dy) = poly(&[(2, 1, 1.0)]).grad();
        assert_eq!(dx, poly(&[(1, 0, 1.0)]));
        assert_eq!(dy, poly(&[(1, 1, 1.0)]));
    }

    #[test]
    fn divergence_examples() {
        let d = GradedPoly2::divergence(&poly(&[(1, 1, 1.0)]), &poly(&[(1, 0, 1.0)])).unwrap();
        assert_eq!(d.coeff(0, 0), c(2.0));
        let d = GradedPoly2::divergence(&poly(&[(1, 0, 1.0)]), &poly(&[(1, 1, 1.0)])).unwrap();
        assert_eq!(d.max_abs_coeff(), 0.0);
        let d = GradedPoly2::divergence(&poly(&[(2, 2, 1.0)]), &poly(&[(2, 1, -2.0)])).unwrap();
        assert_eq!(d.max_abs_coeff(), 0.0);
    }

    #[test]
    fn divergence_rejects_mismatched_degrees() {
        let err = GradedPoly2::divergence(&poly(&[(2, 2, 1.0)]), &poly(&[(1, 0, 1.0)]));
        assert!(matches!(err, Err(Error::VelocityDegreeMismatch { .. })));
    }

    #[test]
    fn laplacian_examples() {
        assert_eq!(poly(&[(2, 2, 1.0), (2, 0, 1.0)]).laplacian().coeff(0, 0), c(4.0));
        assert_eq!(poly(&[(2, 1, 1.0)]).laplacian().max_abs_coeff(), 0.0);
        assert_eq!(poly(&[(3, 3, 1.0)]).laplacian(), poly(&[(1, 1, 6.0)]));
    }

    #[test]
    fn zero_polynomial_is_absorbing() {
        let z = GradedPoly2::zero(O);
        assert_eq!(z.degree(), -1);
        assert!(z.grad().0.is_zero_poly());
        assert!(z.laplacian().is_zero_poly());
        assert!(z.mul(&poly(&[(3, 1, 2.0)])).is_zero_poly());
        assert_eq!(z.eval([1.0, 1.0]), c(0.0));
        let k = GradedPoly2::new(O, vec![vec![c(5.0)]]).unwrap();
        assert!(k.grad().0.is_zero_poly());
    }

    #[test]
    fn rejects_malformed_components() {
        assert!(GradedPoly2::new(O, vec![vec![c(1.0)], vec![c(1.0)]]).is_err());
    }

    #[test]
    fn truncated_product_degree_zero() {
        let mut ledger = FlopLedger::new();
        let out = truncated_product(&[vec![c(3.0)]], &[vec![c(2.0)]], 0, &mut ledger);
        assert_eq!(out, vec![c(6.0)]);
        assert_eq!(ledger.step(Step::Convolution).muls, 1);
        assert_eq!(ledger.step(Step::Convolution).adds, 0);
    }

    #[test]
    fn truncated_product_unit_kappa() {
        let lam = GradedPoly2::from_fn(O, 4, |k, l| C64::new(k as f64, l as f64 + 0.5));
        let kappa = vec![vec![c(1.0)], vec![c(0.0); 2], vec![c(0.0); 3]];
        let mut ledger = FlopLedger::new();
        let out = truncated_product(&kappa, lam.components(), 2, &mut ledger);
        assert_eq!(out, lam.component(2).unwrap());
        assert_eq!(ledger.muls(), 10);
    }

    #[test]
    fn json_shape() {
        let p = poly(&[(1, 1, 1.0)]);
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v["degree"], 1);
        assert_eq!(v["coeffs"][1][1][0], 1.0);
        let back: GradedPoly2 = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
        let bad = serde_json::json!({"degree": 3, "center": [0.0, 0.0], "coeffs": [[[1.0, 0.0]]]});
        assert!(serde_json::from_value::<GradedPoly2>(bad).is_err());
    }

    fn arb_poly(max_deg: i64) -> impl Strategy<Value = GradedPoly2> {
        (0..=max_deg).prop_flat_map(|deg| {
            let n = ((deg + 1) * (deg + 2) / 2) as usize;
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n).prop_map(move |vals| {
                let mut it = vals.into_iter();
                GradedPoly2::from_fn([0.25, -0.5], deg, |_, _| {
                    let (re, im) = it.next().unwrap();
                    C64::new(re, im)
                })
            })
        })
    }

    fn rel_diff(a: &GradedPoly2, b: &GradedPoly2) -> f64 {
        let scale = a.max_abs_coeff().max(b.max_abs_coeff()).max(1e-300);
        a.sub(b).max_abs_coeff() / scale
    }

    proptest! {
        #[test]
        fn div_grad_is_laplacian(p in arb_poly(10)) {
            let (gx, gy) = p.grad();
            let lhs = GradedPoly2::divergence(&gx, &gy).unwrap();
            prop_assert!(rel_diff(&lhs, &p.laplacian()) <= 1e-13);
        }

        #[test]
        fn truncated_product_matches_full_product(a in arb_poly(8), b in arb_poly(8), m in 0usize..=8) {
            let mut ledger = FlopLedger::new();
            let got = truncated_product(a.components(), b.components(), m, &mut ledger);
            let full = a.mul(&b);
            let scale = full.max_abs_coeff().max(1e-300);
            for (l, g) in got.iter().enumerate() {
                prop_assert!((g - full.coeff(m, l)).norm() <= 1e-13 * scale);
            }
        }

        #[test]
        fn eval_matches_monomial_sum(p in arb_poly(7), x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let direct: C64 = p.coeffs()
                .map(|(k, l, v)| v * x.powi(l as i32) * y.powi((k - l) as i32))
                .sum();
            let got = p.eval_local(x, y);
            prop_assert!((got - direct).norm() <= 1e-12 * (1.0 + direct.norm()));
        }
    }

    #[test]
    fn convolution_counts_follow_pyramid() {
        for m in 0..=10usize {
            let a = GradedPoly2::from_fn(O, m as i64, |_, _| c(1.0));
            let mut ledger = FlopLedger::new();
            truncated_product(a.components(), a.components(), m, &mut ledger);
            let mm = m as u64;
            assert_eq!(ledger.muls(), (mm + 1) * (mm + 2) * (mm + 3) / 6);
            assert_eq!(ledger.adds(), crate::flops::pyramid_adds(mm));
        }
    }
}
