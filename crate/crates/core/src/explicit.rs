//! Explicit constructions of quasi-Trefftz functions, one homogeneous
//! component at a time.
//!
//! The coupled construction alternates a gradient solve and a divergence
//! solve on the first-order system; the decoupled one solves Laplace-type
//! recurrences for the pressure and differentiates it for the velocity.

use serde::{Deserialize, Serialize};

use crate::coeff::AcousticParams;
use crate::error::{Error, Result};
use crate::flops::{FlopLedger, Step};
use crate::poly2d::{deriv_factor, truncated_product, GradedPoly2, QTFunction, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExplicitMethod {
    /// From the coupled pressure-velocity system.
    Coupled,
    /// From the decoupled second-order equation for the pressure.
    Decoupled,
}

/// The `2d+1` free values of one construction.
///
/// Slot order is `[γ, α_0, β_0, α_1, β_1, …, α_{d−1}, β_{d−1}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitVector {
    pub alpha_beta: Vec<(C64, C64)>,
    pub gamma: C64,
}

impl InitVector {
    pub fn zeros(d: usize) -> Self {
        Self {
            alpha_beta: vec![(ZERO, ZERO); d],
            gamma: ZERO,
        }
    }

    pub fn from_slots(d: usize, slots: &[C64]) -> Result<Self> {
        if slots.len() != 2 * d + 1 {
            return Err(Error::InitLength {
                expected: 2 * d + 1,
                found: slots.len(),
            });
        }
        Ok(Self {
            gamma: slots[0],
            alpha_beta: slots[1..].chunks(2).map(|c| (c[0], c[1])).collect(),
        })
    }

    /// Unit vector setting slot `j` (0-based) to one.
    pub fn unit(d: usize, j: usize) -> Result<Self> {
        let mut slots = vec![ZERO; 2 * d + 1];
        let n = slots.len();
        *slots.get_mut(j).ok_or(Error::InitLength {
            expected: n,
            found: j + 1,
        })? = C64::new(1.0, 0.0);
        Self::from_slots(d, &slots)
    }

    pub fn degree(&self) -> usize {
        self.alpha_beta.len()
    }

    pub fn slots(&self) -> Vec<C64> {
        std::iter::once(self.gamma)
            .chain(self.alpha_beta.iter().flat_map(|&(a, b)| [a, b]))
            .collect()
    }
}

fn check_degree(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidDegree {
            degree: d as i64,
            reason: "quasi-Trefftz spaces need d >= 2",
        });
    }
    Ok(())
}

/// Coefficients of `P^{k+1}` with `∇P^{k+1} = iωρ (F_x, F_y)`, from the
/// degree-`k` coefficients `mu`, `eta` of a gradient field.
pub fn solve_gradient(
    k: usize,
    mu: &[C64],
    eta: &[C64],
    params: &AcousticParams,
    ledger: &mut FlopLedger,
) -> Vec<C64> {
    debug_assert!(mu.len() == k + 1 && eta.len() == k + 1);
    let iwr = params.i_omega_rho();
    let mut lam = Vec::with_capacity(k + 2);
    for (l, e) in eta.iter().enumerate() {
        lam.push(iwr / (k + 1 - l) as f64 * e);
    }
    lam.push(iwr / (k + 1) as f64 * mu[k]);
    ledger.charge(Step::SolveGradient, 0, (k + 2) as u64);
    lam
}

/// Degree-`k+1` velocity `(μ, η)` in the range of the gradient with
/// `∇·V^{k+1} = G^k`, where `(η_0, η_1)` is the seed.
pub fn solve_divergence(
    k: usize,
    g: &[C64],
    seed: (C64, C64),
    ledger: &mut FlopLedger,
) -> (Vec<C64>, Vec<C64>) {
    debug_assert_eq!(g.len(), k + 1);
    let mut eta = vec![ZERO; k + 2];
    let mut mu = vec![ZERO; k + 2];
    eta[0] = seed.0;
    eta[1] = seed.1;
    for l in 0..k {
        let a = (k - l) as f64 / ((l + 1) * (l + 2)) as f64;
        let b = (k + 1 - l) as f64;
        eta[l + 2] = a * (g[l] - b * eta[l]);
    }
    for l in 0..=k {
        mu[l] = (l + 1) as f64 / (k + 1 - l) as f64 * eta[l + 1];
    }
    mu[k + 1] = (g[k] - eta[k]) / (k + 1) as f64;
    let k64 = k as u64;
    ledger.charge(Step::SolveDivergence, k64 + 1, 3 * k64 + 2);
    (mu, eta)
}

/// Degree-`k` homogeneous `λ^k` with `ΔP^k = F^{k−2}`, `(λ_0, λ_1)` the seed.
pub fn solve_laplacian(
    k: usize,
    f: &[C64],
    seed: (C64, C64),
    ledger: &mut FlopLedger,
) -> Result<Vec<C64>> {
    if k < 2 {
        return Err(Error::InvalidDegree {
            degree: k as i64,
            reason: "the Laplacian recurrence starts at degree 2",
        });
    }
    debug_assert_eq!(f.len(), k - 1);
    let mut lam = vec![ZERO; k + 1];
    lam[0] = seed.0;
    lam[1] = seed.1;
    for l in 0..=k - 2 {
        let a = ((k - l) * (k - l - 1)) as f64;
        let b = ((l + 2) * (l + 1)) as f64;
        lam[l + 2] = (f[l] - a * lam[l]) / b;
    }
    let n = (k - 1) as u64;
    ledger.charge(Step::SolveLaplacian, n, 2 * n);
    Ok(lam)
}

/// `(μ^k, η^k) = scale · ∇P^{k+1}` for the homogeneous `P^{k+1}` given by `lam`.
pub fn comp_grad(
    k: usize,
    lam: &[C64],
    scale: C64,
    ledger: &mut FlopLedger,
) -> (Vec<C64>, Vec<C64>) {
    debug_assert_eq!(lam.len(), k + 2);
    let mu = (0..=k).map(|l| deriv_factor(l + 1, scale) * lam[l + 1]).collect();
    let eta = (0..=k).map(|l| deriv_factor(k + 1 - l, scale) * lam[l]).collect();
    ledger.charge(Step::CompGrad, 0, 2 * (k as u64 + 1));
    (mu, eta)
}

/// Coefficient series pre-multiplied once per element: `(iω/ρ)·κ` for the
/// coupled construction and `−ω²·κ` for the decoupled one, truncated at
/// order `d−2`. Preparing it is per-element setup and is not charged to
/// individual constructions.
#[derive(Clone, Debug)]
pub struct SourceSeries {
    method: ExplicitMethod,
    d: usize,
    comps: Vec<Vec<C64>>,
}

impl SourceSeries {
    pub fn new(
        method: ExplicitMethod,
        d: usize,
        kappa: &GradedPoly2,
        params: &AcousticParams,
    ) -> Result<Self> {
        check_degree(d)?;
        if kappa.degree() < d as i64 - 2 {
            return Err(Error::InvalidDegree {
                degree: kappa.degree(),
                reason: "coefficient series must reach order d-2",
            });
        }
        let factor = match method {
            ExplicitMethod::Coupled => params.i_omega_over_rho(),
            ExplicitMethod::Decoupled => C64::new(-params.omega_sq(), 0.0),
        };
        let comps = kappa.components()[..d - 1]
            .iter()
            .map(|c| c.iter().map(|v| factor * v).collect())
            .collect();
        Ok(Self { method, d, comps })
    }
}

fn finish(
    d: usize,
    center: [f64; 2],
    lam: Vec<Vec<C64>>,
    mu: Vec<Vec<C64>>,
    eta: Vec<Vec<C64>>,
) -> Result<QTFunction> {
    QTFunction::new(
        d,
        GradedPoly2::from_components(center, lam),
        GradedPoly2::from_components(center, mu),
        GradedPoly2::from_components(center, eta),
    )
}

fn check_init(d: usize, init: &InitVector) -> Result<()> {
    if init.degree() != d {
        return Err(Error::InitLength {
            expected: 2 * d + 1,
            found: 2 * init.degree() + 1,
        });
    }
    Ok(())
}

fn coupled(
    series: &SourceSeries,
    init: &InitVector,
    center: [f64; 2],
    params: &AcousticParams,
    ledger: &mut FlopLedger,
) -> Result<QTFunction> {
    let d = series.d;
    check_init(d, init)?;
    let (a0, b0) = init.alpha_beta[0];
    let mut lam = vec![vec![init.gamma]];
    let mut mu = vec![vec![a0]];
    let mut eta = vec![vec![b0]];
    for k in 0..=d - 2 {
        lam.push(solve_gradient(k, &mu[k], &eta[k], params, ledger));
        let g = truncated_product(&series.comps, &lam, k, ledger);
        let (m, e) = solve_divergence(k, &g, init.alpha_beta[k + 1], ledger);
        mu.push(m);
        eta.push(e);
    }
    lam.push(solve_gradient(d - 1, &mu[d - 1], &eta[d - 1], params, ledger));
    finish(d, center, lam, mu, eta)
}

fn decoupled(
    series: &SourceSeries,
    init: &InitVector,
    center: [f64; 2],
    params: &AcousticParams,
    ledger: &mut FlopLedger,
) -> Result<QTFunction> {
    let d = series.d;
    check_init(d, init)?;
    let (a0, b0) = init.alpha_beta[0];
    let mut lam = vec![vec![init.gamma], vec![a0, b0]];
    for k in 2..=d {
        let f = truncated_product(&series.comps, &lam, k - 2, ledger);
        lam.push(solve_laplacian(k, &f, init.alpha_beta[k - 1], ledger)?);
    }
    let inv = params.inv_i_omega_rho();
    let (mu, eta): (Vec<_>, Vec<_>) = (0..d).map(|k| comp_grad(k, &lam[k + 1], inv, ledger)).unzip();
    finish(d, center, lam, mu, eta)
}

/// Individual construction from a prepared series.
pub fn construct_from_series(
    series: &SourceSeries,
    init: &InitVector,
    center: [f64; 2],
    params: &AcousticParams,
    ledger: &mut FlopLedger,
) -> Result<QTFunction> {
    match series.method {
        ExplicitMethod::Coupled => coupled(series, init, center, params, ledger),
        ExplicitMethod::Decoupled => decoupled(series, init, center, params, ledger),
    }
}

pub fn construct_indiv(
    method: ExplicitMethod,
    d: usize,
    init: &InitVector,
    kappa: &GradedPoly2,
    params: &AcousticParams,
    ledger: &mut FlopLedger,
) -> Result<QTFunction> {
    let series = SourceSeries::new(method, d, kappa, params)?;
    construct_from_series(&series, init, kappa.center(), params, ledger)
}

/// One element of the quasi-Trefftz space from the coupled system.
pub fn construct_indiv_coupled(
    d: usize,
    init: &InitVector,
    kappa: &GradedPoly2,
    params: &AcousticParams,
    ledger: &mut FlopLedger,
) -> Result<QTFunction> {
    construct_indiv(ExplicitMethod::Coupled, d, init, kappa, params, ledger)
}

/// One element of the quasi-Trefftz space from the decoupled pressure equation.
pub fn construct_indiv_decoupled(
    d: usize,
    init: &InitVector,
    kappa: &GradedPoly2,
    params: &AcousticParams,
    ledger: &mut FlopLedger,
) -> Result<QTFunction> {
    construct_indiv(ExplicitMethod::Decoupled, d, init, kappa, params, ledger)
}

/// `2d+1` functions from the canonical unit initializations.
pub fn construct_basis(
    method: ExplicitMethod,
    d: usize,
    kappa: &GradedPoly2,
    params: &AcousticParams,
    ledger: &mut FlopLedger,
) -> Result<Vec<QTFunction>> {
    let series = SourceSeries::new(method, d, kappa, params)?;
    (0..2 * d + 1)
        .map(|j| {
            let init = InitVector::unit(d, j)?;
            construct_from_series(&series, &init, kappa.center(), params, ledger)
        })
        .collect()
}

/// Reads back the coefficients that the initialization slots were written to.
pub fn init_slot_readback(method: ExplicitMethod, f: &QTFunction) -> Vec<C64> {
    let mut out = vec![f.p.coeff(0, 0)];
    match method {
        ExplicitMethod::Coupled => {
            out.push(f.vx.coeff(0, 0));
            out.push(f.vy.coeff(0, 0));
            for k in 1..f.d {
                out.push(f.vy.coeff(k, 0));
                out.push(f.vy.coeff(k, 1));
            }
        }
        ExplicitMethod::Decoupled => {
            for k in 1..=f.d {
                out.push(f.p.coeff(k, 0));
                out.push(f.p.coeff(k, 1));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::ProblemConfig;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn case1_at(x0: [f64; 2], d: usize) -> (GradedPoly2, AcousticParams) {
        let cfg = ProblemConfig::case1();
        let params = cfg.params().unwrap();
        (cfg.provider.kappa(x0, d - 2, &params), params)
    }

    fn homog(center: [f64; 2], k: usize, coeffs: &[C64]) -> GradedPoly2 {
        GradedPoly2::from_fn(center, k as i64, |kk, l| if kk == k { coeffs[l] } else { ZERO })
    }

    #[test]
    fn gradient_solve_first_degree() {
        let params = AcousticParams::new(1.3, 0.7).unwrap();
        let (a, b) = (c(0.5, -1.0), c(2.0, 0.25));
        let lam = solve_gradient(0, &[a], &[b], &params, &mut FlopLedger::new());
        let iwr = params.i_omega_rho();
        // P¹ = iωρ(α X + β Y): coefficient of Y is λ_0, of X is λ_1.
        assert!((lam[0] - iwr * b).norm() < 1e-15);
        assert!((lam[1] - iwr * a).norm() < 1e-15);
        let zero = solve_gradient(3, &[ZERO; 4], &[ZERO; 4], &params, &mut FlopLedger::new());
        assert!(zero.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn gradient_solve_is_inverse_of_grad() {
        let params = AcousticParams::new(1.3, 0.7).unwrap();
        let mut ledger = FlopLedger::new();
        // Build a field in the range of the gradient via the divergence solve.
        let g = [c(0.3, 0.1), c(-1.2, 0.4)];
        let (mu, eta) = solve_divergence(1, &g, (c(0.7, 0.0), c(0.1, -0.5)), &mut ledger);
        let lam = solve_gradient(2, &mu, &eta, &params, &mut ledger);
        let (gx, gy) = homog([0.0; 2], 3, &lam).grad();
        let iwr = params.i_omega_rho();
        for l in 0..=2 {
            assert!((gx.coeff(2, l) - iwr * mu[l]).norm() < 1e-14);
            assert!((gy.coeff(2, l) - iwr * eta[l]).norm() < 1e-14);
        }
        // And the small k=1 case asked for directly.
        let (mu1, eta1) = solve_divergence(0, &[c(0.4, 0.0)], (c(1.0, 0.5), c(-0.2, 0.0)), &mut ledger);
        let lam = solve_gradient(1, &mu1, &eta1, &params, &mut ledger);
        let (gx, gy) = homog([0.0; 2], 2, &lam).grad();
        for l in 0..=1 {
            assert!((gx.coeff(1, l) - iwr * mu1[l]).norm() < 1e-14);
            assert!((gy.coeff(1, l) - iwr * eta1[l]).norm() < 1e-14);
        }
    }

    #[test]
    fn divergence_solve_degree_one() {
        let (g, a, b) = (c(2.0, 1.0), c(0.5, 0.0), c(-1.5, 2.0));
        let (mu, eta) = solve_divergence(0, &[g], (a, b), &mut FlopLedger::new());
        assert_eq!(eta, vec![a, b]);
        assert_eq!(mu[0], b);
        assert_eq!(mu[1], g - a);
        let div = GradedPoly2::divergence(&homog([0.0; 2], 1, &mu), &homog([0.0; 2], 1, &eta)).unwrap();
        assert!((div.coeff(0, 0) - g).norm() < 1e-15);
        let (mu, eta) = solve_divergence(0, &[ZERO], (ZERO, ZERO), &mut FlopLedger::new());
        assert!(mu.iter().chain(eta.iter()).all(|v| v.norm() == 0.0));
    }

    #[test]
    fn laplacian_solve_examples() {
        let (f, a, b) = (c(3.0, -1.0), c(0.25, 0.0), c(1.0, 1.0));
        let lam = solve_laplacian(2, &[f], (a, b), &mut FlopLedger::new()).unwrap();
        assert_eq!(lam[2], (f - 2.0 * a) / 2.0);
        let lap = homog([0.0; 2], 2, &lam).laplacian();
        assert!((lap.coeff(0, 0) - f).norm() < 1e-15);
        // F = 0, seed (1, 0): Y² − X².
        let lam = solve_laplacian(2, &[ZERO], (c(1.0, 0.0), ZERO), &mut FlopLedger::new()).unwrap();
        assert_eq!(lam, vec![c(1.0, 0.0), ZERO, c(-1.0, 0.0)]);
        let lam = solve_laplacian(5, &[ZERO; 4], (ZERO, ZERO), &mut FlopLedger::new()).unwrap();
        assert!(lam.iter().all(|v| v.norm() == 0.0));
        assert!(solve_laplacian(1, &[], (ZERO, ZERO), &mut FlopLedger::new()).is_err());
    }

    #[test]
    fn degree_below_two_rejected() {
        let (kappa, params) = case1_at([0.5, 0.5], 2);
        let init = InitVector::zeros(1);
        let mut l = FlopLedger::new();
        assert!(construct_indiv_coupled(1, &init, &kappa, &params, &mut l).is_err());
        assert!(construct_indiv_decoupled(1, &init, &kappa, &params, &mut l).is_err());
    }

    #[test]
    fn zero_init_gives_zero_function() {
        let (kappa, params) = case1_at([0.5, 0.5], 6);
        for m in [ExplicitMethod::Coupled, ExplicitMethod::Decoupled] {
            let f = construct_indiv(m, 6, &InitVector::zeros(6), &kappa, &params, &mut FlopLedger::new()).unwrap();
            assert_eq!(f.max_abs_coeff(), 0.0);
        }
    }

    #[test]
    fn basis_has_identity_readback() {
        for d in [2, 3, 7] {
            let (kappa, params) = case1_at([0.3, 0.6], d);
            for m in [ExplicitMethod::Coupled, ExplicitMethod::Decoupled] {
                let basis = construct_basis(m, d, &kappa, &params, &mut FlopLedger::new()).unwrap();
                assert_eq!(basis.len(), 2 * d + 1);
                for (j, f) in basis.iter().enumerate() {
                    let read = init_slot_readback(m, f);
                    for (i, v) in read.iter().enumerate() {
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert_eq!(*v, c(want, 0.0), "method {m:?} d {d} fn {j} slot {i}");
                    }
                }
            }
        }
    }

    #[test]
    fn init_slots_round_trip() {
        let slots: Vec<C64> = (0..7).map(|i| c(i as f64, -(i as f64))).collect();
        let init = InitVector::from_slots(3, &slots).unwrap();
        assert_eq!(init.gamma, slots[0]);
        assert_eq!(init.alpha_beta[2], (slots[5], slots[6]));
        assert_eq!(init.slots(), slots);
        assert!(InitVector::from_slots(3, &slots[..6]).is_err());
    }

    fn s3_truncated_residual(f: &QTFunction, kappa: &GradedPoly2, params: &AcousticParams) -> f64 {
        let div = GradedPoly2::divergence(&f.vx, &f.vy).unwrap();
        let src = kappa.mul(&f.p).scale(-params.i_omega_over_rho());
        src.add(&div).truncate(f.d as i64 - 2).max_abs_coeff()
    }

    #[test]
    fn constructions_satisfy_the_quasi_trefftz_identities() {
        for d in 2..=10 {
            let (kappa, params) = case1_at([0.45, 0.85], d);
            let iwr = params.i_omega_rho();
            for m in [ExplicitMethod::Coupled, ExplicitMethod::Decoupled] {
                let basis = construct_basis(m, d, &kappa, &params, &mut FlopLedger::new()).unwrap();
                for f in &basis {
                    let (gx, gy) = f.p.grad();
                    let r1 = gx.sub(&f.vx.scale(iwr)).max_abs_coeff();
                    let r2 = gy.sub(&f.vy.scale(iwr)).max_abs_coeff();
                    assert!(r1.max(r2) <= 1e-12, "{m:?} d={d}: {r1:e} {r2:e}");
                    let r3 = s3_truncated_residual(f, &kappa, &params);
                    assert!(r3 <= 1e-11 * f.max_abs_coeff(), "{m:?} d={d}: S3 {r3:e}");
                }
            }
        }
    }

    #[test]
    fn decoupled_pressure_solves_truncated_helmholtz() {
        for d in 2..=10 {
            let (kappa, params) = case1_at([0.1, 0.2], d);
            let basis =
                construct_basis(ExplicitMethod::Decoupled, d, &kappa, &params, &mut FlopLedger::new()).unwrap();
            for f in &basis {
                let lp = f
                    .p
                    .laplacian()
                    .scale(c(-1.0, 0.0))
                    .sub(&kappa.mul(&f.p).scale(c(params.omega_sq(), 0.0)))
                    .truncate(d as i64 - 2);
                assert!(lp.max_abs_coeff() <= 1e-12 * f.p.max_abs_coeff().max(1.0));
            }
        }
    }

    fn arb_slots(n: usize) -> impl Strategy<Value = Vec<C64>> {
        prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), n)
            .prop_map(|v| v.into_iter().map(|(a, b)| c(a, b)).collect())
    }

    proptest! {
        #[test]
        fn constructions_are_linear(
            d in 2usize..=8,
            s1 in arb_slots(17),
            s2 in arb_slots(17),
            scale in (-2.0f64..2.0, -2.0f64..2.0),
        ) {
            let n = 2 * d + 1;
            let s = c(scale.0, scale.1);
            let (kappa, params) = case1_at([0.7, 0.2], d);
            let combo: Vec<C64> = s1[..n].iter().zip(&s2[..n]).map(|(a, b)| a + s * b).collect();
            for m in [ExplicitMethod::Coupled, ExplicitMethod::Decoupled] {
                let build = |slots: &[C64]| {
                    let init = InitVector::from_slots(d, slots).unwrap();
                    construct_indiv(m, d, &init, &kappa, &params, &mut FlopLedger::new()).unwrap()
                };
                let lhs = build(&combo);
                let rhs = build(&s1[..n]).add(&build(&s2[..n]).scale(s));
                let diff = lhs.p.sub(&rhs.p).max_abs_coeff()
                    .max(lhs.vx.sub(&rhs.vx).max_abs_coeff())
                    .max(lhs.vy.sub(&rhs.vy).max_abs_coeff());
                prop_assert!(diff <= 1e-13 * lhs.max_abs_coeff().max(rhs.max_abs_coeff()));
            }
        }
    }
}
