//! Numerical studies of the constructed bases: the Trefftz identities,
//! decay of the mass-equation residual, best approximation of an exact
//! solution, agreement of spans, and build timings.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::algebraic::{pack_qt, BasisNumbering};
use crate::coeff::{AcousticParams, CoeffProvider};
use crate::error::{Error, Result};
use crate::flops::FlopLedger;
use crate::linalg;
use crate::mesh::TriMesh;
use crate::method::{build_basis, BuildOptions, Method};
use crate::poly2d::{GradedPoly2, QTFunction, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Worst coefficient of `−iωρ v + ∇p` over a basis.
///
/// The residual is formed as `iωρ (∇p/(iωρ) − v)` so that velocities obtained
/// by scaling the pressure gradient give an exact zero.
pub fn check_identities(basis: &[QTFunction], params: &AcousticParams) -> f64 {
    let iwr = params.i_omega_rho();
    let inv = params.inv_i_omega_rho();
    basis
        .iter()
        .map(|f| {
            let (gx, gy) = f.p.grad_scaled(inv);
            let rx = gx.sub(&f.vx).scale(iwr).max_abs_coeff();
            let ry = gy.sub(&f.vy).scale(iwr).max_abs_coeff();
            rx.max(ry)
        })
        .fold(0.0, f64::max)
}

/// Sample values at decreasing radii.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Curve {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl Curve {
    /// Pointwise maximum with another curve on the same radii.
    pub fn envelope(&mut self, other: &Curve) {
        if self.radii.is_empty() {
            *self = other.clone();
            return;
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = a.max(*b);
        }
    }
}

/// `h/2 · 2^(−j/2)` for `j = 0..=16`, i.e. `h/2` down to `h/512`.
pub fn default_radii(h: f64) -> Vec<f64> {
    (0..=16).map(|j| 0.5 * h * 2f64.powf(-(j as f64) / 2.0)).collect()
}

pub const DEFAULT_SAMPLES: usize = 16;

/// Fraction of an angular step by which the samples are rotated off the
/// axes. Axis-aligned equispaced points sit on the zeros of `sin(nθ/2)`, so
/// a homogeneous term of degree `n/2` built from axis monomials could be
/// missed entirely.
pub const SAMPLE_PHASE: f64 = 0.381_966_011_250_105_1;

/// `n` equispaced points on the circle of radius `r`, rotated by
/// [`SAMPLE_PHASE`] of a step.
pub fn circle_points(center: [f64; 2], r: f64, n: usize) -> impl Iterator<Item = [f64; 2]> {
    (0..n).map(move |i| {
        let t = std::f64::consts::TAU * (i as f64 + SAMPLE_PHASE) / n as f64;
        [center[0] + r * t.cos(), center[1] + r * t.sin()]
    })
}

/// Mass-equation residual `−iω/(ρc²) p + ∇·v` on circles about the center,
/// with the true coefficient.
///
/// Each function's residual is divided by `‖f‖ · |ω/ρ| · |1/c²(x0)|`, where
/// `‖f‖` is its largest coefficient: the size of the source term for a
/// unit coefficient. The curve is the maximum over the basis.
pub fn residual_decay(
    basis: &[QTFunction],
    provider: &CoeffProvider,
    params: &AcousticParams,
    radii: &[f64],
    samples: usize,
) -> Result<Curve> {
    let mut values = vec![0.0f64; radii.len()];
    let w = params.i_omega_over_rho();
    for f in basis {
        let div = GradedPoly2::divergence(&f.vx, &f.vy)?;
        let mut unit = w.norm() * provider.inv_c_sq(f.center, params).abs();
        if unit == 0.0 {
            unit = 1.0;
        }
        let scale = f.max_abs_coeff() * unit;
        if scale == 0.0 {
            continue;
        }
        for (v, &r) in values.iter_mut().zip(radii) {
            for pt in circle_points(f.center, r, samples) {
                let src = w * provider.inv_c_sq(pt, params) * f.p.eval(pt);
                *v = v.max((div.eval(pt) - src).norm() / scale);
            }
        }
    }
    Ok(Curve {
        radii: radii.to_vec(),
        values,
    })
}

/// Log-log least-squares fit of a curve, restricted to its pre-plateau part.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    /// `None` when fewer than two usable points remain.
    pub slope: Option<f64>,
    /// Floor level, when the tail of the curve has flattened out.
    pub plateau: Option<f64>,
    /// Number of points the fit used.
    pub used: usize,
    /// Root-mean-square deviation of the fit in natural-log units.
    pub fit_residual: f64,
}

fn lsq_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    (slope, icpt, rms)
}

/// A curve has reached a plateau when it touches zero, or when its floor
/// (median of the three smallest values) is below `NOISE_LEVEL` and the
/// slope over the three smallest radii is below this, or below
/// `PLATEAU_BEND` times the slope over the three largest radii.
pub const PLATEAU_SLOPE: f64 = 0.5;
pub const PLATEAU_BEND: f64 = 0.75;
/// Pre-plateau points lie at least this factor above the floor.
pub const PLATEAU_FACTOR: f64 = 100.0;
/// Values below this (relative) are in the roundoff regime; a bend there
/// ends the pre-plateau run even when the floor keeps sloping downwards.
pub const NOISE_LEVEL: f64 = 1e-10;

/// Fits `log value` against `log r` on the leading run of points above the
/// plateau. Radii are expected in decreasing order.
pub fn fit_slope(curve: &Curve) -> SlopeFit {
    let n = curve.values.len();
    let mut plateau = None;
    let mut threshold = f64::MIN_POSITIVE;
    if n >= 3 {
        let mut sorted = curve.values.clone();
        sorted.sort_by(f64::total_cmp);
        let floor = sorted[1];
        let slope3 = |from: usize| {
            let x: Vec<f64> = curve.radii[from..from + 3].iter().map(|r| r.ln()).collect();
            let y: Vec<f64> = curve.values[from..from + 3].iter().map(|v| v.ln()).collect();
            lsq_line(&x, &y).0
        };
        let flat = if sorted[0] <= 0.0 {
            true
        } else if floor >= NOISE_LEVEL {
            false
        } else {
            let tail_slope = slope3(n - 3);
            tail_slope < PLATEAU_SLOPE || tail_slope < PLATEAU_BEND * slope3(0)
        };
        if flat {
            plateau = Some(floor);
            threshold = threshold.max(PLATEAU_FACTOR * floor);
        }
    }
    let mut used = curve.values.iter().take_while(|&&v| v >= threshold).count();
    if n >= 3 && curve.values[..3].iter().all(|&v| v > 0.0) {
        let step = |j: usize| (curve.values[j] / curve.values[j + 1]).ln() / (curve.radii[j] / curve.radii[j + 1]).ln();
        let head = (curve.values[0] / curve.values[2]).ln() / (curve.radii[0] / curve.radii[2]).ln();
        if let Some(j) = (0..used.saturating_sub(1))
            .find(|&j| curve.values[j + 1] < NOISE_LEVEL && step(j) < PLATEAU_BEND * head)
        {
            used = j + 1;
            if plateau.is_none() {
                let mut t = curve.values[j + 1..].to_vec();
                t.sort_by(f64::total_cmp);
                plateau = Some(t[t.len() / 2]);
            }
        }
    }
    let (slope, fit_residual) = if used >= 2 {
        let x: Vec<f64> = curve.radii[..used].iter().map(|r| r.ln()).collect();
        let y: Vec<f64> = curve.values[..used].iter().map(|v| v.ln()).collect();
        let (s, _, rms) = lsq_line(&x, &y);
        (Some(s), rms)
    } else {
        (None, 0.0)
    };
    SlopeFit {
        slope,
        plateau,
        used,
        fit_residual,
    }
}

/// Slopes between radii `j` and `j+2` (a factor of two apart) along the
/// pre-plateau run of the curve.
pub fn local_slopes(curve: &Curve) -> Vec<f64> {
    let used = fit_slope(curve).used;
    let (r, v) = (&curve.radii[..used], &curve.values[..used]);
    (0..used.saturating_sub(2))
        .map(|j| (v[j] / v[j + 2]).ln() / (r[j] / r[j + 2]).ln())
        .collect()
}

/// Smallest local slope over the residual curves of the individual basis
/// functions; `None` if no function has three pre-plateau points.
pub fn min_local_slope(
    basis: &[QTFunction],
    provider: &CoeffProvider,
    params: &AcousticParams,
    radii: &[f64],
    samples: usize,
) -> Result<Option<f64>> {
    let mut worst: Option<f64> = None;
    for f in basis {
        let c = residual_decay(std::slice::from_ref(f), provider, params, radii, samples)?;
        for s in local_slopes(&c) {
            worst = Some(worst.map_or(s, |w| w.min(s)));
        }
    }
    Ok(worst)
}

/// `exp(G)` truncated at degree `q`, through `k F^k = Σ_{m=1..k} m G^m F^(k−m)`.
pub fn exp_series(g: &GradedPoly2, q: usize) -> GradedPoly2 {
    let gk = |m: usize| g.component(m);
    let mut f: Vec<Vec<C64>> = vec![vec![g.coeff(0, 0).exp()]];
    for k in 1..=q {
        let mut fk = vec![ZERO; k + 1];
        for m in 1..=k {
            let Some(gm) = gk(m) else { continue };
            let fr = &f[k - m];
            for (i, a) in gm.iter().enumerate() {
                if *a == ZERO {
                    continue;
                }
                let a = a * m as f64;
                for (j, b) in fr.iter().enumerate() {
                    fk[i + j] += a * b;
                }
            }
        }
        for v in &mut fk {
            *v /= k as f64;
        }
        f.push(fk);
    }
    GradedPoly2::new(g.center(), f).expect("components built with k+1 entries")
}

/// Taylor coefficients of a global monomial sum about `center`, to degree `q`.
fn shifted_series(terms: &[(C64, u32, u32)], center: [f64; 2], q: usize) -> GradedPoly2 {
    let binom = |n: u32, i: u32| (0..i).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64);
    let mut comps: Vec<Vec<C64>> = (0..=q).map(|k| vec![ZERO; k + 1]).collect();
    for &(c, a, b) in terms {
        for i in 0..=a {
            for j in 0..=b {
                let k = (i + j) as usize;
                if k > q {
                    continue;
                }
                let w = binom(a, i) * center[0].powi((a - i) as i32) * binom(b, j) * center[1].powi((b - j) as i32);
                comps[k][i as usize] += c * w;
            }
        }
    }
    GradedPoly2::new(center, comps).expect("components built with k+1 entries")
}

/// `p = exp(g(x, y))` with polynomial `g`, and `v = ∇p / (iωρ)`.
#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub params: AcousticParams,
    /// `g` as `(coefficient, x power, y power)` in global coordinates.
    pub exponent: Vec<(C64, u32, u32)>,
}

impl ExactSolution {
    /// `exp(5ix − y³ + y)`, which solves the Helmholtz equation for the
    /// polynomial coefficient of the first test case.
    pub fn case1(params: AcousticParams) -> Self {
        Self {
            params,
            exponent: vec![
                (C64::new(0.0, 5.0), 1, 0),
                (C64::new(-1.0, 0.0), 0, 3),
                (C64::new(1.0, 0.0), 0, 1),
            ],
        }
    }

    /// `exp(i k·x)`, a solution for the constant coefficient `|k|²/ω²`.
    pub fn plane_wave(params: AcousticParams, k: [f64; 2]) -> Self {
        Self {
            params,
            exponent: vec![(C64::new(0.0, k[0]), 1, 0), (C64::new(0.0, k[1]), 0, 1)],
        }
    }

    fn g_parts(&self, pt: [f64; 2]) -> (C64, [C64; 2], C64) {
        let (x, y) = (pt[0], pt[1]);
        let pw = |b: f64, e: u32| if e == 0 { 1.0 } else { b.powi(e as i32) };
        let mut g = ZERO;
        let mut grad = [ZERO; 2];
        let mut lap = ZERO;
        for &(c, a, b) in &self.exponent {
            let (a, b) = (a as f64, b as f64);
            let (ai, bi) = (a as u32, b as u32);
            g += c * pw(x, ai) * pw(y, bi);
            if ai > 0 {
                grad[0] += c * a * pw(x, ai - 1) * pw(y, bi);
            }
            if bi > 0 {
                grad[1] += c * b * pw(x, ai) * pw(y, bi - 1);
            }
            if ai > 1 {
                lap += c * a * (a - 1.0) * pw(x, ai - 2) * pw(y, bi);
            }
            if bi > 1 {
                lap += c * b * (b - 1.0) * pw(x, ai) * pw(y, bi - 2);
            }
        }
        (g, grad, lap)
    }

    pub fn pressure(&self, pt: [f64; 2]) -> C64 {
        self.g_parts(pt).0.exp()
    }

    pub fn velocity(&self, pt: [f64; 2]) -> [C64; 2] {
        let (g, dg, _) = self.g_parts(pt);
        let s = g.exp() * self.params.inv_i_omega_rho();
        [s * dg[0], s * dg[1]]
    }

    pub fn laplacian(&self, pt: [f64; 2]) -> C64 {
        let (g, dg, lap) = self.g_parts(pt);
        g.exp() * (dg[0] * dg[0] + dg[1] * dg[1] + lap)
    }

    /// Taylor polynomials about `center`: pressure to degree `q`, velocity
    /// to degree `q − 1`.
    pub fn taylor_jet(&self, center: [f64; 2], q: usize) -> (GradedPoly2, GradedPoly2, GradedPoly2) {
        let p = exp_series(&shifted_series(&self.exponent, center, q), q);
        let (vx, vy) = p.grad_scaled(self.params.inv_i_omega_rho());
        (p, vx, vy)
    }
}

/// Errors of the best Taylor-matched approximation on circles.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BestApprox {
    pub pressure: Curve,
    pub velocity: Curve,
    /// Least-squares residual of the Taylor matching.
    pub match_residual: f64,
}

/// Matches the exact solution's Taylor coefficients (pressure to degree `d`,
/// velocity to `d−1`) with a combination of the basis, by QR least squares,
/// then measures the pointwise error on circles.
pub fn best_approx_study(
    basis: &[QTFunction],
    exact: &ExactSolution,
    radii: &[f64],
    samples: usize,
) -> Result<BestApprox> {
    let first = basis.first().ok_or(Error::InvalidDegree {
        degree: -1,
        reason: "empty basis",
    })?;
    let (d, center) = (first.d, first.center);
    let cols: Vec<DVector<C64>> = basis.iter().map(pack_qt).collect();
    let a = DMatrix::from_columns(&cols);
    let (p, vx, vy) = exact.taylor_jet(center, d);
    let rhs = BasisNumbering::qt_unknowns(d).pack(&[&p, &vx, &vy]);
    let coef = linalg::lstsq(&a, &rhs, 1e-13)?;
    let match_residual = (&a * &coef - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
    let mut approx = basis[0].scale(coef[0]);
    for (f, c) in basis.iter().zip(coef.iter()).skip(1) {
        approx = approx.add(&f.scale(*c));
    }
    let mut pv = Vec::with_capacity(radii.len());
    let mut vv = Vec::with_capacity(radii.len());
    for &r in radii {
        let (mut ep, mut ev) = (0.0f64, 0.0f64);
        for pt in circle_points(center, r, samples) {
            let [ap, ax, ay] = approx.eval(pt);
            let [ex, ey] = exact.velocity(pt);
            ep = ep.max((exact.pressure(pt) - ap).norm());
            ev = ev.max(((ex - ax).norm_sqr() + (ey - ay).norm_sqr()).sqrt());
        }
        pv.push(ep);
        vv.push(ev);
    }
    Ok(BestApprox {
        pressure: Curve {
            radii: radii.to_vec(),
            values: pv,
        },
        velocity: Curve {
            radii: radii.to_vec(),
            values: vv,
        },
        match_residual,
    })
}

/// Largest relative residual of projecting each basis onto the other's span.
pub fn span_residual(a: &[QTFunction], b: &[QTFunction]) -> f64 {
    let ma = DMatrix::from_columns(&a.iter().map(pack_qt).collect::<Vec<_>>());
    let mb = DMatrix::from_columns(&b.iter().map(pack_qt).collect::<Vec<_>>());
    linalg::projection_residual(&ma, &mb).max(linalg::projection_residual(&mb, &ma))
}

/// Inputs shared by every element of a study.
#[derive(Clone, Debug)]
pub struct StudySetup<'a> {
    pub provider: &'a CoeffProvider,
    pub params: AcousticParams,
    pub exact: Option<ExactSolution>,
    pub radii: Vec<f64>,
    pub samples: usize,
    pub opts: BuildOptions,
}

/// Range of fitted slopes over elements.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SlopeRange {
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Highest plateau over elements, if any flattened out.
    pub plateau_max: Option<f64>,
    /// Elements with a fitted slope, and elements with at least three
    /// pre-plateau points.
    pub fitted: usize,
    pub fitted3: usize,
    pub elements: usize,
}

impl SlopeRange {
    pub fn add(&mut self, fit: &SlopeFit) {
        self.elements += 1;
        if let Some(p) = fit.plateau {
            self.plateau_max = Some(self.plateau_max.map_or(p, |q| q.max(p)));
        }
        if let Some(s) = fit.slope {
            self.fitted += 1;
            if fit.used >= 3 {
                self.fitted3 += 1;
                self.min = Some(self.min.map_or(s, |m| m.min(s)));
                self.max = Some(self.max.map_or(s, |m| m.max(s)));
            }
        }
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.min.is_none_or(|m| m >= lo) && self.max.is_none_or(|m| m <= hi)
    }

    /// Combines the ranges of two disjoint sets of elements.
    pub fn merge(&mut self, other: &SlopeRange) {
        let pick = |a: Option<f64>, b: Option<f64>, f: fn(f64, f64) -> f64| match (a, b) {
            (Some(x), Some(y)) => Some(f(x, y)),
            (x, y) => x.or(y),
        };
        self.min = pick(self.min, other.min, f64::min);
        self.max = pick(self.max, other.max, f64::max);
        self.plateau_max = pick(self.plateau_max, other.plateau_max, f64::max);
        self.fitted += other.fitted;
        self.fitted3 += other.fitted3;
        self.elements += other.elements;
    }
}

/// Aggregate over elements for one method and degree.
#[derive(Clone, Debug, Default, Serialize)]
pub struct StudyRecord {
    pub method: Option<Method>,
    pub d: usize,
    pub elements: usize,
    pub max_identity_linf: f64,
    pub residual: Curve,
    pub residual_slope: SlopeRange,
    pub pressure: Curve,
    pub pressure_slope: SlopeRange,
    pub velocity: Curve,
    pub velocity_slope: SlopeRange,
    pub mean_build_seconds: f64,
}

impl StudyRecord {
    /// Combines the records of two disjoint sets of elements; every field
    /// except the mean build time is independent of the split.
    pub fn merge(&mut self, other: &StudyRecord) {
        let total = (self.elements + other.elements).max(1) as f64;
        self.mean_build_seconds = (self.mean_build_seconds * self.elements as f64
            + other.mean_build_seconds * other.elements as f64)
            / total;
        self.elements += other.elements;
        self.max_identity_linf = self.max_identity_linf.max(other.max_identity_linf);
        self.residual.envelope(&other.residual);
        self.pressure.envelope(&other.pressure);
        self.velocity.envelope(&other.velocity);
        self.residual_slope.merge(&other.residual_slope);
        self.pressure_slope.merge(&other.pressure_slope);
        self.velocity_slope.merge(&other.velocity_slope);
    }
}

/// Builds the basis at every listed element and gathers the studies.
pub fn study(method: Method, d: usize, centers: &[[f64; 2]], setup: &StudySetup) -> Result<StudyRecord> {
    let mut rec = StudyRecord {
        method: Some(method),
        d,
        ..Default::default()
    };
    let mut seconds = 0.0;
    for (idx, &x0) in centers.iter().enumerate() {
        let t = Instant::now();
        let basis = build_basis(method, d, x0, setup.provider, &setup.params, setup.opts, &mut FlopLedger::new())
            .map_err(|e| e.at_element(idx))?;
        seconds += t.elapsed().as_secs_f64();
        rec.elements += 1;
        rec.max_identity_linf = rec.max_identity_linf.max(check_identities(&basis, &setup.params));
        let res = residual_decay(&basis, setup.provider, &setup.params, &setup.radii, setup.samples)?;
        rec.residual_slope.add(&fit_slope(&res));
        rec.residual.envelope(&res);
        if let Some(exact) = &setup.exact {
            let ba = best_approx_study(&basis, exact, &setup.radii, setup.samples).map_err(|e| e.at_element(idx))?;
            rec.pressure_slope.add(&fit_slope(&ba.pressure));
            rec.velocity_slope.add(&fit_slope(&ba.velocity));
            rec.pressure.envelope(&ba.pressure);
            rec.velocity.envelope(&ba.velocity);
        }
    }
    rec.mean_build_seconds = seconds / rec.elements.max(1) as f64;
    Ok(rec)
}

/// Bands the studies are expected to fall in.
#[derive(Clone, Copy, Debug)]
pub struct Thresholds {
    pub identity_linf: f64,
    pub plateau: f64,
    /// Degrees up to which every element must yield a slope.
    pub strict_max_degree: usize,
    /// Also bound slopes from above. The lower bounds follow from the
    /// construction for any coefficient; the upper ones hold for a generic
    /// coefficient, while special ones (e.g. very smooth jets) decay faster.
    pub upper_bounds: bool,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            identity_linf: 1e-12,
            plateau: 1e-10,
            strict_max_degree: 6,
            upper_bounds: true,
        }
    }
}

/// Human-readable list of every band a record misses.
pub fn violations(rec: &StudyRecord, th: &Thresholds) -> Vec<String> {
    let d = rec.d as f64;
    let name = rec.method.map_or("?", Method::name);
    let mut out = Vec::new();
    let exact_zero = matches!(rec.method, Some(Method::Expl2 | Method::Alge2));
    if exact_zero && rec.max_identity_linf != 0.0 {
        out.push(format!("{name} d={}: identity residual {:e} is not exactly zero", rec.d, rec.max_identity_linf));
    }
    if rec.max_identity_linf > th.identity_linf {
        out.push(format!("{name} d={}: identity residual {:e}", rec.d, rec.max_identity_linf));
    }
    let strict = rec.d <= th.strict_max_degree;
    let mut band = |what: &str, r: &SlopeRange, lo: f64, hi: f64| {
        let hi = if th.upper_bounds { hi } else { f64::INFINITY };
        if strict && r.fitted3 < r.elements {
            out.push(format!("{name} d={}: {what} slope unfitted on {} elements", rec.d, r.elements - r.fitted3));
        }
        if !r.within(lo, hi) {
            out.push(format!(
                "{name} d={}: {what} slope range [{:?}, {:?}] outside [{lo}, {hi}]",
                rec.d, r.min, r.max
            ));
        }
    };
    band("residual", &rec.residual_slope, d - 1.3, d - 0.5);
    if rec.pressure_slope.elements > 0 && strict {
        band("pressure", &rec.pressure_slope, d + 0.7, d + 1.5);
        band("velocity", &rec.velocity_slope, d - 0.3, d + 0.5);
    }
    if let Some(p) = rec.residual_slope.plateau_max {
        if p > th.plateau {
            out.push(format!("{name} d={}: residual plateau {p:e}", rec.d));
        }
    }
    out
}

pub fn identities_csv(records: &[StudyRecord]) -> String {
    let mut s = String::from("method,d,max_linf\n");
    for r in records {
        s.push_str(&format!("{},{},{:?}\n", r.method.map_or("?", Method::name), r.d, r.max_identity_linf));
    }
    s
}

pub fn decay_csv(records: &[StudyRecord]) -> String {
    let mut s = String::from("method,d,quantity,r,value\n");
    for rec in records {
        let m = rec.method.map_or("?", Method::name);
        for (q, c) in [("residual", &rec.residual), ("pressure", &rec.pressure), ("velocity", &rec.velocity)] {
            for (r, v) in c.radii.iter().zip(&c.values) {
                s.push_str(&format!("{m},{},{q},{r:e},{v:e}\n", rec.d));
            }
        }
    }
    s
}

pub fn slopes_csv(records: &[StudyRecord]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
    let opt_e = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    let mut s = String::from("method,d,quantity,slope_min,slope_max,plateau,fitted,elements\n");
    for rec in records {
        let m = rec.method.map_or("?", Method::name);
        for (q, r) in [
            ("residual", &rec.residual_slope),
            ("pressure", &rec.pressure_slope),
            ("velocity", &rec.velocity_slope),
        ] {
            if r.elements == 0 {
                continue;
            }
            s.push_str(&format!(
                "{m},{},{q},{},{},{},{},{}\n",
                rec.d,
                opt(r.min),
                opt(r.max),
                opt_e(r.plateau_max),
                r.fitted3,
                r.elements
            ));
        }
    }
    s
}

/// Gnuplot script plotting `decay.csv` on log-log axes, one page per
/// method and quantity.
pub fn gnuplot_script(records: &[StudyRecord], data_file: &str) -> String {
    let mut methods: Vec<Method> = records.iter().filter_map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let mut degrees: Vec<usize> = records.iter().map(|r| r.d).collect();
    degrees.sort();
    degrees.dedup();
    let mut s = String::from(
        "set datafile separator ','\nset logscale xy\nset format y '%.0e'\nset xlabel 'r'\nset key left top\n",
    );
    s.push_str("set terminal pngcairo size 800,600\n");
    for m in &methods {
        for q in ["residual", "pressure", "velocity"] {
            s.push_str(&format!("set output '{m}_{q}.png'\nset title '{m} {q}'\nplot "));
            let parts: Vec<String> = degrees
                .iter()
                .map(|d| {
                    format!(
                        "'{data_file}' using (strcol(1) eq '{m}' && $2 == {d} && strcol(3) eq '{q}' ? $4 : 1/0):5 with linespoints title 'd={d}'"
                    )
                })
                .collect();
            s.push_str(&parts.join(", \\\n     "));
            s.push('\n');
        }
    }
    s
}

/// Per-element build times for one method and degree.
#[derive(Clone, Debug, Serialize)]
pub struct TimingStats {
    pub method: Method,
    pub d: usize,
    pub elements: usize,
    pub mean_seconds: f64,
    pub median_seconds: f64,
}

pub fn time_builds(
    method: Method,
    d: usize,
    centers: &[[f64; 2]],
    provider: &CoeffProvider,
    params: &AcousticParams,
    opts: BuildOptions,
) -> Result<TimingStats> {
    let mut times = Vec::with_capacity(centers.len());
    for (idx, &x0) in centers.iter().enumerate() {
        let t = Instant::now();
        let basis =
            build_basis(method, d, x0, provider, params, opts, &mut FlopLedger::new()).map_err(|e| e.at_element(idx))?;
        times.push(t.elapsed().as_secs_f64());
        std::hint::black_box(basis);
    }
    let mean = times.iter().sum::<f64>() / times.len().max(1) as f64;
    times.sort_by(f64::total_cmp);
    let median = times.get(times.len() / 2).copied().unwrap_or(0.0);
    Ok(TimingStats {
        method,
        d,
        elements: centers.len(),
        mean_seconds: mean,
        median_seconds: median,
    })
}

/// Lowest residual slope among the individual basis functions of one method
/// at every element of a mesh; `None` where no function has three
/// pre-plateau points.
pub fn element_residual_slopes(
    method: Method,
    d: usize,
    mesh: &TriMesh,
    setup: &StudySetup,
) -> Result<Vec<Option<SlopeFit>>> {
    mesh.centroids
        .iter()
        .enumerate()
        .map(|(idx, &x0)| {
            let basis = build_basis(method, d, x0, setup.provider, &setup.params, setup.opts, &mut FlopLedger::new())
                .map_err(|e| e.at_element(idx))?;
            let mut worst: Option<SlopeFit> = None;
            for f in &basis {
                let res = residual_decay(std::slice::from_ref(f), setup.provider, &setup.params, &setup.radii, setup.samples)?;
                let fit = fit_slope(&res);
                let (Some(s), true) = (fit.slope, fit.used >= 3) else { continue };
                if worst.as_ref().is_none_or(|w| s < w.slope.unwrap()) {
                    worst = Some(fit);
                }
            }
            Ok(worst)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{ProblemConfig, Scaling};

    fn case1() -> (ProblemConfig, AcousticParams) {
        let cfg = ProblemConfig::case1();
        let p = cfg.params().unwrap();
        (cfg, p)
    }

    #[test]
    fn exact_solution_solves_the_helmholtz_equation() {
        let (cfg, params) = case1();
        let ex = ExactSolution::case1(params);
        for i in 0..25 {
            let pt = [0.13 * i as f64 % 1.0, (0.37 * i as f64 + 0.05) % 1.0];
            let p = ex.pressure(pt);
            let lp = -ex.laplacian(pt) - p * cfg.provider.value(pt);
            assert!(lp.norm() <= 1e-10 * ex.laplacian(pt).norm().max(p.norm()));
        }
    }

    #[test]
    fn jet_examples() {
        let (_, params) = case1();
        let ex = ExactSolution::case1(params);
        let (p, _, _) = ex.taylor_jet([0.0; 2], 0);
        assert_eq!(p.coeff(0, 0), C64::new(1.0, 0.0));
        let (p, vx, vy) = ex.taylor_jet([0.0; 2], 1);
        assert!((p.coeff(1, 1) - C64::new(0.0, 5.0)).norm() < 1e-15);
        assert!((p.coeff(1, 0) - C64::new(1.0, 0.0)).norm() < 1e-15);
        let v = ex.velocity([0.0; 2]);
        assert!((vx.coeff(0, 0) - v[0]).norm() < 1e-14);
        assert!((vy.coeff(0, 0) - v[1]).norm() < 1e-14);
    }

    #[test]
    fn jet_matches_finite_differences() {
        let (_, params) = case1();
        let ex = ExactSolution::case1(params);
        let c = [0.3, 0.7];
        let (p, _, _) = ex.taylor_jet(c, 2);
        let h = 1e-3;
        let f = |dx: f64, dy: f64| ex.pressure([c[0] + dx, c[1] + dy]);
        let fxx = (f(h, 0.0) - 2.0 * f(0.0, 0.0) + f(-h, 0.0)) / (h * h);
        let fyy = (f(0.0, h) - 2.0 * f(0.0, 0.0) + f(0.0, -h)) / (h * h);
        let fxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        let fx = (f(h, 0.0) - f(-h, 0.0)) / (2.0 * h);
        let close = |a: C64, b: C64| (a - b).norm() <= 1e-5 * b.norm().max(1.0);
        assert!(close(p.coeff(1, 1), fx));
        assert!(close(p.coeff(2, 2), fxx / 2.0));
        assert!(close(p.coeff(2, 0), fyy / 2.0));
        assert!(close(p.coeff(2, 1), fxy));
    }

    #[test]
    fn separable_jet_oracle() {
        // exp(a X) about the origin: a^n / n! on the pure-X coefficients.
        let a = C64::new(0.3, 2.0);
        let g = GradedPoly2::from_fn([0.0; 2], 1, |k, l| if k == 1 && l == 1 { a } else { ZERO });
        let f = exp_series(&g, 12);
        let mut fact = 1.0;
        for n in 0..=12usize {
            if n > 0 {
                fact *= n as f64;
            }
            let want = a.powu(n as u32) / fact;
            assert!((f.coeff(n, n) - want).norm() < 1e-15 * want.norm().max(1.0));
            for l in 0..n {
                assert_eq!(f.coeff(n, l), ZERO);
            }
        }
    }

    #[test]
    fn exp_series_is_multiplicative() {
        let (_, params) = case1();
        let ex = ExactSolution::case1(params);
        let g = shifted_series(&ex.exponent, [0.2, -0.4], 6);
        let g1 = GradedPoly2::from_fn(g.center(), 6, |k, l| if l == k { g.coeff(k, l) } else { ZERO });
        let g2 = g.sub(&g1);
        let lhs = exp_series(&g, 6);
        let rhs = exp_series(&g1, 6).mul(&exp_series(&g2, 6)).truncate(6);
        assert!(lhs.sub(&rhs).max_abs_coeff() < 1e-12 * lhs.max_abs_coeff());
    }

    #[test]
    fn slope_fit_without_and_with_plateau() {
        let radii = default_radii(0.1);
        assert_eq!(radii.len(), 17);
        assert!((radii[16] - 0.1 / 512.0).abs() < 1e-18);
        let c = Curve {
            radii: radii.clone(),
            values: radii.iter().map(|r| 3.0 * r.powi(3)).collect(),
        };
        let fit = fit_slope(&c);
        assert!((fit.slope.unwrap() - 3.0).abs() < 1e-10);
        assert_eq!(fit.plateau, None);
        assert_eq!(fit.used, 17);
        let c = Curve {
            radii: radii.clone(),
            values: radii.iter().map(|r| (r.powi(5)).max(1e-16)).collect(),
        };
        let fit = fit_slope(&c);
        assert_eq!(fit.plateau, Some(1e-16));
        assert!((fit.slope.unwrap() - 5.0).abs() < 1e-10);
        assert!(c.values[..fit.used].iter().all(|&v| v >= 1e-14));
    }

    #[test]
    fn sloping_roundoff_floor_is_cut_at_the_knee() {
        // Slope 9 down to 1e-16, then a noise floor still falling at slope 3.
        let radii = default_radii(10.0);
        let values: Vec<f64> = radii
            .iter()
            .map(|r| {
                let clean = 1e-6 * (r / radii[0]).powi(9);
                clean.max(1e-16 * (r / 0.2).powi(3))
            })
            .collect();
        let fit = fit_slope(&Curve { radii, values });
        assert!((fit.slope.unwrap() - 9.0).abs() < 0.05, "{fit:?}");
        assert!(fit.plateau.is_some());
    }

    #[test]
    fn a_bend_far_above_roundoff_is_not_a_plateau() {
        // Slope 6 at large radii bending to slope 2: fitted across the bend.
        let radii = default_radii(10.0);
        let values: Vec<f64> = radii.iter().map(|r| r.powi(6) + 1e-2 * r.powi(2)).collect();
        let fit = fit_slope(&Curve { radii, values });
        assert_eq!(fit.used, 17);
        assert!(fit.slope.unwrap() < 4.0);
    }

    #[test]
    fn split_studies_merge_to_the_whole() {
        let (cfg, params) = case1();
        let centers: Vec<[f64; 2]> = (0..6).map(|i| [0.1 + 0.13 * i as f64, 0.8 - 0.1 * i as f64]).collect();
        let setup = StudySetup {
            provider: &cfg.provider,
            params,
            exact: Some(ExactSolution::case1(params)),
            radii: default_radii(0.05),
            samples: DEFAULT_SAMPLES,
            opts: BuildOptions::default(),
        };
        let whole = study(Method::Expl1, 4, &centers, &setup).unwrap();
        let mut parts = study(Method::Expl1, 4, &centers[..2], &setup).unwrap();
        parts.merge(&study(Method::Expl1, 4, &centers[2..], &setup).unwrap());
        assert_eq!(parts.elements, 6);
        assert_eq!(parts.max_identity_linf, whole.max_identity_linf);
        assert_eq!(parts.residual, whole.residual);
        assert_eq!(parts.pressure_slope, whole.pressure_slope);
        assert_eq!(parts.residual_slope, whole.residual_slope);
    }

    #[test]
    fn identity_check_detects_corruption() {
        let (cfg, params) = case1();
        let mut basis = build_basis(Method::Expl2, 3, [0.5, 0.5], &cfg.provider, &params, BuildOptions::default(), &mut FlopLedger::new()).unwrap();
        assert_eq!(check_identities(&basis, &params), 0.0);
        let mut comps = basis[1].vx.components().to_vec();
        comps[1][0] += C64::new(1e-3, 0.0);
        basis[1].vx = GradedPoly2::new(basis[1].center, comps).unwrap();
        assert!(check_identities(&basis, &params) >= 1e-4);
    }

    #[test]
    fn reproduction_of_a_basis_member() {
        let (cfg, params) = case1();
        let x0 = [0.4, 0.6];
        let basis = build_basis(Method::Alge1, 4, x0, &cfg.provider, &params, BuildOptions::default(), &mut FlopLedger::new()).unwrap();
        // A basis member as the "exact" solution: its Taylor data is itself.
        let f = &basis[3];
        let cols: Vec<_> = basis.iter().map(pack_qt).collect();
        let a = DMatrix::from_columns(&cols);
        let coef = linalg::lstsq(&a, &pack_qt(f), 1e-13).unwrap();
        let mut approx = basis[0].scale(coef[0]);
        for (g, c) in basis.iter().zip(coef.iter()).skip(1) {
            approx = approx.add(&g.scale(*c));
        }
        for &r in &default_radii(0.07) {
            for pt in circle_points(x0, r, 16) {
                let (a, b) = (approx.eval(pt), f.eval(pt));
                for i in 0..3 {
                    assert!((a[i] - b[i]).norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn plane_wave_residual_decays() {
        let params = AcousticParams::new(2.0, 1.0).unwrap();
        let k = [1.2, -0.9];
        let ksq = k[0] * k[0] + k[1] * k[1];
        let provider = CoeffProvider::constant(ksq, Scaling::OmegaSqOverCSq);
        let ex = ExactSolution::plane_wave(params, k);
        let lp = -ex.laplacian([0.3, 0.2]) - ex.pressure([0.3, 0.2]) * ksq;
        assert!(lp.norm() < 1e-13);
        for d in 2..=5 {
            let basis = build_basis(Method::Expl1, d, [0.0, 0.0], &provider, &params, BuildOptions::default(), &mut FlopLedger::new()).unwrap();
            let ba = best_approx_study(&basis, &ex, &default_radii(0.2), 16).unwrap();
            let s = fit_slope(&ba.pressure).slope.unwrap();
            assert!(s > d as f64 + 0.7, "d={d} slope {s}");
        }
    }

    #[test]
    fn csv_headers_and_rows() {
        let rec = StudyRecord {
            method: Some(Method::Expl2),
            d: 5,
            ..Default::default()
        };
        let s = identities_csv(std::slice::from_ref(&rec));
        assert_eq!(s, "method,d,max_linf\nexpl2,5,0.0\n");
        assert!(slopes_csv(&[rec.clone()]).starts_with("method,d,quantity"));
        assert!(gnuplot_script(&[rec], "decay.csv").contains("expl2_residual.png"));
    }
}
