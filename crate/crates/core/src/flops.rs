//! Flop accounting for the explicit constructions and the closed-form
//! operation counts they are checked against.
//!
//! Charging convention: one complex multiply is one `mul`, one complex add
//! or subtract is one `add`. Factors that depend only on loop indices (and on
//! the per-element constants ω, ρ) are precomputed and cost nothing. Inside a
//! truncated convolution only the additions of each innermost `j`-sum are
//! charged, which is what the pyramid count `Ṽ_M = V_M − (M+1)²` measures.

use serde::Serialize;

use crate::coeff::AcousticParams;
use crate::error::{Error, Result};
use crate::explicit::{self, ExplicitMethod, InitVector};
use crate::poly2d::GradedPoly2;

/// Sub-steps of the explicit algorithms that carry their own counters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Step {
    Convolution,
    SolveDivergence,
    SolveGradient,
    SolveLaplacian,
    CompGrad,
}

impl Step {
    pub const ALL: [Step; 5] = [
        Step::Convolution,
        Step::SolveDivergence,
        Step::SolveGradient,
        Step::SolveLaplacian,
        Step::CompGrad,
    ];

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OpCount {
    pub adds: u64,
    pub muls: u64,
}

impl OpCount {
    pub fn total(&self) -> u64 {
        self.adds + self.muls
    }
}

impl std::ops::Add for OpCount {
    type Output = OpCount;
    fn add(self, rhs: OpCount) -> OpCount {
        OpCount {
            adds: self.adds + rhs.adds,
            muls: self.muls + rhs.muls,
        }
    }
}

/// Counter of additions and multiplications, broken down by [`Step`].
///
/// Counts only ever grow; merging two ledgers adds them.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlopLedger {
    steps: [OpCount; 5],
}

impl FlopLedger {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn charge(&mut self, step: Step, adds: u64, muls: u64) {
        let c = &mut self.steps[step.slot()];
        c.adds += adds;
        c.muls += muls;
    }

    pub fn adds(&self) -> u64 {
        self.steps.iter().map(|c| c.adds).sum()
    }

    pub fn muls(&self) -> u64 {
        self.steps.iter().map(|c| c.muls).sum()
    }

    pub fn total(&self) -> u64 {
        self.adds() + self.muls()
    }

    pub fn step(&self, step: Step) -> OpCount {
        self.steps[step.slot()]
    }

    pub fn merge(&mut self, other: &FlopLedger) {
        for (a, b) in self.steps.iter_mut().zip(other.steps.iter()) {
            *a = *a + *b;
        }
    }
}

/// Number of terms of the degree-`m` truncated convolution, `(M+1)(M+2)(M+3)/6`.
pub fn pyramid_terms(m: u64) -> u64 {
    (m + 1) * (m + 2) * (m + 3) / 6
}

/// Additions inside the `j`-sums of the degree-`m` convolution, `(M−1)M(M+1)/6`.
pub fn pyramid_adds(m: u64) -> u64 {
    if m == 0 {
        0
    } else {
        (m - 1) * m * (m + 1) / 6
    }
}

/// One row of the complexity table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComplexityReport {
    pub d: u64,
    /// Multiplications of all convolutions, `T_d`.
    pub t: u64,
    /// Additions of all convolutions, `T̃_d`.
    pub t_tilde: u64,
    pub expl1_total: u64,
    pub expl2_total: u64,
    pub expl1_basis: u64,
    pub expl2_basis: u64,
    /// Model cost of the SVD of `Q^F_d`.
    pub alge1_svd_cost: u64,
    /// Model cost of the SVD of `Q^S_d`.
    pub alge2_svd_cost: u64,
    /// Cost of applying `G_d` to the `2d+1` kernel vectors.
    pub alge2_multiply_cost: u64,
}

impl ComplexityReport {
    pub fn alge1_model(&self) -> u64 {
        self.alge1_svd_cost
    }

    pub fn alge2_model(&self) -> u64 {
        self.alge2_svd_cost + self.alge2_multiply_cost
    }

    pub const CSV_HEADER: &'static str =
        "d,T,Ttilde,expl1,expl2,expl1_basis,expl2_basis,alge1_model,alge2_model";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.d,
            self.t,
            self.t_tilde,
            self.expl1_total,
            self.expl2_total,
            self.expl1_basis,
            self.expl2_basis,
            self.alge1_model(),
            self.alge2_model()
        )
    }
}

fn exact_div(num: u64, den: u64) -> u64 {
    debug_assert_eq!(num % den, 0, "{num} not divisible by {den}");
    num / den
}

/// Closed-form operation counts for degree `d`.
pub fn closed_forms(d: usize) -> Result<ComplexityReport> {
    if d < 2 {
        return Err(Error::InvalidDegree {
            degree: d as i64,
            reason: "operation counts are defined for d >= 2",
        });
    }
    let d = d as u64;
    let t = exact_div((d - 1) * d * (d + 1) * (d + 2), 24);
    let t_tilde = if d < 3 {
        0
    } else {
        exact_div((d - 3) * (d - 2) * (d - 1) * d, 24)
    };
    // d⁴ − 2d³ + 35d² − 22d + 12 stays positive for every d ≥ 1.
    let expl1_num = d.pow(4) + 35 * d * d + 12 - 2 * d.pow(3) - 22 * d;
    let expl2_num = d.pow(4) + 35 * d * d - 2 * d.pow(3) - 10 * d;
    let expl1_total = exact_div(expl1_num, 12);
    let expl2_total = exact_div(expl2_num, 12);
    let n_basis = 2 * d + 1;
    let alge1_svd_cost = exact_div(
        d * d * (27 * d.pow(4) + 45 * d.pow(3) + 30 * d * d + 9 * d + 1),
        2,
    );
    let alge2_svd_cost = exact_div(d * d * (d.pow(4) + 1 - d.pow(3) - d), 2);
    let alge2_multiply_cost = ((d + 1) * (d + 2) - 1) * d * (d + 1) * n_basis;
    Ok(ComplexityReport {
        d,
        t,
        t_tilde,
        expl1_total,
        expl2_total,
        expl1_basis: exact_div(n_basis * expl1_num, 12),
        expl2_basis: exact_div(n_basis * expl2_num, 12),
        alge1_svd_cost,
        alge2_svd_cost,
        alge2_multiply_cost,
    })
}

/// Expected per-step counts of one individual construction.
pub fn expected_steps(method: ExplicitMethod, d: usize) -> Vec<(Step, OpCount)> {
    let d = d as u64;
    let conv = OpCount {
        muls: (0..=d - 2).map(pyramid_terms).sum(),
        adds: (0..=d - 2).map(pyramid_adds).sum(),
    };
    match method {
        ExplicitMethod::Coupled => vec![
            (Step::Convolution, conv),
            (
                Step::SolveDivergence,
                OpCount {
                    adds: (d - 1) * d / 2,
                    muls: (d - 1) * (3 * d - 2) / 2,
                },
            ),
            (
                Step::SolveGradient,
                OpCount {
                    adds: 0,
                    muls: (d + 1) * (d + 2) / 2 - 1,
                },
            ),
            (Step::SolveLaplacian, OpCount::default()),
            (Step::CompGrad, OpCount::default()),
        ],
        ExplicitMethod::Decoupled => vec![
            (Step::Convolution, conv),
            (Step::SolveDivergence, OpCount::default()),
            (Step::SolveGradient, OpCount::default()),
            (
                Step::SolveLaplacian,
                OpCount {
                    adds: d * (d - 1) / 2,
                    muls: d * (d - 1),
                },
            ),
            (
                Step::CompGrad,
                OpCount {
                    adds: 0,
                    muls: d * (d + 1),
                },
            ),
        ],
    }
}

/// Runs one individual construction with a fresh ledger and checks every
/// sub-step, then the total, against the closed forms.
pub fn measure(
    method: ExplicitMethod,
    d: usize,
    kappa: &GradedPoly2,
    params: &AcousticParams,
) -> Result<FlopLedger> {
    let init = InitVector::unit(d, 0)?;
    let mut ledger = FlopLedger::new();
    explicit::construct_indiv(method, d, &init, kappa, params, &mut ledger)?;

    for (step, want) in expected_steps(method, d) {
        let got = ledger.step(step);
        if got.adds != want.adds || got.muls != want.muls {
            return Err(Error::FlopMismatch {
                step,
                expected: want.total(),
                measured: got.total(),
            });
        }
    }
    let report = closed_forms(d)?;
    let want = match method {
        ExplicitMethod::Coupled => report.expl1_total,
        ExplicitMethod::Decoupled => report.expl2_total,
    };
    if ledger.total() != want {
        return Err(Error::FlopMismatch {
            step: Step::Convolution,
            expected: want,
            measured: ledger.total(),
        });
    }
    Ok(ledger)
}
