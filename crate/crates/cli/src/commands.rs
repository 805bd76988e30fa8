//! Subcommand implementations. Each returns the lines of threshold
//! failures; an empty list means success.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qtrefftz::algebraic::{self, assemble_g, assemble_qf, assemble_qs, OpMatrix};
use qtrefftz::explicit::ExplicitMethod;
use qtrefftz::flops::{self, closed_forms, ComplexityReport};
use qtrefftz::method::{build_basis, BuildOptions};
use qtrefftz::verify::{self, ExactSolution, StudyRecord, StudySetup, Thresholds};
use qtrefftz::{FlopLedger, Method, ProblemConfig, QTFunction, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Format, RunConfig};

pub type Failures = Vec<String>;

/// Errors that end a run before any check could be judged.
#[derive(Debug)]
pub enum RunError {
    /// A check failed while building (rank deficiency, flop mismatch, ...).
    Check(String),
    Other(String),
}

impl From<qtrefftz::Error> for RunError {
    fn from(e: qtrefftz::Error) -> Self {
        use qtrefftz::Error as E;
        let inner = match &e {
            E::Element { source, .. } => source.as_ref(),
            other => other,
        };
        match inner {
            E::RankDeficiency { .. } | E::Conditioning { .. } | E::FlopMismatch { .. } => RunError::Check(e.to_string()),
            _ => RunError::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Other(e.to_string())
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Other(e.to_string())
    }
}

type Outcome = Result<Failures, RunError>;

const DEFAULT_OUT: &str = "qtbasis-out";

fn out_dir(rc: &RunConfig) -> Result<PathBuf, RunError> {
    let dir = rc.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&dir).map_err(|e| RunError::Other(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|e| RunError::Other(format!("{}: {e}", path.display())))
}

/// Prints a table, or writes it when `--out` names a file.
fn emit(rc: &RunConfig, text: &str) -> Result<(), RunError> {
    match &rc.out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `f(i)` for `i in 0..n` on `jobs` threads, in index order.
fn par_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let f = &f;
                s.spawn(move || (j * chunk..((j + 1) * chunk).min(n)).map(f).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn opts(rc: &RunConfig) -> BuildOptions {
    BuildOptions { rank_tol: rc.rank_tol }
}

#[derive(Serialize)]
struct ElementBasis<'a> {
    index: usize,
    center: [f64; 2],
    functions: &'a [QTFunction],
}

#[derive(Serialize)]
struct BasisFile<'a> {
    method: Method,
    d: usize,
    problem: &'a ProblemConfig,
    elements: Vec<ElementBasis<'a>>,
}

#[derive(Serialize)]
struct BuildSummary {
    method: Method,
    d: usize,
    elements: usize,
    functions_per_element: usize,
    wall_seconds: f64,
    /// Operations charged by the explicit constructions; 0 for the algebraic ones.
    flops: u64,
    file: String,
}

pub fn build(rc: &RunConfig) -> Outcome {
    let mesh = rc.mesh.build().map_err(RunError::Other)?;
    let params = rc.problem.params()?;
    let dir = out_dir(rc)?;
    let mut summary = Vec::new();
    for &method in &rc.methods {
        for d in rc.degrees.clone() {
            let t = Instant::now();
            let built = par_map(mesh.len(), rc.jobs, |i| {
                let mut ledger = FlopLedger::new();
                build_basis(method, d, mesh.centroids[i], &rc.problem.provider, &params, opts(rc), &mut ledger)
                    .map(|b| (b, ledger.total()))
                    .map_err(|e| e.at_element(i))
            });
            let wall_seconds = t.elapsed().as_secs_f64();
            let built = built.into_iter().collect::<Result<Vec<_>, _>>()?;
            let name = format!("basis_{method}_d{d}.json");
            let file = BasisFile {
                method,
                d,
                problem: &rc.problem,
                elements: built
                    .iter()
                    .enumerate()
                    .map(|(index, (f, _))| ElementBasis {
                        index,
                        center: mesh.centroids[index],
                        functions: f,
                    })
                    .collect(),
            };
            write(&dir.join(&name), &serde_json::to_string(&file)?)?;
            let row = BuildSummary {
                method,
                d,
                elements: mesh.len(),
                functions_per_element: built.first().map_or(0, |(f, _)| f.len()),
                wall_seconds,
                flops: built.iter().map(|(_, n)| n).sum(),
                file: name,
            };
            println!(
                "{method} d={d}: {} elements x {} functions, {:.3e} s, {} flops -> {}",
                row.elements,
                row.functions_per_element,
                row.wall_seconds,
                row.flops,
                dir.join(&row.file).display()
            );
            summary.push(row);
        }
    }
    write(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(Vec::new())
}

/// Largest relative gap between the assembled `Q^F_d` and direct operator
/// evaluation over random coefficient vectors.
fn oracle_gap(rc: &RunConfig, d: usize, x0: [f64; 2], vectors: usize) -> Result<f64, RunError> {
    let params = rc.problem.params()?;
    let kappa = rc.problem.provider.kappa(x0, d, &params);
    let q = assemble_qf(d, &kappa, &params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rc.seed ^ d as u64);
    let mut worst: f64 = 0.0;
    for _ in 0..vectors {
        let x = nalgebra::DVector::from_fn(q.cols, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let f = algebraic::unpack_qt(d, &x, x0)?;
        let direct = algebraic::qf_direct(&f, &kappa, &params)?;
        let gap = (q.apply(&x) - &direct).norm() / direct.norm().max(f64::MIN_POSITIVE);
        worst = worst.max(gap);
    }
    Ok(worst)
}

pub const ORACLE_VECTORS: usize = 20;
pub const ORACLE_TOL: f64 = 1e-13;

pub fn verify(rc: &RunConfig) -> Outcome {
    let mesh = rc.mesh.build().map_err(RunError::Other)?;
    let params = rc.problem.params()?;
    let dir = out_dir(rc)?;
    // The closed-form solution and the generic-coefficient bands belong to
    // the case 1 problem only.
    let case1 = rc.problem == ProblemConfig::case1();
    let exact = case1.then(|| ExactSolution::case1(params));
    let setup = StudySetup {
        provider: &rc.problem.provider,
        params,
        exact,
        radii: verify::default_radii(mesh.hmax),
        samples: verify::DEFAULT_SAMPLES,
        opts: opts(rc),
    };
    let th = Thresholds {
        upper_bounds: case1,
        ..Thresholds::default()
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let chunk = mesh.len().div_ceil(rc.jobs).max(1);
    for &method in &rc.methods {
        for d in rc.degrees.clone() {
            let parts = par_map(mesh.centroids.chunks(chunk).len(), rc.jobs, |j| {
                let start = j * chunk;
                let centers = &mesh.centroids[start..(start + chunk).min(mesh.len())];
                verify::study(method, d, centers, &setup).map_err(|e| match e {
                    qtrefftz::Error::Element { index, source } => qtrefftz::Error::Element {
                        index: index + start,
                        source,
                    },
                    other => other,
                })
            });
            let mut rec: Option<StudyRecord> = None;
            for part in parts {
                let part = part?;
                match &mut rec {
                    Some(r) => r.merge(&part),
                    None => rec = Some(part),
                }
            }
            let rec = rec.unwrap_or_default();
            failures.extend(verify::violations(&rec, &th));
            eprintln!(
                "{method} d={d}: identity {:.1e}, residual slope [{}, {}]",
                rec.max_identity_linf,
                rec.residual_slope.min.map_or("-".into(), |s| format!("{s:.2}")),
                rec.residual_slope.max.map_or("-".into(), |s| format!("{s:.2}")),
            );
            records.push(rec);
        }
    }
    let x0 = mesh.centroids[0];
    for d in rc.degrees.clone() {
        let gap = oracle_gap(rc, d, x0, ORACLE_VECTORS)?;
        if gap > ORACLE_TOL {
            failures.push(format!("d={d}: assembled Q^F differs from the direct operator by {gap:e}"));
        }
    }
    write(&dir.join("identities.csv"), &verify::identities_csv(&records))?;
    write(&dir.join("decay.csv"), &verify::decay_csv(&records))?;
    write(&dir.join("slopes.csv"), &verify::slopes_csv(&records))?;
    write(&dir.join("plot.gp"), &verify::gnuplot_script(&records, "decay.csv"))?;
    if rc.format == Format::Json {
        write(&dir.join("study.json"), &serde_json::to_string_pretty(&records)?)?;
    }
    print!("{}", verify::identities_csv(&records));
    Ok(failures)
}

#[derive(Serialize)]
struct FlopRow {
    #[serde(flatten)]
    report: ComplexityReport,
    alge1_model: u64,
    alge2_model: u64,
    expl1_measured: u64,
    expl2_measured: u64,
}

pub fn flops(rc: &RunConfig) -> Outcome {
    let params = rc.problem.params()?;
    let mesh = rc.mesh.build().map_err(RunError::Other)?;
    let x0 = mesh.centroids[0];
    let mut rows = Vec::new();
    for d in rc.degrees.clone() {
        let kappa = rc.problem.provider.kappa(x0, d, &params);
        let report = closed_forms(d)?;
        let expl1 = flops::measure(ExplicitMethod::Coupled, d, &kappa, &params)?;
        let expl2 = flops::measure(ExplicitMethod::Decoupled, d, &kappa, &params)?;
        rows.push(FlopRow {
            alge1_model: report.alge1_model(),
            alge2_model: report.alge2_model(),
            report,
            expl1_measured: expl1.total(),
            expl2_measured: expl2.total(),
        });
    }
    let text = match rc.format {
        Format::Csv => {
            let mut s = format!("{},expl1_measured,expl2_measured\n", ComplexityReport::CSV_HEADER);
            for r in &rows {
                s.push_str(&format!("{},{},{}\n", r.report.csv_row(), r.expl1_measured, r.expl2_measured));
            }
            s
        }
        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
    };
    emit(rc, &text)?;
    Ok(Vec::new())
}

pub fn time(rc: &RunConfig) -> Outcome {
    let params = rc.problem.params()?;
    let mesh = rc.mesh.build().map_err(RunError::Other)?;
    eprintln!("note: timings are order-of-magnitude estimates, not benchmarks");
    if rc.jobs > 1 {
        eprintln!("note: timing runs on one thread; --jobs is ignored");
    }
    let mut stats = Vec::new();
    for d in rc.degrees.clone() {
        for &method in &rc.methods {
            stats.push(verify::time_builds(method, d, &mesh.centroids, &rc.problem.provider, &params, opts(rc))?);
        }
    }
    let text = match rc.format {
        Format::Csv => {
            let mut s = String::from("method,d,elements,mean_seconds,median_seconds\n");
            for t in &stats {
                s.push_str(&format!(
                    "{},{},{},{:.4e},{:.4e}\n",
                    t.method, t.d, t.elements, t.mean_seconds, t.median_seconds
                ));
            }
            s
        }
        Format::Json => serde_json::to_string_pretty(&stats)? + "\n",
    };
    emit(rc, &text)?;
    Ok(Vec::new())
}

#[derive(Serialize)]
struct KernelRow {
    d: usize,
    expected: usize,
    qf_min: usize,
    qf_max: usize,
    qs_min: usize,
    qs_max: usize,
    elements: usize,
}

pub fn kernel_dims(rc: &RunConfig) -> Outcome {
    let params = rc.problem.params()?;
    let mesh = rc.mesh.build().map_err(RunError::Other)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for d in rc.degrees.clone() {
        let dims = par_map(mesh.len(), rc.jobs, |i| {
            let x0 = mesh.centroids[i];
            let kappa = rc.problem.provider.kappa(x0, d, &params);
            algebraic::kernel_dims(d, &kappa, &params)
        });
        let dims = dims.into_iter().collect::<Result<Vec<_>, _>>()?;
        let expected = 2 * d + 1;
        for (i, &(f, s)) in dims.iter().enumerate() {
            if f != expected || s != expected {
                failures.push(format!("d={d} element {i}: kernel dimensions {f} (Q^F), {s} (Q^S), expected {expected}"));
            }
        }
        let qf = dims.iter().map(|p| p.0);
        let qs = dims.iter().map(|p| p.1);
        rows.push(KernelRow {
            d,
            expected,
            qf_min: qf.clone().min().unwrap_or(0),
            qf_max: qf.max().unwrap_or(0),
            qs_min: qs.clone().min().unwrap_or(0),
            qs_max: qs.max().unwrap_or(0),
            elements: dims.len(),
        });
    }
    let text = match rc.format {
        Format::Csv => {
            let mut s = String::from("d,expected,qf_min,qf_max,qs_min,qs_max,elements\n");
            for r in &rows {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.d, r.expected, r.qf_min, r.qf_max, r.qs_min, r.qs_max, r.elements
                ));
            }
            s
        }
        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
    };
    emit(rc, &text)?;
    Ok(failures)
}

pub fn sparsity(rc: &RunConfig, element: usize) -> Outcome {
    let params = rc.problem.params()?;
    let mesh = rc.mesh.build().map_err(RunError::Other)?;
    let x0 = *mesh
        .centroids
        .get(element)
        .ok_or_else(|| RunError::Other(format!("element {element} out of range (mesh has {})", mesh.len())))?;
    let dir = out_dir(rc)?;
    for d in rc.degrees.clone() {
        let kappa = rc.problem.provider.kappa(x0, d, &params);
        let ops: [(&str, OpMatrix); 3] = [
            ("qf", assemble_qf(d, &kappa, &params)?),
            ("qs", assemble_qs(d, &kappa, &params)?),
            ("g", assemble_g(d, &params)?),
        ];
        for (name, op) in ops {
            let stem = format!("{name}_d{d}");
            write(&dir.join(format!("{stem}.pbm")), &op.sparsity_pbm())?;
            write(&dir.join(format!("{stem}.txt")), &op.triplet_text())?;
            println!("{stem}: {}x{}, {} nonzeros", op.rows, op.cols, op.nnz());
        }
    }
    Ok(Vec::new())
}
