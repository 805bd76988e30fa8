//! Run configuration: preset defaults, then a JSON file, then flags.

use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use qtrefftz::mesh::TriMesh;
use qtrefftz::{Method, ProblemConfig};
use serde::Deserialize;

/// Degrees the tool accepts.
pub const DEGREE_LIMITS: RangeInclusive<usize> = 2..=12;

/// Bounds of the rectangular stand-in domain used with the case 2 jet.
pub const CASE2_BOUNDS: [[f64; 2]; 2] = [[0.0, 300.0], [-100.0, 0.0]];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeshSpec {
    /// `n × n` squares on the unit square, two triangles each.
    Square { n: usize },
    Rect {
        bounds: [[f64; 2]; 2],
        nx: usize,
        ny: usize,
    },
    File { path: PathBuf },
}

impl MeshSpec {
    pub fn build(&self) -> Result<TriMesh, String> {
        let mesh = match self {
            MeshSpec::Square { n } => TriMesh::structured_square(*n),
            MeshSpec::Rect { bounds, nx, ny } => TriMesh::structured_rect(*bounds, *nx, *ny),
            MeshSpec::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                TriMesh::from_json(&text)
            }
        };
        mesh.map_err(|e| e.to_string())
    }
}

/// Every setting a config file may carry; absent fields fall through to
/// the preset.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub case: Option<String>,
    pub problem: Option<ProblemConfig>,
    pub methods: Option<Vec<Method>>,
    pub d_min: Option<usize>,
    pub d_max: Option<usize>,
    pub mesh: Option<MeshSpec>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub rank_tol: Option<f64>,
    pub jobs: Option<usize>,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Problem preset: case1 (polynomial coefficient) or case2 (gaussian jet).
    #[arg(long)]
    pub case: Option<String>,
    /// Problem JSON ({"kind": ..., "omega": ..., "rho": ...}); replaces the preset's coefficient.
    #[arg(long, value_name = "FILE")]
    pub problem: Option<PathBuf>,
    /// Comma-separated subset of expl1, expl2, alge1, alge2.
    #[arg(long = "method", value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Single degree; sets both ends of the range.
    #[arg(long, conflicts_with_all = ["dmin", "dmax"])]
    pub d: Option<usize>,
    #[arg(long)]
    pub dmin: Option<usize>,
    #[arg(long)]
    pub dmax: Option<usize>,
    /// Structured mesh with n cells per side (case 2: over the stand-in rectangle).
    #[arg(long, value_name = "N", conflicts_with = "mesh_file")]
    pub mesh: Option<usize>,
    /// Mesh JSON ({"vertices": ..., "triangles": ...}).
    #[arg(long, value_name = "FILE")]
    pub mesh_file: Option<PathBuf>,
    /// Output directory (or file, for the table commands).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Seed of the randomized checks.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative rank cut of the SVD kernels.
    #[arg(long)]
    pub rank_tol: Option<f64>,
    /// Worker threads for element loops.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Fully resolved settings of one run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub methods: Vec<Method>,
    pub degrees: RangeInclusive<usize>,
    pub mesh: MeshSpec,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
    pub rank_tol: Option<f64>,
    pub jobs: usize,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn canonical_case(name: &str) -> Result<String, String> {
    match name {
        "1" | "case1" => Ok("case1".into()),
        "2" | "case2" => Ok("case2".into()),
        _ => Err(format!("unknown case '{name}' (expected case1 or case2)")),
    }
}

fn default_mesh(case: Option<&str>, n: Option<usize>) -> MeshSpec {
    match case {
        Some("case2") => {
            let n = n.unwrap_or(10);
            MeshSpec::Rect {
                bounds: CASE2_BOUNDS,
                nx: n,
                ny: n,
            }
        }
        _ => MeshSpec::Square { n: n.unwrap_or(20) },
    }
}

impl RunConfig {
    /// Resolves flags over the config file over the preset; `default_degrees`
    /// is the command's own default range.
    pub fn resolve(args: &CommonArgs, default_degrees: RangeInclusive<usize>) -> Result<Self, String> {
        let file: ConfigFile = match &args.config {
            Some(p) => read_json(p)?,
            None => ConfigFile::default(),
        };
        let case = match args.case.as_deref().or(file.case.as_deref()) {
            Some(c) => Some(canonical_case(c)?),
            None => None,
        };
        let problem = match (&args.problem, file.problem) {
            (Some(p), _) => read_json::<ProblemConfig>(p)?,
            (None, Some(p)) => p,
            (None, None) => ProblemConfig::preset(case.as_deref().unwrap_or("case1")).map_err(|e| e.to_string())?,
        };
        problem.validate().map_err(|e| e.to_string())?;

        let methods = if !args.methods.is_empty() {
            args.methods.clone()
        } else {
            file.methods.unwrap_or_else(|| Method::ALL.to_vec())
        };
        let mut methods_sorted = methods;
        methods_sorted.sort();
        methods_sorted.dedup();

        let d_min = args.d.or(args.dmin).or(file.d_min).unwrap_or(*default_degrees.start());
        let d_max = args.d.or(args.dmax).or(file.d_max).unwrap_or(*default_degrees.end());
        // A lone lower bound above the default range still makes a valid range.
        let d_max = if args.d.is_none() && args.dmax.is_none() && file.d_max.is_none() {
            d_max.max(d_min)
        } else {
            d_max
        };
        if !DEGREE_LIMITS.contains(&d_min) || !DEGREE_LIMITS.contains(&d_max) || d_min > d_max {
            return Err(format!(
                "degree range {d_min}..={d_max} must lie within {}..={}",
                DEGREE_LIMITS.start(),
                DEGREE_LIMITS.end()
            ));
        }

        let mesh = if let Some(path) = &args.mesh_file {
            MeshSpec::File { path: path.clone() }
        } else if args.mesh.is_some() {
            default_mesh(case.as_deref(), args.mesh)
        } else {
            file.mesh.unwrap_or_else(|| default_mesh(case.as_deref(), None))
        };

        let rank_tol = args.rank_tol.or(file.rank_tol);
        if rank_tol.is_some_and(|t| !(t > 0.0 && t < 1.0)) {
            return Err("rank tolerance must lie in (0, 1)".into());
        }
        let jobs = args.jobs.or(file.jobs).unwrap_or(1);
        if jobs == 0 {
            return Err("--jobs must be at least 1".into());
        }
        Ok(RunConfig {
            problem,
            methods: methods_sorted,
            degrees: d_min..=d_max,
            mesh,
            out: args.out.clone().or(file.out),
            format: args.format.or(file.format).unwrap_or_default(),
            seed: args.seed.or(file.seed).unwrap_or(0),
            rank_tol,
            jobs,
        })
    }
}
