//! Experiment configuration and subcommand dispatch for the `jablab` binary.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{
    consistency_report, example53_crossover, example53_table, table_crossover, write_bounds_csv, Bound,
    BoundsError, TableRow,
};
use crate::driving::{
    build_driving, choose_block_n, expansion_integral, sample_window, Driving, DrivingError, DrivingSpec, LawSpec,
    SymbolSpec,
};
use crate::ergodic::{
    basin_estimate, count_acips, equivariance_residual, equivariant_density, lyapunov_max, CountParams, TestDensity,
};
use crate::geometry::{AffineBranch, GeometryError, JablonskiMap, RectPartition};
use crate::regularity::verify_ly_with;
use crate::transfer::Cocycle;
use crate::variation::Grid;

pub const SPEC_VERSION: u32 = 1;

/// Successful run.
pub const EXIT_OK: u8 = 0;
/// Invalid input or a failed check.
pub const EXIT_INVALID: u8 = 1;
/// Every bound was inapplicable.
pub const EXIT_INAPPLICABLE: u8 = 2;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    ParseError { path: String, message: String },
    #[error("missing field {0}")]
    MissingField(String),
    #[error("{path}: branch is not strictly monotone")]
    NonMonotoneBranch { path: String },
    #[error("{path}: {reason}")]
    PartitionMismatch { path: String, reason: String },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ConfigError {
    /// Field path of the offending entry.
    pub fn path(&self) -> &str {
        match self {
            ConfigError::ParseError { path, .. }
            | ConfigError::NonMonotoneBranch { path }
            | ConfigError::PartitionMismatch { path, .. }
            | ConfigError::Invalid { path, .. }
            | ConfigError::Io { path, .. } => path,
            ConfigError::MissingField(path) => path,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub name: String,
    /// Shorthand for `x_i ↦ k_i x_i mod 1`.
    #[serde(default)]
    pub multiply: Option<Vec<u32>>,
    #[serde(default)]
    pub partition: Option<Vec<Vec<f64>>>,
    /// `branches[cell][axis]`, cells in lexicographic order.
    #[serde(default)]
    pub branches: Option<Vec<Vec<AffineBranch>>>,
    /// `axis_branches[axis][s]`, the branch on the `s`-th interval of the axis.
    #[serde(default)]
    pub axis_branches: Option<Vec<Vec<AffineBranch>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum LawConfig {
    Iid(Vec<f64>),
    Markov(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

/// Numerical settings; every field has a default and may be overridden on
/// the command line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub ly_block: Option<usize>,
    pub ly_densities: usize,
    pub ly_windows: usize,
    pub density_tol: f64,
    pub density_s_max: usize,
    pub lyapunov_k: usize,
    pub lyapunov_trials: usize,
    pub count_seeds: usize,
    pub count_windows: usize,
    pub count_k_settle: usize,
    pub cluster_tol: f64,
    pub basin_points: usize,
    pub basin_steps: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        let c = CountParams::default();
        RunSettings {
            ly_block: None,
            ly_densities: 100,
            ly_windows: 20,
            density_tol: 1e-6,
            density_s_max: 4096,
            lyapunov_k: 200,
            lyapunov_trials: 8,
            count_seeds: c.n_seeds,
            count_windows: c.n_windows,
            count_k_settle: c.k_settle,
            cluster_tol: c.cluster_tol,
            basin_points: 1000,
            basin_steps: 1000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    spec_version: u32,
    dimension: usize,
    maps: Vec<MapConfig>,
    law: LawConfig,
    #[serde(default)]
    common_partition: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    grid: Option<GridConfig>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    run: RunSettings,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub dimension: usize,
    pub driving: Driving,
    pub grid_cells: Vec<usize>,
    pub seed: u64,
    pub run: RunSettings,
    pub output_dir: PathBuf,
}

impl ExperimentSpec {
    /// Grid with the requested cells per axis, refined to contain every
    /// breakpoint of the common partition.
    pub fn grid(&self) -> Arc<Grid> {
        Arc::new(Grid::refining(self.driving.common_partition(), &self.grid_cells).expect("validated grid"))
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

fn join_path(parent: &str, field: &str) -> String {
    if parent.is_empty() || parent == "." {
        field.to_string()
    } else {
        format!("{parent}.{field}")
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        match message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            Some(field) => ConfigError::MissingField(join_path(&path, field)),
            None => ConfigError::ParseError { path, message },
        }
    })?;
    validate(raw)
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        reason: reason.into(),
    }
}

fn partition_error(path: &str, e: GeometryError) -> ConfigError {
    match e {
        GeometryError::DimensionMismatch { .. } | GeometryError::BranchCountMismatch { .. } => {
            ConfigError::PartitionMismatch {
                path: path.to_string(),
                reason: e.to_string(),
            }
        }
        e => invalid(path, e.to_string()),
    }
}

fn build_map(idx: usize, m: &MapConfig, dim: usize) -> Result<JablonskiMap, ConfigError> {
    let base = format!("maps[{idx}]");
    let forms = [m.multiply.is_some(), m.branches.is_some(), m.axis_branches.is_some()];
    if forms.iter().filter(|&&f| f).count() != 1 {
        return Err(invalid(
            &base,
            "exactly one of `multiply`, `branches`, `axis_branches` is required",
        ));
    }
    if let Some(k) = &m.multiply {
        if k.len() != dim {
            return Err(ConfigError::PartitionMismatch {
                path: format!("{base}.multiply"),
                reason: format!("{} factors for dimension {dim}", k.len()),
            });
        }
        return JablonskiMap::multiply_mod(k).map_err(|e| invalid(format!("{base}.multiply"), e.to_string()));
    }
    let ppath = format!("{base}.partition");
    let axes = m.partition.clone().ok_or_else(|| ConfigError::MissingField(ppath.clone()))?;
    if axes.len() != dim {
        return Err(ConfigError::PartitionMismatch {
            path: ppath,
            reason: format!("{} axes for dimension {dim}", axes.len()),
        });
    }
    let part = RectPartition::new(axes).map_err(|e| partition_error(&ppath, e))?;
    let result = match (&m.branches, &m.axis_branches) {
        (Some(b), _) => JablonskiMap::new(part.clone(), b.clone()),
        (_, Some(b)) => JablonskiMap::product(part.clone(), b.clone()),
        _ => unreachable!(),
    };
    result.map_err(|e| match e {
        GeometryError::NonMonotoneBranch { cell, axis } | GeometryError::BranchOutOfRange { cell, axis } => {
            let path = if m.branches.is_some() {
                format!("{base}.branches[{cell}][{axis}]")
            } else {
                format!("{base}.axis_branches[{axis}][{}]", part.multi_index(cell)[axis])
            };
            if matches!(e, GeometryError::NonMonotoneBranch { .. }) {
                ConfigError::NonMonotoneBranch { path }
            } else {
                invalid(path, e.to_string())
            }
        }
        GeometryError::BranchCountMismatch { .. } => ConfigError::PartitionMismatch {
            path: format!(
                "{base}.{}",
                if m.branches.is_some() { "branches" } else { "axis_branches" }
            ),
            reason: e.to_string(),
        },
        e => invalid(&base, e.to_string()),
    })
}

fn validate(raw: RawSpec) -> Result<ExperimentSpec, ConfigError> {
    if raw.spec_version != SPEC_VERSION {
        return Err(invalid(
            "spec_version",
            format!("unsupported version {}, expected {SPEC_VERSION}", raw.spec_version),
        ));
    }
    let dim = raw.dimension;
    if dim == 0 {
        return Err(invalid("dimension", "must be at least 1"));
    }
    if raw.maps.is_empty() {
        return Err(invalid("maps", "at least one map is required"));
    }
    let symbols = raw
        .maps
        .iter()
        .enumerate()
        .map(|(i, m)| {
            Ok(SymbolSpec {
                name: m.name.clone(),
                map: build_map(i, m, dim)?,
            })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    let common_partition = match raw.common_partition {
        None => None,
        Some(axes) if axes.len() != dim => {
            return Err(ConfigError::PartitionMismatch {
                path: "common_partition".into(),
                reason: format!("{} axes for dimension {dim}", axes.len()),
            })
        }
        Some(axes) => Some(RectPartition::new(axes).map_err(|e| partition_error("common_partition", e))?),
    };
    let law = match raw.law {
        LawConfig::Iid(p) => LawSpec::Iid(p),
        LawConfig::Markov(t) => LawSpec::Markov(t),
    };
    let driving = build_driving(DrivingSpec {
        symbols,
        law,
        common_partition,
    })
    .map_err(|e| match e {
        DrivingError::PartitionMismatch { symbol } => ConfigError::PartitionMismatch {
            path: format!("maps[{symbol}]"),
            reason: "map does not fit the common partition".into(),
        },
        e @ (DrivingError::ProbabilitiesInvalid(_) | DrivingError::NotErgodic) => invalid("law", e.to_string()),
        e => invalid("maps", e.to_string()),
    })?;
    let grid_cells = match raw.grid {
        None => vec![64; dim],
        Some(GridConfig::Uniform(k)) => vec![k; dim],
        Some(GridConfig::PerAxis(v)) => v,
    };
    check_grid(&grid_cells, dim).map_err(|r| invalid("grid", r))?;
    Ok(ExperimentSpec {
        dimension: dim,
        driving,
        grid_cells,
        seed: raw.seed,
        run: raw.run,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
    })
}

fn check_grid(cells: &[usize], dim: usize) -> Result<(), String> {
    if cells.len() != dim {
        return Err(format!("{} entries for dimension {dim}", cells.len()));
    }
    if cells.contains(&0) {
        return Err("cells per axis must be positive".into());
    }
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "jablab", version, about = "Random Jabłoński maps: transfer operators, invariant densities and ACIP bounds")]
pub struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Grid cells per axis.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum H0 {
    Uniform,
    Ramp,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Admissibility, block length and consistency checks.
    Validate,
    /// Dump the Ulam operator of every symbol.
    Ulam,
    /// Check the Lasota–Yorke inequality on test densities.
    Ly {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        densities: Option<usize>,
        #[arg(long)]
        windows: Option<usize>,
    },
    /// Random invariant density at the window's time 0.
    Density {
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        s_max: Option<usize>,
    },
    /// Growth rate of the BV norm along the cocycle.
    Lyapunov {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum, default_value = "ramp")]
        h0: H0,
    },
    /// Empirical number of ergodic ACIPs.
    Count {
        #[command(flatten)]
        count: CountArgs,
    },
    /// Basin fractions of the empirical ACIPs.
    Basins {
        #[command(flatten)]
        count: CountArgs,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Both ACIP bounds for the configured driving.
    Bounds,
    /// Bound table of the 5×5 example over a range of γ₁γ₂.
    Example53 {
        #[arg(long, default_value_t = 10.5)]
        gamma_min: f64,
        #[arg(long, default_value_t = 25.0)]
        gamma_max: f64,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
    },
}

#[derive(Debug, Clone, clap::Args)]
pub struct CountArgs {
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub windows: Option<usize>,
    #[arg(long)]
    pub k_settle: Option<usize>,
    #[arg(long)]
    pub cluster_tol: Option<f64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("this command needs --config")]
    MissingConfig,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Run(String),
}

fn run_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Run(e.to_string())
}

struct Ctx {
    spec: ExperimentSpec,
    out: PathBuf,
}

impl Ctx {
    fn create(&self, name: &str) -> Result<BufWriter<fs::File>, CliError> {
        fs::create_dir_all(&self.out).map_err(|source| CliError::Io {
            path: self.out.display().to_string(),
            source,
        })?;
        let path = self.out.join(name);
        fs::File::create(&path)
            .map(BufWriter::new)
            .map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(run_err)?;
        std::io::Write::write_all(&mut w, b"\n").map_err(|source| CliError::Io {
            path: name.into(),
            source,
        })
    }

    fn io(&self, name: &str) -> impl Fn(std::io::Error) -> CliError {
        let path = self.out.join(name).display().to_string();
        move |source| CliError::Io {
            path: path.clone(),
            source,
        }
    }

    fn cocycle(&self) -> Result<Cocycle, CliError> {
        Cocycle::new(&self.spec.driving, self.spec.grid()).map_err(run_err)
    }

    fn count_params(&self, a: &CountArgs) -> CountParams {
        let r = &self.spec.run;
        CountParams {
            n_seeds: a.seeds.unwrap_or(r.count_seeds),
            n_windows: a.windows.unwrap_or(r.count_windows),
            k_settle: a.k_settle.unwrap_or(r.count_k_settle),
            cluster_tol: a.cluster_tol.unwrap_or(r.cluster_tol),
        }
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    dimension: usize,
    grid: &'a [usize],
    symbols: Vec<&'a str>,
    stationary: &'a [f64],
    gamma: f64,
    admissible: bool,
    n_block: Option<usize>,
    consistency: Option<crate::bounds::ConsistencyReport>,
    consistency_error: Option<String>,
}

/// Runs one subcommand and returns the process exit code.
pub fn run(cli: Cli) -> Result<u8, CliError> {
    if let Command::Example53 {
        gamma_min,
        gamma_max,
        step,
    } = cli.command
    {
        return run_example53(cli.out.unwrap_or_else(|| PathBuf::from("out")), gamma_min, gamma_max, step);
    }
    let path = cli.config.as_ref().ok_or(CliError::MissingConfig)?;
    let mut spec = load_config(path)?;
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if let Some(g) = cli.grid {
        spec.grid_cells = vec![g; spec.dimension];
        check_grid(&spec.grid_cells, spec.dimension).map_err(|r| ConfigError::Invalid {
            path: "--grid".into(),
            reason: r,
        })?;
    }
    let out = cli.out.clone().unwrap_or_else(|| spec.output_dir.clone());
    let ctx = Ctx { spec, out };
    let d = &ctx.spec.driving;
    let seed = ctx.spec.seed;
    let run = &ctx.spec.run;

    match cli.command {
        Command::Validate => {
            let ex = expansion_integral(d);
            let (consistency, consistency_error) = match consistency_report(d, None) {
                Ok(c) => (Some(c), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let report = ValidateReport {
                dimension: ctx.spec.dimension,
                grid: &ctx.spec.grid_cells,
                symbols: (0..d.alphabet_size()).map(|a| d.name(a)).collect(),
                stationary: d.stationary(),
                gamma: ex.gamma,
                admissible: ex.admissible,
                n_block: choose_block_n(ex.gamma).ok(),
                consistency,
                consistency_error,
            };
            print_json(&report);
            if !ex.admissible {
                eprintln!("not admissible: Γ = {}", ex.gamma);
                return Ok(EXIT_INVALID);
            }
            Ok(if report.consistency_error.is_some() {
                EXIT_INVALID
            } else {
                EXIT_OK
            })
        }
        Command::Ulam => {
            let co = ctx.cocycle()?;
            for a in 0..d.alphabet_size() {
                let name = format!("ulam_{a}.csv");
                let w = ctx.create(&name)?;
                co.operator(a).write_csv(w).map_err(ctx.io(&name))?;
            }
            Ok(EXIT_OK)
        }
        Command::Ly { n, densities, windows } => {
            let gamma = expansion_integral(d).gamma;
            let n = match n.or(run.ly_block) {
                Some(n) => n,
                None => match choose_block_n(gamma) {
                    Ok(n) => n,
                    Err(e) => {
                        eprintln!("{e}");
                        return Ok(EXIT_INVALID);
                    }
                },
            };
            let co = ctx.cocycle()?;
            let report = match verify_ly_with(
                d,
                &co,
                n,
                densities.unwrap_or(run.ly_densities),
                windows.unwrap_or(run.ly_windows),
                seed,
            ) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(EXIT_INVALID);
                }
            };
            ctx.write_json("ly_report.json", &report)?;
            println!(
                "N = {n}, checks = {}, failures = {}, min slack = {:e}",
                report.checks, report.failures, report.min_slack
            );
            Ok(if report.all_passed && report.integral_negative {
                EXIT_OK
            } else {
                EXIT_INVALID
            })
        }
        Command::Density { tol, s_max } => {
            let s_max = s_max.unwrap_or(run.density_s_max);
            let tol = tol.unwrap_or(run.density_tol);
            let co = ctx.cocycle()?;
            let window = sample_window(d, seed, s_max, 1);
            let fam = match equivariant_density(d, &co, &window, s_max, tol) {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(EXIT_INVALID);
                }
            };
            let residual = equivariance_residual(&co, &window, &fam).map_err(run_err)?;
            let h0 = fam.at(0).expect("offset 0");
            h0.write_csv(ctx.create("density.csv")?).map_err(ctx.io("density.csv"))?;
            fam.at(1)
                .expect("offset 1")
                .write_csv(ctx.create("density_next.csv")?)
                .map_err(ctx.io("density_next.csv"))?;
            let summary = serde_json::json!({
                "s_used": fam.s_used,
                "increment": fam.increment,
                "raw_increment": fam.raw_increment,
                "converged": fam.converged,
                "equivariance_residual": residual,
                "mass": h0.integral(),
            });
            ctx.write_json("density.json", &summary)?;
            print_json(&summary);
            Ok(EXIT_OK)
        }
        Command::Lyapunov { k, trials, h0 } => {
            let co = ctx.cocycle()?;
            let h0 = match h0 {
                H0::Uniform => TestDensity::Uniform,
                H0::Ramp => TestDensity::Ramp,
            };
            let est = match lyapunov_max(
                d,
                &co,
                k.unwrap_or(run.lyapunov_k),
                trials.unwrap_or(run.lyapunov_trials),
                seed,
                h0,
            ) {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(EXIT_INVALID);
                }
            };
            ctx.write_json("lyapunov.json", &est)?;
            print_json(&est);
            Ok(EXIT_OK)
        }
        Command::Count { count } => {
            let co = ctx.cocycle()?;
            let res = match count_acips(d, &co, ctx.count_params(&count), seed) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(EXIT_INVALID);
                }
            };
            for (i, h) in res.representatives.iter().enumerate() {
                let name = format!("representative_{i}.csv");
                h.write_csv(ctx.create(&name)?).map_err(ctx.io(&name))?;
            }
            let consistency = consistency_report(d, Some(res.r_hat)).map_err(run_err)?;
            let within = consistency
                .bounds
                .min_bound()
                .is_none_or(|b| res.r_hat as f64 <= b);
            let summary = serde_json::json!({
                "count": res.summary(),
                "within_bounds": within,
                "consistency": consistency,
            });
            ctx.write_json("count.json", &summary)?;
            print_json(&summary);
            Ok(EXIT_OK)
        }
        Command::Basins { count, points, steps } => {
            let co = ctx.cocycle()?;
            let res = match count_acips(d, &co, ctx.count_params(&count), seed) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(EXIT_INVALID);
                }
            };
            let basins = basin_estimate(
                d,
                &res.representatives,
                points.unwrap_or(run.basin_points),
                steps.unwrap_or(run.basin_steps),
                seed,
            )
            .map_err(run_err)?;
            ctx.write_json("basins.json", &basins)?;
            print_json(&basins);
            Ok(EXIT_OK)
        }
        Command::Bounds => {
            let report = match consistency_report(d, None) {
                Ok(r) => r,
                Err(e @ BoundsError::ConsistencyViolation { .. }) => {
                    eprintln!("{e}");
                    return Ok(EXIT_INVALID);
                }
                Err(e) => return Err(run_err(e)),
            };
            let row = TableRow {
                gamma_product: report.gbar.exp(),
                bound_buzzi: report.bounds.bound_buzzi,
                bound_gbp: report.bounds.bound_gbp,
            };
            write_bounds_csv(&[row], ctx.create("bounds.csv")?).map_err(ctx.io("bounds.csv"))?;
            ctx.write_json("bounds.json", &report)?;
            print_json(&report);
            let none = report.bounds.bound_buzzi == Bound::Inapplicable && report.bounds.bound_gbp == Bound::Inapplicable;
            Ok(if none { EXIT_INAPPLICABLE } else { EXIT_OK })
        }
        Command::Example53 { .. } => unreachable!(),
    }
}

fn run_example53(out: PathBuf, gamma_min: f64, gamma_max: f64, step: f64) -> Result<u8, CliError> {
    let rows = match example53_table(gamma_min, gamma_max, step) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return Ok(EXIT_INVALID);
        }
    };
    fs::create_dir_all(&out).map_err(|source| CliError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let path = out.join("bounds.csv");
    let io = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    write_bounds_csv(&rows, BufWriter::new(fs::File::create(&path).map_err(io)?)).map_err(io)?;
    let crossover = table_crossover(&rows, 1e-12).or_else(|| example53_crossover(10.0 + 1e-9, 25.0, 1e-12).ok());
    print_json(&serde_json::json!({ "rows": rows.len(), "crossover": crossover }));
    Ok(if rows.iter().all(|r| !r.bound_buzzi.is_applicable() && !r.bound_gbp.is_applicable()) {
        EXIT_INAPPLICABLE
    } else {
        EXIT_OK
    })
}

/// Entry point of the binary: parses arguments, sizes the thread pool from
/// `JABLAB_THREADS` and maps outcomes to exit codes.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = std::env::var("JABLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}
