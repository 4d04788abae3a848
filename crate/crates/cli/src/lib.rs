//! Pipelines behind the `hjb` binary: validate, solve, sweep and simulate.
//!
//! Every output file starts with the crate version and the SHA-256 of the
//! effective config (after command-line overrides), and contains nothing
//! that depends on the machine or the clock, so reruns are bit-identical.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use hjb_leverage::config::ProblemConfig;
use hjb_leverage::dual::{dual_residual, to_dual};
use hjb_leverage::hjb::{hjb_residual, solve_hjb, SolveDiagnostics, ValueSolution};
use hjb_leverage::io::{write_table, OutputHeader};
use hjb_leverage::model::{validate, CheckStatus, ConstraintSpec, ProbeLattice, ValidationReport};
use hjb_leverage::montecarlo::{simulate_value, SimResult};
use hjb_leverage::policy::{extract_policy, policy_at, PolicyTable};
use hjb_leverage::region::{certify_two_region, refine_xstar, RegionReport, SmoothFit};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] hjb_leverage::Error),
    /// A check ran to completion and failed.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 0 success, 1 domain failure, 2 usage or parse error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Read { .. } => 2,
            CliError::Core(hjb_leverage::Error::Parse { .. }) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub grid_n: Option<usize>,
    pub x_max: Option<f64>,
    pub seed: Option<u64>,
}

/// Reads a config and applies the overrides.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ProblemConfig> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = ProblemConfig::from_json(&text)?;
    if let Some(n) = overrides.grid_n {
        cfg.grid.n = n;
    }
    if let Some(x_max) = overrides.x_max {
        // keep the span x_max / x_min of the configured grid
        if let Some(x_min) = cfg.grid.x_min {
            cfg.grid.x_min = Some(x_min * x_max / cfg.grid.x_max);
        }
        cfg.grid.x_max = x_max;
    }
    if let Some(seed) = overrides.seed {
        if let Some(sim) = cfg.sim.as_mut() {
            sim.seed = seed;
        }
    }
    Ok(cfg)
}

fn header(cfg: &ProblemConfig) -> Result<OutputHeader> {
    Ok(OutputHeader::new(cfg.sha256()?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

/// JSON files carry the header as leading fields.
#[derive(Serialize)]
struct JsonFile<'a, T: Serialize> {
    version: &'a str,
    config_sha256: &'a str,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(path: &Path, header: &OutputHeader, body: T) -> Result<()> {
    let mut w = create(path)?;
    let file = JsonFile {
        version: &header.version,
        config_sha256: &header.config_sha256,
        body,
    };
    let io_err = |e: io::Error| CliError::Write {
        path: path.to_path_buf(),
        source: e,
    };
    serde_json::to_writer_pretty(&mut w, &file).map_err(|e| io_err(e.into()))?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

// ---------------------------------------------------------------- validate

/// Checks the standing assumptions; the `Err` variant is a failed check.
pub fn cmd_validate(cfg: &ProblemConfig, out: &mut dyn Write) -> Result<ValidationReport> {
    let report = validate(
        &cfg.market,
        &cfg.utility,
        &cfg.constraint,
        &ProbeLattice::default(),
    )?;
    for c in &report.checks {
        let status = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Waived => "WAIVED",
        };
        let _ = writeln!(out, "{status:6} {:28} {}", c.name, c.detail);
    }
    if report.passed() {
        Ok(report)
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(CliError::Failed(format!(
            "assumptions violated: {}",
            names.join(", ")
        )))
    }
}

// ------------------------------------------------------------------- solve

#[derive(Debug, Clone, Serialize)]
pub struct RegionSummary {
    /// Constant cap level, when the cap is constant.
    pub cap_level: Option<f64>,
    pub xstar: Option<f64>,
    /// Present only for constant caps, where `m(x)` is defined.
    pub certified: Option<bool>,
    pub smooth_fit: Option<SmoothFit>,
    pub report: Option<RegionReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub hjb_residual: f64,
    /// `hjb_residual / (delta max |V|)`.
    pub hjb_residual_scaled: f64,
    /// Dual-ODE residual on the unconstrained nodes, relative.
    pub dual_residual: Option<f64>,
    pub dual_nodes: usize,
    pub lemma1_violations: Vec<usize>,
    pub consumption_nondecreasing: bool,
    pub solver: SolveDiagnostics,
}

/// Everything `solve` computes, before it is written out.
pub struct SolveOutput {
    pub solution: ValueSolution,
    pub policy: PolicyTable,
    pub region: RegionSummary,
    pub diagnostics: Diagnostics,
}

fn region_summary(cfg: &ProblemConfig, sol: &ValueSolution) -> Result<RegionSummary> {
    Ok(match cfg.cap_level().filter(|l| l.is_finite()) {
        Some(l) => {
            let rep = certify_two_region(sol, &cfg.utility, &cfg.market, l)?;
            RegionSummary {
                cap_level: Some(l),
                xstar: rep.xstar,
                certified: Some(rep.certified),
                smooth_fit: rep.smooth_fit,
                report: Some(rep),
            }
        }
        None => {
            let r = refine_xstar(sol, &cfg.utility, &cfg.market, &cfg.constraint)?;
            RegionSummary {
                cap_level: None,
                xstar: r.map(|r| r.xstar),
                certified: None,
                smooth_fit: r.map(|r| r.smooth_fit),
                report: None,
            }
        }
    })
}

/// Solves, extracts the policy and certifies the regions.
pub fn run_solve(cfg: &ProblemConfig) -> Result<SolveOutput> {
    let grid = cfg.grid.build()?;
    let sol = solve_hjb(
        &cfg.market,
        &cfg.utility,
        &cfg.constraint,
        &grid,
        &cfg.solver,
    )?;
    let policy = extract_policy(&sol, &cfg.utility, &cfg.market, &cfg.constraint)?;
    let region = region_summary(cfg, &sol)?;
    let res = hjb_residual(&sol, &cfg.market, &cfg.utility, &cfg.constraint)?;
    let vmax = sol.v.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let scale = cfg.market.delta * vmax;
    let (dual_residual, dual_nodes) = match to_dual(&sol) {
        Ok(d) => (Some(dual_residual(&d, &cfg.market, &cfg.utility)?), d.len()),
        Err(e) => {
            log::warn!("no dual residual: {e}");
            (None, 0)
        }
    };
    let diagnostics = Diagnostics {
        iterations: sol.iterations,
        hjb_residual: res,
        hjb_residual_scaled: if scale > 0.0 { res / scale } else { res },
        dual_residual,
        dual_nodes,
        lemma1_violations: policy.lemma1_violations(),
        consumption_nondecreasing: policy.consumption_nondecreasing(),
        solver: sol.diagnostics.clone(),
    };
    Ok(SolveOutput {
        solution: sol,
        policy,
        region,
        diagnostics,
    })
}

fn write_value_csv(path: &Path, header: &OutputHeader, sol: &ValueSolution) -> Result<()> {
    let x = sol.x();
    write_table(
        create(path)?,
        Some(header),
        &["x", "v", "dv", "d2v", "region"],
        x.len(),
        |r, c| match c {
            0 => x[r].to_string(),
            1 => sol.v[r].to_string(),
            2 => sol.dv[r].to_string(),
            3 => sol.d2v[r].to_string(),
            _ => sol.region[r].as_str().to_string(),
        },
    )?;
    Ok(())
}

/// Writes `value.csv`, `policy.csv`, `region.json` and `diagnostics.json`.
pub fn cmd_solve(cfg: &ProblemConfig, out_dir: &Path) -> Result<SolveOutput> {
    let header = header(cfg)?;
    let out = run_solve(cfg)?;
    prepare_out(out_dir)?;
    write_value_csv(&out_dir.join("value.csv"), &header, &out.solution)?;
    out.policy
        .write_csv(create(&out_dir.join("policy.csv"))?, Some(&header))?;
    write_json(&out_dir.join("region.json"), &header, &out.region)?;
    write_json(&out_dir.join("diagnostics.json"), &header, &out.diagnostics)?;
    Ok(out)
}

// ------------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub l: f64,
    pub xstar: Option<f64>,
    pub v_x0: f64,
    pub pi_bar_x0: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub parameter: String,
    pub x0: f64,
    pub rows: Vec<SweepRow>,
    /// `x*` strictly increasing in `L` over the rows where it exists.
    pub xstar_increasing: bool,
}

/// Parses a comma-separated list of numbers.
pub fn parse_values(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Usage(format!("bad value {s:?} in --values: {e}")))
        })
        .collect()
}

// `!(l > 0.0)` also rejects NaN
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn with_level(constraint: &ConstraintSpec, l: f64) -> Result<ConstraintSpec> {
    if !(l > 0.0) {
        return Err(hjb_leverage::Error::InvalidParameter(format!(
            "cap level L = {l} must be positive"
        ))
        .into());
    }
    match constraint {
        ConstraintSpec::Constant { .. } => Ok(ConstraintSpec::Constant { l }),
        ConstraintSpec::Linear { k, .. } => Ok(ConstraintSpec::Linear { k: *k, l }),
        ConstraintSpec::CustomConcave(_) => Err(CliError::Usage(
            "L cannot be swept for a custom constraint".into(),
        )),
    }
}

/// Solves once per value of `L`; writes `sweep.csv` and `sweep.json`.
pub fn cmd_sweep(
    cfg: &ProblemConfig,
    parameter: &str,
    values: &[f64],
    out_dir: &Path,
) -> Result<SweepSummary> {
    if parameter != "L" {
        return Err(CliError::Usage(format!(
            "unsupported sweep parameter {parameter:?} (only L)"
        )));
    }
    if values.is_empty() {
        return Err(CliError::Usage("--values is empty".into()));
    }
    let header = header(cfg)?;
    let x0 = cfg.sim.map(|s| s.x0).unwrap_or(1.0);
    let mut rows = Vec::with_capacity(values.len());
    for &l in values {
        let mut c = cfg.clone();
        c.constraint = with_level(&cfg.constraint, l)?;
        let out = run_solve(&c)?;
        let (_, pi) = policy_at(&out.policy, x0)?;
        rows.push(SweepRow {
            l,
            xstar: out.region.xstar,
            v_x0: out.solution.value_at(x0)?,
            pi_bar_x0: pi / x0,
        });
        log::info!("L = {l}: x* = {:?}", out.region.xstar);
    }
    let mut with_x: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.xstar.map(|x| (r.l, x)))
        .collect();
    with_x.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xstar_increasing = with_x.windows(2).all(|w| w[1].1 > w[0].1);

    prepare_out(out_dir)?;
    write_table(
        create(&out_dir.join("sweep.csv"))?,
        Some(&header),
        &["L", "xstar", "v_x0", "pi_bar_x0"],
        rows.len(),
        |r, c| {
            let row = &rows[r];
            match c {
                0 => row.l.to_string(),
                1 => row.xstar.map(|x| x.to_string()).unwrap_or_default(),
                2 => row.v_x0.to_string(),
                _ => row.pi_bar_x0.to_string(),
            }
        },
    )?;
    let summary = SweepSummary {
        parameter: parameter.to_string(),
        x0,
        rows,
        xstar_increasing,
    };
    write_json(&out_dir.join("sweep.json"), &header, &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub x0: f64,
    /// `V(x0)` from a fresh solve of the same config.
    pub v_x0: f64,
    pub result: SimResult,
    /// `3 stderr + tail_bound + 1e-2 V(x0)`.
    pub tolerance: f64,
    pub consistent: bool,
}

/// Simulates the policy in `policy_csv` and compares with `V(x0)`. An
/// inconsistent estimate is reported as a failed check after `sim.json`
/// has been written.
pub fn cmd_simulate(cfg: &ProblemConfig, policy_csv: &Path, out_dir: &Path) -> Result<SimSummary> {
    let sim = cfg
        .sim
        .ok_or_else(|| CliError::Usage("config has no \"sim\" block".into()))?;
    let header = header(cfg)?;
    let file = File::open(policy_csv).map_err(|source| CliError::Read {
        path: policy_csv.to_path_buf(),
        source,
    })?;
    let table = PolicyTable::read_csv(io::BufReader::new(file), &cfg.constraint)?;
    let grid = cfg.grid.build()?;
    let sol = solve_hjb(
        &cfg.market,
        &cfg.utility,
        &cfg.constraint,
        &grid,
        &cfg.solver,
    )?;
    let v_x0 = sol.value_at(sim.x0)?;
    let result = simulate_value(&table, &cfg.market, &cfg.utility, &sim)?;
    let tolerance = 3.0 * result.stderr + result.tail_bound + 1e-2 * v_x0.abs();
    let consistent = (result.estimate - v_x0).abs() <= tolerance;
    let summary = SimSummary {
        x0: sim.x0,
        v_x0,
        result,
        tolerance,
        consistent,
    };
    prepare_out(out_dir)?;
    write_json(&out_dir.join("sim.json"), &header, &summary)?;
    if consistent {
        Ok(summary)
    } else {
        Err(CliError::Failed(format!(
            "estimate {} differs from V(x0) = {} by more than {}",
            summary.result.estimate, v_x0, tolerance
        )))
    }
}
