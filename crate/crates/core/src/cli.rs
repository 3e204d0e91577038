//! Batch front end: `check`, `reduce`, `effcost`, `counterexample`,
//! `simulate`, `optimize` and `equivalence`.
//!
//! Exit codes: 0 on success, 1 when an assumption check fails, 2 on any input
//! or runtime error. CSV bodies depend only on the arguments and the seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::json;

use crate::assumptions::check_assumptions;
use crate::effective_cost::{discontinuity_probe, effective_cost_curve, scalar_grid, EffectiveCost};
use crate::error::{Error, Result};
use crate::linalg::matrix_to_rows;
use crate::model::{NetworkData, TwoServerParams};
use crate::pathsim::{
    auto_horizon, baseline_ball_control, mean_stderr, stream_lifted_path, ControlMap, ExtensionPlan, StreamSettings,
    TimeGrid, WorkloadPolicy,
};
use crate::policy::{
    barrier_path_cost, equivalence_by_seed, mode_reduction, sup_gcheck, BarrierPolicy, OptimizeSettings, TwoServerModel,
};
use crate::reduction::{reduce_network, ReducedNetworkData, WorkloadReduction, WorkloadSpace};

/// Relative truncation target for `--horizon auto`.
const AUTO_HORIZON_RTOL: f64 = 1e-4;
/// Paths in the pilot run that sets `--horizon auto`.
const PILOT_PATHS: usize = 32;

#[derive(Debug, Parser)]
#[command(
    name = "wf",
    about = "Workload reduction and barrier-policy simulation for Brownian networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check full displacement and no arbitrage; exit 1 if either fails.
    Check { instance: PathBuf },
    /// Compute M, G, π, κ and the workload space; writes reduction.json.
    Reduce {
        instance: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        out: OutDir,
    },
    /// Tabulate ǧ and ψ over the workload interval; writes effcost.csv.
    Effcost {
        instance: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value_t = 201)]
        points: usize,
        #[arg(long, allow_negative_numbers = true)]
        lo: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        hi: Option<f64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Argmin trace of the quasiconvex level-set cost; writes counterexample.csv.
    Counterexample {
        #[arg(long, default_value_t = 401)]
        points: usize,
        #[arg(long, default_value_t = 4001)]
        z2_points: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Simulate a policy; writes paths_summary.csv and paths_aggregate.csv.
    Simulate {
        instance: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// `barrier:<b*>`, `ball:<c1>,...,<cm>,<r>` or `zero`.
        #[arg(long)]
        policy: String,
        #[command(flatten)]
        mc: MonteCarlo,
        #[command(flatten)]
        out: OutDir,
    },
    /// Search the upper barrier for the two-server network; writes profile.csv.
    Optimize {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 500)]
        paths: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value = "60")]
        horizon: String,
        /// Final bracket width; defaults to 0.02 w_hi.
        #[arg(long)]
        btol: Option<f64>,
        /// Extra equally spaced barriers in the profile.
        #[arg(long, default_value_t = 21)]
        profile_points: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Compare J(Y) + I with J(U) per seed under a barrier policy; writes equivalence.csv.
    Equivalence {
        #[command(flatten)]
        params: ParamArgs,
        /// Barrier height; searched with the `optimize` defaults when absent.
        #[arg(long)]
        b_star: Option<f64>,
        /// Space-separated seeds.
        #[arg(long, default_value = "1 2")]
        seeds: String,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 80.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1)]
        substeps: usize,
        #[arg(long)]
        check_identities: bool,
        #[command(flatten)]
        out: OutDir,
    },
}

#[derive(Debug, Args)]
struct Overrides {
    /// Workload matrix, rows separated by `;`, entries by spaces.
    #[arg(long = "M", allow_hyphen_values = true)]
    m: Option<String>,
    /// State prices, space-separated.
    #[arg(long, allow_hyphen_values = true)]
    pi: Option<String>,
}

#[derive(Debug, Args)]
struct OutDir {
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MonteCarlo {
    #[arg(long, default_value_t = 100)]
    paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// A number or `auto`.
    #[arg(long, default_value = "auto")]
    horizon: String,
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ParamArgs {
    #[arg(long, default_value_t = 1.2)]
    v4: f64,
    #[arg(long, default_value_t = 1.0)]
    a1: f64,
    #[arg(long, default_value_t = 1.0)]
    a2: f64,
    #[arg(long, default_value_t = 10.0)]
    b: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
}

impl ParamArgs {
    fn params(&self) -> TwoServerParams {
        TwoServerParams {
            a1: self.a1,
            a2: self.a2,
            b: self.b,
            v4: self.v4,
            alpha: self.alpha,
        }
    }
}

/// Parses argv (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = std::env::var("WF_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // A pool built earlier in the process keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Assumption(_) => 1,
                _ => 2,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Check { instance } => cmd_check(&instance),
        Command::Reduce {
            instance,
            overrides,
            out,
        } => cmd_reduce(&instance, &overrides, &out.out),
        Command::Effcost {
            instance,
            overrides,
            points,
            lo,
            hi,
            out,
        } => cmd_effcost(&instance, &overrides, points, lo, hi, &out.out),
        Command::Counterexample { points, z2_points, out } => cmd_counterexample(points, z2_points, &out.out),
        Command::Simulate {
            instance,
            overrides,
            policy,
            mc,
            out,
        } => cmd_simulate(&instance, &overrides, &policy, &mc, &out.out),
        Command::Optimize {
            params,
            paths,
            seed,
            dt,
            horizon,
            btol,
            profile_points,
            out,
        } => cmd_optimize(&params, paths, seed, dt, &horizon, btol, profile_points, &out.out),
        Command::Equivalence {
            params,
            b_star,
            seeds,
            paths,
            dt,
            horizon,
            substeps,
            check_identities,
            out,
        } => cmd_equivalence(
            &params,
            b_star,
            &seeds,
            paths,
            dt,
            horizon,
            substeps,
            check_identities,
            &out.out,
        ),
    }
}

fn parse_numbers(s: &str) -> Result<Vec<f64>> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("not a number: {t:?}")))
        })
        .collect()
}

fn parse_matrix(s: &str) -> Result<DMatrix<f64>> {
    let rows = s.split(';').map(parse_numbers).collect::<Result<Vec<_>>>()?;
    let cols = rows.first().map(|r| r.len()).unwrap_or(0);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidInput(format!("malformed matrix {s:?}")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn load(instance: &FsPath, overrides: &Overrides) -> Result<(NetworkData, WorkloadReduction, ReducedNetworkData)> {
    let data = NetworkData::from_path(instance)?;
    let m = overrides.m.as_deref().map(parse_matrix).transpose()?;
    let pi = overrides
        .pi
        .as_deref()
        .map(|s| parse_numbers(s).map(DVector::from_vec))
        .transpose()?;
    let (red, reduced) = reduce_network(&data, m.as_ref(), pi.as_ref())?;
    Ok((data, red, reduced))
}

fn write_file(dir: &FsPath, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, body)?;
    Ok(path)
}

fn fmt_vec(v: &[f64]) -> String {
    // Tiny magnitudes print as 0 rather than -0.000000.
    let items: Vec<String> = v
        .iter()
        .map(|x| format!("{:.6}", if x.abs() < 5e-7 { 0.0 } else { *x }))
        .collect();
    format!("({})", items.join(", "))
}

fn require_assumptions(data: &NetworkData) -> Result<()> {
    let rep = check_assumptions(&data.r, &data.k, &data.v)?;
    if !rep.full_displacement.holds {
        return Err(Error::Assumption("full displacement fails".into()));
    }
    if !rep.no_arbitrage.holds {
        return Err(Error::Assumption("no arbitrage fails".into()));
    }
    Ok(())
}

fn cmd_check(instance: &FsPath) -> Result<i32> {
    let data = NetworkData::from_path(instance)?;
    data.ensure_valid()?;
    let rep = check_assumptions(&data.r, &data.k, &data.v)?;
    let fd = &rep.full_displacement;
    println!("full displacement: {}", if fd.holds { "holds" } else { "fails" });
    for (slot, w) in fd.witnesses.iter().enumerate() {
        let (i, sign) = (slot % data.m, if slot < data.m { "+" } else { "-" });
        match w {
            Some(y) => println!("  {sign}e{}: y = {}", i + 1, fmt_vec(y.as_slice())),
            None => println!("  {sign}e{}: no witness", i + 1),
        }
    }
    println!(
        "no arbitrage: {}",
        if rep.no_arbitrage.holds { "holds" } else { "fails" }
    );
    if let Some(ray) = &rep.no_arbitrage.ray {
        println!("  arbitrage ray y = {}", fmt_vec(ray.as_slice()));
    }
    if let (Some(g), Some(e)) = (rep.gamma, rep.eta) {
        println!("gamma = {g:.6}, eta = {e:.6}");
    }
    println!("note: {}", rep.norm_note);
    Ok(if rep.all_hold() { 0 } else { 1 })
}

fn space_json(space: &WorkloadSpace) -> serde_json::Value {
    match space {
        WorkloadSpace::Point => json!({"kind": "point"}),
        WorkloadSpace::Interval { lo, hi } => json!({"kind": "interval", "lo": lo, "hi": hi}),
        WorkloadSpace::Preimage { .. } => json!({"kind": "preimage"}),
    }
}

fn cmd_reduce(instance: &FsPath, overrides: &Overrides, out: &FsPath) -> Result<i32> {
    let (_, red, reduced) = load(instance, overrides)?;
    let mut text = String::new();
    let _ = writeln!(text, "d = {}", red.d);
    for (i, row) in matrix_to_rows(&red.m).iter().enumerate() {
        let _ = writeln!(text, "M[{}] = {}", i + 1, fmt_vec(row));
    }
    for (i, row) in matrix_to_rows(&red.g).iter().enumerate() {
        let _ = writeln!(text, "G[{}] = {}", i + 1, fmt_vec(row));
    }
    let _ = writeln!(text, "pi = {}", fmt_vec(red.pi.as_slice()));
    let _ = writeln!(text, "kappa = {}", fmt_vec(red.kappa.as_slice()));
    let _ = writeln!(text, "w0 = {}", fmt_vec(reduced.w0.as_slice()));
    let _ = writeln!(text, "vartheta = {}", fmt_vec(reduced.vartheta.as_slice()));
    for (i, row) in matrix_to_rows(&reduced.gamma).iter().enumerate() {
        let _ = writeln!(text, "Gamma[{}] = {}", i + 1, fmt_vec(row));
    }
    match &reduced.space {
        WorkloadSpace::Point => text.push_str("W = {0}\n"),
        WorkloadSpace::Interval { lo, hi } => {
            let _ = writeln!(text, "W = [{lo:.6}, {hi:.6}]");
        }
        WorkloadSpace::Preimage { .. } => text.push_str("W = M Z (preimage form)\n"),
    }
    let r = &red.residuals;
    let _ = writeln!(
        text,
        "residuals: |MR - GK| = {:.3e}, |v' - pi'R - kappa'K| = {:.3e}, |M Rev| = {:.3e}",
        r.mr_minus_gk, r.dual_identity, r.m_times_rev
    );
    print!("{text}");
    let doc = json!({
        "d": red.d,
        "M": matrix_to_rows(&red.m),
        "G": matrix_to_rows(&red.g),
        "pi": red.pi.as_slice(),
        "kappa": red.kappa.as_slice(),
        "w0": reduced.w0.as_slice(),
        "vartheta": reduced.vartheta.as_slice(),
        "Gamma": matrix_to_rows(&reduced.gamma),
        "W": space_json(&reduced.space),
        "residuals": {
            "mr_minus_gk": r.mr_minus_gk,
            "dual_identity": r.dual_identity,
            "m_times_rev": r.m_times_rev,
        },
    });
    write_file(out, "reduction.json", &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    Ok(0)
}

fn cmd_effcost(
    instance: &FsPath,
    overrides: &Overrides,
    points: usize,
    lo: Option<f64>,
    hi: Option<f64>,
    out: &FsPath,
) -> Result<i32> {
    let (data, red, reduced) = load(instance, overrides)?;
    let Some((wlo, whi)) = reduced.space.interval() else {
        return Err(Error::InvalidInput(format!(
            "effcost tabulates scalar workloads only, d = {}",
            red.d
        )));
    };
    let ec = EffectiveCost::new(&data, &red);
    let rows = effective_cost_curve(&ec, &scalar_grid(lo.unwrap_or(wlo), hi.unwrap_or(whi), points));
    let mut csv = String::from("w,gcheck");
    for i in 0..data.m {
        let _ = write!(csv, ",psi{}", i + 1);
    }
    csv.push('\n');
    for row in &rows {
        match &row.result {
            Ok((psi, g)) => {
                let _ = write!(csv, "{},{}", row.w[0], g);
                for v in psi.iter() {
                    let _ = write!(csv, ",{v}");
                }
                csv.push('\n');
            }
            Err(e) => return Err(Error::InvalidInput(format!("w = {}: {e}", row.w[0]))),
        }
    }
    let path = write_file(out, "effcost.csv", &csv)?;
    println!("{} rows written to {}", rows.len(), path.display());
    Ok(0)
}

fn cmd_counterexample(points: usize, z2_points: usize, out: &FsPath) -> Result<i32> {
    let w: Vec<f64> = scalar_grid(0.0, 2.0, points).into_iter().map(|v| v[0]).collect();
    let z2: Vec<f64> = scalar_grid(-2.0, 2.0, z2_points).into_iter().map(|v| v[0]).collect();
    let rows = discontinuity_probe(&w, &z2)?;
    let mut csv = String::from("w,gcheck,argmin_z2\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{}", r.w, r.value, r.argmin_z2);
    }
    let path = write_file(out, "counterexample.csv", &csv)?;
    println!("{} rows written to {}", rows.len(), path.display());
    Ok(0)
}

enum PolicyArg {
    Barrier(f64),
    Ball(Vec<f64>, f64),
    Zero,
}

fn parse_policy(s: &str, m: usize) -> Result<PolicyArg> {
    let bad = || Error::InvalidInput(format!("unrecognized policy {s:?}"));
    match s.split_once(':') {
        None if s == "zero" => Ok(PolicyArg::Zero),
        Some(("barrier", b)) => Ok(PolicyArg::Barrier(b.trim().parse().map_err(|_| bad())?)),
        Some(("ball", rest)) => {
            let mut v = parse_numbers(rest)?;
            if v.len() != m + 1 {
                return Err(Error::InvalidInput(format!(
                    "ball needs {m} center coordinates and a radius"
                )));
            }
            let r = v.pop().unwrap_or_default();
            Ok(PolicyArg::Ball(v, r))
        }
        _ => Err(bad()),
    }
}

/// `auto` is rounded up to a whole number of steps.
fn horizon_from(arg: &str, pilot: impl FnOnce() -> Result<(f64, f64)>, alpha: f64, dt: f64) -> Result<f64> {
    if arg == "auto" {
        let (sup, estimate) = pilot()?;
        Ok((auto_horizon(alpha, sup, estimate, AUTO_HORIZON_RTOL) / dt).ceil() * dt)
    } else {
        arg.parse::<f64>()
            .ok()
            .filter(|t| *t > 0.0)
            .ok_or_else(|| Error::InvalidInput(format!("horizon must be positive or `auto`, got {arg:?}")))
    }
}

fn cmd_simulate(instance: &FsPath, overrides: &Overrides, policy: &str, mc: &MonteCarlo, out: &FsPath) -> Result<i32> {
    let (data, red, reduced) = load(instance, overrides)?;
    require_assumptions(&data)?;
    let alpha = data.alpha;
    let choice = parse_policy(policy, data.m)?;
    let (per_path, aggregate) = match choice {
        PolicyArg::Ball(center, radius) => {
            let sup_h = data.h.sup_abs_over(&data.state_space);
            let horizon = horizon_from(
                &mc.horizon,
                || {
                    let grid = TimeGrid::for_discount(mc.dt, 1.0 / alpha, alpha)?;
                    let pilot =
                        baseline_ball_control(&data, &center, radius, &grid, mc.seed, PILOT_PATHS.min(mc.paths))?;
                    Ok((sup_h, pilot.cost_mean))
                },
                alpha,
                mc.dt,
            )?;
            let grid = TimeGrid::for_discount(mc.dt, horizon, alpha)?;
            let rep = baseline_ball_control(&data, &center, radius, &grid, mc.seed, mc.paths)?;
            let mut csv = String::from("path,cost\n");
            for (i, c) in rep.path_costs.iter().enumerate() {
                let _ = writeln!(csv, "{i},{c}");
            }
            let agg = format!(
                "statistic,value\nhorizon,{}\ncost_mean,{}\ncost_stderr,{}\nbound,{}\nbeta_hat,{}\nbeta_stderr,{}\nmean_jumps,{}\n",
                horizon, rep.cost_mean, rep.cost_stderr, rep.bound, rep.beta_hat, rep.beta_stderr, rep.mean_jumps
            );
            (csv, agg)
        }
        PolicyArg::Barrier(_) | PolicyArg::Zero => {
            let ec = EffectiveCost::new(&data, &red);
            let plan = ExtensionPlan::new(&red.m, &data.sigma, &data.theta, &data.z0, &red.rev_basis)?;
            let (lo, hi) = reduced
                .space
                .interval()
                .ok_or_else(|| Error::InvalidInput("barrier and zero policies need a scalar workload".into()))?;
            let (map, wp, b_star) = match choice {
                PolicyArg::Barrier(b) => {
                    let modes = mode_reduction(&red.g, &red.kappa)?;
                    let pol = BarrierPolicy::new(lo, b, hi, modes)?;
                    let wp = WorkloadPolicy::Barrier { lo, hi: b };
                    (pol.modes.control_map(), wp, b)
                }
                _ => {
                    let zero = ControlMap {
                        up: DVector::zeros(data.p),
                        down: DVector::zeros(data.p),
                    };
                    (zero, WorkloadPolicy::Free, hi)
                }
            };
            let sup = sup_gcheck(&ec, lo, b_star, 101)?;
            let horizon = horizon_from(
                &mc.horizon,
                || {
                    let grid = TimeGrid::for_discount(mc.dt, 1.0 / alpha, alpha)?;
                    let costs = (0..PILOT_PATHS.min(mc.paths) as u64)
                        .map(|i| {
                            barrier_path_cost(&reduced, &ec, alpha, lo, b_star, &grid, mc.seed, i).map(|c| c.holding)
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Ok((sup, mean_stderr(&costs).0))
                },
                alpha,
                mc.dt,
            )?;
            let settings = StreamSettings {
                grid: TimeGrid::for_discount(mc.dt, horizon, alpha)?,
                substeps: 1,
                check_identities: true,
            };
            let paths = (0..mc.paths as u64)
                .into_par_iter()
                .map(|i| stream_lifted_path(&data, &red, &reduced, &plan, &ec, &map, wp, &settings, mc.seed, i))
                .collect::<Result<Vec<_>>>()?;
            let mut csv = String::from("path,zeta,zeta_check,pathwise_residual,identity_residual\n");
            for (i, p) in paths.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{i},{},{},{},{}",
                    p.zeta,
                    p.zeta_check,
                    p.equivalence_residual(),
                    p.max_identity_residual
                );
            }
            let (j, j_se) = mean_stderr(&paths.iter().map(|p| p.zeta).collect::<Vec<_>>());
            let (jc, jc_se) = mean_stderr(&paths.iter().map(|p| p.zeta_check).collect::<Vec<_>>());
            let worst = paths.iter().map(|p| p.max_identity_residual).fold(0.0, f64::max);
            let offset = crate::pathsim::offset_i(&red.pi, &data.z0, &data.theta, alpha);
            let agg = format!(
                "statistic,value\nhorizon,{horizon}\nzeta_mean,{j}\nzeta_stderr,{j_se}\nzeta_check_mean,{jc}\nzeta_check_stderr,{jc_se}\noffset_i,{offset}\nmax_identity_residual,{worst}\nholding_tail_bound,{}\n",
                sup * (-alpha * horizon).exp() / alpha
            );
            (csv, agg)
        }
    };
    write_file(out, "paths_summary.csv", &per_path)?;
    write_file(out, "paths_aggregate.csv", &aggregate)?;
    print!("{aggregate}");
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_optimize(
    params: &ParamArgs,
    paths: usize,
    seed: u64,
    dt: f64,
    horizon: &str,
    btol: Option<f64>,
    profile_points: usize,
    out: &FsPath,
) -> Result<i32> {
    let model = TwoServerModel::new(params.params())?;
    require_assumptions(&model.data)?;
    let alpha = model.data.alpha;
    let w_hi = model.w_hi();
    let horizon = horizon_from(
        horizon,
        || {
            let sup = sup_gcheck(&model.ec, 0.0, w_hi, 101)?;
            let grid = TimeGrid::for_discount(dt, 1.0 / alpha, alpha)?;
            let pol = model.barrier(0.1 * w_hi)?;
            let costs = (0..PILOT_PATHS as u64)
                .map(|i| {
                    barrier_path_cost(&model.reduced, &model.ec, alpha, 0.0, pol.b_star, &grid, seed, i)
                        .map(|c| c.total(pol.modes.l1, pol.modes.l2))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((sup, mean_stderr(&costs).0))
        },
        alpha,
        dt,
    )?;
    let settings = OptimizeSettings {
        n_paths: paths,
        grid: TimeGrid::for_discount(dt, horizon, alpha)?,
        seed,
        b_tol: btol.unwrap_or_else(|| model.default_b_tol()),
        profile_points,
    };
    let res = model.optimize(settings)?;
    let mut csv = String::from("b,cost,stderr\n");
    for p in &res.profile {
        let _ = writeln!(csv, "{},{},{}", p.b, p.mean, p.stderr);
    }
    write_file(out, "profile.csv", &csv)?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    println!("l1 = {}, l2 = {}", model.modes.l1, model.modes.l2);
    println!("b* = {}, cost = {} +/- {}", res.b_star, res.cost, res.stderr);
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_equivalence(
    params: &ParamArgs,
    b_star: Option<f64>,
    seeds: &str,
    paths: usize,
    dt: f64,
    horizon: f64,
    substeps: usize,
    check_identities: bool,
    out: &FsPath,
) -> Result<i32> {
    let model = TwoServerModel::new(params.params())?;
    require_assumptions(&model.data)?;
    let seeds = parse_numbers(seeds)?
        .into_iter()
        .map(|s| {
            if s >= 0.0 && s.fract() == 0.0 {
                Ok(s as u64)
            } else {
                Err(Error::InvalidInput(format!("bad seed {s}")))
            }
        })
        .collect::<Result<Vec<u64>>>()?;
    let alpha = model.data.alpha;
    let b_star = match b_star {
        Some(b) => b,
        None => {
            let settings = OptimizeSettings {
                n_paths: 500,
                grid: TimeGrid::for_discount(1e-3, 60.0, alpha)?,
                seed: seeds.first().copied().unwrap_or(0),
                b_tol: model.default_b_tol(),
                profile_points: 0,
            };
            let b = model.optimize(settings)?.b_star;
            println!("b* = {b} (searched)");
            b
        }
    };
    let policy = model.barrier(b_star)?;
    let settings = StreamSettings {
        grid: TimeGrid::for_discount(dt, horizon, alpha)?,
        substeps,
        check_identities,
    };
    let rows = equivalence_by_seed(
        &model.data,
        &model.red,
        &model.reduced,
        &model.plan,
        &model.ec,
        &policy,
        &settings,
        &seeds,
        paths,
    )?;
    let mut csv = String::from(
        "seed,paths,J,J_stderr,J_check,J_check_stderr,I,residual,combined_stderr,paired_stderr,mean_pathwise_residual,mean_abs_discretization,max_identity_residual\n",
    );
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.n_paths,
            r.j,
            r.j_stderr,
            r.j_check,
            r.j_check_stderr,
            r.offset_i,
            r.residual,
            r.combined_stderr,
            r.paired_stderr,
            r.mean_pathwise_residual,
            r.mean_abs_discretization,
            r.max_identity_residual
        );
    }
    write_file(out, "equivalence.csv", &csv)?;
    print!("{csv}");
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_flag_parses_rows() {
        let m = parse_matrix("2 1; 0 -1").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, -1.0]));
        assert!(parse_matrix("1 2; 3").is_err());
    }

    #[test]
    fn policy_flag_variants() {
        assert!(matches!(parse_policy("barrier:2.5", 2), Ok(PolicyArg::Barrier(b)) if b == 2.5));
        assert!(matches!(parse_policy("ball:5,5,2", 2), Ok(PolicyArg::Ball(c, r)) if c == vec![5.0, 5.0] && r == 2.0));
        assert!(matches!(parse_policy("zero", 2), Ok(PolicyArg::Zero)));
        assert!(parse_policy("ball:5,2", 2).is_err());
        assert!(parse_policy("hold", 2).is_err());
    }

    #[test]
    fn unknown_command_is_an_input_error() {
        assert_eq!(run(["wf", "frobnicate"]), 2);
        assert_eq!(run(["wf", "check"]), 2);
    }
}
