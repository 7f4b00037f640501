//! Batch front door: space validation, solver invocation, sweep and matrix
//! output files, fixture generation. Results print as JSON on stdout (CSV
//! for sweeps) unless `--out` redirects them; all floats are serialized at
//! 12 significant digits so identical invocations are byte-identical.
//!
//! Exit codes: 0 success, 1 invalid input, 2 solver non-convergence,
//! 3 internal error.

mod inputs;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gromovlab::*;
use inputs::{CliError, CliResult};
use ndarray::Array1;
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "gromovlab", version, about = "Discrete Gromov-Wasserstein transport toolkit")]
struct Cli {
    /// Seed for every random choice (restart perturbations, generators).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for pairwise parallelism; falls back to
    /// GROMOVLAB_THREADS, then to the machine parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Machine-readable JSON errors on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    /// Accept pseudo-metric inputs (skip the triangle-inequality check).
    #[arg(long, global = true)]
    no_strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// JSON file with solver parameters; explicit flags override it.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    anneal_factor: Option<f64>,
    #[arg(long)]
    eta_floor: Option<f64>,
    #[arg(long)]
    outer_max: Option<usize>,
    #[arg(long)]
    sinkhorn_max: Option<usize>,
    #[arg(long)]
    sinkhorn_tol: Option<f64>,
    #[arg(long)]
    outer_tol: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    round_plan: Option<bool>,
    #[arg(long)]
    tensor_cap: Option<usize>,
}

impl SolverArgs {
    fn resolve(&self, seed: u64) -> CliResult<SolverParams> {
        let mut p = match &self.params {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str::<SolverParams>(&text)
                    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
            }
            None => SolverParams::default(),
        };
        if let Some(v) = self.eta {
            p.eta = v;
        }
        if let Some(v) = self.anneal_factor {
            p.anneal_factor = v;
        }
        if let Some(v) = self.eta_floor {
            p.eta_floor = v;
        }
        if let Some(v) = self.outer_max {
            p.outer_max = v;
        }
        if let Some(v) = self.sinkhorn_max {
            p.sinkhorn_max = v;
        }
        if let Some(v) = self.sinkhorn_tol {
            p.sinkhorn_tol = v;
        }
        if let Some(v) = self.outer_tol {
            p.outer_tol = v;
        }
        if let Some(v) = self.restarts {
            p.restarts = v;
        }
        if let Some(v) = self.round_plan {
            p.round_plan = v;
        }
        if let Some(v) = self.tensor_cap {
            p.tensor_cap = v;
        }
        p.seed = seed;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a space JSON file.
    Validate { space: PathBuf },
    /// Pairwise GW distance between two spaces.
    Gw {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Also write the optimal plan to this file.
        #[arg(long)]
        dump_plan: Option<PathBuf>,
    },
    /// Multi-marginal GW over several spaces with a coefficient matrix.
    Mgw {
        #[arg(long, num_args = 1.., required = true)]
        spaces: Vec<PathBuf>,
        /// JSON file holding the symmetric coefficient matrix.
        #[arg(long)]
        coeffs: PathBuf,
        /// Comma-separated axis indices left without a marginal constraint.
        #[arg(long)]
        free_axes: Option<String>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        dump_plan: Option<PathBuf>,
    },
    /// Linear GW between two spaces through a reference space.
    Lgw {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, value_parser = ["exact", "maps"], default_value = "exact")]
        mode: String,
        /// How anchors collapse to maps in maps mode.
        #[arg(long, value_parser = ["argmax", "euclidean-mean"], default_value = "argmax")]
        map_mode: String,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        dump_plan: Option<PathBuf>,
    },
    /// All-pairs linear GW distances of a set of spaces.
    LgwMatrix {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, num_args = 2.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_parser = ["exact", "maps"], default_value = "maps")]
        mode: String,
        #[arg(long, value_parser = ["argmax", "euclidean-mean"], default_value = "argmax")]
        map_mode: String,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Epsilon sweep of the perturbed multi-marginal problem; always CSV.
    EpsSweep {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        eps0: f64,
        #[arg(long)]
        factor: f64,
        #[arg(long)]
        steps: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Free- or fixed-support GW barycenter.
    Barycenter {
        #[arg(long, value_parser = ["free", "fixed"])]
        mode: String,
        #[arg(long, num_args = 1.., required = true)]
        spaces: Vec<PathBuf>,
        /// Comma-separated weights; uniform when omitted.
        #[arg(long)]
        rho: Option<String>,
        /// Support space JSON (fixed mode; distance_matrix only).
        #[arg(long)]
        support: Option<PathBuf>,
        /// Drop product atoms below this mass (free mode).
        #[arg(long)]
        prune_tol: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        dump_plan: Option<PathBuf>,
    },
    /// Generate a fixture space as JSON.
    Gen {
        #[command(subcommand)]
        kind: GenCommand,
    },
    /// Regenerate brute-force fixture values (dev tool).
    #[command(hide = true)]
    Oracle,
}

#[derive(Subcommand, Clone)]
enum GenCommand {
    /// Two atoms at distance `a`.
    TwoPoint {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        weights: Option<String>,
    },
    /// `n` points on the unit circle with chordal distances.
    Circle {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        weights: Option<String>,
    },
    /// `n` uniform points in `d` dimensions, seeded by the global --seed.
    RandomCloud {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long)]
        weights: Option<String>,
    },
}

struct CommandOutput {
    text: String,
    warning: Option<String>,
    exit: u8,
}

impl CommandOutput {
    fn ok(text: String) -> Self {
        CommandOutput { text, warning: None, exit: 0 }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("GROMOVLAB_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            report_error(&CliError::Io(format!("cannot build thread pool: {e}")), cli.json_errors);
            return ExitCode::from(3);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(out) => {
            if let Some(w) = &out.warning {
                eprintln!("warning: {w}");
            }
            if let Err(e) = emit(cli.out.as_deref(), &out.text) {
                report_error(&e, cli.json_errors);
                return ExitCode::from(e.exit_code());
            }
            ExitCode::from(out.exit)
        }
        Err(e) => {
            report_error(&e, cli.json_errors);
            ExitCode::from(e.exit_code())
        }
    }
}

fn report_error(e: &CliError, json_errors: bool) {
    if json_errors {
        let v = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
        eprintln!("{}", output::render(&v).trim_end());
    } else {
        eprintln!("error: {e}");
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn space_value(space: &MmSpace) -> Value {
    let mut map = Map::new();
    map.insert("label".into(), Value::String(space.label().into()));
    map.insert("weights".into(), output::vec_value(space.weights()));
    match space.coords() {
        Some(coords) => {
            map.insert("points".into(), output::matrix_value(coords));
            map.insert("metric".into(), Value::String("euclidean".into()));
        }
        None => {
            map.insert("distance_matrix".into(), output::matrix_value(space.dist()));
        }
    }
    Value::Object(map)
}

fn plan2_value(plan: &Plan2) -> Value {
    json!({
        "mass": output::matrix_value(plan.mass()),
        "mu": output::vec_value(plan.mu()),
        "nu": output::vec_value(plan.nu()),
    })
}

fn plan3_value(plan: &Plan3) -> Value {
    json!({
        "mass": output::tensor_value(&plan.mass().clone().into_dyn()),
        "sigma": output::vec_value(plan.sigma()),
        "mu": output::vec_value(plan.mu()),
        "nu": output::vec_value(plan.nu()),
    })
}

fn multiplan_value(plan: &MultiPlan) -> Value {
    json!({
        "constrained": plan.constrained().to_vec(),
        "marginals": plan.marginals().iter().map(output::vec_value).collect::<Vec<_>>(),
        "mass": output::tensor_value(plan.mass()),
    })
}

fn dump(path: Option<&Path>, value: &Value) -> CliResult<()> {
    if let Some(path) = path {
        std::fs::write(path, output::render(value))
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn parse_weights(text: Option<&String>) -> CliResult<Option<Array1<f64>>> {
    text.map(|t| inputs::parse_f64_list(t, "weights")).transpose()
}

fn run(cli: &Cli) -> CliResult<CommandOutput> {
    let strict = !cli.no_strict;
    match &cli.command {
        Command::Validate { space } => {
            let s = inputs::load_space(space, strict)?;
            let v = json!({"label": s.label(), "n": s.n(), "ok": true, "strict": strict});
            Ok(CommandOutput::ok(output::render(&v)))
        }

        Command::Gw { x, y, solver, dump_plan } => {
            let params = solver.resolve(cli.seed)?;
            let xs = inputs::load_space(x, strict)?;
            let ys = inputs::load_space(y, strict)?;
            let res = solve_gw(&xs, &ys, &params)?;
            dump(dump_plan.as_deref(), &plan2_value(&res.plan))?;
            let v = json!({
                "converged": res.converged,
                "outer_iterations": res.outer_iterations,
                "value": res.value,
            });
            Ok(CommandOutput {
                text: output::render(&v),
                warning: (!res.converged).then(|| "solver did not converge; best iterate returned".into()),
                exit: if res.converged { 0 } else { 2 },
            })
        }

        Command::Mgw { spaces, coeffs, free_axes, solver, dump_plan } => {
            let params = solver.resolve(cli.seed)?;
            let loaded: Vec<MmSpace> = spaces
                .iter()
                .map(|p| inputs::load_space(p, strict))
                .collect::<CliResult<_>>()?;
            let refs: Vec<&MmSpace> = loaded.iter().collect();
            let coeffs = inputs::load_coeffs(coeffs)?;
            let mut constrained = vec![true; refs.len()];
            if let Some(text) = free_axes {
                for axis in inputs::parse_usize_list(text, "free_axes")? {
                    if axis >= constrained.len() {
                        return Err(CliError::Input(format!(
                            "free axis {axis} out of range for {} spaces",
                            constrained.len()
                        )));
                    }
                    constrained[axis] = false;
                }
            }
            let res = solve_mgw(&refs, &coeffs, &params, &constrained)?;
            dump(dump_plan.as_deref(), &multiplan_value(&res.plan))?;
            let v = json!({
                "converged": res.converged,
                "outer_iterations": res.outer_iterations,
                "value": res.value,
            });
            Ok(CommandOutput {
                text: output::render(&v),
                warning: (!res.converged).then(|| "solver did not converge; best iterate returned".into()),
                exit: if res.converged { 0 } else { 2 },
            })
        }

        Command::Lgw { reference, x, y, mode, map_mode, solver, dump_plan } => {
            let params = solver.resolve(cli.seed)?;
            let s = inputs::load_space(reference, strict)?;
            let xs = inputs::load_space(x, strict)?;
            let ys = inputs::load_space(y, strict)?;
            let anchor_x = solve_gw(&s, &xs, &params)?;
            let anchor_y = solve_gw(&s, &ys, &params)?;
            match mode.as_str() {
                "exact" => {
                    let res = solve_lgw_exact(&s, &xs, &ys, &anchor_x.plan, &anchor_y.plan, &params)?;
                    dump(dump_plan.as_deref(), &plan3_value(&res.plan3))?;
                    let v = json!({
                        "converged": res.converged,
                        "mode": "exact",
                        "residual_sx": res.residual_sx,
                        "residual_sy": res.residual_sy,
                        "value": res.value,
                    });
                    Ok(CommandOutput {
                        text: output::render(&v),
                        warning: (!res.converged).then(|| "solver did not converge; best iterate returned".into()),
                        exit: if res.converged { 0 } else { 2 },
                    })
                }
                "maps" => {
                    if dump_plan.is_some() {
                        return Err(CliError::Input("maps mode has no 3-plan to dump".into()));
                    }
                    let mm = match map_mode.as_str() {
                        "argmax" => MapMode::ModeArgmax,
                        _ => MapMode::EuclideanMean,
                    };
                    let t1 = barycentric_map(&anchor_x.plan, mm, &xs)?;
                    let t2 = barycentric_map(&anchor_y.plan, mm, &ys)?;
                    let value = lgw_via_maps(&s, &xs, &ys, &t1, &t2)?;
                    let converged = anchor_x.converged && anchor_y.converged;
                    let v = json!({"converged": converged, "mode": "maps", "value": value});
                    Ok(CommandOutput {
                        text: output::render(&v),
                        warning: (!converged).then(|| "anchor solves did not converge".into()),
                        exit: if converged { 0 } else { 2 },
                    })
                }
                _ => unreachable!("clap restricts mode"),
            }
        }

        Command::LgwMatrix { reference, inputs: input_paths, mode, map_mode, solver } => {
            let params = solver.resolve(cli.seed)?;
            let s = inputs::load_space(reference, strict)?;
            let loaded: Vec<MmSpace> = input_paths
                .iter()
                .map(|p| inputs::load_space(p, strict))
                .collect::<CliResult<_>>()?;
            let refs: Vec<&MmSpace> = loaded.iter().collect();
            let mm = match map_mode.as_str() {
                "argmax" => MapMode::ModeArgmax,
                _ => MapMode::EuclideanMean,
            };
            let matrix_mode = match mode.as_str() {
                "exact" => MatrixMode::Exact,
                _ => MatrixMode::Maps(mm),
            };
            let matrix = lgw_matrix(&s, &refs, &params, matrix_mode)?;
            let failures: Vec<Value> = matrix
                .failures
                .iter()
                .map(|f| {
                    json!({
                        "i": f.i,
                        "j": f.j,
                        "kind": f.error.kind(),
                        "message": f.error.to_string(),
                    })
                })
                .collect();
            let v = json!({
                "labels": loaded.iter().map(|s| s.label().to_string()).collect::<Vec<_>>(),
                "failures": failures,
                "mode": mode,
                "values": output::matrix_value(&matrix.values),
            });
            Ok(CommandOutput::ok(output::render(&v)))
        }

        Command::EpsSweep { reference, x, y, eps0, factor, steps, solver } => {
            let params = solver.resolve(cli.seed)?;
            let s = inputs::load_space(reference, strict)?;
            let xs = inputs::load_space(x, strict)?;
            let ys = inputs::load_space(y, strict)?;
            let schedule = SweepSchedule { eps0: *eps0, factor: *factor, steps: *steps };
            let sweep = epsilon_sweep(&s, &xs, &ys, schedule, &params)?;
            let csv = sweep_to_csv(&sweep.records);
            match sweep.error {
                Some(e) => Ok(CommandOutput {
                    text: csv,
                    warning: Some(format!("sweep aborted: {e}; partial records written")),
                    exit: CliError::Core(e).exit_code(),
                }),
                None => Ok(CommandOutput::ok(csv)),
            }
        }

        Command::Barycenter { mode, spaces, rho, support, prune_tol, solver, dump_plan } => {
            let params = solver.resolve(cli.seed)?;
            let loaded: Vec<MmSpace> = spaces
                .iter()
                .map(|p| inputs::load_space(p, strict))
                .collect::<CliResult<_>>()?;
            let refs: Vec<&MmSpace> = loaded.iter().collect();
            let rho = match rho {
                Some(text) => BarycenterWeights::new(inputs::parse_f64_list(text, "rho")?)?,
                None => BarycenterWeights::uniform(refs.len()),
            };
            match mode.as_str() {
                "free" => {
                    if support.is_some() {
                        return Err(CliError::Input("--support applies to fixed mode only".into()));
                    }
                    let res = free_support_barycenter(&refs, &rho, &params, *prune_tol)?;
                    dump(dump_plan.as_deref(), &multiplan_value(&res.plan))?;
                    let v = json!({
                        "barycenter": space_value(&res.bary),
                        "converged": res.converged,
                        "support_size": res.bary.n(),
                        "value": res.value,
                    });
                    Ok(CommandOutput {
                        text: output::render(&v),
                        warning: (!res.converged).then(|| "solver did not converge".into()),
                        exit: if res.converged { 0 } else { 2 },
                    })
                }
                "fixed" => {
                    let support_path = support
                        .as_ref()
                        .ok_or_else(|| CliError::Input("fixed mode needs --support".into()))?;
                    if prune_tol.is_some() {
                        return Err(CliError::Input("--prune-tol applies to free mode only".into()));
                    }
                    let (dist, had_weights) = inputs::load_support(support_path)?;
                    let res = fixed_support_barycenter(&refs, &rho, &dist, &params)?;
                    dump(dump_plan.as_deref(), &multiplan_value(&res.plan))?;
                    let v = json!({
                        "converged": res.converged,
                        "sigma_star": output::vec_value(&res.sigma_star),
                        "value": res.value,
                    });
                    let mut warning = (!res.converged).then(|| "solver did not converge".to_string());
                    if had_weights {
                        let note = "support weights are the optimization output; input weights ignored";
                        warning = Some(match warning {
                            Some(w) => format!("{w}; {note}"),
                            None => note.into(),
                        });
                    }
                    Ok(CommandOutput {
                        text: output::render(&v),
                        warning,
                        exit: if res.converged { 0 } else { 2 },
                    })
                }
                _ => unreachable!("clap restricts mode"),
            }
        }

        Command::Gen { kind } => {
            let space = match kind {
                GenCommand::TwoPoint { a, weights } => {
                    generate(SpaceKind::TwoPoint { a: *a }, parse_weights(weights.as_ref())?)?
                }
                GenCommand::Circle { n, weights } => {
                    generate(SpaceKind::Circle { n: *n }, parse_weights(weights.as_ref())?)?
                }
                GenCommand::RandomCloud { n, d, weights } => generate(
                    SpaceKind::RandomCloud { seed: cli.seed, n: *n, d: *d },
                    parse_weights(weights.as_ref())?,
                )?,
            };
            Ok(CommandOutput::ok(output::render(&space_value(&space))))
        }

        Command::Oracle => {
            let fixtures = oracle_fixtures()?;
            Ok(CommandOutput::ok(output::render(&fixtures)))
        }
    }
}

/// Recomputes the brute-force fixture values the test-suite constants come
/// from.
fn oracle_fixtures() -> CliResult<Value> {
    use gromovlab::oracle::{brute_gw, brute_lgw_inner, permutation_gw_upper};
    let one = generate(SpaceKind::TwoPoint { a: 1.0 }, None)?;
    let two = generate(SpaceKind::TwoPoint { a: 2.0 }, None)?;
    let three = generate(SpaceKind::TwoPoint { a: 3.0 }, None)?;

    let brute_13 = brute_gw(&one, &three, 10_001)?;
    let perm_13 = permutation_gw_upper(&one, &three)?;
    let mixed = Plan2::independent(one.weights(), three.weights());
    let mixed_obj = gw_objective(&one, &three, &mixed)?;

    let id = Permutation::identity(2);
    let pi_sx = Plan2::from_permutation(&id, two.weights())?;
    let pi_sy = Plan2::from_permutation(&id, two.weights())?;
    let lgw2 = brute_lgw_inner(&two, &one, &three, &pi_sx, &pi_sy, 1001)?;
    let anchor_sx = brute_gw(&two, &one, 10_001)?;
    let anchor_sy = brute_gw(&two, &three, 10_001)?;

    Ok(json!({
        "triple_2_1_3": {
            "anchor_sx_gw2": anchor_sx,
            "anchor_sy_gw2": anchor_sy,
            "lgw2_permutation_anchors": lgw2,
        },
        "two_point_1_vs_3": {
            "brute_gw2": brute_13,
            "mixed_plan_objective": mixed_obj,
            "permutation_gw2": perm_13,
        },
    }))
}
