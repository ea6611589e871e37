//! Command-line front end: model inspection, constant computation,
//! observer design, co-simulation, and randomized verification.
//!
//! Exit codes: 0 success, 1 verification found violations, 2 input error,
//! 3 no feasibility certificate found, 4 numerical failure.

mod report;
mod sysfile;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};

use nlbound::bounds::{self, Method};
use nlbound::expr::{poly, SystemModel};
use nlbound::globopt::BnbConfig;
use nlbound::lmi::{self, LmiError, LmiKind, LmiProblem, SolveConfig};
use nlbound::sim::{self, InputSignal, SimConfig, SinusoidChannel};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NO_CERTIFICATE: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "nlbound", version, about = "Nonlinearity bounds and observer synthesis for nonlinear dynamic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the parsed model: dimensions, domain box, and the symbolic
    /// Jacobian of G*f.
    Check {
        /// System file path.
        system: PathBuf,
    },
    /// Compute nonlinearity constants and write a report file.
    Bounds(BoundsArgs),
    /// Solve the observer-design inequality for a gain, from a report.
    Design(DesignArgs),
    /// Co-simulate plant and observer with a gain file, writing a CSV.
    Simulate(SimulateArgs),
    /// Randomly audit the inequalities in a report against the model.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct BoundsArgs {
    system: PathBuf,
    /// One-sided constant route.
    #[arg(long, value_enum, default_value_t = MethodArg::Gershgorin)]
    method: MethodArg,
    /// First epsilon of the quadratic-inner-bound parameterization.
    #[arg(long, default_value_t = 1e5)]
    eps1: f64,
    /// Second epsilon of the quadratic-inner-bound parameterization.
    #[arg(long, default_value_t = 1e-1)]
    eps2: f64,
    /// Branch-and-bound gap tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Branch-and-bound box budget.
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    /// Output report path (default: `<system stem>.gamma`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    system: PathBuf,
    /// Bounds report produced by the `bounds` command.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::OslQib)]
    kind: KindArg,
    /// Strictness margin; default scales with the plant matrix.
    #[arg(long)]
    delta: Option<f64>,
    /// Output gain path (default: `<system stem>.gain`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    system: PathBuf,
    /// Gain file produced by the `design` command.
    #[arg(long)]
    gain: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Comma-separated plant initial state (default: (1, -1, 0, ...)).
    #[arg(long)]
    x0: Option<String>,
    /// Comma-separated observer initial state (default: origin).
    #[arg(long)]
    xhat0: Option<String>,
    /// Input signal: `zero`, `const:v1,v2,...`, or
    /// `sin:amp,omega,phase[;amp,omega,phase...]` per channel.
    #[arg(long, default_value = "zero")]
    input: String,
    /// Output CSV path (default: `<system stem>.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    system: PathBuf,
    /// Bounds report whose constants are audited.
    #[arg(long)]
    report: PathBuf,
    /// Number of random pairs to audit.
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Frobenius,
    Gershgorin,
    Thm3,
    All,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Frobenius => Method::Frobenius,
            MethodArg::Gershgorin => Method::Gershgorin,
            MethodArg::Thm3 => Method::Thm3,
            MethodArg::All => Method::All,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Lipschitz,
    #[value(name = "osl_qib")]
    OslQib,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { system } => cmd_check(&system),
        Command::Bounds(args) => cmd_bounds(&args),
        Command::Design(args) => cmd_design(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Verify(args) => cmd_verify(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {} ({})", e.message, e.what);
            ExitCode::from(e.code)
        }
    }
}

struct CmdError {
    code: u8,
    what: &'static str,
    message: String,
}

impl CmdError {
    fn input(message: impl Into<String>) -> CmdError {
        CmdError {
            code: EXIT_INPUT,
            what: "input error",
            message: message.into(),
        }
    }

    fn numerical(message: impl Into<String>) -> CmdError {
        CmdError {
            code: EXIT_NUMERICAL,
            what: "numerical failure",
            message: message.into(),
        }
    }
}

fn load_model(path: &Path) -> Result<SystemModel, CmdError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| CmdError::input(format!("{}: {e}", path.display())))?;
    sysfile::parse_system(&content).map_err(|e| CmdError::input(e.to_string()))
}

fn default_out(system: &Path, ext: &str) -> PathBuf {
    let stem = system
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    PathBuf::from(format!("{stem}.{ext}"))
}

fn write_file(path: &Path, content: &str) -> Result<(), CmdError> {
    std::fs::write(path, content)
        .map_err(|e| CmdError::input(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

fn cmd_check(system: &Path) -> Result<ExitCode, CmdError> {
    let model = load_model(system)?;
    println!("system: {}", system.display());
    println!(
        "dimensions: n = {} states, m = {} inputs, p = {} outputs, g = {} nonlinearities",
        model.n, model.m, model.p, model.g
    );
    println!("omega:");
    for (i, iv) in model.omega.dims.iter().enumerate() {
        let name = if i < model.n {
            format!("x{}", i + 1)
        } else {
            format!("u{}", i - model.n + 1)
        };
        println!("  {name} in [{}, {}]", iv.lo, iv.hi);
    }
    let xi = model
        .jacobian_exprs()
        .map_err(|e| CmdError::input(e.to_string()))?;
    let rendered: Vec<Vec<String>> = xi
        .iter()
        .map(|row| {
            row.iter()
                .map(|e| poly::to_polynomial_string(e, model.n, model.m)
                    .unwrap_or_else(|| e.to_string()))
                .collect()
        })
        .collect();
    let width = rendered
        .iter()
        .flat_map(|r| r.iter().map(|s| s.len()))
        .max()
        .unwrap_or(1);
    println!("jacobian of G*f with respect to x:");
    for row in &rendered {
        let cells: Vec<String> = row.iter().map(|s| format!("{s:width$}")).collect();
        println!("  [ {} ]", cells.join("   "));
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

fn cmd_bounds(args: &BoundsArgs) -> Result<ExitCode, CmdError> {
    if args.tol <= 0.0 {
        return Err(CmdError::input("--tol must be positive"));
    }
    if args.budget == 0 {
        return Err(CmdError::input("--budget must be at least 1"));
    }
    let model = load_model(&args.system)?;
    let cfg = BnbConfig {
        tol: args.tol,
        max_boxes: args.budget,
        ..BnbConfig::default()
    };
    let report = bounds::compute_report(&model, args.method.into(), args.eps1, args.eps2, &cfg)
        .map_err(map_bounds_err)?;

    let text = report::write_report(&report, &args.system.display().to_string(), args.tol, args.budget);
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| default_out(&args.system, "gamma"));
    write_file(&out, &text)?;

    println!("constant      value");
    println!("gamma_l       {:.6e}", report.gamma_l);
    println!(
        "gamma_s       {:.6e}   enclosure [{:.6e}, {:.6e}]   ({})",
        report.gamma_s,
        report.gamma_s_enclosure.lb,
        report.gamma_s_enclosure.ub,
        report.method.name()
    );
    println!(
        "gamma_lower   {:.6e}   enclosure [{:.6e}, {:.6e}]",
        report.gamma_lower, report.gamma_lower_enclosure.lb, report.gamma_lower_enclosure.ub
    );
    println!(
        "gamma_m       {:.6e}   enclosure [{:.6e}, {:.6e}]",
        report.gamma_m, report.gamma_m_enclosure.lb, report.gamma_m_enclosure.ub
    );
    println!("gamma_q1      {:.6e}   (eps1 = {:e}, eps2 = {:e})", report.gamma_q1, report.eps1, report.eps2);
    println!("gamma_q2      {:.6e}", report.gamma_q2);
    for (method, gs) in &report.gamma_s_by_method {
        println!("gamma_s[{}] = {:.6e}", method.name(), gs);
    }
    println!(
        "necessity_eq9 {}",
        if report.necessity_ok { "ok" } else { "violated" }
    );
    println!("report written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn map_bounds_err(e: bounds::BoundsError) -> CmdError {
    use bounds::BoundsError::*;
    match e {
        NegativeEpsilon { .. } | PointOutsideDomain => CmdError::input(e.to_string()),
        Domain(_) | Expr(_) | Mat(_) | NecessityViolated { .. } => {
            CmdError::numerical(e.to_string())
        }
    }
}

// ---------------------------------------------------------------------------
// design
// ---------------------------------------------------------------------------

fn cmd_design(args: &DesignArgs) -> Result<ExitCode, CmdError> {
    let model = load_model(&args.system)?;
    let report_text = std::fs::read_to_string(&args.report)
        .map_err(|e| CmdError::input(format!("{}: {e}", args.report.display())))?;
    let parsed = report::parse_report(&report_text).map_err(|e| CmdError::input(e.to_string()))?;

    if parsed.necessity_ok == Some(false) {
        eprintln!(
            "warning: report marks the quadratic-inner-bound necessity check as violated; \
             the constants cannot come from a genuine nonlinearity"
        );
    }
    let kind = match args.kind {
        KindArg::Lipschitz => LmiKind::Lipschitz {
            gamma_l: parsed.get("gamma_l").map_err(|e| CmdError::input(e.to_string()))?,
        },
        KindArg::OslQib => LmiKind::OslQib {
            gamma_s: parsed.get("gamma_s").map_err(|e| CmdError::input(e.to_string()))?,
            gamma_q1: parsed.get("gamma_q1").map_err(|e| CmdError::input(e.to_string()))?,
            gamma_q2: parsed.get("gamma_q2").map_err(|e| CmdError::input(e.to_string()))?,
        },
    };
    let delta = args.delta.unwrap_or_else(|| LmiProblem::default_delta(&model.a));
    let problem = LmiProblem::new(kind, model.a.clone(), model.c.clone(), delta)
        .map_err(|e| CmdError::input(e.to_string()))?;

    match lmi::solve(&problem, &SolveConfig::default()) {
        Ok(solution) => {
            let cert = lmi::certify(&problem, &solution)
                .map_err(|e| CmdError::numerical(e.to_string()))?;
            if !cert.ok {
                return Err(CmdError::numerical(
                    "solver returned a point that fails independent certification",
                ));
            }
            let kind_name = match args.kind {
                KindArg::Lipschitz => "lipschitz",
                KindArg::OslQib => "osl_qib",
            };
            let text = report::write_gain(
                &solution.gain,
                kind_name,
                delta,
                cert.lambda_lmi_max,
                cert.lambda_p_min,
            );
            let out = args
                .out
                .clone()
                .unwrap_or_else(|| default_out(&args.system, "gain"));
            write_file(&out, &text)?;
            println!(
                "feasible: lambda_lmi_max = {:.6e} <= -delta, lambda_p_min = {:.6e} >= delta (delta = {:.3e})",
                cert.lambda_lmi_max, cert.lambda_p_min, delta
            );
            println!("gain written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Err(LmiError::Infeasible {
            residual,
            iterations,
            ..
        }) => {
            eprintln!(
                "no certificate found: cone residual {residual:.3e} after {iterations} iterations \
                 (this reports a search failure, not a proof of infeasibility)"
            );
            Ok(ExitCode::from(EXIT_NO_CERTIFICATE))
        }
        Err(e) => Err(CmdError::numerical(e.to_string())),
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn parse_vec(src: &str, n: usize, what: &str) -> Result<Vec<f64>, CmdError> {
    let vals: Result<Vec<f64>, _> = src
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect();
    let vals = vals.map_err(|_| CmdError::input(format!("{what}: invalid number in `{src}`")))?;
    if vals.len() != n {
        return Err(CmdError::input(format!(
            "{what}: expected {n} values, found {}",
            vals.len()
        )));
    }
    Ok(vals)
}

fn parse_input(src: &str, m: usize) -> Result<InputSignal, CmdError> {
    if src == "zero" {
        return Ok(InputSignal::Zero);
    }
    if let Some(rest) = src.strip_prefix("const:") {
        return Ok(InputSignal::Constant(parse_vec(rest, m, "--input const")?));
    }
    if let Some(rest) = src.strip_prefix("sin:") {
        let channels: Result<Vec<SinusoidChannel>, CmdError> = rest
            .split(';')
            .map(|ch| {
                let parts = parse_vec(ch, 3, "--input sin channel")?;
                Ok(SinusoidChannel {
                    amp: parts[0],
                    omega: parts[1],
                    phase: parts[2],
                })
            })
            .collect();
        let channels = channels?;
        if channels.len() != m {
            return Err(CmdError::input(format!(
                "--input sin: expected {m} channels, found {}",
                channels.len()
            )));
        }
        return Ok(InputSignal::Sinusoid(channels));
    }
    Err(CmdError::input(format!(
        "--input must be `zero`, `const:...`, or `sin:...`, found `{src}`"
    )))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode, CmdError> {
    let model = load_model(&args.system)?;
    let gain_text = std::fs::read_to_string(&args.gain)
        .map_err(|e| CmdError::input(format!("{}: {e}", args.gain.display())))?;
    let (gain, _, _) = report::parse_gain(&gain_text).map_err(|e| CmdError::input(e.to_string()))?;

    let mut cfg = SimConfig::default_for(&model);
    cfg.t_end = args.t_end;
    cfg.dt = args.dt;
    if let Some(x0) = &args.x0 {
        cfg.x0 = parse_vec(x0, model.n, "--x0")?;
    }
    if let Some(xhat0) = &args.xhat0 {
        cfg.xhat0 = parse_vec(xhat0, model.n, "--xhat0")?;
    }
    cfg.input = parse_input(&args.input, model.m)?;

    let traj = sim::run(&model, &gain, &cfg).map_err(|e| match e {
        sim::SimError::BadConfig(_) => CmdError::input(e.to_string()),
        _ => CmdError::numerical(e.to_string()),
    })?;

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| default_out(&args.system, "csv"));
    write_file(&out, &traj.to_csv())?;
    println!(
        "simulated {} steps to t = {}: final estimation error {:.6e}",
        traj.times.len() - 1,
        traj.times.last().unwrap(),
        traj.final_error()
    );
    println!("trajectory written to {}", out.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

const VERIFY_SLACK: f64 = 1e-9;

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode, CmdError> {
    let model = load_model(&args.system)?;
    let report_text = std::fs::read_to_string(&args.report)
        .map_err(|e| CmdError::input(format!("{}: {e}", args.report.display())))?;
    let parsed = report::parse_report(&report_text).map_err(|e| CmdError::input(e.to_string()))?;
    let gamma_s = parsed.get("gamma_s").map_err(|e| CmdError::input(e.to_string()))?;
    let gamma_q1 = parsed.get("gamma_q1").map_err(|e| CmdError::input(e.to_string()))?;
    let gamma_q2 = parsed.get("gamma_q2").map_err(|e| CmdError::input(e.to_string()))?;

    if let Some(method) = &parsed.method {
        println!("auditing constants computed by the `{method}` route");
    }
    if args.samples == 0 {
        println!("warning: 0 samples requested; verification passes vacuously");
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let mut violations: u64 = 0;
    let mut first_witness: Option<(String, Vec<f64>)> = None;

    // Deterministic probe points along the first state axis are audited
    // before any random sampling, so constant pairs that fail there are
    // reported with a stable witness.
    if model.n == 2 && model.m == 0 {
        for x in [[1.0, 0.0], [0.5, 0.0]] {
            if model.omega.contains_point(&x) && model.omega.contains_point(&[0.0, 0.0]) {
                let audit = bounds::qib_audit(&model, gamma_q1, gamma_q2, &x, &[0.0, 0.0], &[])
                    .map_err(map_bounds_err)?;
                if audit.lhs > audit.rhs + VERIFY_SLACK {
                    violations += 1;
                    first_witness.get_or_insert(("qib probe".into(), x.to_vec()));
                }
            }
        }
    }

    let draw_state = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..model.n)
            .map(|i| {
                let d = model.omega.dims[i];
                rng.gen_range(d.lo..=d.hi)
            })
            .collect()
    };

    for _ in 0..args.samples {
        let x = draw_state(&mut rng);
        let xh = draw_state(&mut rng);
        let u: Vec<f64> = (model.n..model.n + model.m)
            .map(|i| {
                let d = model.omega.dims[i];
                rng.gen_range(d.lo..=d.hi)
            })
            .collect();
        let osl = bounds::osl_audit(&model, gamma_s, &x, &xh, &u).map_err(map_bounds_err)?;
        if osl.lhs > osl.rhs + VERIFY_SLACK {
            violations += 1;
            first_witness.get_or_insert(("osl".into(), x.clone()));
        }
        let qib =
            bounds::qib_audit(&model, gamma_q1, gamma_q2, &x, &xh, &u).map_err(map_bounds_err)?;
        if qib.lhs > qib.rhs + VERIFY_SLACK {
            violations += 1;
            first_witness.get_or_insert(("qib".into(), x.clone()));
        }
    }

    // Known-bad constant pairs must fail their audits; a model for which
    // they pass would invalidate the necessity analysis.
    let mut replay_ok = true;
    if model.n == 2 && model.m == 0 {
        let probes: [(f64, f64, [f64; 2]); 2] = [
            (-200.0, -141.0, [1.0, 0.0]),
            (-99.0, -100.0, [0.5, 0.0]),
        ];
        for (gq1, gq2, x) in probes {
            if model.omega.contains_point(&[x[0], x[1]]) {
                let audit = bounds::qib_audit(&model, gq1, gq2, &x, &[0.0, 0.0], &[])
                    .map_err(map_bounds_err)?;
                println!(
                    "counterexample replay (gq1 = {gq1}, gq2 = {gq2}, x = [{}, {}]): lhs = {}, rhs = {}, holds = {}",
                    x[0], x[1], audit.lhs, audit.rhs, audit.holds
                );
                if audit.holds {
                    replay_ok = false;
                }
            }
        }
    }

    if violations == 0 && replay_ok {
        println!(
            "pass: {} sampled pairs satisfied both inequalities (slack {VERIFY_SLACK:e})",
            args.samples
        );
        Ok(ExitCode::SUCCESS)
    } else {
        if let Some((which, x)) = first_witness {
            println!(
                "fail: {violations} violations; first witness ({which}) at x = [{}]",
                x.iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        } else {
            println!("fail: counterexample replay unexpectedly satisfied the inequality");
        }
        Ok(ExitCode::from(EXIT_VERIFY_FAILED))
    }
}
