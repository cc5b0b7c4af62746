//! Batch front-end: load a model file, run accessibility / STLC analyses
//! and verification suites, emit CSV + JSON reports.
//!
//! Exit codes: 0 on completion, 1 on malformed inputs (model files, states,
//! grids), 2 when `--expect-accessible` is set and a requested state is
//! rank-deficient, 3 when a verification suite fails.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use planarctl::accessibility::{
    algebra_to_depth, rank_at, singular_scan, spanning_set, GridAxis, GridSpec,
};
use planarctl::lie::{closed_form_p_ab, evaluate_expr, right_nested_brackets, SmoothField};
use planarctl::model::{ChainModel, State};
use planarctl::pfl::control_affine;
use planarctl::report::{fmt_f64, pi_multiple};
use planarctl::stlc::{certificate_search, StlcCertificate};
use planarctl::verify::{
    energy_drift, fd_bracket_oracle, qa_vanishing_check, simulate, Drive, SimOptions,
};
use planarctl::config;

#[derive(Parser)]
#[command(
    name = "planarctl",
    version,
    about = "Accessibility and STLC analysis for N-link horizontal planar manipulators"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rank the bracket algebra at given states and report accessibility.
    Analyze(AnalyzeArgs),
    /// Grid scan: singular states and STLC certificates over angles.
    Scan(ScanArgs),
    /// Run the oracle suites (closed forms vs independent differentiation,
    /// conservation laws, scaling laws).
    Verify(VerifyArgs),
    /// List or export the built-in example models.
    Models(ModelsArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Model file (JSON).
    #[arg(long, env = "PLANARCTL_MODEL")]
    model: PathBuf,
    /// State to analyze: 2N comma-separated values (physical q then qdot);
    /// angles accept `pi` fractions like `pi/4` or `-3pi/4`. Repeatable
    /// (semicolon-separated in the environment variable).
    #[arg(long = "state", env = "PLANARCTL_STATE", value_delimiter = ';')]
    states: Vec<String>,
    /// Relative singular-value tolerance for numerical rank.
    #[arg(long, env = "PLANARCTL_TOL", default_value_t = config::RANK_TOL)]
    tol: f64,
    /// Bracket nesting depth of the generated algebra.
    #[arg(long, env = "PLANARCTL_DEPTH", default_value_t = 4)]
    depth: usize,
    /// Rank these bracket generators instead of the generated algebra,
    /// e.g. `--bracket "[g2,[f,g3]]"`. Repeatable (semicolon-separated in
    /// the environment variable).
    #[arg(long = "bracket", env = "PLANARCTL_BRACKET", value_delimiter = ';')]
    brackets: Vec<String>,
    /// Output directory for analyze.csv / analyze.json.
    #[arg(long, env = "PLANARCTL_OUT")]
    out: Option<PathBuf>,
    /// Exit with code 2 if any requested state is rank-deficient.
    #[arg(long, env = "PLANARCTL_EXPECT_ACCESSIBLE")]
    expect_accessible: bool,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long, env = "PLANARCTL_MODEL")]
    model: PathBuf,
    /// Grid axes: "q2:min:max:step,q3:min:max:step"; bounds and steps accept
    /// `pi` fractions. Unlisted angles stay at zero; velocities are zero.
    #[arg(long, env = "PLANARCTL_GRID")]
    grid: String,
    #[arg(long, env = "PLANARCTL_TOL", default_value_t = config::RANK_TOL)]
    tol: f64,
    /// Random seed recorded in the report (scans are deterministic).
    #[arg(long, env = "PLANARCTL_SEED", default_value_t = 0)]
    seed: u64,
    /// Output directory for singular_scan.csv / stlc_scan.csv /
    /// stlc_certificates.json.
    #[arg(long, env = "PLANARCTL_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, env = "PLANARCTL_MODEL")]
    model: PathBuf,
    /// Sample count per randomized suite.
    #[arg(long, env = "PLANARCTL_SAMPLES", default_value_t = 500)]
    samples: usize,
    #[arg(long, env = "PLANARCTL_SEED", default_value_t = 0)]
    seed: u64,
    /// Output directory for verify.json.
    #[arg(long, env = "PLANARCTL_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelsArgs {
    /// Print one built-in model to stdout.
    #[arg(long)]
    show: Option<String>,
    /// Write every built-in model into a directory.
    #[arg(long)]
    write_dir: Option<PathBuf>,
}

const BUILTIN_MODELS: &[(&str, &str)] = &[
    ("pendubot2", include_str!("../../../models/pendubot2.json")),
    ("acrobot2", include_str!("../../../models/acrobot2.json")),
    (
        "threelink-config1",
        include_str!("../../../models/threelink-config1.json"),
    ),
    (
        "threelink-config2",
        include_str!("../../../models/threelink-config2.json"),
    ),
    (
        "threelink-config3",
        include_str!("../../../models/threelink-config3.json"),
    ),
    ("pendubot4", include_str!("../../../models/pendubot4.json")),
];

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run() -> Result<u8> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Analyze(args) => cmd_analyze(args),
        Cmd::Scan(args) => cmd_scan(args),
        Cmd::Verify(args) => cmd_verify(args),
        Cmd::Models(args) => cmd_models(args),
    }
}

fn load_model(path: &Path) -> Result<ChainModel> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read model file {}", path.display()))?;
    ChainModel::from_json_str(&text)
        .map_err(|e| anyhow!("malformed model file {}: {e}", path.display()))
}

/// Parse an angle: plain float or a pi fraction (`pi`, `-pi/2`, `3pi/4`,
/// `2pi`).
fn parse_angle(text: &str) -> Result<f64> {
    let s = text.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Ok(v);
    }
    let (sign, rest) = match s.strip_prefix('-') {
        Some(r) => (-1.0, r),
        None => (1.0, s),
    };
    let Some(pi_pos) = rest.find("pi") else {
        bail!("cannot parse angle {text:?}");
    };
    let (num_s, tail) = rest.split_at(pi_pos);
    let tail = &tail[2..];
    let num: f64 = if num_s.is_empty() {
        1.0
    } else {
        num_s
            .parse()
            .map_err(|_| anyhow!("cannot parse angle {text:?}"))?
    };
    let den: f64 = if tail.is_empty() {
        1.0
    } else {
        let d = tail
            .strip_prefix('/')
            .ok_or_else(|| anyhow!("cannot parse angle {text:?}"))?;
        d.parse()
            .map_err(|_| anyhow!("cannot parse angle {text:?}"))?
    };
    if den == 0.0 {
        bail!("zero denominator in angle {text:?}");
    }
    Ok(sign * num * std::f64::consts::PI / den)
}

fn parse_state(text: &str, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let vals: Vec<f64> = text
        .split(',')
        .map(parse_angle)
        .collect::<Result<Vec<_>>>()
        .with_context(|| format!("bad state {text:?}"))?;
    if vals.len() != 2 * n {
        bail!(
            "state {text:?} has {} values, expected 2N = {}",
            vals.len(),
            2 * n
        );
    }
    Ok((vals[..n].to_vec(), vals[n..].to_vec()))
}

fn parse_grid(text: &str) -> Result<GridSpec> {
    let mut axes = Vec::new();
    for part in text.split(',') {
        let fields: Vec<&str> = part.split(':').collect();
        if fields.len() != 4 {
            bail!("grid axis {part:?} must be q<k>:min:max:step");
        }
        let joint: usize = fields[0]
            .trim()
            .strip_prefix('q')
            .ok_or_else(|| anyhow!("grid axis {part:?} must start with q<k>"))?
            .parse()
            .with_context(|| format!("bad joint in grid axis {part:?}"))?;
        axes.push(GridAxis {
            joint,
            min: parse_angle(fields[1])?,
            max: parse_angle(fields[2])?,
            step: parse_angle(fields[3])?,
        });
    }
    Ok(GridSpec { axes })
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------- analyze

fn cmd_analyze(args: AnalyzeArgs) -> Result<u8> {
    let model = load_model(&args.model)?;
    let n = model.n();
    let dist = if args.brackets.is_empty() {
        algebra_to_depth(&model, args.depth)
    } else {
        let set = control_affine(&model);
        let gens = args
            .brackets
            .iter()
            .map(|text| {
                text.parse::<planarctl::lie::BracketExpr>()
                    .map_err(|e| anyhow!("bad --bracket {text:?}: {e}"))
            })
            .collect::<Result<Vec<_>>>()?;
        planarctl::accessibility::Distribution::new(&set, gens)
    };

    let mut csv = String::new();
    for i in 1..=n {
        write!(csv, "q{i},q{i}_pi,").unwrap();
    }
    for i in 1..=n {
        write!(csv, "qd{i},").unwrap();
    }
    for i in 1..=2 * n {
        write!(csv, "sigma{i},").unwrap();
    }
    csv.push_str("rank,accessible\n");

    let mut json_states = Vec::new();
    let mut all_accessible = true;
    for (k, text) in args.states.iter().enumerate() {
        let (q, qd) = parse_state(text, n)?;
        let state = State::from_physical(&model, &q, &qd).map_err(|e| anyhow!("{e}"))?;
        let x = state.to_vector();
        let report = rank_at(&dist, x.as_slice(), args.tol).map_err(|e| anyhow!("{e}"))?;
        all_accessible &= report.accessible;
        println!(
            "state {k}: rank {}/{} -> {}",
            report.rank,
            report.dimension,
            if report.accessible {
                "accessible"
            } else {
                "rank-deficient"
            }
        );
        for v in &q {
            write!(csv, "{},{},", fmt_f64(*v), pi_multiple(*v)).unwrap();
        }
        for v in &qd {
            write!(csv, "{},", fmt_f64(*v)).unwrap();
        }
        for i in 0..2 * n {
            let s = report.singular_values.get(i).copied().unwrap_or(0.0);
            write!(csv, "{},", fmt_f64(s)).unwrap();
        }
        writeln!(csv, "{},{}", report.rank, report.accessible).unwrap();
        json_states.push(serde_json::json!({
            "q": q,
            "qdot": qd,
            "singular_values": report.singular_values,
            "rank": report.rank,
            "dimension": report.dimension,
            "accessible": report.accessible,
        }));
    }

    let generators: Vec<String> = dist.generators().iter().map(|e| e.to_string()).collect();
    let report = serde_json::json!({
        "model": args.model.display().to_string(),
        "unactuated_joint": model.unactuated_joint(),
        "depth": args.depth,
        "generators": generators.len(),
        "generator_exprs": if args.brackets.is_empty() {
            serde_json::Value::Null
        } else {
            serde_json::json!(generators)
        },
        "tol": args.tol,
        "states": json_states,
    });
    if let Some(dir) = &args.out {
        write_out(dir, "analyze.csv", &csv)?;
        write_out(dir, "analyze.json", &format!("{:#}\n", report))?;
    }
    if args.brackets.is_empty() {
        println!(
            "analyzed {} state(s); algebra depth {} ({} generators)",
            args.states.len(),
            args.depth,
            dist.len()
        );
    } else {
        println!(
            "analyzed {} state(s); {} requested bracket generator(s)",
            args.states.len(),
            dist.len()
        );
    }
    if args.expect_accessible && !all_accessible {
        return Ok(2);
    }
    Ok(0)
}

// ------------------------------------------------------------------- scan

fn cmd_scan(args: ScanArgs) -> Result<u8> {
    let model = load_model(&args.model)?;
    let n = model.n();
    let grid = parse_grid(&args.grid)?;
    grid.validate(n).map_err(|e| anyhow!("{e}"))?;

    let mut angle_header = String::new();
    for i in 1..=n {
        write!(angle_header, "q{i},q{i}_pi,").unwrap();
    }

    // singular-state scan (spanning family; pendubot-type only)
    if model.is_pendubot_type() {
        let rows = singular_scan(&model, &grid).map_err(|e| anyhow!("{e}"))?;
        let mut csv = angle_header.clone();
        for i in 1..=2 * n {
            write!(csv, "sigma{i},").unwrap();
        }
        csv.push_str("rank,accessible,predicate\n");
        let mut singular_count = 0usize;
        for row in &rows {
            for v in &row.q_physical {
                write!(csv, "{},{},", fmt_f64(*v), pi_multiple(*v)).unwrap();
            }
            for i in 0..2 * n {
                let s = row.singular_values.get(i).copied().unwrap_or(0.0);
                write!(csv, "{},", fmt_f64(s)).unwrap();
            }
            writeln!(
                csv,
                "{},{},{}",
                row.rank,
                row.accessible,
                fmt_f64(row.predicate)
            )
            .unwrap();
            if !row.accessible {
                singular_count += 1;
            }
        }
        if let Some(dir) = &args.out {
            write_out(dir, "singular_scan.csv", &csv)?;
        }
        println!(
            "singular scan: {} grid points, {} rank-deficient",
            rows.len(),
            singular_count
        );
    } else {
        println!("singular scan skipped: spanning family needs the base joint actuated");
    }

    // STLC scan
    let set = control_affine(&model);
    let mut pairs = Vec::new();
    for a in set.controls() {
        for b in set.controls().filter(|b| b.get() >= a.get()) {
            pairs.push((a, b));
        }
    }
    let mut csv = angle_header;
    for (a, b) in &pairs {
        write!(csv, "p{}{},", a.get(), b.get()).unwrap();
    }
    csv.push_str("rank,verdict,pair\n");

    let spanning = if model.is_pendubot_type() {
        Some(spanning_set(&model).map_err(|e| anyhow!("{e}"))?)
    } else {
        None
    };
    let mut certificates: Vec<StlcCertificate> = Vec::new();
    let mut positive = 0usize;
    let points = grid.points(n);
    for q in &points {
        let state = State::equilibrium(&model, q).map_err(|e| anyhow!("{e}"))?;
        let x = state.to_vector();
        for v in q {
            write!(csv, "{},{},", fmt_f64(*v), pi_multiple(*v)).unwrap();
        }
        for (a, b) in &pairs {
            let p = closed_form_p_ab(&set, x.as_slice(), *a, *b);
            write!(csv, "{},", fmt_f64(p)).unwrap();
        }
        if let Some(spanning) = &spanning {
            let rank = rank_at(spanning, x.as_slice(), args.tol)
                .map_err(|e| anyhow!("{e}"))?
                .rank;
            let cert = certificate_search(&model, &state).map_err(|e| anyhow!("{e}"))?;
            let verdict = if cert.found() {
                positive += 1;
                "certificate"
            } else {
                "no_certificate"
            };
            let pair = cert
                .pair
                .map(|(a, b)| format!("g{a}-g{b}"))
                .unwrap_or_default();
            writeln!(csv, "{rank},{verdict},{pair}").unwrap();
            certificates.push(cert);
        } else {
            // P_ab vanishes identically here; no certificate can exist.
            writeln!(csv, ",refused_p_ab_identically_zero,").unwrap();
        }
    }

    if let Some(dir) = &args.out {
        write_out(dir, "stlc_scan.csv", &csv)?;
        if model.is_pendubot_type() {
            let body: Vec<serde_json::Value> = certificates
                .iter()
                .map(|c| serde_json::from_str(&c.to_json()).unwrap())
                .collect();
            let doc = serde_json::json!({
                "model": args.model.display().to_string(),
                "seed": args.seed,
                "certificates": body,
            });
            write_out(dir, "stlc_certificates.json", &format!("{:#}\n", doc))?;
        }
    }
    println!(
        "stlc scan: {} grid points, {} certificates",
        points.len(),
        positive
    );
    Ok(0)
}

// ----------------------------------------------------------------- verify

struct Suite {
    name: &'static str,
    status: &'static str,
    max_residual: f64,
    threshold: f64,
    detail: String,
}

fn suite_result(name: &'static str, max_residual: f64, threshold: f64, detail: String) -> Suite {
    Suite {
        name,
        status: if max_residual < threshold {
            "pass"
        } else {
            "fail"
        },
        max_residual,
        threshold,
        detail,
    }
}

fn skipped(name: &'static str, detail: &str) -> Suite {
    Suite {
        name,
        status: "skipped",
        max_residual: 0.0,
        threshold: 0.0,
        detail: detail.to_string(),
    }
}

fn random_state(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..2 * n)
        .map(|i| {
            if i < n {
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
            } else {
                rng.gen_range(-2.0..2.0)
            }
        })
        .collect()
}

fn cmd_verify(args: VerifyArgs) -> Result<u8> {
    let model = load_model(&args.model)?;
    let set = control_affine(&model);
    let n = model.n();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut suites = Vec::new();

    // closed-form P_a against the dual and finite-difference bracket routes
    {
        let mut worst: f64 = 0.0;
        for _ in 0..args.samples {
            let x = random_state(n, &mut rng);
            for a in set.controls() {
                let expr = format!("[f,g{}]", a.get()).parse().unwrap();
                let closed = planarctl::lie::closed_form_p_a(&set, &x, a);
                let dual = evaluate_expr(&expr, &set, &x).map_err(|e| anyhow!("{e}"))?[n];
                let fd = fd_bracket_oracle(&set, &expr, &x, 1.0).map_err(|e| anyhow!("{e}"))?[n];
                let scale = 1.0 + closed.abs();
                worst = worst
                    .max((closed - dual).abs() / scale)
                    .max((closed - fd).abs() / scale);
            }
        }
        suites.push(suite_result(
            "p_a_closed_form",
            worst,
            1e-7,
            format!("{} states, dual + finite-difference routes", args.samples),
        ));
    }

    // closed-form P_ab
    {
        let mut worst: f64 = 0.0;
        for _ in 0..args.samples {
            let x = random_state(n, &mut rng);
            for a in set.controls() {
                for b in set.controls().filter(|b| b.get() >= a.get()) {
                    let expr = format!("[g{},[f,g{}]]", a.get(), b.get()).parse().unwrap();
                    let closed = closed_form_p_ab(&set, &x, a, b);
                    let dual = evaluate_expr(&expr, &set, &x).map_err(|e| anyhow!("{e}"))?[n];
                    let fd =
                        fd_bracket_oracle(&set, &expr, &x, 1.0).map_err(|e| anyhow!("{e}"))?[n];
                    let scale = 1.0 + closed.abs();
                    worst = worst
                        .max((closed - dual).abs() / scale)
                        .max((closed - fd).abs() / scale);
                }
            }
        }
        suites.push(suite_result(
            "p_ab_closed_form",
            worst,
            1e-5,
            format!("{} states, dual + finite-difference routes", args.samples),
        ));
    }

    // velocity independence of [g_a,[f,g_b]] passive row, by differentiation
    {
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let x = random_state(n, &mut rng);
            for a in set.controls() {
                for b in set.controls() {
                    let expr: planarctl::lie::BracketExpr =
                        format!("[g{},[f,g{}]]", a.get(), b.get()).parse().unwrap();
                    let field = SmoothField::from_expr(&set, expr);
                    let jac = field.jacobian(&x).map_err(|e| anyhow!("{e}"))?;
                    for col in n..2 * n {
                        worst = worst.max(jac[(n, col)].abs());
                    }
                }
            }
        }
        suites.push(suite_result(
            "p_ab_velocity_independence",
            worst,
            1e-10,
            "sensitivity of the passive row to every velocity coordinate".into(),
        ));
    }

    // Q_a vanishing (base-unactuated only)
    if model.unactuated_joint() == 1 {
        let worst = qa_vanishing_check(&model, args.samples, &mut rng)
            .map_err(|e| anyhow!("{e}"))?;
        suites.push(suite_result(
            "qa_vanishing",
            worst,
            1e-9,
            format!("max |Q_a| over {} states", args.samples),
        ));
    } else {
        suites.push(skipped(
            "qa_vanishing",
            "requires the base joint unactuated",
        ));
    }

    // momentum conservation (base-unactuated only)
    if model.unactuated_joint() == 1 {
        let q0: Vec<f64> = (0..n).map(|i| 0.3 + 0.2 * i as f64).collect();
        let qd0: Vec<f64> = (0..n).map(|i| 0.1 * (i as f64 + 1.0)).collect();
        let x0 = State::from_physical(&model, &q0, &qd0).map_err(|e| anyhow!("{e}"))?;
        let amps: Vec<f64> = (0..n - 1).map(|i| 1.0 + 0.3 * i as f64).collect();
        let freqs: Vec<f64> = (0..n - 1).map(|i| 2.0 + 0.5 * i as f64).collect();
        let drive = Drive::sinusoid_inputs(amps, freqs);
        let traj = simulate(&model, &x0, &drive, 5.0, &SimOptions::default())
            .map_err(|e| anyhow!("{e}"))?;
        let drift = planarctl::accessibility::momentum_invariant(&model, &traj)
            .map_err(|e| anyhow!("{e}"))?;
        if let Some(dir) = &args.out {
            write_out(dir, "trajectory_momentum.csv", &traj.to_csv(&model))?;
        }
        suites.push(suite_result(
            "momentum_conservation",
            drift,
            1e-7,
            "5 s sinusoidal-input trajectory".into(),
        ));
    } else {
        suites.push(skipped(
            "momentum_conservation",
            "requires the base joint unactuated",
        ));
    }

    // kinetic-energy conservation under zero torque
    {
        let q0: Vec<f64> = (0..n).map(|i| 0.4 - 0.3 * i as f64).collect();
        let qd0: Vec<f64> = (0..n).map(|i| 0.5 - 0.15 * i as f64).collect();
        let x0 = State::from_physical(&model, &q0, &qd0).map_err(|e| anyhow!("{e}"))?;
        let traj = simulate(&model, &x0, &Drive::zero_torque(), 5.0, &SimOptions::default())
            .map_err(|e| anyhow!("{e}"))?;
        let drift = energy_drift(&model, &traj);
        if let Some(dir) = &args.out {
            write_out(dir, "trajectory_energy.csv", &traj.to_csv(&model))?;
        }
        suites.push(suite_result(
            "energy_conservation",
            drift,
            1e-7,
            "5 s zero-torque trajectory".into(),
        ));
    }

    // velocity-scaling law of generated brackets
    {
        let exprs: Vec<_> = right_nested_brackets(n - 1, 4)
            .into_iter()
            .filter(|e| e.control_excess() <= 1 && e.degree() >= 2)
            .take(20)
            .collect();
        let mut worst: f64 = 0.0;
        for expr in &exprs {
            let predicted = expr.delta0() as isize
                - expr.control_counts().map(|(_, c)| c as isize).sum::<isize>();
            for lam in [2.0_f64, 3.0] {
                let x = random_state(n, &mut rng);
                let mut xs = x.clone();
                for v in xs[n..].iter_mut() {
                    *v *= lam;
                }
                let base = evaluate_expr(expr, &set, &x).map_err(|e| anyhow!("{e}"))?;
                let scaled = evaluate_expr(expr, &set, &xs).map_err(|e| anyhow!("{e}"))?;
                for i in 0..2 * n {
                    let deg = if i < n { predicted } else { predicted + 1 };
                    if base[i].abs() > 1e-6 && deg >= 0 {
                        let measured = (scaled[i] / base[i]).abs().ln() / lam.ln();
                        worst = worst.max((measured - deg as f64).abs());
                    }
                }
            }
        }
        suites.push(suite_result(
            "velocity_scaling_law",
            worst,
            1e-6,
            format!("{} brackets, lambda in {{2, 3}}", exprs.len()),
        ));
    }

    let mut failed = false;
    for s in &suites {
        match s.status {
            "skipped" => println!("{}: skipped ({})", s.name, s.detail),
            "pass" => println!(
                "{}: pass (max residual {:.3e} < {:.1e})",
                s.name, s.max_residual, s.threshold
            ),
            _ => {
                failed = true;
                println!(
                    "{}: FAIL (max residual {:.3e} >= {:.1e})",
                    s.name, s.max_residual, s.threshold
                );
            }
        }
    }

    let doc = serde_json::json!({
        "model": args.model.display().to_string(),
        "seed": args.seed,
        "samples": args.samples,
        "suites": suites.iter().map(|s| serde_json::json!({
            "name": s.name,
            "status": s.status,
            "max_residual": s.max_residual,
            "threshold": s.threshold,
            "detail": s.detail,
        })).collect::<Vec<_>>(),
    });
    if let Some(dir) = &args.out {
        write_out(dir, "verify.json", &format!("{:#}\n", doc))?;
    }
    Ok(if failed { 3 } else { 0 })
}

// ----------------------------------------------------------------- models

fn cmd_models(args: ModelsArgs) -> Result<u8> {
    if let Some(name) = &args.show {
        let body = BUILTIN_MODELS
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| *b)
            .ok_or_else(|| anyhow!("unknown built-in model {name:?}"))?;
        print!("{body}");
        return Ok(0);
    }
    if let Some(dir) = &args.write_dir {
        for (name, body) in BUILTIN_MODELS {
            write_out(dir, &format!("{name}.json"), body)?;
        }
        println!("wrote {} models to {}", BUILTIN_MODELS.len(), dir.display());
        return Ok(0);
    }
    for (name, body) in BUILTIN_MODELS {
        let model = ChainModel::from_json_str(body).map_err(|e| anyhow!("{e}"))?;
        println!(
            "{name}: {} links, unactuated joint {}",
            model.n(),
            model.unactuated_joint()
        );
    }
    Ok(0)
}
