use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use ctmc_bounds::bound::{BoundCertificate, RateSpec};
use ctmc_bounds::diffineq;
use ctmc_bounds::error::Error;
use ctmc_bounds::export::{reduced_csv, svg_line_plot, trajectory_csv};
use ctmc_bounds::lognorm;
use ctmc_bounds::lyapunov;
use ctmc_bounds::matrices::{build_bstar, WeightVector};
use ctmc_bounds::model::ChainModel;
use ctmc_bounds::presets;
use ctmc_bounds::transient;

#[derive(Parser)]
#[command(
    name = "ctmc-bounds",
    about = "Convergence-rate certificates and transient solutions for finite \
             inhomogeneous continuous-time Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Lognorm,
    Lyapunov,
    Diffineq,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Compute convergence certificates for a model file.
    Bound(BoundArgs),
    /// Integrate the forward Kolmogorov system and export the solution.
    Solve(SolveArgs),
    /// Re-check a certificate against two transient solutions.
    Validate(ValidateArgs),
    /// Reproduce a built-in example end to end.
    Examples(ExamplesArgs),
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    method: MethodArg,
    /// Template parameter for the differential-inequality method.
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    /// Points per period for sampled rates.
    #[arg(long, default_value_t = 2001)]
    grid: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    model: PathBuf,
    /// Initial state index, or "uniform".
    #[arg(long, default_value = "0")]
    initial: String,
    /// Integration horizon: start and end time.
    #[arg(long, num_args = 2, default_values_t = [0.0, 10.0])]
    horizon: Vec<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// States to include in the reduced CSV (comma-separated).
    #[arg(long, value_delimiter = ',')]
    states: Vec<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = false)]
    plot: bool,
    /// Use the A-stable fixed-step fallback solver (for stiff models).
    #[arg(long, default_value_t = false)]
    stiff: bool,
    /// Fixed step size for --stiff.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    cert: PathBuf,
    #[arg(long, num_args = 2, default_values_t = [0.0, 10.0])]
    horizon: Vec<f64>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ExamplesArgs {
    /// Which example to reproduce (1 or 2).
    #[arg(long)]
    which: u32,
    /// Shrunk state space for quick runs; omit for the headline size.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, default_value = "examples-out")]
    out: PathBuf,
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::InvalidModel(_) | Error::NotApplicable(_) | Error::InvalidWeights(_) => {
            ExitCode::from(2)
        }
        _ => ExitCode::from(3),
    }
}

fn read_model(path: &Path) -> Result<ChainModel, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(2)
    })?;
    let model: ChainModel = serde_json::from_str(&text).map_err(|e| {
        eprintln!("error: {} line {}: {e}", path.display(), e.line());
        ExitCode::from(2)
    })?;
    if let Err(e) = model.check_valid() {
        eprintln!("error: {e}");
        return Err(ExitCode::from(2));
    }
    Ok(model)
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExitCode> {
    if let Some(dir) = path.parent() {
        let _ = fs::create_dir_all(dir);
    }
    fs::write(path, contents).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        ExitCode::from(3)
    })
}

fn rate_summary(rate: &RateSpec) -> String {
    match rate {
        RateSpec::Constant { value } => format!("{value:.6} (constant)"),
        _ => format!("{:.6} (period mean)", rate.mean()),
    }
}

/// Weights making the off-diagonal of B** antisymmetric, inferred from
/// adjacent entry ratios of B* at a reference phase.
fn infer_antisym_weights(model: &ChainModel) -> Result<WeightVector, Error> {
    let bstar = build_bstar(model)?;
    let s = model.size;
    let t0 = 0.123;
    let m = bstar.eval(t0);
    // Accumulate in log space and center, so steeply geometric weight
    // profiles stay within f64 range (the similarity is scale-free).
    let mut log_d = vec![0.0_f64; s];
    for k in 0..s - 1 {
        let up = m[(k, k + 1)];
        let dn = -m[(k + 1, k)];
        if up <= 0.0 || dn <= 0.0 {
            return Err(Error::NotApplicable(format!(
                "cannot infer antisymmetrizing weights: entries around ({k},{}) have \
                 unusable signs",
                k + 1
            )));
        }
        log_d[k + 1] = log_d[k] + 0.5 * (up / dn).ln();
    }
    let mid = log_d[s / 2];
    WeightVector::unsigned(log_d.iter().map(|l| (l - mid).exp()).collect())
}

fn lognorm_certificate(model: &ChainModel, grid: usize) -> Result<BoundCertificate, Error> {
    if model.is_homogeneous() {
        if let Ok(out) = lognorm::sharp_bd_bound(model) {
            return Ok(out.certificate);
        }
    }
    lognorm::ergodicity_bound(model, &WeightVector::ones(model.size), grid)
        .map(|o| o.certificate)
}

fn lyapunov_certificate(model: &ChainModel, grid: usize) -> Result<BoundCertificate, Error> {
    match lyapunov::bd_l2_bound(model) {
        Ok((cert, _)) => return Ok(cert),
        Err(Error::NotApplicable(_)) => {}
        Err(e) => return Err(e),
    }
    match lyapunov::batch_arrival_bound(model) {
        Ok(cert) => return Ok(cert),
        Err(Error::NotApplicable(_)) => {}
        Err(e) => return Err(e),
    }
    let d = infer_antisym_weights(model)?;
    lyapunov::antisym_offdiag_bound(model, &d, grid, None)
}

fn diffineq_certificate(
    model: &ChainModel,
    eps: f64,
    grid: usize,
) -> Result<BoundCertificate, Error> {
    match diffineq::batch_service_bound(model, eps) {
        Ok(cert) => return Ok(cert),
        Err(Error::NotApplicable(_)) => {}
        Err(e) => return Err(e),
    }
    let bstar = build_bstar(model)?;
    let (alpha, worst) = diffineq::exhaustive_alpha(&bstar, &[eps], grid)?;
    let d = diffineq::template_weights(&worst, eps)?;
    Ok(diffineq::assemble_certificate(
        model,
        RateSpec::Sampled { rate: alpha },
        &d,
    ))
}

fn cmd_bound(args: &BoundArgs) -> Result<(), ExitCode> {
    let model = read_model(&args.model)?;
    let methods: Vec<(&str, Result<BoundCertificate, Error>)> = match args.method {
        MethodArg::Lognorm => vec![("lognorm", lognorm_certificate(&model, args.grid))],
        MethodArg::Lyapunov => vec![("lyapunov", lyapunov_certificate(&model, args.grid))],
        MethodArg::Diffineq => vec![(
            "diffineq",
            diffineq_certificate(&model, args.eps, args.grid),
        )],
        MethodArg::All => vec![
            ("lognorm", lognorm_certificate(&model, args.grid)),
            ("lyapunov", lyapunov_certificate(&model, args.grid)),
            (
                "diffineq",
                diffineq_certificate(&model, args.eps, args.grid),
            ),
        ],
    };
    println!(
        "{:<10} {:<26} {:>10} {:>6} {:>6} {:>8}",
        "method", "rate", "C", "norm", "sharp", "ergodic"
    );
    let mut failure: Option<ExitCode> = None;
    for (name, outcome) in &methods {
        match outcome {
            Ok(cert) => {
                println!(
                    "{:<10} {:<26} {:>10.4} {:>6} {:>6} {:>8}",
                    name,
                    rate_summary(&cert.rate),
                    cert.constant,
                    match cert.norm {
                        ctmc_bounds::bound::NormTag::L1 => "l1",
                        ctmc_bounds::bound::NormTag::L2 => "l2",
                    },
                    cert.sharp,
                    cert.is_ergodic_by_this_method()
                );
                let path = args.out.join(format!("certificate-{name}.json"));
                let json = serde_json::to_string_pretty(cert).expect("certificate serializes");
                write_file(&path, &json)?;
            }
            Err(e) => {
                println!("{name:<10} not applicable: {e}");
                if args.method != MethodArg::All {
                    failure = Some(exit_code_for(e));
                }
            }
        }
    }
    match failure {
        Some(code) => Err(code),
        None => Ok(()),
    }
}

fn initial_vector(spec: &str, n: usize) -> Result<Vec<f64>, ExitCode> {
    if spec == "uniform" {
        return Ok(vec![1.0 / n as f64; n]);
    }
    let idx: usize = spec.parse().map_err(|_| {
        eprintln!("error: --initial must be a state index or \"uniform\"");
        ExitCode::from(2)
    })?;
    if idx >= n {
        eprintln!("error: initial state {idx} outside 0..{}", n - 1);
        return Err(ExitCode::from(2));
    }
    let mut p = vec![0.0; n];
    p[idx] = 1.0;
    Ok(p)
}

fn cmd_solve(args: &SolveArgs) -> Result<(), ExitCode> {
    let model = read_model(&args.model)?;
    let n = model.size + 1;
    let p0 = initial_vector(&args.initial, n)?;
    let (t0, t1) = (args.horizon[0], args.horizon[1]);
    let traj = if args.stiff {
        transient::solve_kolmogorov_stiff(&model, &p0, t0, t1, args.step)
    } else {
        transient::solve_kolmogorov(&model, &p0, t0, t1, args.tol)
    }
    .map_err(|e| {
        eprintln!("error: {e}");
        exit_code_for(&e)
    })?;
    let points = 1001;
    write_file(
        &args.out.join("trajectory.csv"),
        &trajectory_csv(&traj, t0, t1, points),
    )?;
    let states = if args.states.is_empty() {
        vec![0, model.size / 2, model.size]
    } else {
        args.states.clone()
    };
    write_file(
        &args.out.join("trajectory-reduced.csv"),
        &reduced_csv(&traj, t0, t1, points, &states),
    )?;
    if args.plot {
        let grid: Vec<f64> = (0..points)
            .map(|i| t0 + (t1 - t0) * i as f64 / (points - 1) as f64)
            .collect();
        let e_series: Vec<(f64, f64)> = grid
            .iter()
            .map(|&t| (t, transient::expected_value_at(&traj, t)))
            .collect();
        write_file(
            &args.out.join("expected-value.svg"),
            &svg_line_plot("E[X(t)]", &[("E[X]".to_string(), e_series)]),
        )?;
        let series: Vec<(String, Vec<(f64, f64)>)> = states
            .iter()
            .map(|&k| {
                (
                    format!("p_{k}"),
                    grid.iter().map(|&t| (t, traj.sample(t)[k])).collect(),
                )
            })
            .collect();
        write_file(
            &args.out.join("state-probabilities.svg"),
            &svg_line_plot("state probabilities", &series),
        )?;
    }
    if !traj.renormalizations.is_empty() {
        eprintln!(
            "note: {} renormalizations, largest drift {:.3e}",
            traj.renormalizations.len(),
            traj.renormalizations
                .iter()
                .map(|(_, d)| *d)
                .fold(0.0, f64::max)
        );
    }
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), ExitCode> {
    let model = read_model(&args.model)?;
    let cert_text = fs::read_to_string(&args.cert).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", args.cert.display());
        ExitCode::from(2)
    })?;
    let cert: BoundCertificate = serde_json::from_str(&cert_text).map_err(|e| {
        eprintln!("error: {}: {e}", args.cert.display());
        ExitCode::from(2)
    })?;
    let n = model.size + 1;
    let mut pa = vec![0.0; n];
    pa[0] = 1.0;
    let mut pb = vec![0.0; n];
    pb[n - 1] = 1.0;
    let report = transient::validate_certificate(
        &model,
        &cert,
        &pa,
        &pb,
        (args.horizon[0], args.horizon[1]),
        401,
        args.tol,
        1e-6,
        args.delta,
    )
    .map_err(|e| {
        eprintln!("error: {e}");
        exit_code_for(&e)
    })?;
    println!(
        "{}  max_violation {:.3e}  t* {}",
        if report.passed { "PASS" } else { "FAIL" },
        report.max_violation,
        report
            .t_star
            .map(|t| format!("{t:.4}"))
            .unwrap_or_else(|| "n/a".into())
    );
    let json = serde_json::json!({
        "passed": report.passed,
        "max_violation": report.max_violation,
        "t_star": report.t_star,
        "delta": report.delta,
        "observed_ratio": report.observed_ratio,
    });
    write_file(
        &args.out.join("validation-report.json"),
        &serde_json::to_string_pretty(&json).expect("report serializes"),
    )?;
    if report.passed {
        Ok(())
    } else {
        Err(ExitCode::from(2))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn cmd_examples(args: &ExamplesArgs) -> Result<(), ExitCode> {
    let out = &args.out;
    let mut files: Vec<PathBuf> = Vec::new();
    let (model, cert, horizon, states): (ChainModel, BoundCertificate, (f64, f64), Vec<usize>) =
        match args.which {
            1 => {
                let s = args.size.unwrap_or(199);
                let m = 90.0;
                let model = presets::bulk_arrival_model(s, m);
                let cert = lyapunov::antisym_offdiag_bound(
                    &model,
                    &presets::bulk_arrival_weights(s, m),
                    2001,
                    Some(&presets::bulk_arrival_rate()),
                )
                .map_err(|e| {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                })?;
                (model, cert, (0.0, 6.0), vec![0, s / 2, s])
            }
            2 => {
                let s = args.size.unwrap_or(40);
                let model = presets::bulk_service_model(s, 1.0);
                let cert = diffineq::batch_service_bound(&model, 0.5).map_err(|e| {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                })?;
                (model, cert, (0.0, 15.0), vec![0, s / 2, s])
            }
            other => {
                eprintln!("error: unknown example {other} (use 1 or 2)");
                return Err(ExitCode::from(2));
            }
        };

    let model_path = out.join("model.json");
    write_file(
        &model_path,
        &serde_json::to_string_pretty(&model).expect("model serializes"),
    )?;
    files.push(model_path);
    let cert_path = out.join("certificate.json");
    write_file(
        &cert_path,
        &serde_json::to_string_pretty(&cert).expect("certificate serializes"),
    )?;
    files.push(cert_path);

    let n = model.size + 1;
    let tol = 1e-8;
    for (label, idx) in [("from-0", 0usize), ("from-S", model.size)] {
        let mut p0 = vec![0.0; n];
        p0[idx] = 1.0;
        let traj = transient::solve_kolmogorov(&model, &p0, horizon.0, horizon.1, tol)
            .map_err(|e| {
                eprintln!("error: {e}");
                exit_code_for(&e)
            })?;
        let csv_path = out.join(format!("trajectory-{label}.csv"));
        write_file(&csv_path, &reduced_csv(&traj, horizon.0, horizon.1, 1501, &states))?;
        files.push(csv_path);
        let grid: Vec<f64> = (0..601)
            .map(|i| horizon.0 + (horizon.1 - horizon.0) * i as f64 / 600.0)
            .collect();
        let e_series: Vec<(f64, f64)> = grid
            .iter()
            .map(|&t| (t, transient::expected_value_at(&traj, t)))
            .collect();
        let svg_path = out.join(format!("expected-value-{label}.svg"));
        write_file(
            &svg_path,
            &svg_line_plot(&format!("E[X(t)], X(0)={idx}"), &[("E[X]".into(), e_series)]),
        )?;
        files.push(svg_path);
        let p_series: Vec<(String, Vec<(f64, f64)>)> = states
            .iter()
            .map(|&k| {
                (
                    format!("p_{k}"),
                    grid.iter().map(|&t| (t, traj.sample(t)[k])).collect(),
                )
            })
            .collect();
        let svg_path = out.join(format!("probabilities-{label}.svg"));
        write_file(
            &svg_path,
            &svg_line_plot(&format!("state probabilities, X(0)={idx}"), &p_series),
        )?;
        files.push(svg_path);
    }

    let mut pa = vec![0.0; n];
    pa[0] = 1.0;
    let mut pb = vec![0.0; n];
    pb[n - 1] = 1.0;
    let report = transient::validate_certificate(
        &model, &cert, &pa, &pb, horizon, 301, 1e-8, 1e-6, 1e-3,
    )
    .map_err(|e| {
        eprintln!("error: {e}");
        exit_code_for(&e)
    })?;
    println!(
        "certificate {}  max_violation {:.3e}  t* {}",
        if report.passed { "PASS" } else { "FAIL" },
        report.max_violation,
        report
            .t_star
            .map(|t| format!("{t:.4}"))
            .unwrap_or_else(|| "n/a".into())
    );
    let report_path = out.join("validation-report.json");
    write_file(
        &report_path,
        &serde_json::to_string_pretty(&serde_json::json!({
            "passed": report.passed,
            "max_violation": report.max_violation,
            "t_star": report.t_star,
        }))
        .expect("report serializes"),
    )?;
    files.push(report_path);

    let mut manifest = String::new();
    for f in &files {
        let bytes = fs::read(f).map_err(|e| {
            eprintln!("error: {e}");
            ExitCode::from(3)
        })?;
        manifest.push_str(&format!(
            "{}  {}\n",
            sha256_hex(&bytes),
            f.file_name().unwrap().to_string_lossy()
        ));
    }
    write_file(&out.join("manifest.txt"), &manifest)?;
    if report.passed {
        Ok(())
    } else {
        Err(ExitCode::from(2))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Bound(a) => cmd_bound(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Examples(a) => cmd_examples(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
