//! Command-line driver: evolve a configuration and classify the outcome,
//! bracket the critical amplitude, fit the collapse rate from an exported
//! series, measure self-convergence, or run the closed-form identity checks.
//!
//! Exit codes: 0 success, 2 bad invocation or bad configuration,
//! 3 inconclusive (an evolution that classified as inconclusive, or a
//! bracketing search aborted by one), 4 failed verification (endpoint
//! misclassification, ordering inversion, fit failure, identity check).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use wavemap::analytic::{InitialDataFamily, SelfSimilarProfile, Sign, StaticSolution};
use wavemap::config::SimConfig;
use wavemap::diagnostics::{self, fit_power_law};
use wavemap::evolver::{radial_laplacian, BoundaryKind, Evolution, EvolverParams, Watch};
use wavemap::experiments::{self, BisectError, InconclusiveReason, OutcomeKind, RunOutcome};
use wavemap::io;

const EXIT_BAD_INPUT: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 1,
            error: e.into(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn fail(code: u8, error: anyhow::Error) -> Failure {
    Failure { code, error }
}

fn coded<T, E: Into<anyhow::Error>>(code: u8, r: Result<T, E>) -> CliResult<T> {
    r.map_err(|e| fail(code, e.into()))
}

#[derive(Parser)]
#[command(
    name = "wavemap",
    version,
    about = "Evolve equivariant wave maps into the sphere, classify collapse \
             against dispersal, and measure collapse rates"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (flat JSON)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides the config's out_dir
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Refinement depth cap; takes precedence over --override
    #[arg(long, value_name = "K")]
    max_depth: Option<u32>,
    /// Set a config field, e.g. --override base_points=512 (repeatable)
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve one configuration, classify it, and export the series
    Evolve(ConfigArgs),
    /// Bracket the critical amplitude between dispersal and blowup
    Bisect {
        #[command(flatten)]
        common: ConfigArgs,
        /// Lower amplitude of the bracket; must disperse
        #[arg(long)]
        lo: f64,
        /// Upper amplitude of the bracket; must blow up
        #[arg(long)]
        hi: f64,
        /// Stop once the bracket is narrower than this
        #[arg(long)]
        tol: f64,
        /// Interior probes per round, run in parallel
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Fit lambda(t) = c (T - t)^alpha to an exported diagnostics series
    Fit {
        /// Diagnostics CSV produced by evolve
        #[arg(long, value_name = "PATH")]
        series: PathBuf,
        /// Use only samples with scale strictly below this
        #[arg(long, default_value_t = f64::INFINITY)]
        lambda_max: f64,
        /// Use only samples with scale at or above this
        #[arg(long, default_value_t = 0.0)]
        lambda_min: f64,
        /// Output directory; defaults to the series file's directory
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Measure the self-convergence order at three resolutions
    Converge {
        #[command(flatten)]
        common: ConfigArgs,
        /// Comparison time
        #[arg(long, default_value_t = 1.0)]
        time: f64,
    },
    /// Run the closed-form identity and exactness checks
    AnalyticCheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Evolve(args) => cmd_evolve(args),
        Cmd::Bisect {
            common,
            lo,
            hi,
            tol,
            jobs,
        } => cmd_bisect(common, *lo, *hi, *tol, *jobs),
        Cmd::Fit {
            series,
            lambda_max,
            lambda_min,
            out,
        } => cmd_fit(series, *lambda_max, *lambda_min, out.as_deref()),
        Cmd::Converge { common, time } => cmd_converge(common, *time),
        Cmd::AnalyticCheck => cmd_analytic_check(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

/// Load the config file and apply --override, --max-depth, --out, in that
/// order, so the dedicated flags win over generic overrides.
fn load_config(args: &ConfigArgs) -> CliResult<SimConfig> {
    let text = coded(
        EXIT_BAD_INPUT,
        fs::read_to_string(&args.config)
            .with_context(|| format!("cannot read config {}", args.config.display())),
    )?;
    let mut value: serde_json::Value = coded(
        EXIT_BAD_INPUT,
        serde_json::from_str(&text)
            .with_context(|| format!("config {} is not valid JSON", args.config.display())),
    )?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| fail(EXIT_BAD_INPUT, anyhow!("config root must be a JSON object")))?;
    for ov in &args.overrides {
        let (key, raw) = ov.split_once('=').ok_or_else(|| {
            fail(
                EXIT_BAD_INPUT,
                anyhow!("--override needs KEY=VALUE, got {ov:?}"),
            )
        })?;
        let val = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        obj.insert(key.to_string(), val);
    }
    if let Some(k) = args.max_depth {
        obj.insert("max_depth".into(), k.into());
    }
    if let Some(dir) = &args.out {
        obj.insert("out_dir".into(), dir.display().to_string().into());
    }
    coded(
        EXIT_BAD_INPUT,
        SimConfig::from_json_str(&value.to_string()).context("invalid configuration"),
    )
}

fn out_dir(cfg: &SimConfig) -> PathBuf {
    PathBuf::from(cfg.out_dir.as_deref().unwrap_or("out"))
}

fn reason_text(r: &InconclusiveReason) -> String {
    match r {
        InconclusiveReason::SchemeNan { time } => {
            format!("scheme produced a non-finite value at t = {time}")
        }
        InconclusiveReason::TimeExhausted => "neither criterion fired before t_max".into(),
        InconclusiveReason::CollapseWithoutOvershoot => {
            "scale hit the resolution floor but the field never crossed the pole".into()
        }
    }
}

fn describe_outcome(o: &RunOutcome) {
    println!("outcome: {}", o.kind);
    println!("t_final: {}", o.t_final);
    println!("max |u|: {}", o.max_abs_u);
    if let Some(d) = &o.dispersal {
        match d.lambda_min {
            Some(lm) => println!("bounce: t = {}, lambda_min = {}", d.t_bounce, lm),
            None => println!("bounce: t = {}", d.t_bounce),
        }
        if let Some(f) = d.interior_energy_fraction {
            println!("interior energy fraction after rebound: {f}");
        }
    }
    if let Some(b) = &o.blowup {
        println!(
            "collapse: T_est = {}, overshoot at t = {}, final lambda = {}",
            b.t_est, b.overshoot_time, b.lambda_last
        );
        if let Some(fit) = &b.fit {
            println!(
                "fit: alpha = {}, rms residual = {}, window lambda in [{}, {}], {} samples",
                fit.exponent,
                fit.rms_residual,
                fit.lambda_window.0,
                fit.lambda_window.1,
                fit.samples_used
            );
        }
    }
    if let Some(r) = &o.inconclusive {
        println!("inconclusive: {}", reason_text(r));
    }
}

fn cmd_evolve(args: &ConfigArgs) -> CliResult<u8> {
    let cfg = load_config(args)?;
    let res = coded(EXIT_BAD_INPUT, experiments::run(&cfg))?;
    let dir = out_dir(&cfg);
    let hash = cfg.hash_hex();
    io::write_diagnostics_csv(&dir.join("diagnostics.csv"), &res.outcome.diagnostics, &hash)?;
    io::write_json_file(
        &dir.join("outcome.json"),
        &io::OutcomeFile::new(&cfg, &res.outcome),
    )?;
    for snap in &res.snapshots {
        io::write_snapshot_csv(&dir.join(format!("snapshot_t{}.csv", snap.time)), snap, &hash)?;
    }
    describe_outcome(&res.outcome);
    println!("wrote {}", dir.display());
    Ok(if res.outcome.kind == OutcomeKind::Inconclusive {
        EXIT_INCONCLUSIVE
    } else {
        0
    })
}

fn cmd_bisect(common: &ConfigArgs, lo: f64, hi: f64, tol: f64, jobs: usize) -> CliResult<u8> {
    let template = load_config(common)?;
    let dir = out_dir(&template);
    let hash = template.hash_hex();
    let observer = |a: f64, o: &RunOutcome| {
        let mut probe_cfg = template.clone();
        probe_cfg.amplitude = a;
        let path = dir.join(format!("probe_A{a}.csv"));
        if let Err(e) = io::write_diagnostics_csv(&path, &o.diagnostics, &probe_cfg.hash_hex()) {
            eprintln!("warning: could not write {}: {e}", path.display());
        }
    };
    match experiments::bisect_critical_amplitude_observed(lo, hi, tol, &template, jobs, &observer)
    {
        Ok(result) => {
            io::write_json_file(
                &dir.join("bisection.json"),
                &io::BisectionFile::new(&template, &result),
            )?;
            println!(
                "bracket: [{}, {}] after {} rounds, {} probes",
                result.lo,
                result.hi,
                result.rounds,
                result.probes.len()
            );
            println!("width: {}", result.hi - result.lo);
            println!("wrote {}", dir.display());
            Ok(0)
        }
        Err(e) => {
            let (code, probes) = match &e {
                BisectError::InconclusiveProbe { probes, .. } => {
                    (EXIT_INCONCLUSIVE, Some(probes.clone()))
                }
                BisectError::ResolutionFloor { probes } => {
                    (EXIT_INCONCLUSIVE, Some(probes.clone()))
                }
                BisectError::BracketInversion { probes } => {
                    (EXIT_CHECK_FAILED, Some(probes.clone()))
                }
                BisectError::LowerEndpoint { .. } | BisectError::UpperEndpoint { .. } => {
                    (EXIT_CHECK_FAILED, None)
                }
                BisectError::BadBracket | BisectError::Run(_) => (EXIT_BAD_INPUT, None),
            };
            if let Some(probes) = probes {
                let abort = serde_json::json!({
                    "schema": "bisection-abort/1",
                    "config_hash": hash,
                    "error": e.to_string(),
                    "probes": probes,
                });
                io::write_json_file(&dir.join("bisection_abort.json"), &abort)?;
                eprintln!("probe history in {}", dir.join("bisection_abort.json").display());
            }
            Err(fail(code, e.into()))
        }
    }
}

fn cmd_fit(
    series: &Path,
    lambda_max: f64,
    lambda_min: f64,
    out: Option<&Path>,
) -> CliResult<u8> {
    let file = coded(EXIT_BAD_INPUT, io::read_diagnostics_csv(series))?;
    let pts = file.series.lambda_points();
    let fit = coded(
        EXIT_CHECK_FAILED,
        fit_power_law(&pts, lambda_max, lambda_min),
    )?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| series.parent().unwrap_or(Path::new(".")).to_path_buf());
    io::write_json_file(&dir.join("fit.json"), &io::FitFile::new(&file.config_hash, &fit))?;
    println!("T_est: {}", fit.t_blowup);
    println!("alpha: {}", fit.exponent);
    println!(
        "window: lambda in [{}, {}], {} samples, rms residual {}",
        fit.lambda_window.0, fit.lambda_window.1, fit.samples_used, fit.rms_residual
    );
    println!("wrote {}", dir.join("fit.json").display());
    Ok(0)
}

fn cmd_converge(common: &ConfigArgs, time: f64) -> CliResult<u8> {
    let cfg = load_config(common)?;
    let study = coded(EXIT_BAD_INPUT, experiments::convergence_study(&cfg, time))?;
    let dir = out_dir(&cfg);
    io::write_json_file(
        &dir.join("convergence.json"),
        &io::ConvergenceFile::new(&cfg, &study),
    )?;
    println!(
        "resolutions: {} / {} / {} intervals, compared at t = {}",
        study.base_points[0], study.base_points[1], study.base_points[2], study.t_eval
    );
    println!("diffs: coarse {} fine {}", study.diff_coarse, study.diff_fine);
    match study.observed_order {
        Some(p) => println!("observed order: {p}"),
        None if study.roundoff_limited => println!("differences at roundoff; order undefined"),
        None => println!("not converging monotonically; order undefined"),
    }
    println!("wrote {}", dir.display());
    Ok(0)
}

fn check_static_residual() -> Result<(), String> {
    for lambda in [0.5, 1.0, 2.0] {
        let s = StaticSolution::new(lambda, Sign::Plus).map_err(|e| e.to_string())?;
        for r in [0.3, 1.0, 2.7] {
            let res = s.interior_residual(r).map_err(|e| e.to_string())?;
            if res.abs() > 1e-12 {
                return Err(format!("residual {res:e} at lambda = {lambda}, r = {r}"));
            }
        }
    }
    Ok(())
}

fn check_static_energy() -> Result<(), String> {
    let four_pi = 4.0 * std::f64::consts::PI;
    let total = StaticSolution::total_energy();
    if (total - four_pi).abs() > 1e-12 {
        return Err(format!("total energy {total} is not 4 pi"));
    }
    let s = StaticSolution::new(1.5, Sign::Plus).map_err(|e| e.to_string())?;
    let half = s.energy_in_ball(1.5).map_err(|e| e.to_string())?;
    if (half - 0.5 * four_pi).abs() > 1e-12 {
        return Err(format!("energy inside r = lambda is {half}, not 2 pi"));
    }
    Ok(())
}

fn check_stencil_exactness() -> Result<(), String> {
    let n = 64;
    let h = 1.0 / n as f64;
    let u: Vec<f64> = (0..=n).map(|i| (i as f64 * h).powi(2)).collect();
    for i in 1..n {
        let lap = radial_laplacian(&u, h, i);
        if (lap - 4.0).abs() > 1e-11 {
            return Err(format!("laplacian of r^2 is {lap} at node {i}, not 4"));
        }
    }
    Ok(())
}

fn check_self_similar_residual() -> Result<(), String> {
    for alpha in [0.5, 1.0, 2.0, 5.0] {
        let p = SelfSimilarProfile::new(alpha).map_err(|e| e.to_string())?;
        for k in 1..10 {
            let rho = k as f64 * 0.1;
            let res = p.interior_residual(rho).map_err(|e| e.to_string())?;
            if res.abs() > 1e-10 {
                return Err(format!("residual {res:e} at alpha = {alpha}, rho = {rho}"));
            }
        }
    }
    Ok(())
}

fn check_family_shape() -> Result<(), String> {
    let fam = InitialDataFamily::new(0.8, 2.0, 0.4).map_err(|e| e.to_string())?;
    if fam.profile(0.0) != 0.0 {
        return Err("profile does not vanish at the origin".into());
    }
    let at_peak = fam.profile(2.0);
    if (at_peak - 0.8).abs() > 1e-14 {
        return Err(format!("profile at the bump radius is {at_peak}, not 0.8"));
    }
    let d = 1e-5;
    for r in [0.7, 1.9, 2.6] {
        let numeric = (fam.profile(r + d) - fam.profile(r - d)) / (2.0 * d);
        let closed = fam.profile_deriv(r);
        if (numeric - closed).abs() > 1e-6 * (1.0 + closed.abs()) {
            return Err(format!(
                "slope mismatch at r = {r}: closed {closed}, numeric {numeric}"
            ));
        }
    }
    Ok(())
}

fn check_closed_box_energy() -> Result<(), String> {
    let fam = InitialDataFamily::new(0.5, 2.0, 0.4).map_err(|e| e.to_string())?;
    let params = EvolverParams {
        outer_radius: 16.0,
        base_intervals: 512,
        courant: 0.5,
        boundary: BoundaryKind::None,
        refine_threshold: 0.2,
        max_depth: 0,
    };
    let mut ev =
        Evolution::new(params, |r| fam.profile(r), |_| 0.0).map_err(|e| e.to_string())?;
    let e0 = diagnostics::total_energy(&ev.snapshot());
    ev.advance_to_time(6.0, &mut |_, _, _| Watch::Continue)
        .map_err(|e| e.to_string())?;
    let e1 = diagnostics::total_energy(&ev.snapshot());
    let drift = ((e1 - e0) / e0).abs();
    if drift > 5e-3 {
        return Err(format!("relative energy drift {drift:e} in a closed box"));
    }
    Ok(())
}

fn cmd_analytic_check() -> CliResult<u8> {
    let checks: [(&str, fn() -> Result<(), String>); 6] = [
        ("static profile solves the stationary equation", check_static_residual),
        ("static profile energy totals 4 pi, half inside its scale", check_static_energy),
        ("discrete radial laplacian is exact on r^2", check_stencil_exactness),
        ("self-similar profile satisfies its interior equation", check_self_similar_residual),
        ("initial data family shape and slope", check_family_shape),
        ("closed-box evolution conserves the discrete energy", check_closed_box_energy),
    ];
    let mut failures = 0usize;
    for (name, f) in checks {
        match f() {
            Ok(()) => println!("check {name}: ok"),
            Err(why) => {
                failures += 1;
                println!("check {name}: FAIL ({why})");
            }
        }
    }
    if failures == 0 {
        println!("all checks passed");
        Ok(0)
    } else {
        println!("{failures} check(s) failed");
        Ok(EXIT_CHECK_FAILED)
    }
}
