mod config;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use expander_lab::dynamics::{evolve_similarity, nonuniqueness_demo, DemoConfig, EvolutionState, EvolveOptions};
use expander_lab::exponents::{derived_exponents, sweep_remainder_bounds};
use expander_lab::profile::{ode_defect, shoot_profile, sweep_ell, tail_exponent};
use expander_lab::semigroup::{
    apply_s0_gaussian, verify_smoothing, GaussianDatum, RadialFunction, SmoothingDatum, DEFAULT_SMOOTHING_TAUS,
};
use expander_lab::spectral::{find_alpha_star, matrix_spectrum, positive_spectrum, spectrum_csv, Method, SpectrumRow, MATRIX_CUTOFF};
use expander_lab::{Error, ProblemParams, RadialGrid};
use serde::Serialize;
use serde_json::{json, Value};

use config::{ConfigError, Flags, Format, RunConfig};

const EXIT_FAILED_CHECK: u8 = 2;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 64;
const EXIT_DOMAIN: u8 = 65;

const INEQUALITY_SAMPLES: usize = 100_000;

#[derive(Parser)]
#[command(name = "expander-lab", version, about = "Radial expanders of the focusing heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical exponents, regime and the remainder-inequality sweep
    Exponents(Flags),
    /// One profile U_alpha: tail constant, defect, samples
    Profile(Flags),
    /// Tail constant over a range of alpha
    EllSweep(Flags),
    /// First alpha at which the neutral solution acquires a zero
    AlphaStar(Flags),
    /// Positive eigenvalues (shooting) and the matrix spectrum above -1
    Spectrum(Flags),
    /// Growth and smoothing estimates of the free similarity semigroup
    SemigroupCheck(Flags),
    /// Similarity-variable evolution from (1 + eps) U_alpha
    Evolve(Flags),
    /// Non-uniqueness demonstration
    Demo(Flags),
}

impl Command {
    fn split(self) -> (&'static str, Flags) {
        match self {
            Command::Exponents(f) => ("exponents", f),
            Command::Profile(f) => ("profile", f),
            Command::EllSweep(f) => ("ell-sweep", f),
            Command::AlphaStar(f) => ("alpha-star", f),
            Command::Spectrum(f) => ("spectrum", f),
            Command::SemigroupCheck(f) => ("semigroup-check", f),
            Command::Evolve(f) => ("evolve", f),
            Command::Demo(f) => ("demo", f),
        }
    }
}

/// What a command produced: a JSON result, an optional table, and whether
/// its checks passed.
struct Outcome {
    result: Value,
    csv: Option<String>,
    pass: bool,
    diagnostic: Option<String>,
}

impl Outcome {
    fn pass(result: Value, csv: Option<String>) -> Self {
        Outcome { result, csv, pass: true, diagnostic: None }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn grid(cfg: &RunConfig) -> Result<RadialGrid, Error> {
    RadialGrid::uniform(cfg.rho_max, cfg.drho)
}

fn require_alpha(cfg: &RunConfig) -> Result<f64, Error> {
    cfg.alpha.ok_or_else(|| Error::Domain(format!("{} needs --alpha", cfg.command)))
}

fn exponents(cfg: &RunConfig, params: &ProblemParams) -> Result<Outcome, Error> {
    let sweep = sweep_remainder_bounds(INEQUALITY_SAMPLES, cfg.seed);
    let mut csv = String::from("quantity,value\n");
    csv.push_str(&format!("d,{}\np,{}\nq_c,{}\n", params.d, params.p, params.q_c));
    csv.push_str(&format!("p_fujita,{}\np_c,{}\n", params.p_fujita, params.p_c));
    let p_jl = params.p_jl.finite().map_or("inf".to_string(), |v| v.to_string());
    csv.push_str(&format!("p_jl,{p_jl}\nregime,{}\n", params.regime.as_str()));
    csv.push_str(&format!(
        "taylor_violations,{}\ncontraction_violations,{}\n",
        sweep.taylor_violations, sweep.contraction_violations
    ));
    let pass = sweep.pass();
    Ok(Outcome {
        result: json!({ "params": to_value(params), "remainder_sweep": to_value(&sweep) }),
        csv: Some(csv),
        pass,
        diagnostic: (!pass).then(|| "remainder inequality violated on random samples".to_string()),
    })
}

fn profile(cfg: &RunConfig, params: &ProblemParams) -> Result<Outcome, Error> {
    let prof = shoot_profile(require_alpha(cfg)?, params, &grid(cfg)?)?;
    let result = json!({
        "alpha": prof.alpha,
        "ell": prof.ell,
        "ell_uncertainty": prof.ell_uncertainty,
        "residual_max": prof.residual_max,
        "ode_defect": ode_defect(&prof),
        "max_abs_u": prof.max_abs_u,
        "tail_exponent": tail_exponent(&prof),
        "zero_crossings": prof.zero_crossings,
    });
    Ok(Outcome::pass(result, Some(prof.to_csv())))
}

fn ell_sweep(cfg: &RunConfig, params: &ProblemParams) -> Result<Outcome, Error> {
    let sweep = sweep_ell(&cfg.alphas(), params, &grid(cfg)?)?;
    Ok(Outcome::pass(to_value(&sweep), Some(sweep.to_csv())))
}

fn alpha_star(cfg: &RunConfig, params: &ProblemParams) -> Result<Outcome, Error> {
    let res = find_alpha_star(params, (cfg.alpha_min, cfg.alpha_max), cfg.tol, &grid(cfg)?)?;
    let mut csv = String::from("alpha,zero_count\n");
    for (a, n) in &res.scan {
        csv.push_str(&format!("{a},{n}\n"));
    }
    let pass = res.alpha_star.is_some();
    let diagnostic = (!pass).then(|| {
        format!(
            "no alpha* in bracket [{}, {}]: the neutral solution has {} zeros throughout",
            cfg.alpha_min, cfg.alpha_max, res.zero_count_lo
        )
    });
    Ok(Outcome { result: to_value(&res), csv: Some(csv), pass, diagnostic })
}

fn spectrum(cfg: &RunConfig, params: &ProblemParams) -> Result<Outcome, Error> {
    let g = grid(cfg)?;
    let mut rows = Vec::new();
    for alpha in cfg.alphas() {
        for pair in positive_spectrum(alpha, params, &g)? {
            rows.push(SpectrumRow { alpha, lambda: pair.lambda, zero_count: Some(pair.zero_count), method: Method::Shooting });
        }
        for lambda in matrix_spectrum(alpha, params, &g, MATRIX_CUTOFF)? {
            rows.push(SpectrumRow { alpha, lambda, zero_count: None, method: Method::Matrix });
        }
    }
    let csv = spectrum_csv(&rows);
    Ok(Outcome::pass(json!({ "rows": rows }), Some(csv)))
}

fn semigroup_check(cfg: &RunConfig, params: &ProblemParams) -> Result<Outcome, Error> {
    let g = grid(cfg)?;
    let mut samples: Vec<SmoothingDatum> = [0.25, 1.0, 4.0]
        .iter()
        .map(|&v| GaussianDatum::new(1.0, v).map(SmoothingDatum::Gaussian))
        .collect::<Result<_, _>>()?;
    let bump = RadialFunction::from_fn(&g, |r| if r < 1.0 { (1.0 - r * r).powi(3) } else { 0.0 });
    samples.push(SmoothingDatum::Sampled(bump));
    let smoothing = verify_smoothing(1.0, 2.0, 4.0 / 3.0, 4.0, &samples, &DEFAULT_SMOOTHING_TAUS, params)?;

    // a very wide Gaussian stays in the growth regime for all sampled times
    let wide = GaussianDatum::new(1.0, 1e12)?;
    let taus: Vec<f64> = (0..=20).map(|k| 0.5 * k as f64).collect();
    let mut growth = Vec::new();
    let mut csv = String::from("eta,predicted,fitted\n");
    for eta in [1.0, 2.0, params.q_c, 2.0 * params.q_c] {
        let logs: Vec<f64> = taus
            .iter()
            .map(|&t| Ok(apply_s0_gaussian(t, wide, params)?.lq_norm(eta, params.d).ln()))
            .collect::<Result<_, Error>>()?;
        let fit = expander_lab::fit::line_fit(&taus, &logs)?;
        let predicted = params.scaling_rate(eta);
        csv.push_str(&format!("{eta},{predicted},{}\n", fit.slope));
        growth.push(json!({ "eta": eta, "predicted": predicted, "fitted": fit.slope,
            "pass": (fit.slope - predicted).abs() <= 1e-3 }));
    }
    let pass = smoothing.pass && growth.iter().all(|g| g["pass"] == Value::Bool(true));
    Ok(Outcome {
        result: json!({ "smoothing": to_value(&smoothing), "growth": growth, "pass": pass }),
        csv: Some(csv),
        pass,
        diagnostic: (!pass).then(|| "semigroup estimate check failed".to_string()),
    })
}

fn evolve(cfg: &RunConfig, params: &ProblemParams) -> Result<Outcome, Error> {
    let prof = shoot_profile(require_alpha(cfg)?, params, &grid(cfg)?)?;
    let scale = 1.0 + cfg.eps.unwrap_or(0.0);
    let v0 = EvolutionState::from_profile(cfg.tau0, &prof, scale)?;
    let opts = EvolveOptions { dtau: cfg.dtau, q: cfg.q, r: cfg.r };
    let log = evolve_similarity(&v0, cfg.tau1, params, opts, Some(&prof.u))?;
    let last = log.rows.last().copied();
    let result = json!({
        "alpha": prof.alpha,
        "scale": scale,
        "steps": log.rows.len() - 1,
        "final_tau": log.final_state.tau,
        "blow_up": log.blow_up,
        "final_row": last,
    });
    Ok(Outcome::pass(result, Some(log.to_csv())))
}

fn demo(cfg: &RunConfig, params: &ProblemParams) -> Result<Outcome, Error> {
    let config = DemoConfig {
        q: cfg.q,
        r: cfg.r,
        epsilon: cfg.eps,
        tau0: cfg.tau0,
        tau1: cfg.tau1,
        dtau: cfg.dtau,
        rho_max: cfg.rho_max,
        drho: cfg.drho,
        ..DemoConfig::default()
    };
    let report = nonuniqueness_demo(params, config)?;
    let mut csv = String::from("t,separation_lr\n");
    for (t, s) in &report.separation {
        csv.push_str(&format!("{t},{s}\n"));
    }
    let pass = report.pass;
    Ok(Outcome {
        result: to_value(&report),
        csv: Some(csv),
        pass,
        diagnostic: (!pass).then(|| "demonstration sub-check failed; see checks in the report".to_string()),
    })
}

fn write_artifacts(cfg: &RunConfig, outcome: &Outcome, elapsed: f64) -> Result<(), Error> {
    let doc = json!({ "config": to_value(cfg), "result": outcome.result });
    let json_text = serde_json::to_string_pretty(&doc)? + "\n";
    let csv_text = outcome.csv.as_ref().map(|c| cfg.csv_preamble() + c);
    let want_json = matches!(cfg.format, Format::Json | Format::Both);
    let want_csv = matches!(cfg.format, Format::Csv | Format::Both);
    match &cfg.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = |ext: &str| dir.join(format!("{}.{ext}", cfg.command));
            if want_json {
                std::fs::write(path("json"), &json_text)?;
            }
            if let (true, Some(csv)) = (want_csv, &csv_text) {
                std::fs::write(path("csv"), csv)?;
            }
            write_metadata(dir, cfg, elapsed)?;
        }
        None => {
            if want_json {
                print!("{json_text}");
            }
            if let (true, Some(csv)) = (want_csv, &csv_text) {
                print!("{csv}");
            }
        }
    }
    Ok(())
}

/// Wall-clock data lives apart from the artifacts so those stay byte-stable.
fn write_metadata(dir: &Path, cfg: &RunConfig, elapsed: f64) -> Result<(), Error> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64() - elapsed)
        .unwrap_or(0.0);
    let meta = json!({
        "command": cfg.command,
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": started,
        "elapsed_seconds": elapsed,
    });
    std::fs::write(dir.join(format!("{}.metadata.json", cfg.command)), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Domain(_) => EXIT_DOMAIN,
        _ => EXIT_ERROR,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let (name, flags) = cli.command.split();
    let cfg = match RunConfig::resolve(name, flags) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(match e {
                ConfigError::Usage(_) => EXIT_USAGE,
                ConfigError::Domain(_) => EXIT_DOMAIN,
            });
        }
    };

    let start = Instant::now();
    let outcome = derived_exponents(cfg.d, cfg.p).and_then(|params| match name {
        "exponents" => exponents(&cfg, &params),
        "profile" => profile(&cfg, &params),
        "ell-sweep" => ell_sweep(&cfg, &params),
        "alpha-star" => alpha_star(&cfg, &params),
        "spectrum" => spectrum(&cfg, &params),
        "semigroup-check" => semigroup_check(&cfg, &params),
        "evolve" => evolve(&cfg, &params),
        _ => demo(&cfg, &params),
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_for(&e));
        }
    };
    if let Err(e) = write_artifacts(&cfg, &outcome, start.elapsed().as_secs_f64()) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_ERROR);
    }
    if let Some(msg) = &outcome.diagnostic {
        eprintln!("{name}: {msg}");
    }
    if outcome.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED_CHECK)
    }
}
