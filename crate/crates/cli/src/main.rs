use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use krigvoi::config::RunConfig;
use krigvoi::experiment::{
    calibrate_load_sd, calibrate_sigma_eps, log_misfit, mcs_oracle, replay, run_repetition, select_load_sd,
    sweep_schemes, LIMIT_STATE_NAMES,
};
use krigvoi::record::{
    fmt_f64, point_rows, points_header, repetition_row, trace_rows, RunRecord, REPETITION_HEADER, TRACE_HEADER,
};
use krigvoi::truss::BRIDGE_DIM;

#[derive(Parser)]
#[command(name = "krigvoi", version, about = "Value of information with adaptive Kriging surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the surrogates and estimate VoI for each repetition.
    Run(Common),
    /// Prior probabilities and VoI from the true model only.
    Oracle(Common),
    /// Compare the knowledge-sharing schemes on the before-upgrade pair.
    SweepSchemes(Common),
    /// Sweep the measurement noise and the load standard deviation.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Target::Both)]
        target: Target,
    },
    /// Re-run a stored record and compare it byte for byte.
    Replay {
        record: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    SigmaEps,
    LoadSd,
    Both,
}

#[derive(Args)]
struct Common {
    /// TOML config; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for repetitions; more than one gives no bit-reproducibility guarantee.
    #[arg(long)]
    threads: Option<usize>,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.reps {
            cfg.repetitions = r;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        cfg.validate()?;
        fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
        write(&cfg.output_dir.join("config.toml"), &cfg.to_toml_string())?;
        Ok(cfg)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn lines(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.1}"))
}

struct RepOutput {
    record: krigvoi::record::RepetitionRecord,
    trace: Vec<String>,
    points: Vec<String>,
}

fn cmd_run(cfg: &RunConfig) -> Result<()> {
    let one = |i: usize| -> krigvoi::Result<RepOutput> {
        let rep = run_repetition(cfg, i, None)?;
        let (trace, points) = match &rep.framework {
            Some(fw) => (trace_rows(i, fw), point_rows(i, fw)),
            None => (Vec::new(), Vec::new()),
        };
        eprintln!(
            "repetition {i}: {} evaluations, VoI {}",
            rep.record.n_evaluations,
            opt(rep.record.voi.as_ref().map(|v| v.voi))
        );
        Ok(RepOutput { record: rep.record, trace, points })
    };
    let outputs: Vec<RepOutput> = if cfg.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
        pool.install(|| (0..cfg.repetitions).into_par_iter().map(one).collect::<krigvoi::Result<_>>())?
    } else {
        (0..cfg.repetitions).map(one).collect::<krigvoi::Result<_>>()?
    };
    let dir = &cfg.output_dir;
    write(&dir.join("trace.csv"), &lines(TRACE_HEADER, outputs.iter().flat_map(|o| o.trace.clone())))?;
    write(&dir.join("points.csv"), &lines(&points_header(BRIDGE_DIM), outputs.iter().flat_map(|o| o.points.clone())))?;
    let record = RunRecord::new(cfg.clone(), outputs.into_iter().map(|o| o.record).collect());
    write(&dir.join("repetitions.csv"), &lines(REPETITION_HEADER, record.repetitions.iter().map(repetition_row)))?;
    write(&dir.join("record.json"), &record.to_json())?;

    let a = &record.aggregate;
    println!("repetitions  valid  evaluations(mean, min-max)  VoI mean  VoI sd");
    println!(
        "{:>11}  {:>5}  {:>12} ({}-{})  {:>10}  {:>6}",
        a.n_repetitions,
        a.n_valid,
        opt(a.evaluations_mean),
        a.evaluations_min.map_or("-".into(), |v| v.to_string()),
        a.evaluations_max.map_or("-".into(), |v| v.to_string()),
        opt(a.voi_mean),
        opt(a.voi_sd),
    );
    let frac = record.invalid_fraction();
    if frac > cfg.max_invalid_fraction {
        return Err(Exit(3, format!("{} of {} repetitions invalid", a.n_invalid, a.n_repetitions)).into());
    }
    Ok(())
}

fn cmd_oracle(cfg: &RunConfig) -> Result<()> {
    let rec = mcs_oracle(cfg, |i, v| eprintln!("repetition {i}: VoI {:.1} ± {:.1}", v.voi, v.voi_mc_stderr))?;
    write(&cfg.output_dir.join("oracle.json"), &serde_json::to_string_pretty(&rec)?)?;
    println!("limit state  P_f ({} samples)", rec.prior.n);
    for (name, p) in LIMIT_STATE_NAMES.iter().zip(rec.prior.p) {
        println!("{name:>11}  {p:.6e}");
    }
    println!("VoI mean {}  sd {}", opt(rec.voi_mean), opt(rec.voi_sd));
    let invalid = rec.voi.iter().filter(|v| v.invalid).count();
    if !rec.voi.is_empty() && invalid as f64 / rec.voi.len() as f64 > cfg.max_invalid_fraction {
        return Err(Exit(3, format!("{invalid} of {} repetitions invalid", rec.voi.len())).into());
    }
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let rows = sweep_schemes(cfg, |s, i, fw| eprintln!("{s:?} repetition {i}: {} evaluations", fw.n_evaluations))?;
    write(&cfg.output_dir.join("schemes.json"), &serde_json::to_string_pretty(&rows)?)?;
    let csv = lines(
        "scheme,repetition,evaluations,added,converged",
        rows.iter().flat_map(|r| {
            let name = scheme_name(r.scheme);
            (0..r.evaluations.len())
                .map(move |i| format!("{name},{i},{},{},{}", r.evaluations[i], r.added[i], r.converged[i]))
        }),
    );
    write(&cfg.output_dir.join("schemes.csv"), &csv)?;
    println!("{:<14}  {:>16}  {:>11}", "scheme", "mean evaluations", "mean added");
    for r in &rows {
        println!("{:<14}  {:>16}  {:>11}", scheme_name(r.scheme), opt(r.mean_evaluations), opt(r.mean_added));
    }
    Ok(())
}

fn scheme_name(s: krigvoi::trainer::SharingScheme) -> String {
    use krigvoi::trainer::SharingScheme::*;
    match s {
        Separate => "separate".into(),
        ShareK { k } => format!("share_{k}"),
        ShareAll => "share_all".into(),
        SharedModel => "shared_model".into(),
    }
}

fn cmd_calibrate(cfg: &RunConfig, target: Target) -> Result<()> {
    let dir = &cfg.output_dir;
    if target != Target::LoadSd {
        let rows = calibrate_sigma_eps(cfg)?;
        let csv = lines(
            "sigma_eps,voi,voi_raw,stderr,vopi",
            rows.iter().map(|r| {
                format!("{},{},{},{},{}", fmt_f64(r.sigma_eps), fmt_f64(r.voi), fmt_f64(r.voi_raw), fmt_f64(r.stderr), fmt_f64(r.vopi))
            }),
        );
        write(&dir.join("sigma_eps.csv"), &csv)?;
        println!("{:>9}  {:>9}  {:>8}  {:>8}", "sigma_eps", "VoI", "stderr", "VoPI");
        for r in &rows {
            println!("{:>9}  {:>9.1}  {:>8.1}  {:>8.1}", r.sigma_eps, r.voi, r.stderr, r.vopi);
        }
        let monotone = rows.windows(2).all(|w| {
            let tol = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            w[1].voi <= w[0].voi + tol
        });
        println!("nonincreasing within 2 stderr: {monotone}");
    }
    if target != Target::SigmaEps {
        let rows = calibrate_load_sd(cfg)?;
        let t = &cfg.calibration.target_pfs;
        let csv = lines(
            "load_sd,p_ser,p_str,p_ser_up,p_str_up,log_misfit",
            rows.iter().map(|r| {
                let p: Vec<String> = r.p.iter().map(|v| fmt_f64(*v)).collect();
                format!("{},{},{}", fmt_f64(r.load_sd), p.join(","), fmt_f64(log_misfit(&r.p, t)))
            }),
        );
        write(&dir.join("load_sd.csv"), &csv)?;
        println!("{:>8}  {:>10}  {:>10}  {:>10}  {:>10}  {:>7}", "load_sd", "ser", "str", "ser_up", "str_up", "misfit");
        for r in &rows {
            println!(
                "{:>8}  {:>10.4e}  {:>10.4e}  {:>10.4e}  {:>10.4e}  {:>7.3}",
                r.load_sd,
                r.p[0],
                r.p[1],
                r.p[2],
                r.p[3],
                log_misfit(&r.p, t)
            );
        }
        if let Some(i) = select_load_sd(&rows, t) {
            println!("selected load_sd {}", rows[i].load_sd);
        }
    }
    Ok(())
}

fn cmd_replay(path: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let original = RunRecord::from_json(&text)?;
    let r = replay(&original)?;
    if let Some(o) = out {
        fs::create_dir_all(o)?;
        write(&o.join("record.json"), &r.record.to_json())?;
    }
    if !r.identical {
        bail!(Exit(2, "replayed record differs from the original".into()));
    }
    println!("replay identical");
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(Exit(code, _)) = e.downcast_ref::<Exit>() {
        return *code;
    }
    match e.downcast_ref::<krigvoi::Error>() {
        Some(k) if k.is_numerical() => 2,
        _ => 1,
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(c) => cmd_run(&c.load()?),
        Command::Oracle(c) => cmd_oracle(&c.load()?),
        Command::SweepSchemes(c) => cmd_sweep(&c.load()?),
        Command::Calibrate { common, target } => cmd_calibrate(&common.load()?, *target),
        Command::Replay { record, out } => cmd_replay(record, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match execute(&Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
