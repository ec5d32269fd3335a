use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use subnyq::config::{load_experiment, read_json};
use subnyq::error::{CliError, Result};
use subnyq::io::{self, fmt_f64, EstimateRow};
use subnyq::plot::{plot_file, PlotSpec};
use subnyq::runner::{run_sweep_to_dir, threads_from_env};
use subnyq::sweep_syntax::parse_values;
use subnyq_core::bounds::{freq_crb_dual, numeric_fim, CrbReport, OperatingPoint};
use subnyq_core::experiments::{compare_report, draw_setup, sweep_points, Method};
use subnyq_core::omp::{build_dictionary, omp_recover};
use subnyq_core::signal::{
    add_noise, synthesize, NoiseConfig, NoiseConvention, SamplingScheme, Scenario, ToneParams,
};
use subnyq_core::sngem;

#[derive(Parser)]
#[command(name = "subnyq", version, about = "Dual-channel sub-Nyquist tone estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form frequency bounds; flags accept `start:step:stop`.
    Crb(CrbArgs),
    /// Synthesize one scenario and run the configured methods on it.
    Simulate(SimulateArgs),
    /// Monte-Carlo sweep writing trial and summary CSVs.
    Sweep(SweepArgs),
    /// OMP versus SNGEM report from a summary CSV.
    Compare(CompareArgs),
    /// SVG line chart (log y) from a CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct CrbArgs {
    /// Number of samples.
    #[arg(long)]
    n: String,
    #[arg(long = "snr-db")]
    snr_db: String,
    /// Tone frequency in Hz.
    #[arg(long)]
    freq: String,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Also evaluate the numerical Fisher information for uniform sampling
    /// at this rate (Hz), equal-SNR noise.
    #[arg(long = "sample-rate")]
    sample_rate: Option<f64>,
    #[arg(long, conflicts_with = "json")]
    csv: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Summary CSV written by `sweep`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// JSON plot spec; defaults to rmse_f_rel vs snr_db per method with crb_rel.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Crb(a) => cmd_crb(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("subnyq: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[derive(Serialize)]
struct CrbRow {
    snr_db: f64,
    #[serde(flatten)]
    report: CrbReport,
    fim_freq_relvar: Option<f64>,
    fim_to_closed_form: Option<f64>,
}

fn cmd_crb(a: CrbArgs) -> Result<()> {
    let ns = parse_values("n", &a.n)?;
    let snrs = parse_values("snr-db", &a.snr_db)?;
    let freqs = parse_values("freq", &a.freq)?;
    let mut rows = Vec::new();
    for &n in &ns {
        if n < 1.0 || n.fract() != 0.0 {
            return Err(CliError::Usage(format!("--n {n}: expected a positive integer")));
        }
        for &snr_db in &snrs {
            for &f in &freqs {
                let snr = 10f64.powf(snr_db / 10.0);
                let op = OperatingPoint::new(n as usize, snr, f, a.amplitude)
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                let report = freq_crb_dual(&op);
                let (fim_freq_relvar, fim_to_closed_form) = match a.sample_rate {
                    Some(fs) => {
                        let fim = fisher_for(&op, fs)?;
                        (Some(fim.freq_relvar_crb), Some(fim.fim_to_closed_form))
                    }
                    None => (None, None),
                };
                rows.push(CrbRow {
                    snr_db,
                    report,
                    fim_freq_relvar,
                    fim_to_closed_form,
                });
            }
        }
    }

    let mut out = std::io::stdout().lock();
    let w = |e: std::io::Error| CliError::io("<stdout>", e);
    if a.json {
        serde_json::to_writer_pretty(&mut out, &rows)?;
        writeln!(out).map_err(w)?;
        return Ok(());
    }
    let header = [
        "n_samples",
        "snr_db",
        "frequency",
        "amplitude",
        "amp_var_bound",
        "amp_relvar_bound",
        "ratio_relvar_bound",
        "ratio_var_bound",
        "freq_relvar_bound",
        "freq_relvar_single_channel",
        "penalty_db",
        "fim_freq_relvar",
        "fim_to_closed_form",
    ];
    let cells = |r: &CrbRow| {
        let p = &r.report;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        vec![
            p.n_samples.to_string(),
            fmt_f64(r.snr_db),
            fmt_f64(p.frequency),
            fmt_f64(p.amplitude),
            fmt_f64(p.amp_var_bound),
            fmt_f64(p.amp_relvar_bound),
            fmt_f64(p.ratio_relvar_bound),
            fmt_f64(p.ratio_var_bound),
            fmt_f64(p.freq_relvar_bound),
            fmt_f64(p.freq_relvar_single_channel),
            fmt_f64(p.penalty_db),
            opt(r.fim_freq_relvar),
            opt(r.fim_to_closed_form),
        ]
    };
    if a.csv {
        let mut wtr = csv::Writer::from_writer(&mut out);
        let mut h: Vec<&str> = header.to_vec();
        h.push("constants_note");
        wtr.write_record(&h)?;
        for r in &rows {
            let mut c = cells(r);
            c.push(r.report.constants_note.clone());
            wtr.write_record(&c)?;
        }
        wtr.flush().map_err(w)?;
        return Ok(());
    }
    let table: Vec<Vec<String>> = rows.iter().map(cells).collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            table
                .iter()
                .map(|r| r[i].len())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    writeln!(out, "{}", line(header.iter().map(|s| s.to_string()).collect())).map_err(w)?;
    for r in table {
        writeln!(out, "{}", line(r)).map_err(w)?;
    }
    if let Some(r) = rows.first() {
        writeln!(out, "note: {}", r.report.constants_note).map_err(w)?;
    }
    Ok(())
}

fn fisher_for(op: &OperatingPoint, fs: f64) -> Result<subnyq_core::bounds::FisherReport> {
    let tone = ToneParams::new(op.amplitude, op.frequency, 0.0).map_err(|e| CliError::Usage(e.to_string()))?;
    let scenario = Scenario::new(vec![tone], op.frequency * 2.0, 0.0).map_err(|e| CliError::Usage(e.to_string()))?;
    let scheme = SamplingScheme::UniformSubNyquist {
        sample_rate: fs,
        num_samples: op.n_samples,
    };
    let noise = NoiseConfig {
        sigma_x: op.amplitude / (2.0 * op.snr).sqrt(),
        convention: NoiseConvention::EqualSnr,
        reference_frequency: Some(op.frequency),
    };
    numeric_fim(&scenario, &scheme, &noise).map_err(|e| CliError::Usage(e.to_string()))
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = load_experiment(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    let point = sweep_points(&cfg)[0];
    let setup = draw_setup(&cfg, &point, 0).map_err(CliError::InvalidConfig)?;
    let clean = synthesize(&setup.scenario, &setup.scheme).map_err(CliError::InvalidConfig)?;
    let obs = add_noise(&clean, &setup.noise, setup.noise_seed).map_err(CliError::InvalidConfig)?;

    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    write_csv(&a.out.join("observation.csv"), |w| io::write_observation(w, &obs))?;
    write_csv(&a.out.join("truth.csv"), |w| io::write_truth(w, &setup.scenario))?;

    let k = setup.scenario.tones.len();
    let mut rows = Vec::new();
    let mut failure = None;
    for &method in &cfg.methods {
        match method {
            Method::Sngem => match sngem::estimate(&obs, &cfg.sngem.estimator(k), cfg.band_limit) {
                Ok(est) => {
                    for f in &est.failures {
                        eprintln!(
                            "sngem: component at alias {} Hz dropped: {}",
                            fmt_f64(f.alias_frequency),
                            f.error
                        );
                    }
                    rows.extend(est.tones.iter().map(|t| EstimateRow {
                        method,
                        f_hat: t.frequency,
                        a_hat: t.amplitude,
                        phi_hat: t.phase,
                        ratio: Some(t.ratio),
                        f_ratio: Some(t.f_ratio),
                        fold_index: Some(t.fold_index),
                        mirror: Some(t.mirror),
                    }))
                }
                Err(e) => failure = Some(e),
            },
            Method::Omp => {
                let ocfg = cfg.omp.config(k);
                let dict = build_dictionary(&obs.times, cfg.band_limit, ocfg.grid_size)
                    .map_err(CliError::InvalidConfig)?;
                let res = omp_recover(&obs, &dict, &ocfg).map_err(CliError::Estimator)?;
                if !res.converged && obs.sigma_x == 0.0 {
                    eprintln!("omp: residual tolerance not reached");
                }
                rows.extend(res.components.iter().map(|c| EstimateRow {
                    method,
                    f_hat: c.frequency,
                    a_hat: c.amplitude,
                    phi_hat: c.phase,
                    ratio: None,
                    f_ratio: None,
                    fold_index: None,
                    mirror: None,
                }));
            }
        }
    }
    write_csv(&a.out.join("estimates.csv"), |w| io::write_estimates(w, &rows))?;
    println!(
        "{} tones, compression {}, sigma_x {}: wrote {}",
        k,
        fmt_f64(setup.compression),
        fmt_f64(setup.noise.sigma_x),
        a.out.display()
    );
    match failure {
        Some(e) => Err(CliError::Estimator(e)),
        None => Ok(()),
    }
}

fn write_csv(path: &Path, f: impl FnOnce(&mut csv::Writer<fs::File>) -> Result<()>) -> Result<()> {
    let mut w = io::create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let cfg = load_experiment(&a.config)?;
    let threads = threads_from_env()?;
    let (summary, _) = run_sweep_to_dir(&cfg, &a.out_dir, threads)?;
    println!("snr_db  compression  method  rmse_f_rel  rmse_over_crb  miss_rate");
    for r in &summary.rows {
        println!(
            "{}  {}  {}  {}  {}  {}",
            r.snr_db,
            r.compression,
            r.method,
            fmt_f64(r.rmse_f_rel),
            fmt_f64(r.rmse_over_crb),
            fmt_f64(r.miss_rate)
        );
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let summary = io::read_summary(&a.input)?;
    let report = compare_report(&summary).map_err(|e| CliError::Usage(e.to_string()))?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{report}");
    }
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let spec: PlotSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => PlotSpec::default(),
    };
    let n = plot_file(&a.input, &spec, &a.out)?;
    println!("{n} curves -> {}", a.out.display());
    Ok(())
}
