use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use phasestsa::config::PhaseSource;
use phasestsa::gains::{gain_phase_blind, GainContext};
use phasestsa::metrics::{gen_ssn, mix_at_snr, segmental_snr, stoi, LevelMode, MixSpec};
use phasestsa::phase::write_f0_csv;
use phasestsa::wav::{read_wav, write_wav, Audio};
use phasestsa::{enhance, enhance_signal, EnhancerConfig, Error, PhaseInputs};

#[derive(Parser)]
#[command(name = "phasestsa", version, about = "Phase-aware spectral amplitude speech enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance a noisy mono WAV file.
    Enhance {
        input: PathBuf,
        output: PathBuf,
        /// TOML configuration; defaults apply to anything left out.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Clean reference whose phase is used when phase_source = "oracle_file".
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Add noise to a clean signal at a target SNR.
    Mix {
        clean: PathBuf,
        noise: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        snr: f64,
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Level::Rms)]
        level_mode: Level,
        /// Picks the noise excerpt.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a processed file against its clean reference, one CSV row per metric.
    Eval {
        clean: PathBuf,
        processed: PathBuf,
        #[arg(long, default_value = "stoi,segsnr")]
        metrics: String,
    },
    /// Generate speech-shaped noise from reference recordings.
    Ssn {
        #[arg(required = true)]
        references: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Tabulate 20 log10 G against the instantaneous SNR for an alpha/beta grid.
    GainCurves {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.8")]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        beta: Vec<f64>,
        /// Grid step in dB.
        #[arg(long, default_value_t = 1.0)]
        step: f64,
    },
    /// Write the f0 track the STFTPI phase source would use.
    F0 {
        input: PathBuf,
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Rms,
    Active,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(Error::Io(e))
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Domain(_) | Error::Numerical(_) => 3,
                _ => 2,
            })
        }
    }
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Enhance { input, output, config, oracle, report } => {
            cmd_enhance(&input, &output, config.as_deref(), oracle.as_deref(), report.as_deref())
        }
        Command::Mix { clean, noise, snr, out, level_mode, seed } => cmd_mix(&clean, &noise, snr, &out, level_mode, seed),
        Command::Eval { clean, processed, metrics } => cmd_eval(&clean, &processed, &metrics),
        Command::Ssn { references, out, seconds, seed } => cmd_ssn(&references, &out, seconds, seed),
        Command::GainCurves { config, out, alpha, beta, step } => {
            cmd_gain_curves(config.as_deref(), out.as_deref(), &alpha, &beta, step)
        }
        Command::F0 { input, out, config } => {
            let cfg = load_config(config.as_deref())?;
            let audio = read_matching(&input, &cfg)?;
            write_f0_csv(&out, &enhance::track_f0_for(&audio.samples, &cfg.geometry)?)?;
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<EnhancerConfig, Error> {
    match path {
        Some(p) => EnhancerConfig::load(p),
        None => Ok(EnhancerConfig::default()),
    }
}

fn read_matching(path: &Path, cfg: &EnhancerConfig) -> Result<Audio, Error> {
    let audio = read_wav(path)?;
    if audio.sample_rate != cfg.geometry.sample_rate {
        return Err(Error::Input(format!(
            "{}: sample rate {} Hz, configuration expects {} Hz",
            path.display(),
            audio.sample_rate,
            cfg.geometry.sample_rate
        )));
    }
    Ok(audio)
}

fn cmd_enhance(
    input: &Path,
    output: &Path,
    config: Option<&Path>,
    oracle: Option<&Path>,
    report_path: Option<&Path>,
) -> CmdResult {
    let cfg = load_config(config)?;
    let noisy = read_matching(input, &cfg)?;
    let clean = match oracle {
        Some(p) => Some(read_matching(p, &cfg)?),
        None => None,
    };
    let wants_oracle = cfg.variant.needs_phase() && cfg.phase_source == PhaseSource::OracleFile;
    if wants_oracle && clean.is_none() {
        return Err(Failure::Usage("phase_source = \"oracle_file\" needs --oracle <clean.wav>".into()));
    }
    if !wants_oracle && clean.is_some() {
        return Err(Failure::Usage("--oracle is only used with phase_source = \"oracle_file\"".into()));
    }
    let inputs = PhaseInputs { clean: clean.as_ref().map(|a| a.samples.as_slice()), f0_track: None };
    let (samples, report) = enhance_signal(&noisy.samples, inputs, &cfg)?;
    write_wav(output, &Audio { samples, ..noisy })?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match report_path {
        Some(p) => fs::write(p, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_mix(clean: &Path, noise: &Path, snr: f64, out: &Path, level: Level, seed: u64) -> CmdResult {
    let clean = read_wav(clean)?;
    let noise_audio = read_wav(noise)?;
    if noise_audio.sample_rate != clean.sample_rate {
        return Err(Error::Input(format!(
            "sample rates differ: clean {} Hz, noise {} Hz",
            clean.sample_rate, noise_audio.sample_rate
        ))
        .into());
    }
    let level_mode = match level {
        Level::Rms => LevelMode::Rms,
        Level::Active => LevelMode::ActiveLevel,
    };
    let spec = MixSpec { sample_rate: clean.sample_rate, ..MixSpec::new(snr, level_mode, seed) };
    let mix = mix_at_snr(&clean.samples, &noise_audio.samples, &spec)?;
    write_wav(out, &Audio { samples: mix.noisy, ..clean })?;
    eprintln!("noise gain {:.6}, offset {}", mix.noise_gain, mix.noise_offset);
    Ok(())
}

fn cmd_eval(clean: &Path, processed: &Path, metrics: &str) -> CmdResult {
    let names: Vec<&str> = metrics.split(',').map(str::trim).collect();
    if let Some(bad) = names.iter().find(|n| !matches!(**n, "stoi" | "segsnr")) {
        return Err(Failure::Usage(format!("unknown metric {bad:?}; expected stoi and/or segsnr")));
    }
    let clean = read_wav(clean)?;
    let processed = read_wav(processed)?;
    if clean.sample_rate != processed.sample_rate {
        return Err(Error::Input("clean and processed sample rates differ".into()).into());
    }
    let mut rows = Vec::new();
    for name in names {
        let value = match name {
            "stoi" => stoi(&clean.samples, &processed.samples, clean.sample_rate)?,
            _ => segmental_snr(&clean.samples, &processed.samples, clean.sample_rate)?,
        };
        rows.push(format!("{name},{value:.6}"));
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "metric,value")?;
    for row in rows {
        writeln!(stdout, "{row}")?;
    }
    Ok(())
}

fn cmd_ssn(references: &[PathBuf], out: &Path, seconds: f64, seed: u64) -> CmdResult {
    let audio: Vec<Audio> = references.iter().map(read_wav).collect::<Result<_, _>>()?;
    let fs = audio[0].sample_rate;
    if audio.iter().any(|a| a.sample_rate != fs) {
        return Err(Error::Input("reference sample rates differ".into()).into());
    }
    if !(seconds > 0.0 && seconds.is_finite()) {
        return Err(Failure::Usage("--seconds must be positive".into()));
    }
    let refs: Vec<&[f64]> = audio.iter().map(|a| a.samples.as_slice()).collect();
    let samples = gen_ssn(&refs, fs, (seconds * f64::from(fs)).round() as usize, seed)?;
    write_wav(out, &Audio { samples, sample_rate: fs, encoding: phasestsa::wav::WavEncoding::Float32 })?;
    Ok(())
}

fn cmd_gain_curves(config: Option<&Path>, out: Option<&Path>, alphas: &[f64], betas: &[f64], step: f64) -> CmdResult {
    if step.is_nan() || step <= 0.0 {
        return Err(Failure::Usage("--step must be positive".into()));
    }
    let cfg = load_config(config)?;
    let mut csv = String::from("inst_snr_db");
    for a in alphas {
        for b in betas {
            csv.push_str(&format!(",alpha={a} beta={b}"));
        }
    }
    csv.push('\n');
    let points = (50.0 / step).floor() as usize;
    for i in 0..=points {
        let snr_db = -20.0 + i as f64 * step;
        // γ − 1 is the instantaneous SNR
        let gamma = 1.0 + 10f64.powf(snr_db / 10.0);
        csv.push_str(&format!("{snr_db}"));
        for &alpha in alphas {
            for &beta in betas {
                let ctx = GainContext { zeta: 1.0, gamma, mu: cfg.cost.mu, alpha, beta, delta_theta: 0.0, tau: 0.0 };
                csv.push_str(&format!(",{:.9}", 20.0 * gain_phase_blind(&ctx)?.log10()));
            }
        }
        csv.push('\n');
    }
    match out {
        Some(p) => fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
