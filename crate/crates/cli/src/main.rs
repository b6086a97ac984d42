use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use deepvqe::align::DelayDistribution;
use deepvqe::dsp::wav::{read_wav, write_wav, WavFormat};
use deepvqe::dsp::{AudioBuffer, SAMPLE_RATE};
use deepvqe::engine::{enhance_offline_detailed, measure_rtf, Engine, RtfReport};
use deepvqe::metrics::{synth_scenario, EchoScenario, ScenarioParams};
use deepvqe::model::{build_model, count_parameters, force_identity_mask, BlockTrace, ModelConfig};
use deepvqe::weights::WeightStore;

#[derive(Parser)]
#[command(name = "deepvqe", version, about = "Joint echo cancellation, noise suppression and dereverberation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance a microphone recording.
    Enhance(EnhanceArgs),
    /// Write a synthetic echo scenario with ground truth.
    Synth(SynthArgs),
    /// Measure per-frame streaming cost.
    Bench(BenchArgs),
    /// Print the block ladder and parameter count of a config.
    Inspect(InspectArgs),
    /// Write a randomly initialised weight file for a config.
    InitWeights(InitWeightsArgs),
}

#[derive(Args)]
struct EnhanceArgs {
    /// Microphone WAV, 24 or 48 kHz.
    #[arg(long)]
    mic: PathBuf,
    /// Far-end WAV at the mic rate; digital silence when omitted.
    #[arg(long)]
    farend: Option<PathBuf>,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write the per-frame delay distribution as CSV.
    #[arg(long)]
    dump_delays: Option<PathBuf>,
    /// Remove the algorithmic delay so the output lines up with the mic.
    #[arg(long)]
    compensate_delay: bool,
    /// Write 16-bit PCM instead of 32-bit float.
    #[arg(long)]
    pcm16: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Signal-to-echo ratio in dB, or inf for no echo.
    #[arg(long, default_value_t = 0.0)]
    ser: f64,
    /// Signal-to-noise ratio in dB, or inf for no noise.
    #[arg(long, default_value_t = 30.0)]
    snr: f64,
    /// Bulk echo delay in frames.
    #[arg(long, default_value_t = 10)]
    delay: usize,
    /// Reverberation time in seconds.
    #[arg(long, default_value_t = 0.3)]
    t60: f64,
    #[arg(long, default_value_t = 6.0)]
    duration: f64,
    /// Leave the near-end talker silent.
    #[arg(long)]
    near_silent: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Weight file; random weights when omitted.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    seconds: f64,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct InitWeightsArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Force the output mask to the identity kernel.
    #[arg(long)]
    identity: bool,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Enhance(a) => enhance(a),
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench(a),
        Command::Inspect(a) => inspect(a),
        Command::InitWeights(a) => init_weights(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    msg += if msg.is_empty() { "" } else { ": " };
                    msg += &cause;
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Path) -> Result<ModelConfig> {
    Ok(ModelConfig::load(path)?)
}

fn enhance(a: EnhanceArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let store = WeightStore::load(&a.weights)?;
    let model = build_model(&cfg, &store)?;
    let mic = read_wav(&a.mic)?;
    let far = match &a.farend {
        Some(p) => {
            let far = read_wav(p)?;
            if far.sample_rate() != mic.sample_rate() {
                bail!("far-end is {} Hz but mic is {} Hz", far.sample_rate(), mic.sample_rate());
            }
            fit_length(far, mic.len())?
        }
        None => AudioBuffer::zeros(mic.len(), mic.sample_rate())?,
    };
    let (out, delays) = enhance_offline_detailed(&model, &mic, &far)?;
    // The offline pass is aligned with the mic; live playout lags it by the
    // algorithmic delay, which is kept unless compensation is requested.
    let out = if a.compensate_delay {
        out
    } else {
        let lag = Engine::new(Arc::new(model))?.algorithmic_delay_samples() * mic.sample_rate() as usize
            / SAMPLE_RATE as usize;
        delay(out, lag)?
    };
    let format = if a.pcm16 { WavFormat::Pcm16 } else { WavFormat::Float32 };
    write_wav(&a.out, &out, format)?;
    if let Some(path) = &a.dump_delays {
        write_delays(path, &delays)?;
    }
    Ok(())
}

/// Pads with zeros or truncates so a far-end file lines up with the mic.
fn fit_length(audio: AudioBuffer, len: usize) -> Result<AudioBuffer> {
    if audio.len() != len {
        log::warn!("far-end has {} samples, mic has {len}; fitting to the mic", audio.len());
    }
    let rate = audio.sample_rate();
    let mut s = audio.into_samples();
    s.resize(len, 0.0);
    Ok(AudioBuffer::new(s, rate)?)
}

/// Prepends `lag` zeros and keeps the original length.
fn delay(audio: AudioBuffer, lag: usize) -> Result<AudioBuffer> {
    let (rate, len) = (audio.sample_rate(), audio.len());
    let mut s = vec![0.0f32; lag.min(len)];
    s.extend_from_slice(&audio.samples()[..len - lag.min(len)]);
    Ok(AudioBuffer::new(s, rate)?)
}

fn write_delays(path: &Path, delays: &DelayDistribution) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec!["frame".to_string(), "argmax".to_string()];
    header.extend((0..delays.d_max()).map(|d| format!("d{d}")));
    w.write_record(&header)?;
    for t in 0..delays.frames() {
        let mut row = vec![t.to_string(), delays.argmax(t).to_string()];
        row.extend(delays.row(t).iter().map(|p| p.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let params = ScenarioParams {
        duration_s: a.duration,
        ser_db: a.ser,
        snr_db: a.snr,
        bulk_delay: a.delay,
        t60_s: a.t60,
        near_active: !a.near_silent,
        ..ScenarioParams::default()
    };
    let sc = synth_scenario(a.seed, &params)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for (name, audio) in [("mic.wav", &sc.mic), ("farend.wav", &sc.far_end), ("nearend.wav", &sc.near_end)] {
        write_wav(a.out_dir.join(name), audio, WavFormat::Float32)?;
    }
    write_text(&a.out_dir.join("labels.txt"), &labels(&sc))?;
    write_text(&a.out_dir.join("truth.toml"), &sc.truth().to_toml())?;
    Ok(())
}

/// Tab-separated `start_s end_s label` lines, as read by common audio editors.
fn labels(sc: &EchoScenario) -> String {
    sc.segments
        .iter()
        .map(|s| {
            let label = toml::Value::try_from(s.label).expect("label serializes");
            let label = label.as_str().unwrap_or_default();
            format!("{:.6}\t{:.6}\t{label}\n", s.start_ms / 1000.0, s.end_ms / 1000.0)
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn bench(a: BenchArgs) -> Result<()> {
    if !(a.seconds > 0.0 && a.seconds.is_finite()) {
        bail!("--seconds must be positive, got {}", a.seconds);
    }
    let cfg = load_config(&a.config)?;
    let store = match &a.weights {
        Some(p) => WeightStore::load(p)?,
        None => WeightStore::random_init(&cfg, 0),
    };
    let mut engine = Engine::new(Arc::new(build_model(&cfg, &store)?))?;
    let report = measure_rtf(&mut engine, a.seconds)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", rtf_table(&report))?;
    write!(out, "{}", toml::to_string(&report)?)?;
    Ok(())
}

fn rtf_table(r: &RtfReport) -> String {
    let rows = [
        ("frames", r.frames.to_string()),
        ("frame duration (ms)", format!("{:.3}", r.frame_ms)),
        ("mean frame time (ms)", format!("{:.4}", r.mean_ms)),
        ("p95 frame time (ms)", format!("{:.4}", r.p95_ms)),
        ("max frame time (ms)", format!("{:.4}", r.max_ms)),
        ("real-time factor", format!("{:.4}", r.rtf)),
        ("dsp mean (ms)", format!("{:.4}", r.dsp_mean_ms)),
        ("neural mean (ms)", format!("{:.4}", r.neural_mean_ms)),
    ];
    rows.iter().map(|(k, v)| format!("{k:<22}{v:>12}\n")).collect()
}

fn inspect(a: InspectArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let trace = BlockTrace::from_config(&cfg, 1);
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<14}{:>10}{:>8}", "block", "channels", "bins")?;
    for e in &trace.entries {
        writeln!(out, "{:<14}{:>10}{:>8}", e.name, e.shape.0, e.shape.2)?;
    }
    writeln!(out)?;
    writeln!(out, "parameters = {}", count_parameters(&cfg))?;
    Ok(())
}

fn init_weights(a: InitWeightsArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let mut store = WeightStore::random_init(&cfg, a.seed);
    if a.identity {
        force_identity_mask(&cfg, &mut store)?;
    }
    store.save(&a.out)?;
    Ok(())
}
