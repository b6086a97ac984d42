use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deepvqe::dsp::wav::{read_wav, write_wav, WavFormat};
use deepvqe::dsp::{AudioBuffer, FULLBAND_RATE, SAMPLE_RATE};
use deepvqe::metrics::ScenarioTruth;
use tempfile::TempDir;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepvqe")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn weights(dir: &Path, cfg: &str, identity: bool) -> PathBuf {
    let path = dir.join(format!("{cfg}-{identity}.dvqe"));
    let cfg = config(cfg);
    let mut args = vec!["init-weights", "--config", s(&cfg), "--seed", "3", "--out", s(&path)];
    if identity {
        args.push("--identity");
    }
    ok(&args);
    path
}

fn noise_wav(path: &Path, len: usize, rate: u32, seed: u32) {
    let samples = (0..len)
        .map(|i| {
            let x = (i as u32).wrapping_mul(2_654_435_761).wrapping_add(seed.wrapping_mul(40_503));
            (x >> 8) as f32 / (1u32 << 24) as f32 * 0.4 - 0.2
        })
        .collect();
    write_wav(path, &AudioBuffer::new(samples, rate).unwrap(), WavFormat::Float32).unwrap();
}

fn parameter_count(stdout: &str) -> usize {
    let line = stdout.lines().find(|l| l.starts_with("parameters = ")).unwrap();
    line["parameters = ".len()..].parse().unwrap()
}

#[test]
fn inspect_reports_counts_and_ladder() {
    let small = ok(&["inspect", "--config", s(&config("deepvqe-s.toml"))]);
    let n = parameter_count(&small) as f64;
    assert!((n / 590_000.0 - 1.0).abs() < 0.15, "{n}");

    let full = ok(&["inspect", "--config", s(&config("deepvqe.toml"))]);
    let n = parameter_count(&full) as f64;
    assert!((n / 7_500_000.0 - 1.0).abs() < 0.15, "{n}");
    let bottleneck = full.lines().find(|l| l.starts_with("bottleneck")).unwrap();
    assert_eq!(bottleneck.split_whitespace().last(), Some("8"));
}

#[test]
fn malformed_config_names_the_field() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(config("deepvqe-s.toml")).unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, text.replace("gru_hidden = 192", "gru_hidden = \"wide\"")).unwrap();
    assert!(fails(&["inspect", "--config", s(&bad)]).contains("gru_hidden"));
    std::fs::write(&bad, text.replace("gru_hidden = 192", "gru_hidden = 0")).unwrap();
    assert!(fails(&["inspect", "--config", s(&bad)]).contains("gru_hidden"));
}

#[test]
fn unknown_flags_and_subcommands_are_rejected() {
    fails(&["inspect", "--config", s(&config("deepvqe-s.toml")), "--verbose"]);
    fails(&["transmogrify"]);
    fails(&[]);
}

#[test]
fn synth_is_deterministic_and_records_truth() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["synth", "--seed", "7", "--delay", "42", "--duration", "2", "--out-dir", s(out)]);
    }
    for name in ["mic.wav", "farend.wav", "nearend.wav", "labels.txt", "truth.toml"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let truth = ScenarioTruth::from_toml(&std::fs::read_to_string(a.join("truth.toml")).unwrap()).unwrap();
    assert_eq!(truth.bulk_delay, 42);
    assert_eq!(truth.seed, 7);
    let labels = std::fs::read_to_string(a.join("labels.txt")).unwrap();
    assert!(labels.lines().next().unwrap().ends_with("\tFEST"));
}

#[test]
fn synth_without_echo_leaves_only_near_end() {
    let dir = TempDir::new().unwrap();
    ok(&["synth", "--ser", "inf", "--snr", "inf", "--duration", "2", "--out-dir", s(dir.path())]);
    let mic = read_wav(dir.path().join("mic.wav")).unwrap();
    let near = read_wav(dir.path().join("nearend.wav")).unwrap();
    let far = read_wav(dir.path().join("farend.wav")).unwrap();
    let energy = |a: &AudioBuffer| a.samples().iter().map(|&v| f64::from(v).powi(2)).sum::<f64>();
    assert!(energy(&far) > 0.0);
    let residual: Vec<f32> = mic.samples().iter().zip(near.samples()).map(|(m, n)| m - n).collect();
    assert_eq!(energy(&AudioBuffer::new(residual, SAMPLE_RATE).unwrap()), 0.0);
}

#[test]
fn synth_rejects_out_of_range_values() {
    let dir = TempDir::new().unwrap();
    assert!(fails(&["synth", "--t60", "2", "--out-dir", s(dir.path())]).contains("t60"));
    assert!(fails(&["synth", "--delay", "100", "--out-dir", s(dir.path())]).contains("bulk_delay"));
    fails(&["synth", "--ser", "loud", "--out-dir", s(dir.path())]);
}

#[test]
fn enhance_zero_mic_gives_zero_output() {
    let dir = TempDir::new().unwrap();
    let w = weights(dir.path(), "deepvqe-s.toml", false);
    let mic = dir.path().join("mic.wav");
    write_wav(&mic, &AudioBuffer::zeros(24_000, SAMPLE_RATE).unwrap(), WavFormat::Pcm16).unwrap();
    let out = dir.path().join("out.wav");
    let cfg = config("deepvqe-s.toml");
    ok(&["enhance", "--mic", s(&mic), "--weights", s(&w), "--config", s(&cfg), "--out", s(&out)]);
    let got = read_wav(&out).unwrap();
    assert_eq!(got.len(), 24_000);
    assert!(got.samples().iter().all(|&v| v == 0.0));
}

#[test]
fn enhance_keeps_the_fullband_rate() {
    let dir = TempDir::new().unwrap();
    let w = weights(dir.path(), "deepvqe-s.toml", false);
    let (mic, far, out) = (dir.path().join("mic.wav"), dir.path().join("far.wav"), dir.path().join("out.wav"));
    noise_wav(&mic, 48_001, FULLBAND_RATE, 1);
    noise_wav(&far, 48_001, FULLBAND_RATE, 2);
    let cfg = config("deepvqe-s.toml");
    ok(&["enhance", "--mic", s(&mic), "--farend", s(&far), "--weights", s(&w), "--config", s(&cfg), "--out", s(&out)]);
    let got = read_wav(&out).unwrap();
    assert_eq!(got.sample_rate(), FULLBAND_RATE);
    assert!(got.len().abs_diff(48_001) <= 1);
}

#[test]
fn identity_weights_reproduce_the_mic_after_compensation() {
    let dir = TempDir::new().unwrap();
    let w = weights(dir.path(), "deepvqe-s.toml", true);
    let (mic, far) = (dir.path().join("mic.wav"), dir.path().join("far.wav"));
    noise_wav(&mic, 24_000, SAMPLE_RATE, 3);
    noise_wav(&far, 24_000, SAMPLE_RATE, 4);
    let cfg = config("deepvqe-s.toml");
    let enhance = |out: &Path, extra: &[&str]| {
        let mut args = vec![
            "enhance",
            "--mic",
            s(&mic),
            "--farend",
            s(&far),
            "--weights",
            s(&w),
            "--config",
            s(&cfg),
            "--out",
            s(out),
        ];
        args.extend_from_slice(extra);
        ok(&args);
        read_wav(out).unwrap()
    };
    let input = read_wav(&mic).unwrap();
    let aligned = enhance(&dir.path().join("a.wav"), &["--compensate-delay"]);
    let live = enhance(&dir.path().join("b.wav"), &[]);
    // One window of warm-up excluded.
    let rms = |a: &[f32], b: &[f32]| {
        let n = a.len() as f64;
        (a.iter().zip(b).map(|(x, y)| f64::from(x - y).powi(2)).sum::<f64>() / n).sqrt()
    };
    assert!(rms(&aligned.samples()[480..], &input.samples()[480..]) < 1e-5);
    // Without compensation the output trails the mic by 20 ms.
    assert!(live.samples()[..480].iter().all(|&v| v == 0.0));
    assert!(rms(&live.samples()[960..], &input.samples()[480..24_000 - 480]) < 1e-5);
}

#[test]
fn enhance_is_repeatable_and_dumps_delays() {
    let dir = TempDir::new().unwrap();
    let w = weights(dir.path(), "deepvqe-s.toml", false);
    let (mic, far) = (dir.path().join("mic.wav"), dir.path().join("far.wav"));
    noise_wav(&mic, 12_000, SAMPLE_RATE, 5);
    noise_wav(&far, 12_000, SAMPLE_RATE, 6);
    let cfg = config("deepvqe-s.toml");
    let (o1, o2, csv) = (dir.path().join("1.wav"), dir.path().join("2.wav"), dir.path().join("d.csv"));
    for out in [&o1, &o2] {
        ok(&[
            "enhance",
            "--mic",
            s(&mic),
            "--farend",
            s(&far),
            "--weights",
            s(&w),
            "--config",
            s(&cfg),
            "--out",
            s(out),
            "--dump-delays",
            s(&csv),
        ]);
    }
    assert_eq!(std::fs::read(&o1).unwrap(), std::fs::read(&o2).unwrap());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..3], ["frame", "argmax", "d0"]);
    assert_eq!(header.len(), 2 + 100);
    let rows: Vec<&str> = lines.collect();
    // One trailing frame flushes the overlap.
    assert_eq!(rows.len(), 12_000 / 240 + 1);
    let probs: f64 = rows[10].split(',').skip(2).map(|v| v.parse::<f64>().unwrap()).sum();
    assert!((probs - 1.0).abs() < 1e-9);
}

#[test]
fn enhance_reports_bad_inputs() {
    let dir = TempDir::new().unwrap();
    let w = weights(dir.path(), "deepvqe-s.toml", false);
    let (mic, far, out) = (dir.path().join("mic.wav"), dir.path().join("far.wav"), dir.path().join("out.wav"));
    noise_wav(&mic, 4800, SAMPLE_RATE, 7);
    noise_wav(&far, 9600, FULLBAND_RATE, 8);
    let (small, full) = (config("deepvqe-s.toml"), config("deepvqe.toml"));
    let base = ["enhance", "--mic", s(&mic), "--out", s(&out)];
    let rate = fails(&[&base[..], &["--farend", s(&far), "--weights", s(&w), "--config", s(&small)]].concat());
    assert!(rate.contains("Hz"));
    let mismatch = fails(&[&base[..], &["--weights", s(&w), "--config", s(&full)]].concat());
    assert!(mismatch.contains("config hash"));
    let missing = dir.path().join("missing.wav");
    fails(&["enhance", "--mic", s(&missing), "--weights", s(&w), "--config", s(&small), "--out", s(&out)]);
}

fn bench(cfg: &str, seconds: &str) -> toml::Table {
    let out = ok(&["bench", "--config", s(&config(cfg)), "--seconds", seconds]);
    assert!(out.contains("real-time factor"));
    let doc = &out[out.find("frames = ").unwrap()..];
    doc.parse().unwrap()
}

#[test]
fn bench_prints_a_positive_rtf() {
    let small = bench("deepvqe-s.toml", "0.5");
    assert_eq!(small["frames"].as_integer(), Some(50));
    let rtf = |t: &toml::Table| t["rtf"].as_float().unwrap();
    assert!(rtf(&small) > 0.0);
    let full = bench("deepvqe.toml", "0.5");
    assert!(rtf(&small) < rtf(&full));
}
