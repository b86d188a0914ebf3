use std::path::Path;
use std::process::{Command, Output};

use wmse_core::data::{load_wav, save_wav, Encoding};

fn wmse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wmse"))
        .args(args)
        .env("WMSE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = wmse(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, model: &str) -> std::path::PathBuf {
    let cfg = format!(
        "task = \"iem\"\noutput = \"{}\"\n[corpus]\nn_train = 3\nn_test = 2\nsegment_length = 10000\nseed = 4\n\
         [model]\nname = \"{model}\"\nwidth = 3\n[train]\nmax_epochs = 2\n",
        s(&dir.join("run"))
    );
    let path = dir.join("exp.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn generate_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for out in [&a, &b] {
        ok(&["generate", "--task", "dm", "--n", "2", "--seed", "9", "--segment-length", "4000", "--out", s(out)]);
    }
    let ma = std::fs::read_to_string(a.join("manifest.jsonl")).unwrap();
    let mb = std::fs::read_to_string(b.join("manifest.jsonl")).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(ma.lines().count(), 2);
    for f in ["dm-9-00001_ch4.wav", "dm-9-00000_ref.wav"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn train_enhance_evaluate_analyze() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "SDFCN(L)");
    let line = ok(&["train", "--config", s(&cfg)]);
    assert!(line.contains("stoi="), "{line}");
    let run = d.path().join("run");
    for f in ["config.toml", "model.wmse", "train_log.csv", "metrics.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let echoed = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(echoed.contains("learning_rate = 0.001"), "{echoed}");
    let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,train_mse,val_mse,seconds\n"));

    let ckpt = run.join("model.wmse");
    let x: Vec<f64> = (0..8000).map(|t| 0.4 * (t as f64 * 0.05).sin()).collect();
    let wav = d.path().join("x.wav");
    save_wav(&wav, &[&x], Encoding::Pcm16).unwrap();
    let out = d.path().join("y.wav");
    ok(&["enhance", "--checkpoint", s(&ckpt), "--in", s(&wav), "--out", s(&out)]);
    let y = load_wav(&out).unwrap();
    assert_eq!((y.channels.len(), y.len(), y.encoding), (1, 8000, Encoding::Float32));

    let bad = wmse(&["enhance", "--checkpoint", s(&ckpt), "--in", s(&wav), s(&wav), "--out", s(&out)]);
    assert!(!bad.status.success());
    let err = String::from_utf8(bad.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error kind=channel_mismatch:"), "{err}");

    let corpus = d.path().join("corpus");
    ok(&["generate", "--task", "iem", "--n", "2", "--seed", "1", "--segment-length", "10000", "--out", s(&corpus)]);
    let metrics = d.path().join("m.csv");
    ok(&["evaluate", "--checkpoint", s(&ckpt), "--corpus", s(&corpus), "--out", s(&metrics)]);
    let m = std::fs::read_to_string(&metrics).unwrap();
    assert!(m.starts_with("utterance_id,stoi,mse\n"));
    assert_eq!(m.lines().count(), 4);

    let an = d.path().join("an");
    ok(&["analyze", "--checkpoint", s(&ckpt), "--what", "filters", "--out", s(&an)]);
    let table = std::fs::read_to_string(an.join("filters.csv")).unwrap();
    assert!(table.starts_with("filter_id,f_peak_hz,bw_hz,f_low_hz,f_high_hz\n"));
    ok(&["analyze", "--checkpoint", s(&ckpt), "--what", "features", "--in", s(&wav), "--out", s(&an)]);
    assert!(an.join("features.png").exists());
}

#[test]
fn malformed_inputs_fail_cleanly() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.toml");
    std::fs::write(&cfg, "task = \"iem\"\noutput = \"x\"\nbogus = 1\n[model]\nname = \"SDFCN\"\n").unwrap();
    let o = wmse(&["train", "--config", s(&cfg)]);
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.starts_with("error kind=config:"), "{err}");
    assert_eq!(err.lines().count(), 1);

    let ckpt = d.path().join("junk.wmse");
    std::fs::write(&ckpt, b"WMSE\x01\0\0\0garbage-garbage-garbage").unwrap();
    let o = wmse(&["evaluate", "--checkpoint", s(&ckpt), "--corpus", s(d.path())]);
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("error kind=checkpoint:"));
}

#[test]
fn compare_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = d.path().join(name);
        ok(&[
            "compare", "--task", "iem", "--models", "FCN-55(L),FCN-55(L,R)", "--seeds", "2",
            "--n-train", "2", "--n-test", "1", "--segment-length", "16000", "--width", "2",
            "--epochs", "1", "--out", s(&out),
        ]);
        outs.push(std::fs::read_to_string(out).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
    let lines: Vec<&str> = outs[0].lines().collect();
    assert_eq!(lines[0], "model,seed,stoi,mse");
    assert_eq!(lines.len(), 1 + 4 + 2);
    assert!(lines[5].starts_with("FCN-55(L),mean,"));
}
