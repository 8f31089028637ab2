//! Drives the `prelowd` binary end to end on tiny budgets.

use std::path::Path;
use std::process::{Command, Output};

fn prelowd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prelowd")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = prelowd(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = prelowd(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

#[test]
fn generate_pretrain_finetune_evaluate_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let gen = |dim: &str, split: &str, n: &str, out: &str| {
        ok(d, &["generate", "--pde", "diffusion", "--coeff", "0.004", "--dim", dim, "--split", split, "--samples", n, "--out", out])
    };
    gen("1", "train", "4", "d1.bin");
    gen("2", "train", "6", "d2.bin");
    gen("2", "valid", "2", "v2.bin");
    assert!(d.join("d1.json").exists());

    let out = ok(d, &["pretrain", "--data", "d1.bin", "--out", "pre.json", "--iterations", "2"]);
    assert!(out.contains("after 2 iterations"), "{out}");
    assert!(d.join("pre.bin").exists() && d.join("pre.trace.csv").exists());

    ok(d, &["finetune", "--config", "C1", "--samples", "4", "--data", "d2.bin", "--ckpt", "pre.json", "--out", "c1.json", "--iterations", "2"]);
    ok(d, &["finetune", "--config", "C0", "--samples", "4", "--data", "d2.bin", "--out", "c0.json", "--iterations", "2"]);

    let out = ok(d, &["evaluate", "--ckpt", "c1.json", "--data", "v2.bin", "--out", "c1.csv"]);
    assert_eq!(out.lines().count(), 2, "{out}");
    let csv = std::fs::read_to_string(d.join("c1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("tag,n_samples,seed,rollout,mean_rl2,wall_time_s,iterations,final_lr"));
    assert!(lines.next().unwrap().starts_with("C1,4,0,1,"));
    assert!(lines.next().unwrap().starts_with("C1,4,0,5,"));

    let sweep = ["sweep", "--configs", "C0,C3", "--counts", "4", "--seeds", "0,1", "--data", "d2.bin", "--valid", "v2.bin", "--ckpt", "pre.json", "--out", "sw", "--iterations", "2"];
    let out = ok(d, &sweep);
    assert!(out.starts_with("4 cells run, 0 already present"), "{out}");
    assert_eq!(std::fs::read_to_string(d.join("sw/raw.csv")).unwrap().lines().count(), 9);
    assert_eq!(std::fs::read_to_string(d.join("sw/averaged.csv")).unwrap().lines().count(), 5);
    let out = ok(d, &sweep);
    assert!(out.starts_with("0 cells run, 4 already present"), "{out}");
}

#[test]
fn rejects_bad_invocations() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--pde", "advection", "--coeff", "1.0", "--dim", "2", "--samples", "2", "--out", "a2.bin"]);

    let err = fails(d, &["finetune", "--config", "C0", "--samples", "1", "--data", "a2.bin", "--ckpt", "x.json", "--out", "o.json"]);
    assert!(err.starts_with("error: usage error"), "{err}");
    let err = fails(d, &["finetune", "--config", "C2", "--samples", "1", "--data", "a2.bin", "--out", "o.json"]);
    assert!(err.contains("pretrained checkpoint"), "{err}");
    let err = fails(d, &["finetune", "--config", "C9", "--samples", "1", "--data", "a2.bin", "--out", "o.json"]);
    assert!(err.contains("C9"), "{err}");
    let err = fails(d, &["pretrain", "--data", "a2.bin", "--out", "p.json", "--iterations", "1"]);
    assert!(err.contains("1D"), "{err}");
    let err = fails(d, &["generate", "--pde", "heat", "--coeff", "1.0", "--dim", "1", "--out", "h.bin"]);
    assert!(err.contains("heat"), "{err}");
    fails(d, &["generate", "--pde", "diffusion", "--coeff", "1.0", "--dim", "3", "--out", "h.bin"]);
    let err = fails(d, &["evaluate", "--ckpt", "missing.json", "--data", "a2.bin", "--out", "e.csv"]);
    assert!(err.starts_with("error:"), "{err}");
}
