//! Library-level pipeline behavior on tiny budgets: sweeps, resumption,
//! averaging and checkpoint flag rules.

use std::path::{Path, PathBuf};

use prelowd::datagen::{PdeFamily, Split};
use prelowd::harness::{
    cmd_finetune, cmd_generate, cmd_pretrain, cmd_sweep, read_metrics, ExperimentSpec, FinetuneArgs, GenerateArgs,
    PretrainArgs, Profile,
};
use prelowd::io::load_checkpoint;
use prelowd::{Error, FinetuneConfig};

struct Fixture {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
    pool: PathBuf,
    valid: PathBuf,
    pretrained: PathBuf,
}

fn generate(dir: &Path, dims: usize, split: Split, samples: usize, name: &str) -> PathBuf {
    let out = dir.join(name);
    cmd_generate(&GenerateArgs {
        family: PdeFamily::Diffusion,
        coefficient: 0.004,
        dims,
        profile: Profile::Desk,
        seed: 1,
        samples: Some(samples),
        split,
        out: out.clone(),
    })
    .unwrap();
    out
}

fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    let d1 = generate(&dir, 1, Split::Train, 4, "d1.bin");
    let pool = generate(&dir, 2, Split::Train, 10, "pool.bin");
    let valid = generate(&dir, 2, Split::Valid, 2, "valid.bin");
    let pretrained = dir.join("pre.json");
    cmd_pretrain(&PretrainArgs {
        profile: Profile::Desk,
        seed: 0,
        iterations: Some(2),
        data: d1,
        out: pretrained.clone(),
        timing: false,
    })
    .unwrap();
    Fixture { _tmp: tmp, dir, pool, valid, pretrained }
}

fn spec(f: &Fixture, out: &str, tags: Vec<FinetuneConfig>, counts: Vec<usize>, seeds: Vec<u64>) -> ExperimentSpec {
    ExperimentSpec {
        profile: Profile::Desk,
        tags,
        counts,
        seeds,
        iterations: Some(2),
        pretrained: Some(f.pretrained.clone()),
        train: f.pool.clone(),
        valid: f.valid.clone(),
        out: f.dir.join(out),
        timing: false,
    }
}

#[test]
fn sweep_covers_grid_averages_seeds_and_resumes() {
    let f = fixture();
    let s = spec(&f, "sweep", vec![FinetuneConfig::C0, FinetuneConfig::C1], vec![4, 8], vec![0, 1, 2]);
    let report = cmd_sweep(&s).unwrap();
    assert_eq!((report.cells_run, report.cells_skipped), (12, 0));
    assert_eq!(report.raw.len(), 24);
    assert_eq!(read_metrics(&s.raw_path()).unwrap(), report.raw);

    assert_eq!(report.averaged.len(), 8);
    for a in &report.averaged {
        let cell: Vec<f64> = report
            .raw
            .iter()
            .filter(|r| r.tag == a.tag && r.n_samples == a.n_samples && r.rollout == a.rollout)
            .map(|r| r.mean_rl2)
            .collect();
        assert_eq!((cell.len(), a.seeds), (3, 3));
        let mean = cell.iter().sum::<f64>() / 3.0;
        assert!((a.mean_rl2 - mean).abs() < 1e-9, "{} n={} r={}", a.tag, a.n_samples, a.rollout);
    }

    let before = std::fs::read(s.raw_path()).unwrap();
    let again = cmd_sweep(&s).unwrap();
    assert_eq!((again.cells_run, again.cells_skipped), (0, 12));
    assert_eq!(std::fs::read(s.raw_path()).unwrap(), before);

    // drop one cell's rows: only that cell is rerun, and it reproduces its rows
    let text = String::from_utf8(before.clone()).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("C1,8,2,")).collect();
    assert_eq!(kept.len(), 23);
    std::fs::write(s.raw_path(), kept.join("\n") + "\n").unwrap();
    let resumed = cmd_sweep(&s).unwrap();
    assert_eq!((resumed.cells_run, resumed.cells_skipped), (1, 11));
    assert_eq!(std::fs::read(s.raw_path()).unwrap(), before);
}

#[test]
fn sweep_rejects_bad_specs() {
    let f = fixture();
    let dup = spec(&f, "dup", vec![FinetuneConfig::C1, FinetuneConfig::C1], vec![4], vec![0]);
    assert!(matches!(cmd_sweep(&dup), Err(Error::Usage(_))));
    let empty = spec(&f, "empty", vec![FinetuneConfig::C1], vec![], vec![0]);
    assert!(matches!(cmd_sweep(&empty), Err(Error::Usage(_))));
    let mut no_ckpt = spec(&f, "no_ckpt", vec![FinetuneConfig::C0, FinetuneConfig::C4], vec![4], vec![0]);
    no_ckpt.pretrained = None;
    assert!(matches!(cmd_sweep(&no_ckpt), Err(Error::Usage(_))));
    let mut c0_only = spec(&f, "c0_only", vec![FinetuneConfig::C0], vec![4], vec![0]);
    c0_only.pretrained = None;
    assert_eq!(cmd_sweep(&c0_only).unwrap().raw.len(), 2);
    let too_many = spec(&f, "too_many", vec![FinetuneConfig::C1], vec![11], vec![0]);
    assert!(cmd_sweep(&too_many).is_err());
}

fn finetune_args(f: &Fixture, tag: FinetuneConfig, ckpt: Option<PathBuf>, out: &str) -> FinetuneArgs {
    FinetuneArgs {
        profile: Profile::Desk,
        tag,
        samples: 4,
        seed: 3,
        iterations: Some(2),
        data: f.pool.clone(),
        ckpt,
        out: f.dir.join(out),
        timing: false,
    }
}

#[test]
fn finetune_checkpoint_rules() {
    let f = fixture();
    let c0_with = finetune_args(&f, FinetuneConfig::C0, Some(f.pretrained.clone()), "a.json");
    assert!(matches!(cmd_finetune(&c0_with), Err(Error::Usage(_))));
    let c5_without = finetune_args(&f, FinetuneConfig::C5, None, "b.json");
    assert!(matches!(cmd_finetune(&c5_without), Err(Error::Usage(_))));

    let lifted = cmd_finetune(&finetune_args(&f, FinetuneConfig::C8, Some(f.pretrained.clone()), "c8.json")).unwrap();
    assert_eq!(lifted.params.config.dims, 2);
    assert_eq!(lifted.provenance.finetune.as_deref(), Some("C8"));
    assert_eq!(lifted.provenance.n_samples, Some(4));
    let parent = load_checkpoint::<f32>(&f.pretrained, None).unwrap();
    let parent_id = prelowd::io::checkpoint::content_id_of(&parent.params).unwrap();
    assert_eq!(lifted.provenance.parent, Some(parent_id));
    // C8 freezes the first layer, so it still equals the lifted 1D weights
    assert_eq!(lifted.params.layers[0].fourier[0], parent.params.layers[0].fourier[0]);
    assert_eq!(lifted.params.layers[0].fourier[1], parent.params.layers[0].fourier[0]);

    // a 2D checkpoint is not a valid pretrained model
    let wrong = finetune_args(&f, FinetuneConfig::C1, Some(f.dir.join("c8.json")), "d.json");
    assert!(matches!(cmd_finetune(&wrong), Err(Error::Usage(_))));
    assert!(f.dir.join("c8.trace.csv").exists());
}
