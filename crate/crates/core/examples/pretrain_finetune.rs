//! A miniature PreLowD run in memory: pretrain on 1D diffusion, lift to 2D,
//! fine-tune with C1 and compare against C0 trained from scratch.
//!
//! Budgets are tiny so it finishes in about a minute; use the `prelowd`
//! binary with `--profile desk` for the real experiment.

use prelowd::datagen::{generate, IcSpec, PdeFamily, PdeSpec, Split};
use prelowd::harness::{evaluate_checkpoint, finetune_in_memory, pretrain_in_memory};
use prelowd::model::FfnoConfig;
use prelowd::training::TrainConfig;
use prelowd::FinetuneConfig;

fn main() -> prelowd::Result<()> {
    let nu = 0.004;
    let ic = IcSpec::default();
    let train1 = generate(&PdeSpec::new(PdeFamily::Diffusion, nu, 1, 64), &ic, 64, 0, Split::Train)?.cast::<f32>();
    let pool = generate(&PdeSpec::new(PdeFamily::Diffusion, nu, 2, 16), &ic, 16, 0, Split::Train)?.cast::<f32>();
    let valid = generate(&PdeSpec::new(PdeFamily::Diffusion, nu, 2, 16), &ic, 8, 0, Split::Valid)?.cast::<f32>();

    let model = FfnoConfig { dims: 1, layers: 4, width: 12, modes: 6, ff_expansion: 2, activation: Default::default() };
    let pre_cfg = TrainConfig { iterations: 300, ..TrainConfig::default() };
    let (pretrained, trace) = pretrain_in_memory(&model, &pre_cfg, &train1, false)?;
    println!("pretrained: loss {:.3} -> {:.3}", trace[0].train_loss, trace.last().unwrap().train_loss);

    let down_cfg = TrainConfig { iterations: 150, ..TrainConfig::default() };
    for tag in [FinetuneConfig::C0, FinetuneConfig::C1] {
        let (ckpt, _) = finetune_in_memory(tag, Some(&pretrained), &pool, 2, &model.with_dims(2), &down_cfg, false)?;
        for r in evaluate_checkpoint(&ckpt, &valid)? {
            println!("{tag} rollout {}: validation rL2 {:.4}", r.rollout, r.mean_rl2);
        }
    }
    Ok(())
}
