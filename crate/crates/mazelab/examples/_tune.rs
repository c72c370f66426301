use mazelab::codec::Vocab;
use mazelab::maze::{MazeConfig, TileType};
use mazelab::model::{ModelConfig, PolicyModel};
use mazelab::train::{rl_update, SgdMomentum, TrainConfig};
use std::time::Instant;

fn main() {
    let env = MazeConfig { width: 21, ..MazeConfig::default() };
    let model_cfg = ModelConfig {
        n_layers: 2, d_model: 32, n_heads: 2, d_ff: 64,
        context_len: 512, init_scale: 0.1, seed: 1000, ..ModelConfig::default()
    };
    let vocab = Vocab::default();
    let lr: f64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let steps: usize = std::env::args().nth(2).unwrap().parse().unwrap();
    let beta0: f64 = std::env::args().nth(3).map(|v| v.parse().unwrap()).unwrap_or(3.0);
    let cfg = TrainConfig { lr, entropy_beta0: beta0, seed: 2000, ..TrainConfig::default() };
    let mut model: PolicyModel<f32> = PolicyModel::init(&model_cfg).unwrap();
    let mut opt = SgdMomentum::new(&model, cfg.momentum);
    let t0 = Instant::now();
    for step in 0..steps {
        let (m, groups) = rl_update(&mut model, &mut opt, &vocab, &env, &cfg, step).unwrap();
        if step % 5 == 0 || step == steps - 1 {
            let gold_entries: usize = groups.iter().flatten().map(|t| t.gold_entries()).sum();
            let mold_entries: usize = groups.iter().flatten().map(|t| t.mold_entries()).sum();
            println!(
                "step {:3} reward {:7.2} gold_rate {:.3} mold_rate {:.3} (g{} m{}) loss {:+.5} [{:.0}s]",
                step, m.mean_reward, m.gold_rate, m.mold_rate, gold_entries, mold_entries,
                m.loss.total, t0.elapsed().as_secs_f64()
            );
        }
    }
    let _ = TileType::Gold;
}
