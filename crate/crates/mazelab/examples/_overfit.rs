use mazelab::codec::Vocab;
use mazelab::maze::MazeConfig;
use mazelab::model::{ModelConfig, PolicyModel};
use mazelab::rollout::rollout_group;
use mazelab::train::{rl_batch_loss, SgdMomentum, TrainConfig};

fn main() {
    let env = MazeConfig { width: 21, ..MazeConfig::default() };
    let mcfg = ModelConfig {
        n_layers: 2, d_model: 32, n_heads: 2, d_ff: 64,
        context_len: 512, init_scale: 0.1, seed: 1000, ..ModelConfig::default()
    };
    let vocab = Vocab::default();
    let lr: f64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let beta0: f64 = std::env::args().nth(2).unwrap().parse().unwrap();
    let cfg = TrainConfig { lr, entropy_beta0: beta0, seed: 2000, ..TrainConfig::default() };
    let mut model: PolicyModel<f32> = PolicyModel::init(&mcfg).unwrap();
    let mut opt = SgdMomentum::new(&model, cfg.momentum);
    // one fixed maze, fresh sampling each step
    for step in 0..60 {
        let groups = vec![
            rollout_group(&model, &vocab, &env, 4242, 900 + step as u64, 10, 0.7).unwrap(),
        ];
        let mean: f64 = groups[0].iter().map(|t| t.total_reward).sum::<f64>() / 10.0;
        let (terms, grads) = rl_batch_loss(&model, &vocab, &groups, &cfg, step, true).unwrap();
        opt.step(&mut model, &grads.unwrap(), cfg.lr);
        if step % 5 == 0 || step == 59 {
            println!("step {step:3} mean reward {mean:8.2} loss {:+.6}", terms.total);
        }
    }
}
