//! Desk-scale learnability probe: trains one agent per seed on a single
//! phantom and reports localization error from the deterministic center
//! start plus wall-clock, for tuning episode budgets.

use std::time::Instant;

use voxl_core::dqn::init_network;
use voxl_core::eval::{distance_error, localize, StoppingRule};
use voxl_core::lifelong::{train_round, CurriculumConfig, RoundSpec};
use voxl_core::volume::{make_phantom, Coord3, Dims3, Modality, PhantomConfig};
use voxl_core::EnvSpec;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: u32 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let episodes: u32 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(50);
    let max_steps: u32 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(200);
    let noise: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let seeds: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(3);

    let phantom = PhantomConfig {
        dims: Dims3::new(48, 48, 48),
        modality: Modality::A,
        landmark_center: Coord3::new(32, 30, 18),
        landmark_radii: [6.0, 5.0, 4.0],
        noise_sigma: noise,
        seed: 1234,
        background_seed: None,
    };

    let mut cfg = CurriculumConfig::default();
    cfg.rounds = vec![RoundSpec {
        modality: Modality::A,
        epochs,
        episodes_per_epoch: episodes,
    }];

    let mut errors = Vec::new();
    for seed in 0..seeds {
        let (volume, landmark) = make_phantom(&phantom).unwrap();
        let mut env = EnvSpec::new(volume, landmark, Dims3::new(15, 15, 9)).unwrap();
        env.max_steps = max_steps;

        let mut net = init_network(env.obs_dims, seed).unwrap();
        let t0 = Instant::now();
        let outcome = train_round(&mut net, &[env.clone()], &[], &cfg, 0, seed).unwrap();
        let train_secs = t0.elapsed().as_secs_f64();

        let stopping = StoppingRule::for_spec(&env);
        let pred = localize(&net, &env, env.center(), &stopping).unwrap();
        let error = distance_error(pred, landmark, 1);
        errors.push(error);
        println!(
            "seed {seed}: error {error:.3} vox | {train_secs:.1}s | env_steps {} grad_steps {} mean_loss {:.5} | epoch_secs {:?}",
            outcome.report.env_steps,
            outcome.report.grad_steps,
            outcome.report.mean_loss,
            outcome
                .report
                .epoch_wall_secs
                .iter()
                .map(|s| format!("{s:.1}"))
                .collect::<Vec<_>>(),
        );
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    println!("mean error over seeds: {mean:.3} voxels");
}
