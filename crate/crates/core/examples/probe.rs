// scratch probe: per-state advantage monotonicity in lambda, random arms T=20
use contextwin_core::envs::{build_belief_mdp, TwoStatePartialArm};
use contextwin_core::oracle::value_iteration_warm;
use rand::Rng;

fn main() {
    let beta = 0.95;
    let mut worst_overall = 0.0f64;
    for trial in 0..12u64 {
        let mut r2 = contextwin_core::rng::seed_stream(200 + trial, 0, 0);
        let p01: f64 = r2.random_range(0.05..0.95);
        let p11: f64 = (r2.random_range(p01..0.95) as f64).max(p01 + 1e-3).min(0.95);
        let arm = TwoStatePartialArm::new(p01, p11, p01, p11).unwrap();
        let mdp = build_belief_mdp(&arm, 20).unwrap();
        let n = mdp.num_states();
        // fine lambda grid spanning past both limits
        let grid: Vec<f64> = (0..801).map(|i| -4.0 + 0.01 * i as f64).collect();
        let mut warm: Option<Vec<f64>> = None;
        let mut prev_adv: Option<Vec<f64>> = None;
        let mut worst = f64::NEG_INFINITY;
        for &l in &grid {
            let res = value_iteration_warm(&mdp, l, beta, 1e-11, 1_000_000, warm.as_deref()).unwrap();
            let adv: Vec<f64> = (0..n).map(|s| res.advantage(s)).collect();
            if let Some(prev) = &prev_adv {
                for s in 0..n {
                    let increase = adv[s] - prev[s];
                    if increase > worst { worst = increase; }
                }
            }
            prev_adv = Some(adv);
            warm = Some(res.values);
        }
        println!("arm p01={p01:.3} p11={p11:.3} kappa={:.3}: max per-state advantage increase per 0.01 lambda step = {worst:.3e}", p11 - p01);
        if worst > worst_overall { worst_overall = worst; }
    }
    println!("worst overall: {worst_overall:.3e}");
}
