//! Walks every server-side rule through a few rounds on a three-parameter
//! model with fixed client results, printing the global model after each.
//!
//! ```text
//! cargo run --example server_optimizers
//! ```

use fedsim::fedalgo::{
    adaptive_update, aggregate_weighted, fedavgm_update, fedmobileagent_weights, scaffold_client_delta,
    scaffold_round, AdaptiveKind, AdaptiveServerConfig, FedMobileAgentConfig, ScaffoldUpdate, ServerState,
    FEDAVGM_HISTORY,
};
use fedsim::model::{LocalUpdate, ParamVector};

fn show(label: &str, p: &ParamVector) {
    let v: Vec<String> = p.values.iter().map(|x| format!("{x:+.6}")).collect();
    println!("  {label:<10} [{}]", v.join(", "));
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Two clients that always land on the same points.
    let a: ParamVector = vec![1.0, 0.0, -1.0].into();
    let b: ParamVector = vec![0.0, 2.0, 1.0].into();
    let updates = [
        LocalUpdate { new_params: a.clone(), n_steps_trained: 70, n_episodes_trained: 10, mean_loss: 0.0, n_sgd_steps: 10 },
        LocalUpdate { new_params: b.clone(), n_steps_trained: 140, n_episodes_trained: 10, mean_loss: 0.0, n_sgd_steps: 20 },
    ];

    let fedavg = aggregate_weighted(&[(&a, 70.0), (&b, 140.0)])?;
    println!("FedAvg (step weights 70:140)");
    show("global", &fedavg);

    let w = fedmobileagent_weights(&updates, &FedMobileAgentConfig { lambda: 7.0 })?;
    println!("FedMobileAgent lambda=7: weights {:?}", w);
    show("global", &aggregate_weighted(&[(&a, w[0]), (&b, w[1])])?);

    println!("FedAvgM history {FEDAVGM_HISTORY}");
    let mut s = ServerState::new("fedavgm", ParamVector::zeros(3), 1e-6);
    for r in 1..=3 {
        s = fedavgm_update(&s, &fedavg, FEDAVGM_HISTORY)?;
        show(&format!("round {r}"), &s.global_params);
    }

    let cfg = AdaptiveServerConfig::default();
    for kind in [AdaptiveKind::Adagrad, AdaptiveKind::Adam, AdaptiveKind::Yogi] {
        println!("Fed{kind:?} eta={} tau={}", cfg.eta, cfg.tau);
        let mut s = ServerState::new("adaptive", ParamVector::zeros(3), cfg.tau);
        for r in 1..=3 {
            s = adaptive_update(&s, kind, &fedavg, &cfg)?;
            show(&format!("round {r}"), &s.global_params);
        }
    }

    println!("SCAFFOLD eta_s=1, both clients every round");
    let lr = 0.1;
    let mut s = ServerState::new("scaffold", ParamVector::zeros(3), 1e-6).with_scaffold(1.0, 2);
    for r in 1..=3 {
        let sc = s.scaffold.as_ref().expect("scaffold state");
        let ups: Vec<ScaffoldUpdate> = updates
            .iter()
            .enumerate()
            .map(|(k, u)| ScaffoldUpdate {
                client: k,
                params: u.new_params.clone(),
                c_delta: scaffold_client_delta(&sc.c, &s.global_params, &u.new_params, u.n_sgd_steps, lr),
            })
            .collect();
        s = scaffold_round(&s, &ups)?;
        show(&format!("round {r}"), &s.global_params);
        show("c", &ParamVector::from(s.scaffold.as_ref().expect("scaffold state").c.clone()));
    }
    Ok(())
}
