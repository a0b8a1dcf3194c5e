//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails. Runs without the libtest harness so the lines are
//! always visible.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use fedsim::data::{Category, Episode};
use fedsim::eval::{build_idf, evaluate_predictions, tfidf_similarity};
use fedsim::fedalgo::{
    adaptive_update, aggregate_weighted, fedavg_weights, fedmobileagent_weights, normalize_weights,
    AdaptiveKind, AdaptiveServerConfig, FedMobileAgentConfig, ServerState,
};
use fedsim::model::{loss_and_grad, Example, LocalUpdate, ModelShape, ParamVector, N_ACTIONS};
use fedsim::orchestrator::{initial_state, run_experiment, run_round, write_metrics, Algorithm, ExperimentConfig};
use fedsim::partition::{partition, verify_partition, Family, PartitionAssignment, PartitionScheme, Variant};
use fedsim::synth::{DatasetPreset, PresetData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const AGG_TOL: f64 = 1e-12;
const GRAD_H: f64 = 1e-6;
const GRAD_REL_TOL: f64 = 1e-5;
const REDUCTION_TOL: f64 = 1e-12;
const ADAPTIVE_TOL: f64 = 1e-12;
const MIN_SKEW_CV: f64 = 0.3;
const STEP_BAND: f64 = 0.10;
const SEED_GRID: [u64; 5] = [0, 1, 2, 3, 4];
const DIRECTIONAL_BUDGET_SECS: f64 = 120.0;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// 1. Weighted aggregation against a direct two-pass weighted mean.

fn aggregation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dim = 1000;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let k = rng.random_range(1..=10);
        let params: Vec<ParamVector> = (0..k)
            .map(|_| (0..dim).map(|_| normal(&mut rng) * 10.0).collect::<Vec<_>>().into())
            .collect();
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..500.0f64).floor()).collect();
        let pairs: Vec<(&ParamVector, f64)> = params.iter().zip(weights.iter().copied()).collect();
        let got = aggregate_weighted(&pairs).map_err(|e| e.to_string())?;
        let total: f64 = weights.iter().sum();
        for i in 0..dim {
            let want: f64 = params.iter().zip(&weights).map(|(p, w)| w * p.values[i]).sum::<f64>() / total;
            worst = worst.max((got.values[i] - want).abs());
        }
    }
    ensure(worst <= AGG_TOL, || format!("max abs error {worst:.3e} > {AGG_TOL:e}"))?;
    Ok(format!("50 instances, D=1000, max abs error {worst:.2e}"))
}

// 2. Analytic gradient against central differences.

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst = 0.0f64;
    for inst in 0..20 {
        let shape = ModelShape::new(rng.random_range(16..40), rng.random_range(2..10)).map_err(|e| e.to_string())?;
        let n = shape.n_params();
        let params: ParamVector = (0..n).map(|_| normal(&mut rng) * 0.3).collect::<Vec<_>>().into();
        let global: ParamVector = (0..n).map(|_| normal(&mut rng) * 0.3).collect::<Vec<_>>().into();
        let mu = if inst % 2 == 0 { 0.0 } else { rng.random_range(0.01..1.0) };
        let batch: Vec<Example> = (0..rng.random_range(1..6))
            .map(|_| Example {
                features: (0..shape.feature_dim).map(|_| normal(&mut rng)).collect(),
                action: rng.random_range(0..N_ACTIONS),
                arg: rng.random_range(0..shape.arg_slots),
            })
            .collect();
        let (_, grad) = loss_and_grad(&params, &batch, &global, mu, None, &shape).map_err(|e| e.to_string())?;
        let mut fd = vec![0.0; n];
        let mut probe = params.clone();
        for i in 0..n {
            let x = params.values[i];
            probe.values[i] = x + GRAD_H;
            let (lp, _) = loss_and_grad(&probe, &batch, &global, mu, None, &shape).map_err(|e| e.to_string())?;
            probe.values[i] = x - GRAD_H;
            let (lm, _) = loss_and_grad(&probe, &batch, &global, mu, None, &shape).map_err(|e| e.to_string())?;
            probe.values[i] = x;
            fd[i] = (lp - lm) / (2.0 * GRAD_H);
        }
        let scale = grad.iter().chain(&fd).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
        let err = grad.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        worst = worst.max(err);
    }
    ensure(worst <= GRAD_REL_TOL, || format!("max relative error {worst:.3e} > {GRAD_REL_TOL:e}"))?;
    Ok(format!("20 instances, h={GRAD_H:e}, max relative error {worst:.2e}"))
}

// 3. Algorithm reductions.

fn metrics_bytes(cfg: &ExperimentConfig, data: &PresetData, assignment: &PartitionAssignment) -> Result<Vec<u8>, String> {
    let result = run_experiment(cfg, &data.train, assignment, &data.test).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_metrics(&mut buf, &result).map_err(|e| e.to_string())?;
    Ok(buf)
}

fn reductions() -> Outcome {
    // (a) FedProx with mu = 0 is FedAvg.
    let data = DatasetPreset::AppLevel.build(5).map_err(|e| e.to_string())?;
    let scheme = PartitionScheme::parse("app-level/iid", 5, 5).map_err(|e| e.to_string())?;
    let assignment = partition(&data.train, &scheme).map_err(|e| e.to_string())?;
    let fedavg = ExperimentConfig {
        algorithm: Algorithm::FedAvg,
        rounds: 10,
        seed: 5,
        ..Default::default()
    };
    let fedprox = ExperimentConfig {
        algorithm: Algorithm::FedProx,
        prox_mu: 0.0,
        ..fedavg.clone()
    };
    let a = metrics_bytes(&fedavg, &data, &assignment)?;
    let b = metrics_bytes(&fedprox, &data, &assignment)?;
    ensure(a == b, || "FedProx(mu=0) metrics differ from FedAvg".into())?;

    // (b) SCAFFOLD round 1 with zero control variates, every client sampled and
    // one local step each, matches FedAvg. Clients get equally many episodes of
    // equal length so FedAvg's step weights are uniform, like SCAFFOLD's mean.
    let mut train: Vec<Episode> = data.train.iter().filter(|e| e.len() >= 3).cloned().collect();
    train.truncate(train.len() / 5 * 5);
    for e in &mut train {
        e.steps.truncate(3);
    }
    let even = PartitionScheme::parse("basic-iid", 5, 5).map_err(|e| e.to_string())?;
    let assignment = partition(&train, &even).map_err(|e| e.to_string())?;
    let clients = assignment.client_datasets(&train);
    ensure(clients.iter().all(|c| c.len() == train.len() / 5), || "uneven client sizes".into())?;
    let mut base = ExperimentConfig {
        algorithm: Algorithm::FedAvg,
        clients_per_round: clients.len(),
        seed: 9,
        ..Default::default()
    };
    base.local.epochs = 1;
    base.local.batch_size = 10_000;
    base.local.subsample_fraction = 1.0;
    let scaffold = ExperimentConfig {
        algorithm: Algorithm::Scaffold,
        scaffold_eta_s: 1.0,
        ..base.clone()
    };
    let (g_avg, m_avg) = run_round(&initial_state(&base, clients.len()), &clients, &base, 0).map_err(|e| e.to_string())?;
    let (g_sc, _) = run_round(&initial_state(&scaffold, clients.len()), &clients, &scaffold, 0).map_err(|e| e.to_string())?;
    ensure(m_avg.sampled_clients.len() == clients.len(), || "not every client sampled".into())?;
    ensure(g_avg.global_params != initial_state(&base, clients.len()).global_params, || {
        "round 1 left the model unchanged".into()
    })?;
    let diff = g_avg
        .global_params
        .values
        .iter()
        .zip(&g_sc.global_params.values)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    ensure(diff <= REDUCTION_TOL, || format!("SCAFFOLD vs FedAvg round-1 max diff {diff:.3e}"))?;

    // (c) FedMobileAgent with lambda = 0 weights by steps alone.
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..100 {
        let updates: Vec<LocalUpdate> = (0..rng.random_range(1..8))
            .map(|_| LocalUpdate {
                new_params: ParamVector::zeros(1),
                n_steps_trained: rng.random_range(1..500),
                n_episodes_trained: rng.random_range(1..60),
                mean_loss: 0.0,
                n_sgd_steps: 1,
            })
            .collect();
        let w0 = fedmobileagent_weights(&updates, &FedMobileAgentConfig { lambda: 0.0 }).map_err(|e| e.to_string())?;
        let wa = normalize_weights(&fedavg_weights(&updates)).map_err(|e| e.to_string())?;
        ensure(w0 == wa, || format!("lambda=0 weights {w0:?} != FedAvg weights {wa:?}"))?;
    }
    Ok(format!(
        "FedProx(0) bit-identical over 10 rounds; SCAFFOLD round-1 diff {diff:.2e}; lambda=0 weights exact"
    ))
}

// 4. Adaptive server updates against per-coordinate scalar arithmetic.

fn scalar_oracle(kind: AdaptiveKind, g: f64, m: f64, v: f64, delta: f64, c: &AdaptiveServerConfig) -> (f64, f64, f64) {
    let m1 = c.beta1 * m + (1.0 - c.beta1) * delta;
    let v1 = match kind {
        AdaptiveKind::Adagrad => v + delta * delta,
        AdaptiveKind::Adam => c.beta2 * v + (1.0 - c.beta2) * delta * delta,
        AdaptiveKind::Yogi => {
            let s = if v > delta * delta {
                1.0
            } else if v < delta * delta {
                -1.0
            } else {
                0.0
            };
            v - (1.0 - c.beta2) * delta * delta * s
        }
    };
    (g + c.eta * m1 / (v1.sqrt() + c.tau), m1, v1)
}

fn adaptive_oracle() -> Outcome {
    let cfg = AdaptiveServerConfig {
        beta1: 0.9,
        beta2: 0.999,
        eta: 1e-3,
        tau: 1e-6,
    };
    // Worked example: global 0, m 0, v 0, pseudo-gradient 1.
    let mut state = ServerState::new("fedadagrad", vec![0.0; 3].into(), cfg.tau);
    state.v = vec![0.0; 3];
    let next = adaptive_update(&state, AdaptiveKind::Adagrad, &vec![1.0; 3].into(), &cfg).map_err(|e| e.to_string())?;
    let want = 1e-4 / (1.0 + 1e-6);
    for i in 0..3 {
        ensure((next.m[i] - 0.1).abs() <= ADAPTIVE_TOL, || format!("worked example m = {}", next.m[i]))?;
        ensure((next.v[i] - 1.0).abs() <= ADAPTIVE_TOL, || format!("worked example v = {}", next.v[i]))?;
        let g = next.global_params.values[i];
        ensure((g - want).abs() <= ADAPTIVE_TOL, || format!("worked example step {g:e}, want {want:e}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst = 0.0f64;
    for kind in [AdaptiveKind::Adagrad, AdaptiveKind::Adam, AdaptiveKind::Yogi] {
        for _ in 0..200 {
            let c = AdaptiveServerConfig {
                beta1: rng.random_range(0.0..0.99),
                beta2: rng.random_range(0.5..0.9999),
                eta: rng.random_range(1e-4..1.0),
                tau: rng.random_range(1e-8..1e-2),
            };
            let mut s = ServerState::new("adaptive", (0..3).map(|_| normal(&mut rng)).collect::<Vec<_>>().into(), c.tau);
            s.m = (0..3).map(|_| normal(&mut rng) * 0.1).collect();
            s.v = (0..3).map(|_| rng.random_range(0.0..2.0)).collect();
            let agg: ParamVector = (0..3).map(|_| normal(&mut rng)).collect::<Vec<_>>().into();
            let got = adaptive_update(&s, kind, &agg, &c).map_err(|e| e.to_string())?;
            for i in 0..3 {
                let g = s.global_params.values[i];
                let (g1, m1, v1) = scalar_oracle(kind, g, s.m[i], s.v[i], agg.values[i] - g, &c);
                worst = worst
                    .max((got.global_params.values[i] - g1).abs())
                    .max((got.m[i] - m1).abs())
                    .max((got.v[i] - v1).abs());
            }
        }
    }
    ensure(worst <= ADAPTIVE_TOL, || format!("max deviation from oracle {worst:.3e}"))?;
    Ok(format!("worked example step {:.5e}; 600 random D=3 updates, max error {worst:.2e}", want))
}

// 5. Partition invariants at the benchmark's sizes, recomputed from the raw
// client shards.

struct Shards {
    episodes: Vec<usize>,
    steps: Vec<usize>,
    apps: Vec<BTreeMap<String, usize>>,
    categories: Vec<BTreeSet<Category>>,
}

fn shards(dataset: &[Episode], a: &PartitionAssignment) -> Shards {
    let n = a.scheme.n_clients;
    let mut s = Shards {
        episodes: vec![0; n],
        steps: vec![0; n],
        apps: vec![BTreeMap::new(); n],
        categories: vec![BTreeSet::new(); n],
    };
    for e in dataset {
        let c = a.client_of[&e.episode_id];
        s.episodes[c] += 1;
        s.steps[c] += e.len();
        *s.apps[c].entry(e.app.clone()).or_default() += 1;
        s.categories[c].insert(e.category);
    }
    s
}

fn cv(xs: &[usize]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<usize>() as f64 / n;
    let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

fn spread(xs: &[usize]) -> usize {
    xs.iter().max().unwrap() - xs.iter().min().unwrap()
}

fn in_band(xs: &[usize]) -> bool {
    let mean = xs.iter().sum::<usize>() as f64 / xs.len() as f64;
    xs.iter().all(|&x| (x as f64 - mean).abs() <= STEP_BAND * mean)
}

fn app_owners(s: &Shards) -> BTreeMap<&str, usize> {
    let mut owners: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &s.apps {
        for app in m.keys() {
            *owners.entry(app.as_str()).or_default() += 1;
        }
    }
    owners
}

fn structural(family: Family, variant: Variant, data: &[Episode], a: &PartitionAssignment) -> Result<(), String> {
    let n = a.scheme.n_clients;
    ensure(a.client_of.len() == data.len(), || "assignment size differs from dataset".into())?;
    ensure(data.iter().all(|e| a.client_of.get(&e.episode_id).is_some_and(|&c| c < n)), || {
        "episode missing or on an out-of-range client".into()
    })?;
    let s = shards(data, a);
    let all_apps: BTreeSet<&str> = data.iter().map(|e| e.app.as_str()).collect();
    let all_cats: BTreeSet<Category> = data.iter().map(|e| e.category).collect();
    let owners = app_owners(&s);
    use Variant::*;
    match (family, variant) {
        (Family::BasicIid, _) => ensure(spread(&s.episodes) <= 1, || format!("episode counts {:?}", s.episodes)),
        (Family::StepEpisode, Iid) => ensure(spread(&s.episodes) <= 1 && in_band(&s.steps), || {
            format!("episodes {:?} steps {:?}", s.episodes, s.steps)
        }),
        (Family::StepEpisode, EpisodeSkew) => ensure(in_band(&s.steps) && cv(&s.episodes) >= MIN_SKEW_CV, || {
            format!("steps {:?}, episode cv {:.3}", s.steps, cv(&s.episodes))
        }),
        (Family::StepEpisode, StepSkew) => ensure(spread(&s.episodes) <= 1 && cv(&s.steps) >= MIN_SKEW_CV, || {
            format!("episodes {:?}, step cv {:.3}", s.episodes, cv(&s.steps))
        }),
        (Family::StepEpisode, BothSkew) => ensure(cv(&s.episodes) >= MIN_SKEW_CV && cv(&s.steps) >= MIN_SKEW_CV, || {
            format!("episode cv {:.3}, step cv {:.3}", cv(&s.episodes), cv(&s.steps))
        }),
        (Family::StepEpisode, v) => Err(format!("unexpected variant {v:?}")),
        (Family::CategoryLevel, v) => {
            ensure(s.episodes.iter().all(|&x| x == 200), || format!("client sizes {:?}, want 200 each", s.episodes))?;
            match v {
                Iid => {
                    for app in &all_apps {
                        let per: Vec<usize> = s.apps.iter().map(|m| m.get(*app).copied().unwrap_or(0)).collect();
                        ensure(spread(&per) <= 1, || format!("`{app}` spread {per:?}"))?;
                    }
                    Ok(())
                }
                Skew => {
                    ensure(s.categories.iter().all(|c| c.len() == 1), || "client with several categories".into())?;
                    let distinct: BTreeSet<_> = s.categories.iter().flatten().collect();
                    ensure(distinct.len() == n, || "a category is shared".into())
                }
                HalfSkew => ensure(s.categories.iter().all(|c| c.len() == 2), || "client without exactly two categories".into()),
                NonUniform => ensure(s.categories.iter().all(|c| *c == all_cats), || "client missing a category".into()),
                AppSkew => {
                    ensure(owners.values().all(|&k| k == 1), || "app split across clients".into())?;
                    ensure(s.categories.iter().all(|c| *c == all_cats), || "client missing a category".into())
                }
                AppRandom => ensure(owners.values().all(|&k| k == 1), || "app split across clients".into()),
                _ => Err(format!("unexpected variant {v:?}")),
            }
        }
        (Family::AppLevel, v) => match v {
            Iid => ensure(s.apps.iter().all(|m| m.len() == all_apps.len() && m.values().all(|&x| x == 30)), || {
                "per-app counts not 30 everywhere".into()
            }),
            Skew => ensure(s.apps.iter().all(|m| m.len() == 1 && m.values().all(|&x| x == 150)) && owners.len() == n, || {
                format!("not diagonal: {:?}", s.apps)
            }),
            HalfSkew => ensure(s.apps.iter().all(|m| m.len() == 2), || "client without exactly two apps".into()),
            NonUniform => ensure(s.apps.iter().all(|m| m.len() == all_apps.len()), || "client missing an app".into()),
            _ => Err(format!("unexpected variant {v:?}")),
        },
        (Family::ScaleApp, v) => {
            ensure(data.len() == 2500 && n == 30, || "not 30 clients over 2500 episodes".into())?;
            match v {
                Iid => {
                    let mut app_size: BTreeMap<&str, usize> = BTreeMap::new();
                    for e in data {
                        *app_size.entry(e.app.as_str()).or_default() += 1;
                    }
                    for (c, m) in s.apps.iter().enumerate() {
                        for (app, &size) in &app_size {
                            let x = m.get(*app).copied().unwrap_or(0) as f64;
                            let target = s.episodes[c] as f64 * size as f64 / data.len() as f64;
                            ensure((x - target).abs() < 1.0 + 1e-9, || format!("client {c} `{app}`: {x} vs {target:.2}"))?;
                        }
                    }
                    Ok(())
                }
                Skew => ensure(s.apps.iter().all(|m| m.len() == 1) && owners.values().all(|&k| k == 1), || {
                    "not one whole app per client".into()
                }),
                Random => Ok(()),
                _ => Err(format!("unexpected variant {v:?}")),
            }
        }
    }
}

fn partition_invariants() -> Outcome {
    let mut checked = 0;
    for family in Family::ALL {
        let (preset, n) = match family {
            Family::BasicIid => (DatasetPreset::BasicAc(1000), 10),
            Family::StepEpisode => (DatasetPreset::StepEpisode, 10),
            Family::CategoryLevel => (DatasetPreset::CategoryLevel, 5),
            Family::AppLevel => (DatasetPreset::AppLevel, 5),
            Family::ScaleApp => (DatasetPreset::ScaleApp, 30),
        };
        let data = preset.build(17).map_err(|e| e.to_string())?;
        for &variant in family.variants() {
            for seed in [0, 1] {
                let scheme = PartitionScheme::new(family, variant, n, seed).map_err(|e| e.to_string())?;
                let name = scheme.name();
                let a = partition(&data.train, &scheme).map_err(|e| format!("{name}: {e}"))?;
                let report = verify_partition(&data.train, &a).map_err(|e| format!("{name}: {e}"))?;
                ensure(report.ok, || format!("{name}: verification failed {:?}", report.violations))?;
                structural(family, variant, &data.train, &a).map_err(|e| format!("{name} seed {seed}: {e}"))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} scheme/seed combinations verified"))
}

// 6. Metric properties.

fn episode(id: &str, n: usize) -> Episode {
    use fedsim::data::{ActionType, Step};
    Episode {
        episode_id: id.into(),
        instruction: "open the app".into(),
        app: "Clock".into(),
        category: Category::Lives,
        steps: (0..n)
            .map(|i| Step {
                index: i,
                subgoal: String::new(),
                action_type: ActionType::Click,
                action_args: format!("button {i}"),
            })
            .collect(),
    }
}

fn metric_properties() -> Outcome {
    let test = vec![episode("a", 1), episode("b", 99)];
    let golds: Vec<String> = (0..100).map(|i| format!("click arg{:02}", i % 64)).collect();
    let mut preds = golds.clone();
    for p in preds.iter_mut().skip(1) {
        *p = "scroll down".into();
    }
    let r = evaluate_predictions(&test, &preds, &golds, 0.5).map_err(|e| e.to_string())?;
    ensure(r.episode_accuracy == 0.5 && r.step_accuracy == 0.01, || {
        format!("planted example gave episode {} step {}", r.episode_accuracy, r.step_accuracy)
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for trial in 0..200 {
        let eps: Vec<Episode> = (0..rng.random_range(1..6)).map(|i| episode(&format!("e{i}"), rng.random_range(1..8))).collect();
        let n: usize = eps.iter().map(Episode::len).sum();
        let golds: Vec<String> = (0..n).map(|i| format!("click arg{:02}", i % 64)).collect();
        let preds: Vec<String> = golds
            .iter()
            .map(|g| if trial % 2 == 0 || rng.random_bool(0.8) { g.clone() } else { "wait".into() })
            .collect();
        let r = evaluate_predictions(&eps, &preds, &golds, 0.5).map_err(|e| e.to_string())?;
        ensure((r.step_accuracy == 1.0) == (r.episode_accuracy == 1.0), || {
            format!("step {} vs episode {}", r.step_accuracy, r.episode_accuracy)
        })?;
    }

    let corpus = ["click arg01", "type hello world", "scroll down", "navigate_back"];
    let idf = build_idf(&corpus).map_err(|e| e.to_string())?;
    for text in corpus {
        let s = tfidf_similarity(text, text, &idf);
        ensure((s - 1.0).abs() <= 1e-12, || format!("self-similarity of `{text}` is {s}"))?;
    }
    let d = tfidf_similarity("click arg01", "type hello world", &idf);
    ensure(d == 0.0, || format!("disjoint similarity {d}"))?;
    Ok("planted 0.5/0.01 exact; step=1 iff episode=1 over 200 trials; self=1, disjoint=0".into())
}

// 7. Directional heterogeneity experiment.

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn directional() -> Outcome {
    let start = Instant::now();
    let mut fedavg: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut best_local: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for seed in SEED_GRID {
        let data = DatasetPreset::AppLevel.build(seed).map_err(|e| e.to_string())?;
        for name in ["app-level/iid", "app-level/skew"] {
            let scheme = PartitionScheme::parse(name, 5, seed).map_err(|e| e.to_string())?;
            let a = partition(&data.train, &scheme).map_err(|e| e.to_string())?;
            let cfg = ExperimentConfig {
                algorithm: Algorithm::FedAvg,
                rounds: 10,
                seed,
                ..Default::default()
            };
            let run = |cfg: &ExperimentConfig| -> Result<f64, String> {
                Ok(run_experiment(cfg, &data.train, &a, &data.test).map_err(|e| e.to_string())?.final_eval.step_accuracy)
            };
            fedavg.entry(name).or_default().push(run(&cfg)?);
            let mut best = f64::NEG_INFINITY;
            for k in 0..5 {
                let local = ExperimentConfig {
                    algorithm: Algorithm::LocalK,
                    local_k_index: Some(k),
                    ..cfg.clone()
                };
                best = best.max(run(&local)?);
            }
            best_local.entry(name).or_default().push(best);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let m = |v: &BTreeMap<&str, Vec<f64>>, k: &str| median(v[k].clone());
    let (iid, skew) = (m(&fedavg, "app-level/iid"), m(&fedavg, "app-level/skew"));
    let (li, ls) = (m(&best_local, "app-level/iid"), m(&best_local, "app-level/skew"));
    let summary = format!(
        "median FedAvg iid {iid:.3} / skew {skew:.3}; median best Local-k iid {li:.3} / skew {ls:.3}; {secs:.1}s"
    );
    ensure(iid >= li && skew >= ls, || format!("FedAvg below best Local-k: {summary}"))?;
    ensure(iid >= skew, || format!("FedAvg(IID) below FedAvg(Skew): {summary}"))?;
    ensure(secs < DIRECTIONAL_BUDGET_SECS, || format!("over the {DIRECTIONAL_BUDGET_SECS}s budget: {summary}"))?;
    Ok(summary)
}

// 8. End-to-end determinism through the binary.

fn fedsim(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fedsim"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`fedsim {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn pipeline(dir: &Path, threads: &str) -> Result<BTreeMap<String, Vec<u8>>, String> {
    fedsim(dir, &["gen-data", "--preset", "app-level", "--seed", "8", "--out", "train.jsonl", "--test-out", "test.jsonl"])?;
    fedsim(dir, &["partition", "--data", "train.jsonl", "--scheme", "app-level/half-skew", "--clients", "5", "--seed", "8", "--out", "assign.txt", "--heatmap", "heat.csv"])?;
    for alg in ["fedavg", "scaffold", "fedyogi"] {
        let metrics = format!("{alg}.jsonl");
        let ckpt = format!("{alg}.ckpt");
        fedsim(dir, &[
            "train", "--algorithm", alg, "--data", "train.jsonl", "--assignment", "assign.txt", "--test", "test.jsonl",
            "--seed", "8", "--rounds", "4", "--metrics", &metrics, "--checkpoint", &ckpt, "--threads", threads,
        ])?;
    }
    fedsim(dir, &["report", "fedavg.jsonl", "scaffold.jsonl", "fedyogi.jsonl", "--out", "report.csv"])?;
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        files.insert(name, std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let runs: Vec<BTreeMap<String, Vec<u8>>> = [("1", 0), ("1", 1), ("4", 2)]
        .iter()
        .map(|(threads, _)| {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            pipeline(dir.path(), threads)
        })
        .collect::<Result<_, _>>()?;
    for key in ["fedavg.jsonl", "scaffold.jsonl", "fedyogi.jsonl", "report.csv"] {
        ensure(runs[0].contains_key(key), || format!("{key} was not written"))?;
    }
    for (i, other) in runs.iter().enumerate().skip(1) {
        ensure(other.keys().eq(runs[0].keys()), || format!("run {i} wrote a different file set"))?;
        for (name, bytes) in &runs[0] {
            ensure(other[name] == *bytes, || format!("`{name}` differs between run 0 and run {i}"))?;
        }
    }
    Ok(format!("3 pipeline runs (threads 1, 1, 4): {} files byte-identical", runs[0].len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("aggregation oracle", aggregation_oracle),
        ("gradient check", gradient_check),
        ("algorithm reductions", reductions),
        ("adaptive server oracle", adaptive_oracle),
        ("partition invariants", partition_invariants),
        ("metric properties", metric_properties),
        ("directional heterogeneity", directional),
        ("end-to-end determinism", determinism),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
