use fearsource_core::ingest::{generate_synthetic_panel, PlantedTruth, Sampling, SynthConfig};
use fearsource_core::scores::{score_panel, DisentangleMode, Pool, PoolScores, Pooling, Scope};
use fearsource_core::{Grouping, Singleton, SourceCombo, Stratum};

fn one_state(noise_sd: f64) -> SynthConfig {
    SynthConfig {
        states: vec!["CA".parse().unwrap()],
        days: 400,
        sampling: Sampling::Expected,
        random_combos: Some(30),
        usage_profiles: vec![[0.5; 8]],
        state_jitter: 0.0,
        age_usage_shift: [0.0; 3],
        edu_usage_shift: [0.0; 3],
        cluster_fear_offset: vec![],
        age_fear_shift: [0.0; 3],
        edu_fear_shift: [0.0; 3],
        fear_wander_sd: 0.05,
        noise_sd,
        cluster_parties: vec![],
        ..SynthConfig::default()
    }
}

fn national(cfg: &SynthConfig, seed: u64) -> (PoolScores, PlantedTruth) {
    let (panel, truth) = generate_synthetic_panel(cfg, seed).unwrap();
    let pools = score_panel(&panel, Scope::National, Pooling::Grouped(Grouping::Ungrouped), DisentangleMode::Verbatim).unwrap();
    let pool = pools.into_iter().find(|p| p.pool == Pool::Stratum(Stratum::All)).unwrap();
    (pool, truth)
}

fn max_weight_error(pool: &PoolScores, truth: &PlantedTruth) -> f64 {
    let mut worst: f64 = 0.0;
    for planted in &truth.disentangle_weights {
        let combo = SourceCombo::from_mask(planted.mask);
        for &(s, w) in &planted.weights {
            worst = worst.max((pool.weights.weight(combo, s) - w).abs());
        }
    }
    worst
}

#[test]
fn noiseless_weights_recovered() {
    let (pool, truth) = national(&one_state(0.0), 21);
    assert_eq!(truth.active_combos.len(), 39);
    assert_eq!(pool.weights.fitted().count(), 39);
    let err = max_weight_error(&pool, &truth);
    assert!(err < 1e-6, "max weight error {err}");
}

#[test]
fn noisy_weights_close() {
    let (pool, truth) = national(&one_state(0.01), 22);
    let err = max_weight_error(&pool, &truth);
    assert!(err < 0.05, "max weight error {err}");
}

#[test]
fn single_source_proxies_track_latent_signal() {
    let (pool, truth) = national(&one_state(0.0), 23);
    assert_eq!(pool.proxies.len(), 400);
    for (t, proxies) in pool.proxies.iter().enumerate() {
        for s in Singleton::ALL {
            let v = proxies[s].unwrap();
            assert!((v - truth.singleton_fear[&s][t]).abs() < 1e-9);
        }
    }
}
