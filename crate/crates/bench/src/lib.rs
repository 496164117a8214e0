//! Fixtures shared by the benchmarks.

use fearsource_core::cluster::{FeatureKind, StateFeatures};
use fearsource_core::ingest::{SynthConfig, SyntheticData};
use fearsource_core::{Grouping, StateCode};

/// Synthetic inputs with the first `states` states over `days` days.
pub fn synthetic(states: usize, days: u32, seed: u64) -> SyntheticData {
    let mut cfg = SynthConfig {
        days,
        ..SynthConfig::default()
    };
    cfg.states.truncate(states);
    SyntheticData::generate(&cfg, seed).expect("default generator settings are valid")
}

/// 51 states of nine-dimensional features drawn around two centres.
pub fn two_group_features() -> Vec<StateFeatures> {
    StateCode::us_states()
        .into_iter()
        .enumerate()
        .map(|(i, state)| {
            let offset = if i % 2 == 0 { 0.0 } else { 0.3 };
            let vector = (0..9)
                .map(|j| offset + 0.01 * (((i * 7 + j * 13) % 17) as f64 - 8.0))
                .collect();
            StateFeatures {
                state,
                vector,
                kind: FeatureKind::Usage9,
                grouping: Grouping::Ungrouped,
            }
        })
        .collect()
}
