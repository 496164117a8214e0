//! Synthetic survey panels with planted ground truth.
//!
//! The generative model, per state `st` (in planted cluster `c`), day `t`,
//! age `a`, education `e`:
//!
//! * each named source is used independently with probability
//!   `profile[c][s] + jitter[st][s] + usage_wave[s] * I(t) + age_shift[a] + edu_shift[e]`
//!   (clamped to [0, 1]); using none of them is the "None of the above" answer.
//!   When `random_combos` is set, only the nine single-source combos plus that
//!   many random multi-source combos carry mass and the distribution is
//!   renormalized over them;
//! * source `s` has a latent fear signal `base[s] + amplitude[s] * I(t - lag[s])`
//!   plus a slow AR(1) wander, where `I` is the normalized epidemic curve;
//! * the fear score of combo `u` is `sum_{s in u} w*(s|u) * (signal[s] + offset[c][s])`
//!   plus the age/education shifts and, for multi-source combos, i.i.d.
//!   Gaussian noise; `w*(.|u)` is a flat Dirichlet draw (1 for single sources);
//! * a score `x` becomes fear-level shares `(1 - |x|) * neutral + |x| * extreme`,
//!   where `neutral` scores 0 and `extreme` is all mass on level 1 (x > 0) or
//!   level 4 (x < 0), so the shares score exactly `x`.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    ElectionLabels, Party, StateCode, Surveillance, SurveillanceRecord, SurveyCell, SurveyPanel,
};
use crate::data_model::{
    AgeGroup, DemographicCell, EduGroup, FearLevel, Singleton, SourceCombo, COMBO_COUNT,
};
use crate::error::{Error, Result};

/// Neutral fear-level shares; their weighted score is exactly zero.
const NEUTRAL_FEAR: [f64; 4] = [0.15, 0.35, 0.35, 0.15];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Cells carry their exact expected mass (dense, noiseless).
    Expected,
    /// A Poisson number of weighted respondents is drawn per state-day (sparse).
    Respondents,
}

/// An epidemic wave: Gaussian bump in daily incidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wave {
    pub peak_day: f64,
    pub width_days: f64,
    /// Daily new cases per 100k at the peak.
    pub peak_incidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub start_date: NaiveDate,
    pub days: u32,
    pub states: Vec<StateCode>,
    pub sampling: Sampling,
    /// Expected weighted respondents per state-day.
    pub respondents: f64,
    /// Log-normal spread of individual survey weights (respondent sampling only).
    pub weight_sd: f64,
    pub age_shares: [f64; 3],
    pub edu_shares: [f64; 3],
    /// Number of random multi-source combos carrying mass; all 256 when absent.
    pub random_combos: Option<usize>,
    /// Per-cluster usage propensity of the eight named sources.
    pub usage_profiles: Vec<[f64; 8]>,
    pub state_jitter: f64,
    pub usage_wave: [f64; 8],
    pub age_usage_shift: [f64; 3],
    pub edu_usage_shift: [f64; 3],
    pub fear_base: [f64; 9],
    pub fear_amplitude: [f64; 9],
    pub fear_lag_days: [f64; 9],
    pub fear_wander_sd: f64,
    pub fear_wander_phi: f64,
    /// Per-cluster additive fear offset per source; missing clusters get zero.
    pub cluster_fear_offset: Vec<[f64; 9]>,
    pub age_fear_shift: [f64; 3],
    pub edu_fear_shift: [f64; 3],
    /// Standard deviation of noise added to multi-source combo fear scores.
    pub noise_sd: f64,
    pub waves: Vec<Wave>,
    pub fatality_ratio: f64,
    pub population: u64,
    /// Party of each planted cluster; no election labels when empty.
    pub cluster_parties: Vec<Party>,
    pub flips_2020: Vec<StateCode>,
    pub flips_2024: Vec<StateCode>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            start_date: NaiveDate::from_ymd_opt(2021, 5, 1).expect("valid date"),
            days: 400,
            states: StateCode::us_states(),
            sampling: Sampling::Respondents,
            respondents: 100.0,
            weight_sd: 0.25,
            age_shares: [0.3, 0.5, 0.2],
            edu_shares: [0.1, 0.6, 0.3],
            random_combos: None,
            usage_profiles: vec![
                [0.55, 0.35, 0.50, 0.30, 0.08, 0.45, 0.40, 0.04],
                [0.48, 0.20, 0.30, 0.18, 0.12, 0.28, 0.46, 0.12],
            ],
            state_jitter: 0.015,
            usage_wave: [0.06, 0.05, 0.06, 0.04, 0.0, 0.05, 0.03, -0.02],
            age_usage_shift: [-0.04, 0.0, 0.04],
            edu_usage_shift: [-0.03, 0.0, 0.03],
            fear_base: [0.10, 0.05, 0.12, 0.08, 0.06, 0.10, -0.12, -0.25, -0.18],
            fear_amplitude: [0.30, 0.45, 0.40, 0.30, 0.25, 0.35, 0.20, 0.10, 0.08],
            fear_lag_days: [0.0, 0.0, 0.0, 3.0, 5.0, -7.0, -7.0, 0.0, 0.0],
            fear_wander_sd: 0.01,
            fear_wander_phi: 0.97,
            cluster_fear_offset: vec![[0.0; 9], [-0.03, -0.05, -0.04, -0.02, 0.0, -0.03, -0.02, 0.02, 0.0]],
            age_fear_shift: [-0.06, 0.0, 0.08],
            edu_fear_shift: [0.03, -0.02, 0.01],
            noise_sd: 0.02,
            waves: vec![
                Wave {
                    peak_day: 110.0,
                    width_days: 25.0,
                    peak_incidence: 45.0,
                },
                Wave {
                    peak_day: 255.0,
                    width_days: 14.0,
                    peak_incidence: 220.0,
                },
            ],
            fatality_ratio: 0.01,
            population: 1_000_000,
            cluster_parties: vec![Party::Democratic, Party::Republican],
            flips_2020: Vec::new(),
            flips_2024: Vec::new(),
        }
    }
}

fn check(cond: bool, field: &str, message: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::config(field, message))
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("synth config")
                .to_string();
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        check(self.days >= 1, "days", "must be at least 1")?;
        check(!self.states.is_empty(), "states", "must not be empty")?;
        let unique: BTreeSet<_> = self.states.iter().collect();
        check(unique.len() == self.states.len(), "states", "contains duplicates")?;
        check(
            !self.states.contains(&StateCode::US),
            "states",
            "`US` is reserved for the national aggregate",
        )?;
        check(
            self.respondents.is_finite() && self.respondents > 0.0,
            "respondents",
            "must be positive",
        )?;
        check(self.weight_sd >= 0.0, "weight_sd", "must be nonnegative")?;
        for (name, shares) in [("age_shares", &self.age_shares), ("edu_shares", &self.edu_shares)] {
            check(
                shares.iter().all(|&x| x >= 0.0) && shares.iter().sum::<f64>() > 0.0,
                name,
                "shares must be nonnegative with a positive sum",
            )?;
        }
        if let Some(k) = self.random_combos {
            check(k <= COMBO_COUNT - 9, "random_combos", "at most 247 multi-source combos exist")?;
        }
        check(!self.usage_profiles.is_empty(), "usage_profiles", "need at least one profile")?;
        for (i, p) in self.usage_profiles.iter().enumerate() {
            for (j, &x) in p.iter().enumerate() {
                check(
                    (0.0..=1.0).contains(&x),
                    &format!("usage_profiles[{i}][{j}]"),
                    format!("propensity {x} must lie in [0, 1]"),
                )?;
            }
        }
        check(self.state_jitter >= 0.0, "state_jitter", "must be nonnegative")?;
        check(self.noise_sd >= 0.0, "noise_sd", "must be nonnegative")?;
        check(self.fear_wander_sd >= 0.0, "fear_wander_sd", "must be nonnegative")?;
        check(
            (0.0..1.0).contains(&self.fear_wander_phi),
            "fear_wander_phi",
            "must lie in [0, 1)",
        )?;
        for (i, w) in self.waves.iter().enumerate() {
            check(w.width_days > 0.0, &format!("waves[{i}].width_days"), "must be positive")?;
            check(w.peak_incidence >= 0.0, &format!("waves[{i}].peak_incidence"), "must be nonnegative")?;
        }
        check(
            (0.0..=1.0).contains(&self.fatality_ratio),
            "fatality_ratio",
            "must lie in [0, 1]",
        )?;
        check(self.population > 0, "population", "must be positive")?;
        if !self.cluster_parties.is_empty() {
            check(
                self.cluster_parties.len() >= self.usage_profiles.len(),
                "cluster_parties",
                "need one party per usage profile",
            )?;
        }
        for (field, flips) in [("flips_2020", &self.flips_2020), ("flips_2024", &self.flips_2024)] {
            if let Some(s) = flips.iter().find(|s| !self.states.contains(s)) {
                return Err(Error::config(field, format!("unknown state {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCombo {
    pub mask: u8,
    pub weights: Vec<(Singleton, f64)>,
}

/// Everything the generator decided, for comparison with recovered values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Normalized epidemic curve I(t).
    pub epidemic_curve: Vec<f64>,
    /// Latent per-source fear signal per day, before cluster offsets and
    /// demographic shifts.
    pub singleton_fear: BTreeMap<Singleton, Vec<f64>>,
    /// Masses of combos that can carry mass, ascending.
    pub active_combos: Vec<u8>,
    pub disentangle_weights: Vec<PlantedCombo>,
    pub cluster_memberships: BTreeMap<StateCode, usize>,
    pub usage_propensities: BTreeMap<StateCode, [f64; 8]>,
    pub cluster_fear_offset: Vec<[f64; 9]>,
    pub age_fear_shift: [f64; 3],
    pub edu_fear_shift: [f64; 3],
    pub elections: BTreeMap<u16, ElectionLabels>,
}

impl PlantedTruth {
    pub fn weight(&self, combo: SourceCombo, s: Singleton) -> Option<f64> {
        self.disentangle_weights
            .iter()
            .find(|c| c.mask == combo.mask())?
            .weights
            .iter()
            .find(|(m, _)| *m == s)
            .map(|(_, w)| *w)
    }

    pub fn cluster_groups(&self) -> BTreeMap<usize, Vec<StateCode>> {
        let mut out: BTreeMap<usize, Vec<StateCode>> = BTreeMap::new();
        for (s, c) in &self.cluster_memberships {
            out.entry(*c).or_default().push(*s);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub panel: SurveyPanel,
    pub truth: PlantedTruth,
    pub surveillance: Surveillance,
    pub elections: BTreeMap<u16, ElectionLabels>,
}

pub fn generate_synthetic_panel(config: &SynthConfig, seed: u64) -> Result<(SurveyPanel, PlantedTruth)> {
    let data = SyntheticData::generate(config, seed)?;
    Ok((data.panel, data.truth))
}

fn epidemic_curve(config: &SynthConfig, t: f64) -> f64 {
    config
        .waves
        .iter()
        .map(|w| w.peak_incidence * (-0.5 * ((t - w.peak_day) / w.width_days).powi(2)).exp())
        .sum()
}

fn fear_shares(score: f64) -> [f64; 4] {
    let x = score.clamp(-1.0, 1.0);
    let mut p = NEUTRAL_FEAR.map(|v| v * (1.0 - x.abs()));
    if x >= 0.0 {
        p[0] += x;
    } else {
        p[3] -= x;
    }
    p
}

fn categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

struct Model<'a> {
    config: &'a SynthConfig,
    curve: Vec<f64>,
    signals: Vec<[f64; 9]>,
    active: Vec<SourceCombo>,
    restricted: bool,
    weights: Vec<Vec<(Singleton, f64)>>,
    membership: BTreeMap<StateCode, usize>,
    propensity: BTreeMap<StateCode, [f64; 8]>,
}

impl Model<'_> {
    fn usage_probs(&self, state: StateCode, t: usize, demo: DemographicCell) -> Vec<f64> {
        let base = &self.propensity[&state];
        let shift = self.config.age_usage_shift[demo.age.index()] + self.config.edu_usage_shift[demo.education.index()];
        let q: [f64; 8] = std::array::from_fn(|j| {
            (base[j] + self.config.usage_wave[j] * self.curve[t] + shift).clamp(0.0, 1.0)
        });
        let mut probs: Vec<f64> = self
            .active
            .iter()
            .map(|c| {
                (0..8)
                    .map(|j| if c.mask() & (1 << j) != 0 { q[j] } else { 1.0 - q[j] })
                    .product()
            })
            .collect();
        if self.restricted {
            let total: f64 = probs.iter().sum();
            if total > 0.0 {
                probs.iter_mut().for_each(|p| *p /= total);
            }
        }
        probs
    }

    /// Fear score of active combo `k` before noise.
    fn score(&self, state: StateCode, t: usize, demo: DemographicCell, k: usize) -> f64 {
        let cluster = self.membership[&state];
        let offset = self.config.cluster_fear_offset.get(cluster).copied().unwrap_or([0.0; 9]);
        let shift = self.config.age_fear_shift[demo.age.index()] + self.config.edu_fear_shift[demo.education.index()];
        self.weights[k]
            .iter()
            .map(|&(s, w)| w * (self.signals[t][s.index()] + offset[s.index()]))
            .sum::<f64>()
            + shift
    }
}

impl SyntheticData {
    pub fn generate(config: &SynthConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let days = config.days as usize;

        // planted clusters: balanced assignment over a seeded permutation
        let mut states = config.states.clone();
        states.sort();
        let mut shuffled = states.clone();
        shuffled.shuffle(&mut rng);
        let k = config.usage_profiles.len();
        let membership: BTreeMap<StateCode, usize> =
            shuffled.iter().enumerate().map(|(i, s)| (*s, i % k)).collect();

        let jitter = Normal::new(0.0, config.state_jitter).expect("validated sd");
        let propensity: BTreeMap<StateCode, [f64; 8]> = states
            .iter()
            .map(|s| {
                let profile = config.usage_profiles[membership[s]];
                let p = std::array::from_fn(|j| (profile[j] + jitter.sample(&mut rng)).clamp(0.0, 1.0));
                (*s, p)
            })
            .collect();

        let multi: Vec<SourceCombo> = (0..=u8::MAX)
            .map(SourceCombo::from_mask)
            .filter(|c| c.len() >= 2)
            .collect();
        let mut active: Vec<SourceCombo> = Singleton::ALL.into_iter().map(SourceCombo::singleton).collect();
        match config.random_combos {
            Some(n) => active.extend(multi.choose_multiple(&mut rng, n).copied()),
            None => active.extend(multi.iter().copied()),
        }
        active.sort();

        let weights: Vec<Vec<(Singleton, f64)>> = active
            .iter()
            .map(|c| {
                let members = c.members();
                if members.len() == 1 {
                    return vec![(members[0], 1.0)];
                }
                let draws: Vec<f64> = members.iter().map(|_| Exp1.sample(&mut rng)).collect();
                let total: f64 = draws.iter().sum();
                members.into_iter().zip(draws.into_iter().map(|d| d / total)).collect()
            })
            .collect();

        let raw_curve: Vec<f64> = (0..days).map(|t| epidemic_curve(config, t as f64)).collect();
        let peak = raw_curve.iter().cloned().fold(0.0, f64::max);
        let norm = |x: f64| if peak > 0.0 { x / peak } else { 0.0 };
        let curve: Vec<f64> = raw_curve.iter().map(|&x| norm(x)).collect();

        let phi = config.fear_wander_phi;
        let mut wander = [0.0f64; 9];
        let stationary = config.fear_wander_sd / (1.0 - phi * phi).sqrt();
        for w in wander.iter_mut() {
            *w = stationary * rng.sample::<f64, _>(StandardNormal);
        }
        let mut signals = Vec::with_capacity(days);
        for t in 0..days {
            if t > 0 {
                for w in wander.iter_mut() {
                    *w = phi * *w + config.fear_wander_sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            let s: [f64; 9] = std::array::from_fn(|i| {
                let lagged = norm(epidemic_curve(config, t as f64 - config.fear_lag_days[i]));
                (config.fear_base[i] + config.fear_amplitude[i] * lagged + wander[i]).clamp(-1.0, 1.0)
            });
            signals.push(s);
        }

        let model = Model {
            config,
            curve,
            signals,
            restricted: config.random_combos.is_some(),
            active,
            weights,
            membership,
            propensity,
        };

        let cells = match config.sampling {
            Sampling::Expected => expected_cells(&model, &states, &mut rng),
            Sampling::Respondents => sampled_cells(&model, &states, &mut rng),
        };
        let panel = SurveyPanel::from_cells(cells)?;

        let surveillance = synth_surveillance(config, &states, &raw_curve)?;
        let elections = synth_elections(config, &model.membership);

        let truth = PlantedTruth {
            seed,
            start_date: config.start_date,
            epidemic_curve: model.curve.clone(),
            singleton_fear: Singleton::ALL
                .into_iter()
                .map(|s| (s, model.signals.iter().map(|v| v[s.index()]).collect()))
                .collect(),
            active_combos: model.active.iter().map(|c| c.mask()).collect(),
            disentangle_weights: model
                .active
                .iter()
                .zip(&model.weights)
                .map(|(c, w)| PlantedCombo {
                    mask: c.mask(),
                    weights: w.clone(),
                })
                .collect(),
            cluster_memberships: model.membership.clone(),
            usage_propensities: model.propensity.clone(),
            cluster_fear_offset: config.cluster_fear_offset.clone(),
            age_fear_shift: config.age_fear_shift,
            edu_fear_shift: config.edu_fear_shift,
            elections: elections.clone(),
        };
        Ok(SyntheticData {
            panel,
            truth,
            surveillance,
            elections,
        })
    }
}

fn demo_cells() -> Vec<DemographicCell> {
    AgeGroup::ALL
        .into_iter()
        .flat_map(|age| EduGroup::ALL.into_iter().map(move |education| DemographicCell { age, education }))
        .collect()
}

/// Per-combo noise for one state-day, zero for single-source combos.
fn combo_noise(model: &Model, rng: &mut ChaCha8Rng) -> Vec<f64> {
    model
        .active
        .iter()
        .map(|c| {
            if model.config.noise_sd > 0.0 && c.len() >= 2 {
                model.config.noise_sd * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            }
        })
        .collect()
}

fn expected_cells(model: &Model, states: &[StateCode], rng: &mut ChaCha8Rng) -> Vec<SurveyCell> {
    let cfg = model.config;
    let age_total: f64 = cfg.age_shares.iter().sum();
    let edu_total: f64 = cfg.edu_shares.iter().sum();
    let mut cells = Vec::new();
    for &state in states {
        for (t, date) in cfg.start_date.iter_days().take(cfg.days as usize).enumerate() {
            let noise = combo_noise(model, rng);
            for demo in demo_cells() {
                let demo_mass = cfg.respondents * cfg.age_shares[demo.age.index()] / age_total
                    * cfg.edu_shares[demo.education.index()]
                    / edu_total;
                let probs = model.usage_probs(state, t, demo);
                for (k, &combo) in model.active.iter().enumerate() {
                    let combo_mass = demo_mass * probs[k];
                    if combo_mass <= 0.0 {
                        continue;
                    }
                    let shares = fear_shares(model.score(state, t, demo, k) + noise[k]);
                    for fear in FearLevel::ALL {
                        let m = combo_mass * shares[fear.index()];
                        if m > 0.0 {
                            cells.push(SurveyCell {
                                date,
                                state,
                                demo,
                                combo,
                                fear,
                                weighted_count: m,
                            });
                        }
                    }
                }
            }
        }
    }
    cells
}

fn sampled_cells(model: &Model, states: &[StateCode], rng: &mut ChaCha8Rng) -> Vec<SurveyCell> {
    let cfg = model.config;
    let poisson = Poisson::new(cfg.respondents).expect("validated respondents");
    let log_weight = Normal::new(0.0, cfg.weight_sd).expect("validated sd");
    let demos = demo_cells();
    let mut cells = Vec::new();
    for &state in states {
        for (t, date) in cfg.start_date.iter_days().take(cfg.days as usize).enumerate() {
            let noise = combo_noise(model, rng);
            let probs: Vec<Vec<f64>> = demos.iter().map(|&d| model.usage_probs(state, t, d)).collect();
            let n = poisson.sample(rng) as usize;
            let mut day: BTreeMap<(DemographicCell, SourceCombo, FearLevel), f64> = BTreeMap::new();
            for _ in 0..n {
                let age = categorical(rng, &cfg.age_shares);
                let edu = categorical(rng, &cfg.edu_shares);
                let d = age * 3 + edu;
                let k = categorical(rng, &probs[d]);
                let shares = fear_shares(model.score(state, t, demos[d], k) + noise[k]);
                let fear = FearLevel::ALL[categorical(rng, &shares)];
                let w = log_weight.sample(rng).exp();
                *day.entry((demos[d], model.active[k], fear)).or_default() += w;
            }
            cells.extend(day.into_iter().map(|((demo, combo, fear), m)| SurveyCell {
                date,
                state,
                demo,
                combo,
                fear,
                weighted_count: m,
            }));
        }
    }
    cells
}

fn synth_surveillance(config: &SynthConfig, states: &[StateCode], curve: &[f64]) -> Result<Surveillance> {
    let per_100k = config.population as f64 / 1e5;
    let new_cases: Vec<u64> = curve.iter().map(|c| (c * per_100k).round() as u64).collect();
    let new_deaths: Vec<u64> = new_cases
        .iter()
        .map(|&c| (c as f64 * config.fatality_ratio).round() as u64)
        .collect();
    let n_states = states.len() as u64;
    let mut records = Vec::new();
    for &geo in states.iter().chain(std::iter::once(&StateCode::US)) {
        let scale = if geo.is_national() { n_states } else { 1 };
        let (mut cases, mut deaths) = (0u64, 0u64);
        for (t, date) in config.start_date.iter_days().take(config.days as usize).enumerate() {
            cases += new_cases[t] * scale;
            deaths += new_deaths[t] * scale;
            records.push(SurveillanceRecord {
                date,
                geography: geo,
                cumulative_cases: cases,
                cumulative_deaths: deaths,
                population: config.population * scale,
            });
        }
    }
    Surveillance::from_records(records)
}

fn synth_elections(config: &SynthConfig, membership: &BTreeMap<StateCode, usize>) -> BTreeMap<u16, ElectionLabels> {
    if config.cluster_parties.is_empty() {
        return BTreeMap::new();
    }
    [(2020u16, &config.flips_2020), (2024, &config.flips_2024)]
        .into_iter()
        .map(|(year, flips)| {
            let labels = membership
                .iter()
                .map(|(s, &c)| {
                    let party = config.cluster_parties[c];
                    (*s, if flips.contains(s) { party.other() } else { party })
                })
                .collect();
            (year, ElectionLabels { year, labels })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::{fear_score_of, DayMasses};
    use crate::data_model::FearWeights;

    fn small() -> SynthConfig {
        SynthConfig {
            states: vec!["CA".parse().unwrap(), "TX".parse().unwrap(), "NY".parse().unwrap(), "FL".parse().unwrap()],
            days: 20,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn fear_shares_score_exactly() {
        for x in [-1.0, -0.7, -0.2, 0.0, 0.3, 0.99, 1.0] {
            let p = fear_shares(x);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!((fear_score_of(&p, &FearWeights::DEFAULT) - x).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_single_source_panel() {
        let mut profile = [0.0; 8];
        profile[0] = 1.0;
        let mut fear_base = [0.0; 9];
        fear_base[0] = 1.0;
        let cfg = SynthConfig {
            states: vec!["CA".parse().unwrap()],
            days: 5,
            sampling: Sampling::Expected,
            usage_profiles: vec![profile],
            state_jitter: 0.0,
            usage_wave: [0.0; 8],
            age_usage_shift: [0.0; 3],
            edu_usage_shift: [0.0; 3],
            fear_base,
            fear_amplitude: [0.0; 9],
            fear_wander_sd: 0.0,
            cluster_fear_offset: vec![],
            age_fear_shift: [0.0; 3],
            edu_fear_shift: [0.0; 3],
            noise_sd: 0.0,
            cluster_parties: vec![Party::Democratic],
            ..SynthConfig::default()
        };
        let (panel, truth) = generate_synthetic_panel(&cfg, 7).unwrap();
        assert!(!panel.is_empty());
        for c in panel.cells() {
            assert_eq!(c.combo, SourceCombo::singleton(Singleton::Doctors));
            assert_eq!(c.fear, FearLevel::GreatDeal);
        }
        assert!(truth.singleton_fear[&Singleton::Doctors].iter().all(|&x| x == 1.0));
        let mut day = DayMasses::zero();
        for c in panel.cells().iter().filter(|c| c.date == cfg.start_date) {
            day.add(c.combo, c.fear, c.weighted_count);
        }
        let total = day.combo_mass(SourceCombo::singleton(Singleton::Doctors));
        assert!((total - cfg.respondents).abs() < 1e-9);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = small();
        let a = SyntheticData::generate(&cfg, 11).unwrap();
        let b = SyntheticData::generate(&cfg, 11).unwrap();
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.surveillance, b.surveillance);
        let c = SyntheticData::generate(&cfg, 12).unwrap();
        assert_ne!(a.panel, c.panel);
    }

    #[test]
    fn two_planted_clusters() {
        let cfg = small();
        let (_, truth) = generate_synthetic_panel(&cfg, 3).unwrap();
        let groups = truth.cluster_groups();
        assert_eq!(groups.len(), 2);
        assert!(groups.values().all(|g| g.len() == 2));
        assert_eq!(truth.elections[&2020].labels.len(), 4);
    }

    #[test]
    fn planted_weights_are_convex() {
        let cfg = SynthConfig {
            random_combos: Some(30),
            ..small()
        };
        let (panel, truth) = generate_synthetic_panel(&cfg, 5).unwrap();
        assert_eq!(truth.active_combos.len(), 39);
        for c in &truth.disentangle_weights {
            let sum: f64 = c.weights.iter().map(|(_, w)| w).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(c.weights.iter().all(|(_, w)| *w >= 0.0));
        }
        let active: BTreeSet<u8> = truth.active_combos.iter().copied().collect();
        assert!(panel.cells().iter().all(|c| active.contains(&c.combo.mask())));
    }

    #[test]
    fn invalid_config_names_field() {
        let mut cfg = small();
        cfg.usage_profiles[1][3] = -0.2;
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "usage_profiles[1][3]"),
            other => panic!("{other:?}"),
        }
        match SynthConfig::from_toml("days = 10\nbogus = 3\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "bogus"),
            other => panic!("{other:?}"),
        }
        let cfg = SynthConfig {
            flips_2020: vec!["ZZ".parse().unwrap()],
            ..small()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = SynthConfig {
            random_combos: Some(12),
            ..small()
        };
        let back = SynthConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn surveillance_is_cumulative() {
        let data = SyntheticData::generate(&small(), 1).unwrap();
        assert!(data.surveillance.flags.is_empty());
        assert_eq!(data.surveillance.records.len(), 5);
        let us = &data.surveillance.records[&StateCode::US];
        assert!(us.windows(2).all(|w| w[0].cumulative_cases <= w[1].cumulative_cases));
    }
}
