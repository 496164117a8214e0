//! Usage shares, fear scores and the per-source disentanglement of combo fear
//! scores.
//!
//! The pipeline for one pool of respondents (a stratum, or a single
//! age x education cell) and one geography scope is:
//!
//! 1. aggregate weighted masses per day, combo and fear level ([`aggregate`]);
//! 2. normalize combo masses into usage shares and read off per-source usage
//!    by summing the shares of every combo containing the source;
//! 3. normalize fear levels within each combo and weight them into a combo
//!    fear score in [-1, 1];
//! 4. for every combo, regress its daily fear score on the daily scores of the
//!    exact single-source combos of its members (least squares, minimum norm);
//! 5. combine the fitted weights into one fear score per source.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{
    DemographicCell, FearLevel, FearWeights, Grouping, PerSingleton, Singleton, SourceCombo,
    Stratum, COMBO_COUNT,
};
use crate::epi::{rolling_mean, DailySeries};
use crate::error::{Error, Result};
use crate::ingest::{StateCode, SurveyCell, SurveyPanel};
use crate::linalg::least_squares;

/// Geography over which respondents are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    /// The `US` rows when present, otherwise the sum over all states.
    National,
    State(StateCode),
}

impl Scope {
    pub fn cells(self, panel: &SurveyPanel) -> &[SurveyCell] {
        match self {
            Scope::National if panel.has_national_rows() => panel.cells_for_state(StateCode::US),
            Scope::National => panel.cells(),
            Scope::State(s) => panel.cells_for_state(s),
        }
    }

    pub fn label(self) -> String {
        match self {
            Scope::National => "US".to_string(),
            Scope::State(s) => s.to_string(),
        }
    }
}

/// A group of respondents whose answers are pooled before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pool {
    Stratum(Stratum),
    Cell(DemographicCell),
}

impl Pool {
    pub fn label(self) -> String {
        match self {
            Pool::Stratum(s) => s.label(),
            Pool::Cell(c) => format!("age{}_edu{}", c.age.code(), c.education.code()),
        }
    }

    pub fn stratum(self) -> Option<Stratum> {
        match self {
            Pool::Stratum(s) => Some(s),
            Pool::Cell(_) => None,
        }
    }
}

impl fmt::Display for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Grouped(Grouping),
    /// Every age x education cell separately.
    Cells,
}

impl Pooling {
    pub fn pools(self) -> Vec<Pool> {
        match self {
            Pooling::Grouped(g) => g.strata().into_iter().map(Pool::Stratum).collect(),
            Pooling::Cells => crate::data_model::AgeGroup::ALL
                .into_iter()
                .flat_map(|age| {
                    crate::data_model::EduGroup::ALL
                        .into_iter()
                        .map(move |education| Pool::Cell(DemographicCell { age, education }))
                })
                .collect(),
        }
    }

    fn pool_index(self, demo: DemographicCell) -> usize {
        match self {
            Pooling::Grouped(Grouping::Ungrouped) => 0,
            Pooling::Grouped(Grouping::ByAge) => demo.age.index(),
            Pooling::Grouped(Grouping::ByEducation) => demo.education.index(),
            Pooling::Cells => demo.age.index() * 3 + demo.education.index(),
        }
    }
}

/// Weighted respondent mass per (combo, fear level) for one day.
#[derive(Clone, PartialEq)]
pub struct DayMasses(Box<[[f64; 4]; COMBO_COUNT]>);

impl DayMasses {
    pub fn zero() -> Self {
        DayMasses(Box::new([[0.0; 4]; COMBO_COUNT]))
    }

    pub fn add(&mut self, combo: SourceCombo, fear: FearLevel, mass: f64) {
        self.0[combo.index()][fear.index()] += mass;
    }

    pub fn fear_mass(&self, combo: SourceCombo) -> &[f64; 4] {
        &self.0[combo.index()]
    }

    pub fn combo_mass(&self, combo: SourceCombo) -> f64 {
        self.0[combo.index()].iter().sum()
    }

    pub fn combo_masses(&self) -> Vec<f64> {
        self.0.iter().map(|f| f.iter().sum()).collect()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().flatten().sum()
    }
}

impl fmt::Debug for DayMasses {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DayMasses(total={})", self.total())
    }
}

/// Daily masses of one pool over the panel's full day range.
#[derive(Debug, Clone)]
pub struct PoolMasses {
    pub pool: Pool,
    pub days: Vec<NaiveDate>,
    pub masses: Vec<DayMasses>,
}

/// Sums cell masses per pool and day. Days with no cells keep zero mass.
pub fn aggregate(panel: &SurveyPanel, scope: Scope, pooling: Pooling) -> Vec<PoolMasses> {
    let days = panel.days();
    let pools = pooling.pools();
    let mut masses: Vec<Vec<DayMasses>> = pools
        .iter()
        .map(|_| days.iter().map(|_| DayMasses::zero()).collect())
        .collect();
    if let Some(&first) = days.first() {
        for c in scope.cells(panel) {
            let t = (c.date - first).num_days() as usize;
            masses[pooling.pool_index(c.demo)][t].add(c.combo, c.fear, c.weighted_count);
        }
    }
    pools
        .into_iter()
        .zip(masses)
        .map(|(pool, masses)| PoolMasses {
            pool,
            days: days.clone(),
            masses,
        })
        .collect()
}

/// Divides by the total; `None` when the total mass is zero.
pub fn normalize_masses(masses: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = masses.iter().sum();
    (total > 0.0).then(|| masses.iter().map(|m| m / total).collect())
}

/// Normalized combo shares for one pool and day; `values` is `None` on days
/// without respondents.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageDistribution {
    pub pool: Pool,
    pub date: NaiveDate,
    pub values: Option<Vec<f64>>,
}

pub fn usage_distributions(pm: &PoolMasses) -> Vec<UsageDistribution> {
    pm.days
        .iter()
        .zip(&pm.masses)
        .map(|(&date, m)| UsageDistribution {
            pool: pm.pool,
            date,
            values: normalize_masses(&m.combo_masses()),
        })
        .collect()
}

/// National usage distributions, one time series per stratum of `grouping`.
pub fn normalize_usage(panel: &SurveyPanel, grouping: Grouping) -> Vec<Vec<UsageDistribution>> {
    aggregate(panel, Scope::National, Pooling::Grouped(grouping))
        .iter()
        .map(usage_distributions)
        .collect()
}

/// Share of respondents using each source: the sum of the shares of all
/// combos containing it. The nine values may sum to more than one.
pub fn singleton_usage_of(shares: &[f64]) -> PerSingleton<f64> {
    assert_eq!(shares.len(), COMBO_COUNT);
    let mut out = PerSingleton::<f64>::default();
    for (mask, &share) in shares.iter().enumerate() {
        if mask == 0 {
            out[Singleton::NoneOfTheAbove] += share;
            continue;
        }
        for (bit, s) in Singleton::NAMED.into_iter().enumerate() {
            if mask & (1 << bit) != 0 {
                out[s] += share;
            }
        }
    }
    out
}

pub fn singleton_usage(usage: &UsageDistribution) -> Option<PerSingleton<f64>> {
    usage.values.as_deref().map(singleton_usage_of)
}

/// Fear-level shares within each combo; `None` for combos without respondents.
#[derive(Debug, Clone, PartialEq)]
pub struct FearDistribution {
    pub pool: Pool,
    pub date: NaiveDate,
    pub values: Vec<Option<[f64; 4]>>,
}

pub fn fear_distribution(pool: Pool, date: NaiveDate, day: &DayMasses) -> FearDistribution {
    let values = (0..COMBO_COUNT)
        .map(|i| {
            let m = day.fear_mass(SourceCombo::from_mask(i as u8));
            let total: f64 = m.iter().sum();
            (total > 0.0).then(|| m.map(|x| x / total))
        })
        .collect();
    FearDistribution { pool, date, values }
}

pub fn fear_distributions(pm: &PoolMasses) -> Vec<FearDistribution> {
    pm.days
        .iter()
        .zip(&pm.masses)
        .map(|(&date, m)| fear_distribution(pm.pool, date, m))
        .collect()
}

/// Weighted sum of level shares. Mirrored levels are summed pairwise first so
/// that, with antisymmetric weights, reversing the levels negates the score
/// exactly.
pub fn fear_score_of(shares: &[f64; 4], weights: &FearWeights) -> f64 {
    let w = &weights.0;
    let outer = w[0] * shares[0] + w[3] * shares[3];
    let inner = w[1] * shares[1] + w[2] * shares[2];
    outer + inner
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComboFearScore {
    pub pool: Pool,
    pub date: NaiveDate,
    pub values: Vec<Option<f64>>,
}

impl ComboFearScore {
    pub fn get(&self, combo: SourceCombo) -> Option<f64> {
        self.values[combo.index()]
    }
}

pub fn combo_fear_score(dist: &FearDistribution) -> ComboFearScore {
    combo_fear_score_with(dist, &FearWeights::DEFAULT)
}

pub fn combo_fear_score_with(dist: &FearDistribution, weights: &FearWeights) -> ComboFearScore {
    ComboFearScore {
        pool: dist.pool,
        date: dist.date,
        values: dist
            .values
            .iter()
            .map(|d| d.as_ref().map(|s| fear_score_of(s, weights)))
            .collect(),
    }
}

/// Regressors for the disentanglement: the score of each exact
/// single-source combo.
pub fn singleton_proxies(score: &ComboFearScore) -> PerSingleton<Option<f64>> {
    PerSingleton::from_fn(|s| score.get(SourceCombo::singleton(s)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    /// No day with both the combo score and all member proxies present.
    NoData,
    /// Fewer usable days than weights.
    Underdetermined { days: usize, unknowns: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComboFit {
    pub combo: SourceCombo,
    pub weights: Option<Vec<(Singleton, f64)>>,
    pub residual_ss: Option<f64>,
    pub days_used: usize,
    pub status: FitStatus,
}

/// Per-combo regression weights `w(s' | s)` for members `s'` of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisentangleWeights {
    fits: Vec<ComboFit>,
}

impl DisentangleWeights {
    pub fn fit(&self, combo: SourceCombo) -> &ComboFit {
        &self.fits[combo.index()]
    }

    pub fn fits(&self) -> &[ComboFit] {
        &self.fits
    }

    /// The fitted weight, or 0 for non-members and unfitted combos.
    pub fn weight(&self, combo: SourceCombo, s: Singleton) -> f64 {
        self.fits[combo.index()]
            .weights
            .as_ref()
            .and_then(|ws| ws.iter().find(|(m, _)| *m == s).map(|(_, w)| *w))
            .unwrap_or(0.0)
    }

    pub fn fitted(&self) -> impl Iterator<Item = &ComboFit> {
        self.fits.iter().filter(|f| f.status == FitStatus::Fitted)
    }

    /// Combos with some data but too few days to fit.
    pub fn flagged(&self) -> impl Iterator<Item = &ComboFit> {
        self.fits
            .iter()
            .filter(|f| matches!(f.status, FitStatus::Underdetermined { .. }))
    }
}

fn fit_combo(
    combo: SourceCombo,
    combo_scores: &[ComboFearScore],
    proxies: &[PerSingleton<Option<f64>>],
) -> ComboFit {
    let members = combo.members();
    let mut rows: Vec<f64> = Vec::new();
    let mut target: Vec<f64> = Vec::new();
    'days: for (score, proxy) in combo_scores.iter().zip(proxies) {
        let Some(y) = score.get(combo) else { continue };
        let start = rows.len();
        for &m in &members {
            match proxy[m] {
                Some(x) => rows.push(x),
                None => {
                    rows.truncate(start);
                    continue 'days;
                }
            }
        }
        target.push(y);
    }
    let days = target.len();
    let unknowns = members.len();
    let status = if days == 0 {
        FitStatus::NoData
    } else if days < unknowns {
        FitStatus::Underdetermined { days, unknowns }
    } else {
        FitStatus::Fitted
    };
    if status != FitStatus::Fitted {
        return ComboFit {
            combo,
            weights: None,
            residual_ss: None,
            days_used: days,
            status,
        };
    }
    let x = DMatrix::from_row_slice(days, unknowns, &rows);
    let ls = least_squares(&x, &DVector::from_vec(target));
    ComboFit {
        combo,
        weights: Some(members.into_iter().zip(ls.coef.iter().copied()).collect()),
        residual_ss: Some(ls.residual_ss),
        days_used: days,
        status,
    }
}

/// Fits every combo independently on the days where its score and all of
/// its members' proxies are present.
pub fn fit_disentangle_weights(
    combo_scores: &[ComboFearScore],
    proxies: &[PerSingleton<Option<f64>>],
) -> Result<DisentangleWeights> {
    if combo_scores.len() != proxies.len() {
        return Err(Error::Alignment(format!(
            "{} combo-score days but {} proxy days",
            combo_scores.len(),
            proxies.len()
        )));
    }
    let fits = (0..COMBO_COUNT)
        .into_par_iter()
        .map(|m| fit_combo(SourceCombo::from_mask(m as u8), combo_scores, proxies))
        .collect();
    Ok(DisentangleWeights { fits })
}

/// How fitted weights are turned into one fear score per source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisentangleMode {
    /// `phi(s') = sum over s of w(s'|s) * proxy(s')`.
    #[default]
    Verbatim,
    /// `phi(s') = sum over s of w(s'|s) * score(s)`.
    ComboWeighted,
}

impl FromStr for DisentangleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verbatim" => Ok(DisentangleMode::Verbatim),
            "combo-weighted" | "combo_weighted" => Ok(DisentangleMode::ComboWeighted),
            other => Err(Error::config(
                "disentangle-mode",
                format!("unknown mode `{other}` (expected verbatim or combo-weighted)"),
            )),
        }
    }
}

impl fmt::Display for DisentangleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DisentangleMode::Verbatim => "verbatim",
            DisentangleMode::ComboWeighted => "combo-weighted",
        })
    }
}

/// Per-source fear scores for one pool on one day (or averaged when `date`
/// is `None`). Sources without any contributing term read 0 and are flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct SingletonFearScore {
    pub pool: Pool,
    pub date: Option<NaiveDate>,
    pub values: PerSingleton<f64>,
    pub no_data: PerSingleton<bool>,
}

impl SingletonFearScore {
    pub fn get(&self, s: Singleton) -> Option<f64> {
        (!self.no_data[s]).then(|| self.values[s])
    }
}

pub fn singleton_fear_score(
    weights: &DisentangleWeights,
    proxies: &[PerSingleton<Option<f64>>],
    combo_scores: &[ComboFearScore],
    mode: DisentangleMode,
) -> Result<Vec<SingletonFearScore>> {
    if combo_scores.len() != proxies.len() {
        return Err(Error::Alignment(format!(
            "{} combo-score days but {} proxy days",
            combo_scores.len(),
            proxies.len()
        )));
    }
    let mut weight_sum = PerSingleton::<f64>::default();
    let mut has_terms = PerSingleton::<bool>::default();
    for fit in weights.fitted() {
        for &(s, w) in fit.weights.as_deref().unwrap_or(&[]) {
            weight_sum[s] += w;
            has_terms[s] = true;
        }
    }
    let out = combo_scores
        .iter()
        .zip(proxies)
        .map(|(scores, proxy)| {
            let mut values = PerSingleton::<f64>::default();
            let mut no_data = PerSingleton::from_fn(|_| true);
            match mode {
                DisentangleMode::Verbatim => {
                    for s in Singleton::ALL {
                        if let (true, Some(p)) = (has_terms[s], proxy[s]) {
                            values[s] = weight_sum[s] * p;
                            no_data[s] = false;
                        }
                    }
                }
                DisentangleMode::ComboWeighted => {
                    for fit in weights.fitted() {
                        let Some(score) = scores.get(fit.combo) else { continue };
                        for &(s, w) in fit.weights.as_deref().unwrap_or(&[]) {
                            values[s] += w * score;
                            no_data[s] = false;
                        }
                    }
                }
            }
            SingletonFearScore {
                pool: scores.pool,
                date: Some(scores.date),
                values,
                no_data,
            }
        })
        .collect();
    Ok(out)
}

/// Averages each source over the days on which it has data.
pub fn mean_singleton_fear(pool: Pool, scores: &[SingletonFearScore]) -> SingletonFearScore {
    let mut values = PerSingleton::<f64>::default();
    let mut no_data = PerSingleton::from_fn(|_| true);
    for s in Singleton::ALL {
        let xs: Vec<f64> = scores.iter().filter_map(|x| x.get(s)).collect();
        if !xs.is_empty() {
            values[s] = xs.iter().sum::<f64>() / xs.len() as f64;
            no_data[s] = false;
        }
    }
    SingletonFearScore {
        pool,
        date: None,
        values,
        no_data,
    }
}

/// Population standard deviation over the absolute mean.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData {
            required: 1,
            available: 0,
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::Undefined("coefficient of variation with zero mean".into()));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxplotSummary {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quartiles plus Tukey whiskers (most extreme points within 1.5 IQR).
pub fn boxplot_summary(values: &[f64]) -> Option<BoxplotSummary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&v, 0.25);
    let q3 = quantile_sorted(&v, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    Some(BoxplotSummary {
        q1,
        median: quantile_sorted(&v, 0.5),
        q3,
        whisker_lo: *v.iter().find(|&&x| x >= lo_fence).expect("q1 lies inside the fence"),
        whisker_hi: *v.iter().rev().find(|&&x| x <= hi_fence).expect("q3 lies inside the fence"),
    })
}

/// Everything computed for one pool: daily per-source usage, combo fear
/// scores, fitted weights and per-source fear scores.
#[derive(Debug, Clone)]
pub struct PoolScores {
    pub pool: Pool,
    pub days: Vec<NaiveDate>,
    pub usage: Vec<Option<PerSingleton<f64>>>,
    pub combo_scores: Vec<ComboFearScore>,
    pub proxies: Vec<PerSingleton<Option<f64>>>,
    pub weights: DisentangleWeights,
    pub singleton_fear: Vec<SingletonFearScore>,
}

pub fn score_pool(pm: &PoolMasses, mode: DisentangleMode) -> Result<PoolScores> {
    let usage = usage_distributions(pm).iter().map(singleton_usage).collect();
    let combo_scores: Vec<ComboFearScore> =
        fear_distributions(pm).iter().map(combo_fear_score).collect();
    let proxies: Vec<_> = combo_scores.iter().map(singleton_proxies).collect();
    let weights = fit_disentangle_weights(&combo_scores, &proxies)?;
    let singleton_fear = singleton_fear_score(&weights, &proxies, &combo_scores, mode)?;
    Ok(PoolScores {
        pool: pm.pool,
        days: pm.days.clone(),
        usage,
        combo_scores,
        proxies,
        weights,
        singleton_fear,
    })
}

pub fn score_panel(
    panel: &SurveyPanel,
    scope: Scope,
    pooling: Pooling,
    mode: DisentangleMode,
) -> Result<Vec<PoolScores>> {
    aggregate(panel, scope, pooling)
        .par_iter()
        .map(|pm| score_pool(pm, mode))
        .collect()
}

impl PoolScores {
    fn series(&self, name: String, value: impl Fn(usize) -> Option<f64>) -> DailySeries {
        let (dates, values) = (0..self.days.len())
            .filter_map(|t| value(t).map(|v| (self.days[t], v)))
            .unzip();
        DailySeries::new(name, dates, values).expect("days are strictly increasing")
    }

    /// Daily fear score of `s`, skipping days without data.
    pub fn fear_series(&self, s: Singleton) -> DailySeries {
        self.series(s.name().to_string(), |t| self.singleton_fear[t].get(s))
    }

    pub fn usage_series(&self, s: Singleton) -> DailySeries {
        self.series(s.name().to_string(), |t| self.usage[t].map(|u| u[s]))
    }

    pub fn mean_usage(&self) -> PerSingleton<Option<f64>> {
        PerSingleton::from_fn(|s| mean(self.usage_series(s).values()))
    }

    pub fn mean_fear(&self) -> PerSingleton<Option<f64>> {
        PerSingleton::from_fn(|s| mean(self.fear_series(s).values()))
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Fear,
    Usage,
}

impl SeriesKind {
    pub fn column(self) -> &'static str {
        match self {
            SeriesKind::Fear => "fear_score",
            SeriesKind::Usage => "usage",
        }
    }

    pub fn series(self, pool: &PoolScores, s: Singleton) -> DailySeries {
        match self {
            SeriesKind::Fear => pool.fear_series(s),
            SeriesKind::Usage => pool.usage_series(s),
        }
    }
}

/// `date,stratum,singleton,<fear_score|usage>` rows, optionally smoothed with
/// a centered window.
pub fn write_singleton_series<W: Write>(
    pools: &[PoolScores],
    kind: SeriesKind,
    smoothing: Option<u32>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "stratum", "singleton", kind.column()])?;
    for pool in pools {
        let mut rows: BTreeMap<(NaiveDate, Singleton), f64> = BTreeMap::new();
        for s in Singleton::ALL {
            let mut series = kind.series(pool, s);
            if series.is_empty() {
                continue;
            }
            if let Some(window) = smoothing {
                series = rolling_mean(&series, window)?;
            }
            rows.extend(series.iter().map(|(d, v)| ((d, s), v)));
        }
        let label = pool.pool.label();
        for ((d, s), v) in rows {
            w.write_record([d.to_string(), label.clone(), s.name().to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `stratum,singleton,q1,median,q3,whisker_lo,whisker_hi` over daily values.
pub fn write_boxplots<W: Write>(pools: &[PoolScores], kind: SeriesKind, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stratum", "singleton", "q1", "median", "q3", "whisker_lo", "whisker_hi"])?;
    for pool in pools {
        for s in Singleton::ALL {
            let Some(b) = boxplot_summary(kind.series(pool, s).values()) else { continue };
            w.write_record([
                pool.pool.label(),
                s.name().to_string(),
                b.q1.to_string(),
                b.median.to_string(),
                b.q3.to_string(),
                b.whisker_lo.to_string(),
                b.whisker_hi.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
