//! Causal graph of demographics, information source and fear, and the
//! attribution of fear variance to Age, Education and Source.
//!
//! Attribution is the Shapley value of the coalition game `v(T) = R²(T)`,
//! where `R²(T)` comes from a weighted main-effects regression of fear on
//! one-hot encodings of the predictors in `T`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{AgeGroup, DemographicCell, EduGroup, Singleton, SourceCombo};
use crate::error::{Error, Result};
use crate::ingest::SurveyPanel;
use crate::linalg::least_squares;
use crate::scores::{Pool, PoolScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    Age,
    Education,
    Source,
    Fear,
}

impl Node {
    pub const ALL: [Node; 4] = [Node::Age, Node::Education, Node::Source, Node::Fear];
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

const STANDARD_EDGES: [(Node, Node); 6] = [
    (Node::Age, Node::Education),
    (Node::Age, Node::Source),
    (Node::Education, Node::Source),
    (Node::Age, Node::Fear),
    (Node::Education, Node::Fear),
    (Node::Source, Node::Fear),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalDag {
    edges: BTreeSet<(Node, Node)>,
}

impl Default for CausalDag {
    fn default() -> Self {
        CausalDag::with_edges(STANDARD_EDGES)
    }
}

impl CausalDag {
    pub fn with_edges(edges: impl IntoIterator<Item = (Node, Node)>) -> Self {
        CausalDag {
            edges: edges.into_iter().collect(),
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (Node, Node)> + '_ {
        self.edges.iter().copied()
    }

    pub fn parents(&self, node: Node) -> Vec<Node> {
        self.edges.iter().filter(|(_, to)| *to == node).map(|(from, _)| *from).collect()
    }

    pub fn is_acyclic(&self) -> bool {
        let mut indegree: BTreeMap<Node, usize> = Node::ALL.iter().map(|n| (*n, 0)).collect();
        for (_, to) in &self.edges {
            *indegree.get_mut(to).expect("known node") += 1;
        }
        let mut ready: Vec<Node> = indegree.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let mut seen = 0;
        while let Some(n) = ready.pop() {
            seen += 1;
            for (_, to) in self.edges.iter().filter(|(from, _)| *from == n) {
                let d = indegree.get_mut(to).expect("known node");
                *d -= 1;
                if *d == 0 {
                    ready.push(*to);
                }
            }
        }
        seen == Node::ALL.len()
    }

    /// One `From -> To` line per edge.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (from, to) in &self.edges {
            writeln!(out, "{from} -> {to}")?;
        }
        Ok(())
    }
}

/// True iff the graph has exactly the six standard edges and no cycle.
pub fn validate_dag(dag: &CausalDag) -> bool {
    dag.is_acyclic() && *dag == CausalDag::default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictor {
    Age,
    Education,
    Source,
}

impl Predictor {
    pub const ALL: [Predictor; 3] = [Predictor::Age, Predictor::Education, Predictor::Source];

    fn bit(self) -> u8 {
        1 << self as u8
    }

    pub fn label(self) -> &'static str {
        match self {
            Predictor::Age => "age",
            Predictor::Education => "education",
            Predictor::Source => "source",
        }
    }
}

/// A subset of the three predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PredictorSet(u8);

impl PredictorSet {
    pub const EMPTY: PredictorSet = PredictorSet(0);
    pub const FULL: PredictorSet = PredictorSet(0b111);

    pub fn of(predictors: &[Predictor]) -> Self {
        PredictorSet(predictors.iter().fold(0, |m, p| m | p.bit()))
    }

    pub fn contains(self, p: Predictor) -> bool {
        self.0 & p.bit() != 0
    }

    pub fn with(self, p: Predictor) -> Self {
        PredictorSet(self.0 | p.bit())
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn all_subsets() -> impl Iterator<Item = PredictorSet> {
        (0..8u8).map(PredictorSet)
    }

    pub fn label(self) -> String {
        if self.is_empty() {
            return "intercept".into();
        }
        Predictor::ALL
            .iter()
            .filter(|p| self.contains(**p))
            .map(|p| p.label())
            .collect::<Vec<_>>()
            .join("+")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub age: AgeGroup,
    pub education: EduGroup,
    pub source: Singleton,
    pub fear: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationTable {
    rows: Vec<Observation>,
}

impl ObservationTable {
    pub fn new(rows: Vec<Observation>) -> Result<Self> {
        for r in &rows {
            if !(r.weight.is_finite() && r.weight >= 0.0) {
                return Err(Error::domain("observation weight", r.weight));
            }
            if !r.fear.is_finite() {
                return Err(Error::domain("observation fear", r.fear));
            }
        }
        Ok(ObservationTable { rows })
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["age", "edu", "source", "fear", "weight"])?;
        for r in &self.rows {
            w.write_record([
                r.age.code().to_string(),
                r.education.code().to_string(),
                r.source.code().to_string(),
                r.fear.to_string(),
                r.weight.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One row per (date, state, age, education, source) with positive
/// source-attributed mass. `cell_scores` are per demographic cell
/// ([`Pool::Cell`]); the fear value is that cell's source fear score on the
/// day. National rows are used only when the panel has no state rows.
pub fn build_observations(panel: &SurveyPanel, cell_scores: &[PoolScores]) -> Result<ObservationTable> {
    let mut fear: BTreeMap<(DemographicCell, NaiveDate), [Option<f64>; 9]> = BTreeMap::new();
    for pool in cell_scores {
        let Pool::Cell(demo) = pool.pool else { continue };
        for (day, score) in pool.days.iter().zip(&pool.singleton_fear) {
            fear.insert((demo, *day), std::array::from_fn(|i| score.get(Singleton::ALL[i])));
        }
    }

    let use_national = panel.subnational_states().is_empty();
    let mut masses: BTreeMap<(NaiveDate, crate::ingest::StateCode, DemographicCell), [f64; 9]> = BTreeMap::new();
    for c in panel.cells() {
        if c.state.is_national() != use_national {
            continue;
        }
        let m = masses.entry((c.date, c.state, c.demo)).or_insert([0.0; 9]);
        let add = attributed_mass(&[(c.combo, c.weighted_count)]);
        m.iter_mut().zip(add).for_each(|(a, b)| *a += b);
    }

    let mut rows = Vec::new();
    let mut overlap = false;
    for ((date, _state, demo), m) in masses {
        let Some(scores) = fear.get(&(demo, date)) else { continue };
        overlap = true;
        for s in Singleton::ALL {
            let weight = m[s.index()];
            if weight <= 0.0 {
                continue;
            }
            if let Some(f) = scores[s.index()] {
                rows.push(Observation {
                    age: demo.age,
                    education: demo.education,
                    source: s,
                    fear: f,
                    weight,
                });
            }
        }
    }
    if !overlap {
        return Err(Error::Alignment("panel and cell scores share no (cell, date)".into()));
    }
    ObservationTable::new(rows)
}

/// Weighted sufficient statistics of one (age, education, source) group.
#[derive(Debug, Clone, Copy, Default)]
struct Group {
    weight: f64,
    mean: f64,
}

struct Collapsed {
    groups: Vec<(usize, usize, usize, Group)>,
    within_ss: f64,
    total_ss: f64,
}

fn collapse(obs: &ObservationTable) -> Result<Collapsed> {
    if obs.is_empty() {
        return Err(Error::InsufficientData {
            required: 1,
            available: 0,
        });
    }
    // weighted mean per group first, then deviations, for accuracy
    let mut acc: BTreeMap<(usize, usize, usize), (f64, f64)> = BTreeMap::new();
    let (mut w_total, mut wy_total) = (0.0, 0.0);
    for r in obs.rows() {
        let e = acc.entry((r.age.index(), r.education.index(), r.source.index())).or_default();
        e.0 += r.weight;
        e.1 += r.weight * r.fear;
        w_total += r.weight;
        wy_total += r.weight * r.fear;
    }
    if w_total <= 0.0 {
        return Err(Error::Undefined("total observation weight is zero".into()));
    }
    let grand = wy_total / w_total;
    let means: BTreeMap<_, f64> = acc
        .iter()
        .filter(|(_, (w, _))| *w > 0.0)
        .map(|(k, (w, wy))| (*k, wy / w))
        .collect();
    let (mut within_ss, mut total_ss) = (0.0, 0.0);
    for r in obs.rows() {
        let key = (r.age.index(), r.education.index(), r.source.index());
        if let Some(m) = means.get(&key) {
            within_ss += r.weight * (r.fear - m).powi(2);
        }
        total_ss += r.weight * (r.fear - grand).powi(2);
    }
    if total_ss <= f64::EPSILON * w_total * grand.abs().max(1.0).powi(2) {
        return Err(Error::Undefined("fear has zero variance".into()));
    }
    let groups = means
        .into_iter()
        .map(|((a, e, s), mean)| (a, e, s, Group { weight: acc[&(a, e, s)].0, mean }))
        .collect();
    Ok(Collapsed {
        groups,
        within_ss,
        total_ss,
    })
}

fn r2_collapsed(c: &Collapsed, set: PredictorSet) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    // intercept + treatment-coded dummies (level 0 is the reference)
    let mut columns = 1;
    let age_off = columns;
    if set.contains(Predictor::Age) {
        columns += 2;
    }
    let edu_off = columns;
    if set.contains(Predictor::Education) {
        columns += 2;
    }
    let src_off = columns;
    if set.contains(Predictor::Source) {
        columns += 8;
    }
    let n = c.groups.len();
    let mut x = DMatrix::zeros(n, columns);
    let mut y = DVector::zeros(n);
    for (row, (a, e, s, g)) in c.groups.iter().enumerate() {
        let sw = g.weight.sqrt();
        x[(row, 0)] = sw;
        if set.contains(Predictor::Age) && *a > 0 {
            x[(row, age_off + a - 1)] = sw;
        }
        if set.contains(Predictor::Education) && *e > 0 {
            x[(row, edu_off + e - 1)] = sw;
        }
        if set.contains(Predictor::Source) && *s > 0 {
            x[(row, src_off + s - 1)] = sw;
        }
        y[row] = sw * g.mean;
    }
    let fit = least_squares(&x, &y);
    let sse = c.within_ss + fit.residual_ss;
    (1.0 - sse / c.total_ss).clamp(0.0, 1.0)
}

/// Weighted R² of fear on an intercept plus one-hot main effects of `set`.
pub fn fit_explained_variance(obs: &ObservationTable, set: PredictorSet) -> Result<f64> {
    Ok(r2_collapsed(&collapse(obs)?, set))
}

/// Shapley shares below this magnitude are rounding noise and clamped to 0.
pub const NEGATIVE_SHARE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionResult {
    pub shares: BTreeMap<Predictor, f64>,
    pub residual: f64,
    /// R² of every predictor subset, keyed by label.
    pub r2_by_subset: BTreeMap<String, f64>,
    /// Predictors whose tiny negative share was clamped to zero.
    pub clamped: Vec<Predictor>,
}

impl AttributionResult {
    pub fn share(&self, p: Predictor) -> f64 {
        self.shares[&p]
    }

    /// `driver,share` rows, residual last.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["driver", "share"])?;
        for p in [Predictor::Source, Predictor::Age, Predictor::Education] {
            w.write_record([p.label().to_string(), self.shares[&p].to_string()])?;
        }
        w.write_record(["residual".to_string(), self.residual.to_string()])?;
        w.flush()?;
        Ok(())
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Exact Shapley values of the game given by `value` over the three predictors.
pub fn shapley_values(value: &BTreeMap<PredictorSet, f64>) -> BTreeMap<Predictor, f64> {
    let n = Predictor::ALL.len();
    Predictor::ALL
        .iter()
        .map(|&p| {
            let phi = PredictorSet::all_subsets()
                .filter(|t| !t.contains(p))
                .map(|t| {
                    let weight = factorial(t.len()) * factorial(n - t.len() - 1) / factorial(n);
                    weight * (value[&t.with(p)] - value[&t])
                })
                .sum();
            (p, phi)
        })
        .collect()
}

pub fn subset_r2(obs: &ObservationTable) -> Result<BTreeMap<PredictorSet, f64>> {
    let collapsed = collapse(obs)?;
    let subsets: Vec<PredictorSet> = PredictorSet::all_subsets().collect();
    Ok(subsets
        .par_iter()
        .map(|&t| (t, r2_collapsed(&collapsed, t)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect())
}

pub fn shapley_attribution(obs: &ObservationTable) -> Result<AttributionResult> {
    let r2 = subset_r2(obs)?;
    let mut shares = shapley_values(&r2);
    let mut clamped = Vec::new();
    for (p, v) in shares.iter_mut() {
        if *v < 0.0 && *v > -NEGATIVE_SHARE_TOLERANCE {
            *v = 0.0;
            clamped.push(*p);
        }
    }
    Ok(AttributionResult {
        residual: 1.0 - r2[&PredictorSet::FULL],
        r2_by_subset: r2.iter().map(|(t, v)| (t.label(), *v)).collect(),
        shares,
        clamped,
    })
}

/// Order-dependent decomposition: each predictor gets the R² gain from
/// adding it after those before it in `order`.
pub fn sequential_anova(obs: &ObservationTable, order: &[Predictor]) -> Result<Vec<(Predictor, f64)>> {
    let collapsed = collapse(obs)?;
    let mut set = PredictorSet::EMPTY;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(order.len());
    for &p in order {
        set = set.with(p);
        let r2 = r2_collapsed(&collapsed, set);
        out.push((p, r2 - prev));
        prev = r2;
    }
    Ok(out)
}

/// Additive fear model on a balanced design:
/// `fear = age_effect + education_effect + source_effect + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveModel {
    pub age_effects: [f64; 3],
    pub education_effects: [f64; 3],
    pub source_effects: [f64; 9],
    pub noise_sd: f64,
}

impl AdditiveModel {
    /// `replicates` unit-weight rows for each of the 81 demographic-source
    /// cells.
    pub fn generate(&self, replicates: usize, seed: u64) -> Result<ObservationTable> {
        let noise = Normal::new(0.0, self.noise_sd).map_err(|_| Error::config("noise_sd", "must be nonnegative"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(81 * replicates);
        for age in AgeGroup::ALL {
            for education in EduGroup::ALL {
                for source in Singleton::ALL {
                    let mean = self.age_effects[age.index()]
                        + self.education_effects[education.index()]
                        + self.source_effects[source.index()];
                    for _ in 0..replicates {
                        rows.push(Observation {
                            age,
                            education,
                            source,
                            fear: mean + noise.sample(&mut rng),
                            weight: 1.0,
                        });
                    }
                }
            }
        }
        ObservationTable::new(rows)
    }
}

/// Source-attributed mass of one cell: a combo's mass counts once for each
/// member source.
pub fn attributed_mass(cells: &[(SourceCombo, f64)]) -> [f64; 9] {
    let mut m = [0.0; 9];
    for (combo, mass) in cells {
        for s in combo.members() {
            m[s.index()] += mass;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::FearLevel;
    use crate::ingest::{StateCode, SurveyCell};
    use crate::scores::{score_panel, DisentangleMode, Pooling, Scope};
    use rand::Rng;

    #[test]
    fn standard_dag_validates() {
        let dag = CausalDag::default();
        assert!(validate_dag(&dag));
        assert_eq!(dag.parents(Node::Fear), vec![Node::Age, Node::Education, Node::Source]);
        let mut cyclic: Vec<_> = dag.edges().collect();
        cyclic.push((Node::Fear, Node::Age));
        let cyclic = CausalDag::with_edges(cyclic);
        assert!(!cyclic.is_acyclic());
        assert!(!validate_dag(&cyclic));
        let missing = CausalDag::with_edges(dag.edges().filter(|e| *e != (Node::Source, Node::Fear)));
        assert!(missing.is_acyclic());
        assert!(!validate_dag(&missing));
        let mut buf = Vec::new();
        dag.write_edge_list(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.contains("Source -> Fear"));
    }

    fn row(a: u8, e: u8, s: Singleton, fear: f64, weight: f64) -> Observation {
        Observation {
            age: AgeGroup::new(a).unwrap(),
            education: EduGroup::new(e).unwrap(),
            source: s,
            fear,
            weight,
        }
    }

    #[test]
    fn intercept_only_and_perfect_fit() {
        let mut rows = Vec::new();
        for (i, s) in Singleton::ALL.into_iter().enumerate() {
            for a in 1..=3 {
                rows.push(row(a, 1 + (i % 3) as u8, s, i as f64 * 0.1 - 0.3, 1.0 + a as f64));
            }
        }
        let obs = ObservationTable::new(rows).unwrap();
        assert_eq!(fit_explained_variance(&obs, PredictorSet::EMPTY).unwrap(), 0.0);
        let r2 = fit_explained_variance(&obs, PredictorSet::of(&[Predictor::Source])).unwrap();
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_tables() {
        assert!(fit_explained_variance(&ObservationTable::default(), PredictorSet::FULL).is_err());
        let flat = ObservationTable::new(vec![
            row(1, 1, Singleton::Cdc, 0.2, 1.0),
            row(2, 3, Singleton::Doctors, 0.2, 2.0),
        ])
        .unwrap();
        assert!(matches!(
            fit_explained_variance(&flat, PredictorSet::FULL),
            Err(Error::Undefined(_))
        ));
        assert!(ObservationTable::new(vec![row(1, 1, Singleton::Cdc, 0.2, -1.0)]).is_err());
    }

    /// Weighted R² by explicit dummy regression over all rows, no collapsing.
    fn brute_r2(obs: &ObservationTable, set: PredictorSet) -> f64 {
        let rows = obs.rows();
        let mut cols: Vec<Box<dyn Fn(&Observation) -> f64>> = vec![Box::new(|_| 1.0)];
        if set.contains(Predictor::Age) {
            for l in 1..3 {
                cols.push(Box::new(move |r: &Observation| (r.age.index() == l) as u8 as f64));
            }
        }
        if set.contains(Predictor::Education) {
            for l in 1..3 {
                cols.push(Box::new(move |r: &Observation| (r.education.index() == l) as u8 as f64));
            }
        }
        if set.contains(Predictor::Source) {
            for l in 1..9 {
                cols.push(Box::new(move |r: &Observation| (r.source.index() == l) as u8 as f64));
            }
        }
        let x = DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i].weight.sqrt() * cols[j](&rows[i]));
        let y = DVector::from_fn(rows.len(), |i, _| rows[i].weight.sqrt() * rows[i].fear);
        let sse = least_squares(&x, &y).residual_ss;
        let w: f64 = rows.iter().map(|r| r.weight).sum();
        let mean = rows.iter().map(|r| r.weight * r.fear).sum::<f64>() / w;
        let sst: f64 = rows.iter().map(|r| r.weight * (r.fear - mean).powi(2)).sum();
        1.0 - sse / sst
    }

    fn random_table(seed: u64, n: usize) -> ObservationTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| {
                let s = Singleton::ALL[rng.random_range(0..9)];
                let a = rng.random_range(1..=3);
                let e = rng.random_range(1..=3);
                let fear = 0.1 * a as f64 - 0.05 * e as f64 + 0.03 * s.index() as f64 + rng.random::<f64>();
                row(a, e, s, fear, rng.random::<f64>() * 5.0)
            })
            .collect();
        ObservationTable::new(rows).unwrap()
    }

    #[test]
    fn collapsed_fit_matches_row_level_regression() {
        let obs = random_table(1, 400);
        for set in PredictorSet::all_subsets() {
            let fast = fit_explained_variance(&obs, set).unwrap();
            assert!((fast - brute_r2(&obs, set).max(0.0)).abs() < 1e-10, "{}", set.label());
        }
    }

    #[test]
    fn shapley_axioms() {
        let obs = random_table(2, 600);
        let a = shapley_attribution(&obs).unwrap();
        let total: f64 = a.shares.values().sum();
        assert!((total + a.residual - 1.0).abs() < 1e-9);
        let r2 = subset_r2(&obs).unwrap();
        for t in PredictorSet::all_subsets() {
            for p in Predictor::ALL {
                assert!(r2[&t.with(p)] >= r2[&t] - 1e-12);
            }
        }
        // exchangeable players receive equal value
        let mut game = BTreeMap::new();
        for t in PredictorSet::all_subsets() {
            let ae = t.contains(Predictor::Age) || t.contains(Predictor::Education);
            let v = if ae { 0.4 } else { 0.0 } + if t.contains(Predictor::Source) { 0.3 } else { 0.0 };
            game.insert(t, v);
        }
        let phi = shapley_values(&game);
        assert!((phi[&Predictor::Age] - phi[&Predictor::Education]).abs() < 1e-15);
        assert!((phi[&Predictor::Age] - 0.2).abs() < 1e-15);
        assert!((phi[&Predictor::Source] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn duplicated_demographics_share_equally() {
        // balanced so that source is exactly independent of the level
        let rows = (0..540)
            .map(|i| {
                let level = (i % 3) as u8 + 1;
                let s = Singleton::ALL[(i / 3) % 9];
                row(level, level, s, level as f64 * 0.3, 1.0)
            })
            .collect();
        let a = shapley_attribution(&ObservationTable::new(rows).unwrap()).unwrap();
        assert!((a.share(Predictor::Age) - a.share(Predictor::Education)).abs() < 1e-9);
        assert!((a.share(Predictor::Age) - 0.5).abs() < 1e-9);
        assert!(a.share(Predictor::Source).abs() < 1e-9);
    }

    #[test]
    fn sequential_anova_sums_to_full_r2() {
        let obs = random_table(4, 300);
        let seq = sequential_anova(&obs, &[Predictor::Source, Predictor::Age, Predictor::Education]).unwrap();
        let total: f64 = seq.iter().map(|(_, v)| v).sum();
        assert!((total - fit_explained_variance(&obs, PredictorSet::FULL).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn attribution_csv() {
        let a = shapley_attribution(&random_table(5, 200)).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "driver,share");
        assert!(lines[1].starts_with("source,"));
        assert!(lines[4].starts_with("residual,"));
    }

    fn cell(date: NaiveDate, state: &str, a: u8, e: u8, mask: u8, fear: FearLevel, w: f64) -> SurveyCell {
        SurveyCell {
            date,
            state: state.parse::<StateCode>().unwrap(),
            demo: DemographicCell {
                age: AgeGroup::new(a).unwrap(),
                education: EduGroup::new(e).unwrap(),
            },
            combo: SourceCombo::from_mask(mask),
            fear,
            weighted_count: w,
        }
    }

    #[test]
    fn observations_carry_membership_mass() {
        let d = NaiveDate::from_ymd_opt(2021, 6, 1).unwrap();
        let doctors = SourceCombo::singleton(Singleton::Doctors).mask();
        let cdc = SourceCombo::singleton(Singleton::Cdc).mask();
        let panel = SurveyPanel::from_cells(vec![
            cell(d, "CA", 1, 1, doctors, FearLevel::GreatDeal, 2.0),
            cell(d, "CA", 1, 1, doctors | cdc, FearLevel::Little, 3.0),
            cell(d, "CA", 1, 1, cdc, FearLevel::NotAtAll, 1.5),
            cell(d, "TX", 1, 1, doctors, FearLevel::Moderate, 4.0),
            cell(d, "TX", 2, 1, 0, FearLevel::Moderate, 0.0),
        ])
        .unwrap();
        let scores = score_panel(&panel, Scope::National, Pooling::Cells, DisentangleMode::Verbatim).unwrap();
        let obs = build_observations(&panel, &scores).unwrap();
        // CA: doctors 2 + 3, cdc 3 + 1.5; TX: doctors 4; zero-mass cell dropped
        let weights: Vec<(Singleton, f64)> = obs.rows().iter().map(|r| (r.source, r.weight)).collect();
        assert_eq!(
            weights,
            vec![(Singleton::Doctors, 5.0), (Singleton::Cdc, 4.5), (Singleton::Doctors, 4.0)]
        );
        let single = SurveyPanel::from_cells(vec![cell(d, "CA", 1, 1, doctors, FearLevel::GreatDeal, 2.0)]).unwrap();
        let scores = score_panel(&single, Scope::National, Pooling::Cells, DisentangleMode::Verbatim).unwrap();
        let obs = build_observations(&single, &scores).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs.rows()[0].fear, 1.0);
    }

    #[test]
    fn attributed_mass_sums_members() {
        let m = attributed_mass(&[(SourceCombo::from_mask(0b11), 2.0), (SourceCombo::NONE, 1.0)]);
        assert_eq!(m[Singleton::Doctors.index()], 2.0);
        assert_eq!(m[Singleton::Scientists.index()], 2.0);
        assert_eq!(m[Singleton::NoneOfTheAbove.index()], 1.0);
    }
}
