//! Per-state feature vectors, k-means with silhouette-based selection of k,
//! and comparison of the clusters with election outcomes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_model::{Grouping, PerSingleton, Singleton, Stratum};
use crate::error::{Error, Result};
use crate::ingest::{ElectionLabels, Party, StateCode, SurveyPanel};
use crate::scores::{score_panel, DisentangleMode, Pool, Pooling, Scope};

pub const MAX_ITERATIONS: usize = 300;
pub const RESTARTS: u64 = 10;
/// Silhouettes closer than this count as tied.
pub const SILHOUETTE_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Usage9,
    Fear9,
    Combined18,
    Usage27,
    Fear27,
    Combined54,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::Usage9,
        FeatureKind::Fear9,
        FeatureKind::Combined18,
        FeatureKind::Usage27,
        FeatureKind::Fear27,
        FeatureKind::Combined54,
    ];

    pub fn len(self) -> usize {
        match self {
            FeatureKind::Usage9 | FeatureKind::Fear9 => 9,
            FeatureKind::Combined18 => 18,
            FeatureKind::Usage27 | FeatureKind::Fear27 => 27,
            FeatureKind::Combined54 => 54,
        }
    }

    pub fn is_stratified(self) -> bool {
        self.len() >= 27
    }

    fn parts(self) -> (bool, bool) {
        match self {
            FeatureKind::Usage9 | FeatureKind::Usage27 => (true, false),
            FeatureKind::Fear9 | FeatureKind::Fear27 => (false, true),
            FeatureKind::Combined18 | FeatureKind::Combined54 => (true, true),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FeatureKind::Usage9 => "usage9",
            FeatureKind::Fear9 => "fear9",
            FeatureKind::Combined18 => "combined18",
            FeatureKind::Usage27 => "usage27",
            FeatureKind::Fear27 => "fear27",
            FeatureKind::Combined54 => "combined54",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::domain("feature kind", s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateFeatures {
    pub state: StateCode,
    pub vector: Vec<f64>,
    pub kind: FeatureKind,
    pub grouping: Grouping,
}

/// Date-averaged usage and fear per source, per stratum, for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateAggregates {
    pub state: StateCode,
    pub usage: BTreeMap<Stratum, PerSingleton<Option<f64>>>,
    pub fear: BTreeMap<Stratum, PerSingleton<Option<f64>>>,
}

/// Scores every state separately under each grouping and averages over days.
pub fn state_aggregates(
    panel: &SurveyPanel,
    groupings: &[Grouping],
    mode: DisentangleMode,
) -> Result<Vec<StateAggregates>> {
    let states = panel.subnational_states();
    states
        .par_iter()
        .map(|&state| {
            let mut agg = StateAggregates {
                state,
                usage: BTreeMap::new(),
                fear: BTreeMap::new(),
            };
            for &g in groupings {
                for pool in score_panel(panel, Scope::State(state), Pooling::Grouped(g), mode)? {
                    if let Pool::Stratum(st) = pool.pool {
                        agg.usage.insert(st, pool.mean_usage());
                        agg.fear.insert(st, pool.mean_fear());
                    }
                }
            }
            Ok(agg)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSet {
    pub kind: FeatureKind,
    pub grouping: Grouping,
    pub features: Vec<StateFeatures>,
    /// States left out, with the reason.
    pub excluded: Vec<(StateCode, String)>,
}

fn part(
    map: &BTreeMap<Stratum, PerSingleton<Option<f64>>>,
    stratum: Stratum,
) -> std::result::Result<Vec<f64>, String> {
    let values = map.get(&stratum).ok_or_else(|| format!("no data for stratum {stratum}"))?;
    Singleton::ALL
        .iter()
        .map(|&s| values[s].ok_or_else(|| format!("no value for {} in {stratum}", s.name())))
        .collect()
}

/// Feature vectors in state order. Stratified kinds concatenate the three
/// strata of `grouping` in ascending order; combined kinds put all usage
/// values before all fear values.
pub fn build_state_features(aggregates: &[StateAggregates], kind: FeatureKind, grouping: Grouping) -> Result<FeatureSet> {
    let strata = if kind.is_stratified() {
        if grouping == Grouping::Ungrouped {
            return Err(Error::config("grouping", format!("{kind} needs an age or education grouping")));
        }
        grouping.strata()
    } else {
        vec![Stratum::All]
    };
    let (with_usage, with_fear) = kind.parts();
    let mut features = Vec::new();
    let mut excluded = Vec::new();
    let mut sorted: Vec<&StateAggregates> = aggregates.iter().collect();
    sorted.sort_by_key(|a| a.state);
    for agg in sorted {
        let mut vector = Vec::with_capacity(kind.len());
        let mut build = || -> std::result::Result<(), String> {
            if with_usage {
                for &st in &strata {
                    vector.extend(part(&agg.usage, st)?);
                }
            }
            if with_fear {
                for &st in &strata {
                    vector.extend(part(&agg.fear, st)?);
                }
            }
            Ok(())
        };
        match build() {
            Ok(()) => features.push(StateFeatures {
                state: agg.state,
                vector,
                kind,
                grouping: if kind.is_stratified() { grouping } else { Grouping::Ungrouped },
            }),
            Err(reason) => {
                log::warn!("excluding {} from {kind} features: {reason}", agg.state);
                excluded.push((agg.state, reason));
            }
        }
    }
    Ok(FeatureSet {
        kind,
        grouping,
        features,
        excluded,
    })
}

/// Z-scores every coordinate across states; constant coordinates become 0.
pub fn standardize(features: &mut [StateFeatures]) {
    let Some(dim) = features.first().map(|f| f.vector.len()) else { return };
    let n = features.len() as f64;
    for j in 0..dim {
        let mean = features.iter().map(|f| f.vector[j]).sum::<f64>() / n;
        let sd = (features.iter().map(|f| (f.vector[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for f in features.iter_mut() {
            f.vector[j] = if sd > 0.0 { (f.vector[j] - mean) / sd } else { 0.0 };
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    pub assignments: BTreeMap<StateCode, usize>,
    pub k: usize,
    /// Number of non-empty clusters.
    pub effective_k: usize,
    /// `None` when fewer than two clusters are non-empty.
    pub silhouette: Option<f64>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step; never increases.
    pub inertia_trace: Vec<f64>,
    pub seed: u64,
}

fn check_inputs(features: &[StateFeatures], k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::domain("k (must be at least 2)", k));
    }
    if k > features.len() {
        return Err(Error::InsufficientData {
            required: k,
            available: features.len(),
        });
    }
    let dim = features[0].vector.len();
    if features.iter().any(|f| f.vector.len() != dim) {
        return Err(Error::Validation("feature vectors differ in length".into()));
    }
    if features.iter().flat_map(|f| &f.vector).any(|v| !v.is_finite()) {
        return Err(Error::Validation("feature vectors contain non-finite values".into()));
    }
    let unique: BTreeSet<_> = features.iter().map(|f| f.state).collect();
    if unique.len() != features.len() {
        return Err(Error::Validation("a state appears twice".into()));
    }
    Ok(())
}

fn canonical(features: &[StateFeatures]) -> Vec<&StateFeatures> {
    let mut sorted: Vec<&StateFeatures> = features.iter().collect();
    sorted.sort_by_key(|f| f.state);
    sorted
}

fn plus_plus(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].to_vec()];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next].to_vec());
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(dist2(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

fn assign(points: &[&[f64]], centers: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = points
        .iter()
        .map(|p| {
            let (best, d) = centers
                .iter()
                .enumerate()
                .map(|(c, ctr)| (c, dist2(p, ctr)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            inertia += d;
            best
        })
        .collect();
    (labels, inertia)
}

fn update(points: &[&[f64]], labels: &mut [usize], centers: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let k = centers.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels.iter()) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p.iter()).for_each(|(s, v)| *s += v);
    }
    for c in 0..k {
        if counts[c] > 0 {
            centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
    // re-seed each empty cluster from the point farthest from its centroid
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let far = points
            .iter()
            .enumerate()
            .filter(|(i, _)| counts[labels[*i]] > 1)
            .map(|(i, p)| (i, dist2(p, &centers[labels[i]])))
            .fold(None, |acc: Option<(usize, f64)>, x| match acc {
                Some(a) if a.1 >= x.1 => Some(a),
                _ => Some(x),
            });
        if let Some((i, d)) = far {
            if d > 0.0 {
                let old = labels[i];
                counts[old] -= 1;
                counts[c] = 1;
                labels[i] = c;
                centers[c] = points[i].to_vec();
                let members: Vec<&[f64]> = points
                    .iter()
                    .zip(labels.iter())
                    .filter(|(_, &l)| l == old)
                    .map(|(p, _)| *p)
                    .collect();
                centers[old] = (0..dim)
                    .map(|j| members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64)
                    .collect();
            }
        }
    }
}

/// Lloyd's algorithm from a k-means++ start drawn with `seed`. States are
/// sorted first and clusters are numbered by first appearance in that order,
/// so the result does not depend on input order.
pub fn kmeans(features: &[StateFeatures], k: usize, seed: u64) -> Result<ClusterReport> {
    check_inputs(features, k)?;
    let sorted = canonical(features);
    let points: Vec<&[f64]> = sorted.iter().map(|f| f.vector.as_slice()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus(&points, k, &mut rng);
    let (mut labels, mut inertia) = assign(&points, &centers);
    let mut trace = vec![inertia];
    let mut iterations = 0;
    let scale: f64 = points.iter().map(|p| p.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().max(1.0);
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        update(&points, &mut labels, &mut centers);
        let updated: f64 = points.iter().zip(&labels).map(|(p, &l)| dist2(p, &centers[l])).sum();
        let (next, next_inertia) = assign(&points, &centers);
        assert!(
            next_inertia <= updated + 1e-12 * scale && updated <= inertia + 1e-12 * scale,
            "k-means inertia increased"
        );
        trace.push(next_inertia);
        inertia = next_inertia;
        if next == labels {
            break;
        }
        labels = next;
    }

    // number clusters by first appearance
    let mut relabel = vec![usize::MAX; k];
    let mut next_id = 0;
    for &l in &labels {
        if relabel[l] == usize::MAX {
            relabel[l] = next_id;
            next_id += 1;
        }
    }
    for r in relabel.iter_mut().filter(|r| **r == usize::MAX) {
        *r = next_id;
        next_id += 1;
    }
    let labels: Vec<usize> = labels.iter().map(|&l| relabel[l]).collect();
    let mut ordered = vec![Vec::new(); k];
    for (old, ctr) in centers.into_iter().enumerate() {
        ordered[relabel[old]] = ctr;
    }

    let effective_k = labels.iter().collect::<BTreeSet<_>>().len();
    let silhouette = silhouette(&points, &labels).ok();
    Ok(ClusterReport {
        assignments: sorted.iter().zip(&labels).map(|(f, &l)| (f.state, l)).collect(),
        k,
        effective_k,
        silhouette,
        centroids: ordered,
        inertia,
        iterations,
        inertia_trace: trace,
        seed,
    })
}

/// Mean silhouette width. Points alone in their cluster contribute 0.
pub fn silhouette(points: &[&[f64]], labels: &[usize]) -> Result<f64> {
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    if clusters.len() < 2 {
        return Err(Error::Undefined("silhouette needs at least two non-empty clusters".into()));
    }
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut sum: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for j in 0..n {
            if i != j {
                let e = sum.entry(labels[j]).or_default();
                e.0 += dist2(points[i], points[j]).sqrt();
                e.1 += 1;
            }
        }
        let Some(&(own, own_n)) = sum.get(&labels[i]) else { continue };
        let a = own / own_n as f64;
        let b = sum
            .iter()
            .filter(|(c, _)| **c != labels[i])
            .map(|(_, (s, m))| s / *m as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

pub fn silhouette_of(features: &[StateFeatures], assignments: &BTreeMap<StateCode, usize>) -> Result<f64> {
    let sorted = canonical(features);
    let points: Vec<&[f64]> = sorted.iter().map(|f| f.vector.as_slice()).collect();
    let labels = sorted
        .iter()
        .map(|f| assignments.get(&f.state).copied().ok_or_else(|| Error::Validation(format!("{} has no cluster", f.state))))
        .collect::<Result<Vec<_>>>()?;
    silhouette(&points, &labels)
}

/// Seed of restart `restart` for `k`, derived from the run seed.
pub fn derive_seed(seed: u64, k: usize, restart: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ ((k as u64) << 32 | restart).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Lowest-inertia run among the seed-derived restarts for one `k`.
pub fn best_of_restarts(features: &[StateFeatures], k: usize, seed: u64) -> Result<ClusterReport> {
    let runs: Vec<ClusterReport> = (0..RESTARTS)
        .into_par_iter()
        .map(|r| kmeans(features, k, derive_seed(seed, k, r)))
        .collect::<Result<_>>()?;
    Ok(runs
        .into_iter()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("at least one restart"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSelection {
    pub k: usize,
    pub report: ClusterReport,
    /// `(k, silhouette, inertia)` for every candidate.
    pub candidates: Vec<(usize, Option<f64>, f64)>,
}

pub fn select_k(features: &[StateFeatures], k_min: usize, k_max: usize, seed: u64) -> Result<KSelection> {
    if k_min < 2 || k_min > k_max {
        return Err(Error::config("k range", format!("invalid range {k_min}..={k_max}")));
    }
    if k_max > features.len() {
        return Err(Error::InsufficientData {
            required: k_max,
            available: features.len(),
        });
    }
    let reports: Vec<ClusterReport> = (k_min..=k_max)
        .into_par_iter()
        .map(|k| best_of_restarts(features, k, seed))
        .collect::<Result<_>>()?;
    let candidates = reports.iter().map(|r| (r.k, r.silhouette, r.inertia)).collect();
    let mut best: Option<&ClusterReport> = None;
    for r in &reports {
        let Some(s) = r.silhouette else { continue };
        match best {
            Some(b) if s <= b.silhouette.expect("scored") + SILHOUETTE_TIE => {}
            _ => best = Some(r),
        }
    }
    let report = best
        .cloned()
        .ok_or_else(|| Error::Undefined("no k in range yields a defined silhouette".into()))?;
    Ok(KSelection {
        k: report.k,
        report,
        candidates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElectionComparison {
    pub year: u16,
    pub mapping: BTreeMap<usize, Party>,
    pub misclassified: Vec<StateCode>,
    /// Clustered states with no label for the year, left out of the count.
    pub unlabeled: Vec<StateCode>,
    pub compared: usize,
    pub accuracy: f64,
}

/// Maps the two clusters to parties with whichever bijection agrees with more
/// labels (the identity mapping wins ties).
pub fn compare_with_elections(report: &ClusterReport, labels: &ElectionLabels) -> Result<ElectionComparison> {
    if report.k != 2 {
        return Err(Error::domain("k for party mapping (must be 2)", report.k));
    }
    let mut unlabeled = Vec::new();
    let mut pairs = Vec::new();
    for (state, &c) in &report.assignments {
        match labels.labels.get(state) {
            Some(p) => pairs.push((*state, c, *p)),
            None => unlabeled.push(*state),
        }
    }
    if pairs.is_empty() {
        return Err(Error::InsufficientData {
            required: 1,
            available: 0,
        });
    }
    let mapping_for = |first: Party| -> BTreeMap<usize, Party> { [(0, first), (1, first.other())].into() };
    let misses = |m: &BTreeMap<usize, Party>| -> Vec<StateCode> {
        pairs.iter().filter(|(_, c, p)| m[c] != *p).map(|(s, _, _)| *s).collect()
    };
    let a = mapping_for(Party::Democratic);
    let b = mapping_for(Party::Republican);
    let (ma, mb) = (misses(&a), misses(&b));
    let (mapping, misclassified) = if mb.len() < ma.len() { (b, mb) } else { (a, ma) };
    let compared = pairs.len();
    Ok(ElectionComparison {
        year: labels.year,
        accuracy: 1.0 - misclassified.len() as f64 / compared as f64,
        mapping,
        misclassified,
        unlabeled,
        compared,
    })
}

/// States labeled in both years whose party changed.
pub fn swing_states(first: &ElectionLabels, second: &ElectionLabels) -> Vec<StateCode> {
    let mut skipped = 0;
    let mut out = Vec::new();
    for (state, p) in &first.labels {
        match second.labels.get(state) {
            Some(q) if q != p => out.push(*state),
            Some(_) => {}
            None => skipped += 1,
        }
    }
    skipped += second.labels.keys().filter(|s| !first.labels.contains_key(s)).count();
    if skipped > 0 {
        log::warn!(
            "{skipped} state(s) labeled in only one of {} and {}; skipped",
            first.year,
            second.year
        );
    }
    out
}

/// Rows of `state,cluster,party_mapped,misclassified,swing`.
pub fn write_cluster_csv<W: Write>(
    report: &ClusterReport,
    comparison: Option<&ElectionComparison>,
    swing: &[StateCode],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state", "cluster", "party_mapped", "misclassified", "swing"])?;
    for (state, &c) in &report.assignments {
        let party = comparison.and_then(|cmp| cmp.mapping.get(&c)).map(|p| p.code().to_string());
        let missed = comparison.map(|cmp| cmp.misclassified.contains(state).to_string());
        w.write_record([
            state.to_string(),
            c.to_string(),
            party.unwrap_or_default(),
            missed.unwrap_or_default(),
            swing.contains(state).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn states(n: usize) -> Vec<StateCode> {
        StateCode::us_states().into_iter().take(n).collect()
    }

    fn feats(points: Vec<Vec<f64>>) -> Vec<StateFeatures> {
        states(points.len())
            .into_iter()
            .zip(points)
            .map(|(state, vector)| StateFeatures {
                state,
                vector,
                kind: FeatureKind::Usage9,
                grouping: Grouping::Ungrouped,
            })
            .collect()
    }

    fn blobs(centers: &[Vec<f64>], per: usize, sd: f64, seed: u64) -> (Vec<StateFeatures>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        let mut points = Vec::new();
        let mut truth = Vec::new();
        for i in 0..per * centers.len() {
            let c = i % centers.len();
            points.push(centers[c].iter().map(|v| v + noise.sample(&mut rng)).collect());
            truth.push(c);
        }
        (feats(points), truth)
    }

    fn same_partition(report: &ClusterReport, features: &[StateFeatures], truth: &[usize]) -> bool {
        let mut map = BTreeMap::new();
        features.iter().zip(truth).all(|(f, t)| {
            let c = report.assignments[&f.state];
            *map.entry(*t).or_insert(c) == c
        }) && map.values().collect::<BTreeSet<_>>().len() == map.len()
    }

    #[test]
    fn recovers_two_blobs() {
        let (f, truth) = blobs(&[vec![0.0; 4], vec![3.0; 4]], 20, 0.2, 1);
        let r = kmeans(&f, 2, 7).unwrap();
        assert!(same_partition(&r, &f, &truth));
        assert!(r.silhouette.unwrap() > 0.8);
        assert!(r.inertia_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert_eq!(kmeans(&f, 2, 7).unwrap(), r);
    }

    #[test]
    fn order_invariant() {
        let (f, _) = blobs(&[vec![0.0; 3], vec![1.0; 3], vec![2.0, 0.0, 1.0]], 10, 0.4, 2);
        let mut rev = f.clone();
        rev.reverse();
        assert_eq!(kmeans(&f, 3, 5).unwrap(), kmeans(&rev, 3, 5).unwrap());
    }

    #[test]
    fn identical_points_are_one_cluster() {
        let f = feats(vec![vec![0.5; 9]; 6]);
        let r = kmeans(&f, 2, 1).unwrap();
        assert_eq!(r.effective_k, 1);
        assert_eq!(r.silhouette, None);
        assert!(matches!(select_k(&f, 2, 3, 1), Err(Error::Undefined(_))));
    }

    #[test]
    fn input_errors() {
        let f = feats(vec![vec![0.0], vec![1.0]]);
        assert!(kmeans(&f, 3, 0).is_err());
        assert!(kmeans(&f, 1, 0).is_err());
        assert!(select_k(&f, 2, 10, 0).is_err());
    }

    #[test]
    fn silhouette_examples() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let s = silhouette(&refs, &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.98);
        assert!(silhouette(&refs, &[0, 0, 0, 0]).is_err());
        // a point exactly between two clusters contributes 0; singletons too
        let pts: Vec<Vec<f64>> = vec![vec![-1.0], vec![1.0], vec![0.0]];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let s = silhouette(&refs, &[0, 1, 0]).unwrap();
        // point 0: a = 1, b = 2 -> 0.5; point 1 alone -> 0; point 2: a = 1, b = 1 -> 0
        assert!((s - 0.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_noise_has_weak_silhouette() {
        let mut total = 0.0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let pts = (0..51).map(|_| (0..9).map(|_| rng.random::<f64>()).collect()).collect();
            let r = kmeans(&feats(pts), 2, seed).unwrap();
            total += r.silhouette.unwrap();
        }
        assert!((total / 10.0).abs() < 0.3);
    }

    #[test]
    fn select_k_finds_planted_counts() {
        let (f, _) = blobs(&[vec![0.0; 9], vec![2.0; 9]], 25, 0.15, 3);
        assert_eq!(select_k(&f, 2, 10, 11).unwrap().k, 2);
        let mut third = vec![0.0; 9];
        third[0] = 4.0;
        let (f, truth) = blobs(&[vec![0.0; 9], vec![2.0; 9], third], 17, 0.15, 4);
        let sel = select_k(&f, 2, 10, 11).unwrap();
        assert_eq!(sel.k, 3);
        assert!(same_partition(&sel.report, &f, &truth));
        assert_eq!(sel.candidates.len(), 9);
    }

    fn labels(year: u16, parties: &[(StateCode, Party)]) -> ElectionLabels {
        ElectionLabels {
            year,
            labels: parties.iter().copied().collect(),
        }
    }

    #[test]
    fn election_mapping_and_flips() {
        let (f, truth) = blobs(&[vec![0.0; 2], vec![5.0; 2]], 10, 0.1, 5);
        let r = kmeans(&f, 2, 1).unwrap();
        let party = |t: usize| if t == 0 { Party::Republican } else { Party::Democratic };
        let exact: Vec<_> = f.iter().zip(&truth).map(|(x, &t)| (x.state, party(t))).collect();
        let cmp = compare_with_elections(&r, &labels(2020, &exact)).unwrap();
        assert!(cmp.misclassified.is_empty());
        assert_eq!(cmp.accuracy, 1.0);
        let mut flipped = exact.clone();
        flipped[3].1 = flipped[3].1.other();
        let cmp = compare_with_elections(&r, &labels(2024, &flipped)).unwrap();
        assert_eq!(cmp.misclassified, vec![flipped[3].0]);
        assert!((cmp.accuracy - (1.0 - 1.0 / 20.0)).abs() < 1e-15);
        assert_eq!(swing_states(&labels(2020, &exact), &labels(2024, &flipped)), vec![flipped[3].0]);
        assert!(swing_states(&labels(2020, &exact), &labels(2020, &exact)).is_empty());
        assert!(swing_states(&labels(2020, &exact[..5]), &labels(2024, &flipped[5..])).is_empty());

        let mut buf = Vec::new();
        write_cluster_csv(&r, Some(&cmp), &[flipped[3].0], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 21);
        assert_eq!(text.lines().filter(|l| l.ends_with("true,true")).count(), 1);

        let r3 = kmeans(&f, 3, 1).unwrap();
        assert!(compare_with_elections(&r3, &labels(2020, &exact)).is_err());
    }

    #[test]
    fn feature_layout() {
        let agg = |state: &str, offset: f64| {
            let mut usage = BTreeMap::new();
            let mut fear = BTreeMap::new();
            for g in Grouping::ALL {
                for (i, st) in g.strata().into_iter().enumerate() {
                    usage.insert(st, PerSingleton::from_fn(|s| Some(offset + i as f64 + s.index() as f64 / 10.0)));
                    fear.insert(st, PerSingleton::from_fn(|s| Some(-offset - s.index() as f64 / 10.0)));
                }
            }
            StateAggregates {
                state: state.parse().unwrap(),
                usage,
                fear,
            }
        };
        let mut partial = agg("WY", 2.0);
        partial.fear.get_mut(&Stratum::All).unwrap().0[4] = None;
        let aggs = vec![agg("TX", 1.0), agg("CA", 0.0), partial];
        for kind in FeatureKind::ALL {
            let grouping = if kind.is_stratified() { Grouping::ByAge } else { Grouping::Ungrouped };
            let set = build_state_features(&aggs, kind, grouping).unwrap();
            assert!(set.features.iter().all(|f| f.vector.len() == kind.len()));
            assert_eq!(set.features[0].state.as_str(), "CA");
        }
        let c18 = build_state_features(&aggs, FeatureKind::Combined18, Grouping::Ungrouped).unwrap();
        assert_eq!(c18.excluded.len(), 1);
        let u9 = build_state_features(&aggs, FeatureKind::Usage9, Grouping::Ungrouped).unwrap();
        let f9 = build_state_features(&aggs, FeatureKind::Fear9, Grouping::Ungrouped).unwrap();
        let joined: Vec<f64> = u9.features[0].vector.iter().chain(&f9.features[0].vector).copied().collect();
        assert_eq!(c18.features[0].vector, joined);
        let u27 = build_state_features(&aggs, FeatureKind::Usage27, Grouping::ByAge).unwrap();
        assert_eq!(u27.features[0].vector[9], 1.0);
        assert!(build_state_features(&aggs, FeatureKind::Usage27, Grouping::Ungrouped).is_err());
    }

    #[test]
    fn standardize_columns() {
        let mut f = feats(vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]]);
        standardize(&mut f);
        let col: Vec<f64> = f.iter().map(|x| x.vector[0]).collect();
        assert!((col.iter().sum::<f64>()).abs() < 1e-12);
        assert!((col.iter().map(|v| v * v).sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
        assert!(f.iter().all(|x| x.vector[1] == 0.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn silhouette_bounded_and_order_free(
                pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 6..30),
                k in 2usize..5,
                seed in 0u64..1000,
            ) {
                let f = feats(pts);
                let r = kmeans(&f, k, seed).unwrap();
                if let Some(s) = r.silhouette {
                    prop_assert!((-1.0..=1.0).contains(&s));
                }
                prop_assert!(r.inertia_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
                prop_assert_eq!(r.assignments.len(), f.len());
                let mut rev = f.clone();
                rev.reverse();
                prop_assert_eq!(kmeans(&rev, k, seed).unwrap().assignments, r.assignments.clone());
                if r.k == 2 {
                    let labels = ElectionLabels {
                        year: 2020,
                        labels: f.iter().enumerate()
                            .map(|(i, x)| (x.state, if (i * 7 + seed as usize) % 3 == 0 { Party::Democratic } else { Party::Republican }))
                            .collect(),
                    };
                    prop_assert!(compare_with_elections(&r, &labels).unwrap().accuracy >= 0.5);
                }
            }
        }
    }
}
