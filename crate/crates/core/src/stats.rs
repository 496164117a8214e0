//! Nonparametric test battery: Shapiro–Wilk, two-sample Kolmogorov–Smirnov,
//! Mann–Whitney U, Spearman correlation and the intra/inter-stratum harness.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data_model::{PerSingleton, Singleton, Stratum};
use crate::epi::DailySeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    ShapiroWilk,
    KolmogorovSmirnov,
    MannWhitney,
}

impl TestMethod {
    pub fn label(self) -> &'static str {
        match self {
            TestMethod::ShapiroWilk => "shapiro_wilk",
            TestMethod::KolmogorovSmirnov => "ks",
            TestMethod::MannWhitney => "mann_whitney",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
    /// `(n, m)`; `m` is 0 for one-sample tests.
    pub sample_sizes: (usize, usize),
}

fn std_normal() -> Normal {
    Normal::standard()
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

fn sorted(sample: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = sample.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain("sample value", v));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Shapiro–Wilk W with Royston's coefficient approximation and normalizing
/// transform for the p-value (algorithm AS R94).
pub fn shapiro_wilk(sample: &[f64]) -> Result<TestResult> {
    let n = sample.len();
    if n < 3 {
        return Err(Error::InsufficientData {
            required: 3,
            available: n,
        });
    }
    if n > 5000 {
        return Err(Error::domain("shapiro-wilk sample size (max 5000)", n));
    }
    let x = sorted(sample)?;
    let range = x[n - 1] - x[0];
    if range < 1e-19 * x[n - 1].abs().max(1.0) {
        return Err(Error::Degenerate("all sample values are identical".into()));
    }

    let half = n / 2;
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = 0.5f64.sqrt();
    } else {
        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let norm = std_normal();
        let an25 = n as f64 + 0.25;
        let m: Vec<f64> = (1..=half)
            .map(|i| norm.inverse_cdf((i as f64 - 0.375) / an25))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / (n as f64).sqrt();
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            a[1] = a2;
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            (2, fac)
        } else {
            (1, ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt())
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }

    // scale by the range for stability
    let xs: Vec<f64> = x.iter().map(|v| (v - x[0]) / range).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ssq: f64 = xs.iter().map(|v| (v - mean).powi(2)).sum();
    let num: f64 = (0..half).map(|i| a[i] * (xs[n - 1 - i] - xs[i])).sum();
    let w = (num * num / ssq).min(1.0);

    let p = if n == 3 {
        let pi6 = 6.0 / PI;
        let stqr = PI / 3.0;
        (pi6 * (w.sqrt().asin() - stqr)).clamp(0.0, 1.0)
    } else {
        let w1 = (1.0 - w).ln();
        let nn = n as f64;
        let (z, mean, sd) = if n <= 11 {
            let gamma = poly(&[-2.273, 0.459], nn);
            if w1 >= gamma {
                (f64::INFINITY, 0.0, 1.0)
            } else {
                let m = poly(&[0.544, -0.39978, 0.025054, -6.714e-4], nn);
                let s = poly(&[1.3822, -0.77857, 0.062767, -0.0020322], nn).exp();
                (-(gamma - w1).ln(), m, s)
            }
        } else {
            let ln_n = nn.ln();
            let m = poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n);
            let s = poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp();
            (w1, m, s)
        };
        if z == f64::INFINITY {
            0.0
        } else {
            std_normal().sf((z - mean) / sd)
        }
    };
    Ok(TestResult {
        statistic: w,
        p_value: p.clamp(0.0, 1.0),
        method: TestMethod::ShapiroWilk,
        sample_sizes: (n, 0),
    })
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // small-argument series for the CDF converges faster
        let l2 = lambda * lambda;
        let s: f64 = (1..=20)
            .map(|k| {
                let odd = (2 * k - 1) as f64;
                (-odd * odd * PI * PI / (8.0 * l2)).exp()
            })
            .sum();
        (1.0 - (2.0 * PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn nonempty(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData {
            required: 1,
            available: 0,
        });
    }
    Ok(())
}

/// Two-sample KS test; `D` is exact, the p-value asymptotic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    nonempty(a, b)?;
    let (xa, xb) = (sorted(a)?, sorted(b)?);
    let (n, m) = (xa.len(), xb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = xa[i].min(xb[j]);
        while i < n && xa[i] == v {
            i += 1;
        }
        while j < m && xb[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    Ok(TestResult {
        statistic: d,
        p_value: kolmogorov_sf(ne.sqrt() * d),
        method: TestMethod::KolmogorovSmirnov,
        sample_sizes: (n, m),
    })
}

/// Mid-ranks (1-based, ties averaged) in input order.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&p, &q| values[p].total_cmp(&values[q]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

/// Mann–Whitney U, reported as `min(U, nm - U)`; the p-value is two-sided
/// from the tie-corrected normal approximation with continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    nonempty(a, b)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if let Some(v) = pooled.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain("sample value", v));
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let ranks = midranks(&pooled);
    let r_a: f64 = ranks[..a.len()].iter().sum();
    let u_a = r_a - n * (n + 1.0) / 2.0;
    let u = u_a.min(n * m - u_a);

    let total = n + m;
    let mut sorted_pool = pooled;
    sorted_pool.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut k = 0;
    while k < sorted_pool.len() {
        let mut e = k + 1;
        while e < sorted_pool.len() && sorted_pool[e] == sorted_pool[k] {
            e += 1;
        }
        let t = (e - k) as f64;
        tie_term += t * t * t - t;
        k = e;
    }
    let var = n * m / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)).max(1.0));
    let mu = n * m / 2.0;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mu).abs() - 0.5) / var.sqrt();
        (2.0 * std_normal().sf(z)).min(1.0)
    };
    Ok(TestResult {
        statistic: u,
        p_value: p.clamp(0.0, 1.0),
        method: TestMethod::MannWhitney,
        sample_sizes: (a.len(), b.len()),
    })
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Alignment(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            available: x.len(),
        });
    }
    pearson(&midranks(x), &midranks(y))
        .ok_or_else(|| Error::Undefined("constant input has no rank variance".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub common_dates: usize,
    /// `None` where a series is constant over the common dates.
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![String::new()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.names.iter().zip(&self.values) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pairwise Spearman correlations over the dates shared by all series.
pub fn correlation_matrix(series: &[DailySeries]) -> Result<CorrelationMatrix> {
    let mut common: Option<BTreeSet<NaiveDate>> = None;
    for s in series {
        let dates: BTreeSet<NaiveDate> = s.dates().iter().copied().collect();
        common = Some(match common {
            None => dates,
            Some(c) => c.intersection(&dates).copied().collect(),
        });
    }
    let common: Vec<NaiveDate> = common.unwrap_or_default().into_iter().collect();
    if common.len() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            available: common.len(),
        });
    }
    let aligned: Vec<Vec<f64>> = series
        .iter()
        .map(|s| common.iter().map(|&d| s.get(d).expect("date in intersection")).collect())
        .collect();
    let k = series.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let rho = spearman_rho(&aligned[i], &aligned[j]).ok();
            let rho = if i == j { rho.map(|_| 1.0) } else { rho };
            values[i][j] = rho;
            values[j][i] = rho;
        }
    }
    Ok(CorrelationMatrix {
        names: series.iter().map(|s| s.name().to_string()).collect(),
        common_dates: common.len(),
        values,
    })
}

/// Daily singleton series of one stratum.
#[derive(Debug, Clone)]
pub struct StratumSeries {
    pub stratum: Stratum,
    pub series: PerSingleton<DailySeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityCell {
    pub stratum: Stratum,
    pub singleton: Singleton,
    pub result: std::result::Result<TestResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntraCell {
    pub stratum: Stratum,
    pub a: Singleton,
    pub b: Singleton,
    pub ks: std::result::Result<TestResult, String>,
    pub mann_whitney: std::result::Result<TestResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterCell {
    pub singleton: Singleton,
    pub a: Stratum,
    pub b: Stratum,
    pub ks: std::result::Result<TestResult, String>,
    pub mann_whitney: std::result::Result<TestResult, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryOptions {
    pub alpha: f64,
    pub bonferroni: bool,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        BatteryOptions {
            alpha: 0.05,
            bonferroni: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub options: BatteryOptions,
    pub normality: Vec<NormalityCell>,
    pub intra_group: Vec<IntraCell>,
    pub inter_group: Vec<InterCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SignificanceSummary {
    pub tests: usize,
    pub significant: usize,
    pub failed: usize,
}

fn run<F: FnOnce() -> Result<TestResult>>(f: F) -> std::result::Result<TestResult, String> {
    f().map_err(|e| e.to_string())
}

pub fn run_test_battery(strata: &[StratumSeries], options: BatteryOptions) -> ComparisonReport {
    let normality: Vec<NormalityCell> = strata
        .par_iter()
        .flat_map_iter(|st| {
            Singleton::ALL.into_iter().map(move |s| NormalityCell {
                stratum: st.stratum,
                singleton: s,
                result: run(|| shapiro_wilk(st.series[s].values())),
            })
        })
        .collect();

    let pairs: Vec<(usize, Singleton, Singleton)> = (0..strata.len())
        .flat_map(|k| {
            Singleton::ALL.into_iter().enumerate().flat_map(move |(i, a)| {
                Singleton::ALL[i + 1..].iter().map(move |&b| (k, a, b))
            })
        })
        .collect();
    let intra_group: Vec<IntraCell> = pairs
        .par_iter()
        .map(|&(k, a, b)| {
            let (x, y) = (strata[k].series[a].values(), strata[k].series[b].values());
            IntraCell {
                stratum: strata[k].stratum,
                a,
                b,
                ks: run(|| ks_two_sample(x, y)),
                mann_whitney: run(|| mann_whitney_u(x, y)),
            }
        })
        .collect();

    let cross: Vec<(Singleton, usize, usize)> = Singleton::ALL
        .into_iter()
        .flat_map(|s| {
            (0..strata.len()).flat_map(move |i| (i + 1..strata.len()).map(move |j| (s, i, j)))
        })
        .collect();
    let inter_group: Vec<InterCell> = cross
        .par_iter()
        .map(|&(s, i, j)| {
            let (x, y) = (strata[i].series[s].values(), strata[j].series[s].values());
            InterCell {
                singleton: s,
                a: strata[i].stratum,
                b: strata[j].stratum,
                ks: run(|| ks_two_sample(x, y)),
                mann_whitney: run(|| mann_whitney_u(x, y)),
            }
        })
        .collect();

    ComparisonReport {
        options,
        normality,
        intra_group,
        inter_group,
    }
}

impl ComparisonReport {
    fn results(&self) -> impl Iterator<Item = &std::result::Result<TestResult, String>> {
        self.normality
            .iter()
            .map(|c| &c.result)
            .chain(self.intra_group.iter().flat_map(|c| [&c.ks, &c.mann_whitney]))
            .chain(self.inter_group.iter().flat_map(|c| [&c.ks, &c.mann_whitney]))
    }

    /// Per-test threshold after the optional Bonferroni adjustment.
    pub fn threshold(&self) -> f64 {
        if self.options.bonferroni {
            self.options.alpha / self.results().count().max(1) as f64
        } else {
            self.options.alpha
        }
    }

    pub fn summary(&self) -> SignificanceSummary {
        let threshold = self.threshold();
        let mut s = SignificanceSummary {
            tests: 0,
            significant: 0,
            failed: 0,
        };
        for r in self.results() {
            s.tests += 1;
            match r {
                Ok(t) if t.p_value < threshold => s.significant += 1,
                Ok(_) => {}
                Err(_) => s.failed += 1,
            }
        }
        s
    }

    /// Symmetric 9x9 matrix of one intra-stratum statistic.
    pub fn intra_matrix(&self, stratum: Stratum, method: TestMethod) -> [[Option<f64>; 9]; 9] {
        let mut m = [[None; 9]; 9];
        for c in self.intra_group.iter().filter(|c| c.stratum == stratum) {
            let r = match method {
                TestMethod::KolmogorovSmirnov => &c.ks,
                TestMethod::MannWhitney => &c.mann_whitney,
                TestMethod::ShapiroWilk => continue,
            };
            if let Ok(t) = r {
                m[c.a.index()][c.b.index()] = Some(t.statistic);
                m[c.b.index()][c.a.index()] = Some(t.statistic);
            }
        }
        m
    }

    /// Rows of `stratum,test,series_a,series_b,statistic,p_value`. Failed
    /// tests leave the last two fields empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stratum", "test", "series_a", "series_b", "statistic", "p_value"])?;
        let mut row = |stratum: String,
                       method: TestMethod,
                       a: &str,
                       b: &str,
                       r: &std::result::Result<TestResult, String>|
         -> Result<()> {
            let (stat, p) = match r {
                Ok(t) => (t.statistic.to_string(), t.p_value.to_string()),
                Err(_) => (String::new(), String::new()),
            };
            w.write_record([stratum.as_str(), method.label(), a, b, &stat, &p])?;
            Ok(())
        };
        for c in &self.normality {
            row(c.stratum.label(), TestMethod::ShapiroWilk, c.singleton.name(), "", &c.result)?;
        }
        for c in &self.intra_group {
            row(c.stratum.label(), TestMethod::KolmogorovSmirnov, c.a.name(), c.b.name(), &c.ks)?;
            row(c.stratum.label(), TestMethod::MannWhitney, c.a.name(), c.b.name(), &c.mann_whitney)?;
        }
        for c in &self.inter_group {
            let label = format!("{}|{}", c.a.label(), c.b.label());
            let name = c.singleton.name();
            row(label.clone(), TestMethod::KolmogorovSmirnov, name, name, &c.ks)?;
            row(label, TestMethod::MannWhitney, name, name, &c.mann_whitney)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::AgeGroup;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    // Reference values computed with an independent AS R94 implementation.
    #[test]
    fn shapiro_wilk_reference_vectors() {
        let cases: Vec<(Vec<f64>, f64, f64)> = vec![
            (
                vec![148., 154., 158., 160., 161., 162., 166., 170., 182., 195., 236.],
                0.7888146948631716,
                0.006703814061898823,
            ),
            (
                vec![
                    6.0, 5.0, 3.0, 4.0, 7.0, 8.0, 5.5, 6.5, 2.0, 9.0, 4.5, 5.2, 6.1, 7.3, 3.3, 4.4,
                    5.9, 6.6, 8.8, 1.1,
                ],
                0.9832475223503537,
                0.968849038427033,
            ),
            (
                vec![
                    0.139, 0.157, 0.175, 0.256, 0.344, 0.413, 0.503, 0.577, 0.614, 0.655, 0.954,
                    1.392, 1.557, 1.648, 1.690, 1.994, 2.174, 2.206, 3.245, 3.510, 3.571, 4.354,
                    4.980, 6.084, 8.351,
                ],
                0.8346662753381485,
                0.0009134904825887374,
            ),
            (vec![1.0, 2.0, 3.0], 1.0, 1.0),
        ];
        for (x, w, p) in cases {
            let r = shapiro_wilk(&x).unwrap();
            assert!(close(r.statistic, w, 1e-6), "W {} vs {}", r.statistic, w);
            assert!(close(r.p_value, p, 1e-4 * p.max(1e-3)), "p {} vs {}", r.p_value, p);
        }
        let big: Vec<f64> = (1..=4000).map(|i| (i as f64).sqrt()).collect();
        let r = shapiro_wilk(&big).unwrap();
        assert!(close(r.statistic, 0.9469236924865613, 1e-6));
        assert!(r.p_value < 1e-30);
    }

    #[test]
    fn shapiro_wilk_normal_grid() {
        let norm = Normal::standard();
        let x: Vec<f64> = (1..=50).map(|i| norm.inverse_cdf((i as f64 - 0.5) / 50.0)).collect();
        let r = shapiro_wilk(&x).unwrap();
        assert!(r.statistic > 0.99);
        assert!(close(r.statistic, 0.9992035683859155, 1e-6));
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn shapiro_wilk_errors() {
        assert!(matches!(shapiro_wilk(&[1.0, 2.0]), Err(Error::InsufficientData { .. })));
        assert!(matches!(shapiro_wilk(&[4.0; 10]), Err(Error::Degenerate(_))));
        assert!(shapiro_wilk(&vec![0.5; 5001]).is_err());
        let small = shapiro_wilk(&[1.0, 2.0, 4.0, 9.0]).unwrap();
        assert!((0.0..=1.0).contains(&small.p_value));
    }

    #[test]
    fn ks_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        assert_eq!(ks_two_sample(&a, &a).unwrap().p_value, 1.0);
        let r = ks_two_sample(&a, &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
        // effective size 9/6, so lambda = sqrt(1.5)
        assert_eq!(r.p_value, kolmogorov_sf(1.5f64.sqrt()));
        assert!(close(r.p_value, 0.09956184831478034, 1e-12), "{}", r.p_value);
        assert!(ks_two_sample(&[], &a).is_err());
    }

    #[test]
    fn kolmogorov_tail_values() {
        // classic critical values: P(K > 1.36) ~ 0.05, P(K > 1.63) ~ 0.01
        assert!(close(kolmogorov_sf(1.3581), 0.05, 1e-4));
        assert!(close(kolmogorov_sf(1.6276), 0.01, 1e-4));
        // the two series agree where they switch
        let lo = 1.0 - (2.0 * PI).sqrt() / 1.18
            * (1..=20)
                .map(|k| (-(((2 * k - 1) as f64).powi(2)) * PI * PI / (8.0 * 1.18 * 1.18)).exp())
                .sum::<f64>();
        assert!(close(lo, kolmogorov_sf(1.18), 1e-12));
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn mann_whitney_examples() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        let r = mann_whitney_u(&[5.0; 3], &[5.0; 3]).unwrap();
        assert_eq!(r.statistic, 4.5);
        assert_eq!(r.p_value, 1.0);
        // scipy.stats.mannwhitneyu(a, b, method="asymptotic") reference
        let a = [19.0, 22.0, 16.0, 29.0, 24.0];
        let b = [20.0, 11.0, 17.0, 12.0];
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.statistic, 3.0);
        assert!(close(r.p_value, 0.11134688653314041, 1e-9), "{}", r.p_value);
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman_rho(&x, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap(), 1.0);
        assert_eq!(spearman_rho(&x, &[5.0, 3.0, 1.0, 0.0, -9.0]).unwrap(), -1.0);
        assert!(matches!(spearman_rho(&x, &[1.0; 5]), Err(Error::Undefined(_))));
        assert!(spearman_rho(&x, &[1.0]).is_err());
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn correlation_matrix_examples() {
        let d0 = NaiveDate::from_ymd_opt(2021, 5, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v: Vec<f64> = (0..30).map(|_| rng.random()).collect();
        let a = DailySeries::contiguous("a", d0, v.clone());
        let neg = DailySeries::contiguous("neg", d0, v.iter().map(|x| -x).collect());
        let shifted = DailySeries::contiguous("late", d0 + chrono::Days::new(10), v[..25].to_vec());
        let m = correlation_matrix(&[a.clone(), neg, shifted]).unwrap();
        assert_eq!(m.common_dates, 20);
        assert_eq!(m.get(0, 0), Some(1.0));
        assert!(close(m.get(0, 1).unwrap(), -1.0, 1e-12));
        assert_eq!(m.get(0, 2), m.get(2, 0));
        let far = DailySeries::contiguous("far", d0 + chrono::Days::new(29), vec![1.0, 2.0]);
        assert!(correlation_matrix(&[a, far]).is_err());
    }

    fn series(name: &str, v: Vec<f64>) -> DailySeries {
        DailySeries::contiguous(name, NaiveDate::from_ymd_opt(2021, 5, 1).unwrap(), v)
    }

    #[test]
    fn battery_counts_and_identical_cells() {
        let v: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        let strata: Vec<StratumSeries> = AgeGroup::ALL
            .into_iter()
            .map(|a| StratumSeries {
                stratum: Stratum::Age(a),
                series: PerSingleton::from_fn(|s| series(s.name(), v.clone())),
            })
            .collect();
        let report = run_test_battery(&strata, BatteryOptions::default());
        assert_eq!(report.normality.len(), 27);
        assert_eq!(report.intra_group.len(), 3 * 36);
        assert_eq!(report.inter_group.len(), 9 * 3);
        for c in &report.intra_group {
            assert_eq!(c.ks.as_ref().unwrap().statistic, 0.0);
            assert_eq!(c.mann_whitney.as_ref().unwrap().statistic, 40.0 * 40.0 / 2.0);
        }
        let m = report.intra_matrix(Stratum::Age(AgeGroup::ALL[0]), TestMethod::KolmogorovSmirnov);
        assert_eq!(m[0][1], Some(0.0));
        assert_eq!(m[0][0], None);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 27 + 2 * 108 + 2 * 27);
    }

    #[test]
    fn battery_detects_planted_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..200).map(|_| rng.random::<f64>()).collect() };
        let strata: Vec<StratumSeries> = AgeGroup::ALL
            .into_iter()
            .map(|a| {
                let shift = if a.code() == 3 { 0.3 } else { 0.0 };
                StratumSeries {
                    stratum: Stratum::Age(a),
                    series: PerSingleton::from_fn(|s| {
                        let mut v = noise(&mut rng);
                        if s == Singleton::Cdc {
                            v.iter_mut().for_each(|x| *x += shift);
                        }
                        series(s.name(), v)
                    }),
                }
            })
            .collect();
        let report = run_test_battery(&strata, BatteryOptions::default());
        for c in report.inter_group.iter().filter(|c| c.singleton == Singleton::Cdc) {
            let p = c.mann_whitney.as_ref().unwrap().p_value;
            if c.b.label() == "age3" {
                assert!(p < 0.01, "{p}");
            }
        }
    }

    #[test]
    fn battery_records_errors_per_cell() {
        let strata = vec![StratumSeries {
            stratum: Stratum::All,
            series: PerSingleton::from_fn(|s| {
                if s == Singleton::Doctors {
                    series("doctors", vec![])
                } else {
                    series(s.name(), vec![1.0, 2.0, 3.0, 5.0])
                }
            }),
        }];
        let report = run_test_battery(&strata, BatteryOptions { alpha: 0.05, bonferroni: true });
        let s = report.summary();
        assert_eq!(s.tests, 9 + 72);
        assert_eq!(s.failed, 1 + 16);
        assert!(report.inter_group.is_empty());
        assert!((report.threshold() - 0.05 / 81.0).abs() < 1e-15);
    }

    mod oracles {
        use super::*;
        use proptest::prelude::*;

        fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
            let mut d: f64 = 0.0;
            for &x in a.iter().chain(b) {
                let fa = a.iter().filter(|&&v| v <= x).count() as f64 / a.len() as f64;
                let fb = b.iter().filter(|&&v| v <= x).count() as f64 / b.len() as f64;
                d = d.max((fa - fb).abs());
            }
            d
        }

        fn brute_u(a: &[f64], b: &[f64]) -> f64 {
            let mut u = 0.0;
            for x in a {
                for y in b {
                    if x > y {
                        u += 1.0;
                    } else if x == y {
                        u += 0.5;
                    }
                }
            }
            u
        }

        fn brute_rank(v: &[f64]) -> Vec<f64> {
            v.iter()
                .map(|x| {
                    let less = v.iter().filter(|y| *y < x).count() as f64;
                    let eq = v.iter().filter(|y| *y == x).count() as f64;
                    less + (eq + 1.0) / 2.0
                })
                .collect()
        }

        fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
            let (rx, ry) = (brute_rank(x), brute_rank(y));
            let n = x.len() as f64;
            let mx = rx.iter().sum::<f64>() / n;
            let my = ry.iter().sum::<f64>() / n;
            let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
            let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
            let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
            cov / (vx * vy).sqrt()
        }

        // coarse values force plenty of ties
        fn sample(max: usize) -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec((0i32..40).prop_map(|v| v as f64 / 4.0), 1..max)
        }

        proptest! {
            #[test]
            fn ks_matches_ecdf_sweep(a in sample(200), b in sample(200)) {
                let r = ks_two_sample(&a, &b).unwrap();
                prop_assert!((r.statistic - brute_ks(&a, &b)).abs() <= 1e-12);
                prop_assert_eq!(r.statistic, ks_two_sample(&b, &a).unwrap().statistic);
                prop_assert!((0.0..=1.0).contains(&r.statistic));
                prop_assert!((0.0..=1.0).contains(&r.p_value));
            }

            #[test]
            fn mwu_matches_pair_count(a in sample(200), b in sample(200)) {
                let r = mann_whitney_u(&a, &b).unwrap();
                let raw = brute_u(&a, &b);
                let nm = (a.len() * b.len()) as f64;
                prop_assert_eq!(r.statistic, raw.min(nm - raw));
                prop_assert_eq!(raw + brute_u(&b, &a), nm);
                prop_assert!(r.statistic >= 0.0 && r.statistic <= nm / 2.0);
                prop_assert!((0.0..=1.0).contains(&r.p_value));
            }

            #[test]
            fn spearman_matches_rank_pearson(pairs in prop::collection::vec((0i32..30, 0i32..30), 2..200)) {
                let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
                let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
                match spearman_rho(&x, &y) {
                    Ok(rho) => {
                        prop_assert!((rho - brute_spearman(&x, &y)).abs() <= 1e-12);
                        prop_assert!((-1.0..=1.0).contains(&rho));
                        let tx: Vec<f64> = x.iter().map(|v| (v / 7.0).exp() - 3.0).collect();
                        let rho_t = spearman_rho(&tx, &y).unwrap();
                        prop_assert!((rho - rho_t).abs() <= 1e-12);
                    }
                    Err(_) => {
                        let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
                        prop_assert!(constant(&x) || constant(&y));
                    }
                }
            }
        }
    }
}
