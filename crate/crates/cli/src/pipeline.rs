use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use anyhow::{anyhow, Context as _, Result};
use chrono::NaiveDate;
use fearsource_core::causal::{self, CausalDag, Predictor};
use fearsource_core::cluster::{self, FeatureKind};
use fearsource_core::epi::{self, DailySeries};
use fearsource_core::ingest::{self, ElectionLabels, StateCode, Surveillance};
use fearsource_core::scores::{self, FitStatus, PoolScores, Pooling, Scope, SeriesKind};
use fearsource_core::stats::{self, BatteryOptions, StratumSeries};
use fearsource_core::{Grouping, PerSingleton, Singleton, SurveyPanel};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::output::{ArtifactWriter, Meta, StageRecord, StageStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Validate,
    Epi,
    Score,
    Stats,
    Causal,
    Cluster,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Validate, Stage::Epi, Stage::Score, Stage::Stats, Stage::Causal, Stage::Cluster];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Epi => "epi",
            Stage::Score => "score",
            Stage::Stats => "stats",
            Stage::Causal => "causal",
            Stage::Cluster => "cluster",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

enum Outcome {
    Done,
    Skipped(String),
}

/// Inputs plus intermediate results shared between stages.
struct Context<'a> {
    cfg: &'a PipelineConfig,
    panel: SurveyPanel,
    surveillance: Option<Surveillance>,
    elections: Option<BTreeMap<u16, ElectionLabels>>,
    notes: Vec<String>,
    scores: BTreeMap<Grouping, Vec<PoolScores>>,
    infections: Option<Option<DailySeries>>,
}

impl<'a> Context<'a> {
    fn load(cfg: &'a PipelineConfig) -> Result<Self> {
        let survey = cfg.survey.as_ref().expect("validated");
        log::info!("loading survey panel {}", survey.display());
        let panel = ingest::load_survey_panel(survey)?;
        let mut notes = Vec::new();
        for (name, path) in cfg.missing_optional() {
            notes.push(format!("{name} input {} not found", path.display()));
        }
        let surveillance = match &cfg.surveillance {
            Some(p) if p.is_file() => Some(ingest::load_surveillance(p)?),
            _ => None,
        };
        let elections = match &cfg.elections {
            Some(p) if p.is_file() => Some(ingest::load_elections(p)?),
            _ => None,
        };
        Ok(Context {
            cfg,
            panel,
            surveillance,
            elections,
            notes,
            scores: BTreeMap::new(),
            infections: None,
        })
    }

    fn scores(&mut self, grouping: Grouping) -> Result<&[PoolScores]> {
        if !self.scores.contains_key(&grouping) {
            log::info!("scoring national panel by {}", grouping.label());
            let pools = scores::score_panel(&self.panel, Scope::National, Pooling::Grouped(grouping), self.cfg.disentangle_mode)?;
            self.scores.insert(grouping, pools);
        }
        Ok(&self.scores[&grouping])
    }

    /// Active infections per geography.
    fn active_infections(&self) -> Result<Vec<DailySeries>> {
        let Some(surv) = &self.surveillance else { return Ok(Vec::new()) };
        surv.records
            .keys()
            .map(|&geo| {
                let cases = epi::daily_increments(&surv.cumulative_cases(geo).expect("known geography"));
                let deaths = epi::daily_increments(&surv.cumulative_deaths(geo).expect("known geography"));
                Ok(epi::reconstruct_active_infections(&cases, &deaths, self.cfg.recovery_days)?.renamed(geo.to_string()))
            })
            .collect()
    }

    /// National active infections: the `US` series, or the sum over states.
    fn national_infections(&mut self) -> Result<Option<DailySeries>> {
        if let Some(cached) = &self.infections {
            return Ok(cached.clone());
        }
        let all = self.active_infections()?;
        let national = match all.iter().find(|s| s.name() == StateCode::US.as_str()) {
            Some(us) => Some(us.clone()),
            None if !all.is_empty() => {
                let mut sum: BTreeMap<NaiveDate, f64> = BTreeMap::new();
                for s in &all {
                    for (d, v) in s.iter() {
                        *sum.entry(d).or_default() += v;
                    }
                }
                let (dates, values) = sum.into_iter().unzip();
                Some(DailySeries::new(StateCode::US.as_str(), dates, values)?)
            }
            None => None,
        };
        let national = national.map(|s| s.renamed("infections"));
        self.infections = Some(national.clone());
        Ok(national)
    }
}

fn csv_body<F>(f: F) -> impl FnOnce(&mut Vec<u8>) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> fearsource_core::Result<()>,
{
    move |buf| f(buf).map_err(Into::into)
}

#[derive(Serialize)]
struct PanelReport<'a> {
    #[serde(flatten)]
    validation: &'a ingest::PanelValidation,
    national_rows: bool,
    states: usize,
    days: usize,
}

#[derive(Serialize)]
struct SurveillanceReport<'a> {
    geographies: Vec<StateCode>,
    monotonicity_flags: &'a [ingest::MonotonicityFlag],
    warnings: &'a [String],
}

fn stage_validate(ctx: &mut Context, out: &mut ArtifactWriter) -> Result<Outcome> {
    let validation = ctx.panel.validate();
    out.json(
        "validate/panel.json",
        &PanelReport {
            validation: &validation,
            national_rows: ctx.panel.has_national_rows(),
            states: ctx.panel.subnational_states().len(),
            days: ctx.panel.days().len(),
        },
    )?;
    if let Some(surv) = &ctx.surveillance {
        out.json(
            "validate/surveillance.json",
            &SurveillanceReport {
                geographies: surv.records.keys().copied().collect(),
                monotonicity_flags: &surv.flags,
                warnings: &surv.warnings,
            },
        )?;
    }
    Ok(Outcome::Done)
}

fn stage_epi(ctx: &mut Context, out: &mut ArtifactWriter) -> Result<Outcome> {
    if ctx.surveillance.is_none() {
        return Ok(Outcome::Skipped("no surveillance input".into()));
    }
    let active = ctx.active_infections()?;
    let window = ctx.cfg.window;
    let smoothed = active.iter().map(|s| epi::rolling_mean(s, window)).collect::<Result<Vec<_>, _>>()?;
    out.text("epi/active_infections.csv", csv_body(|b| epi::write_active_infections(&active, b)))?;
    out.text(
        "epi/active_infections_smoothed.csv",
        csv_body(|b| epi::write_active_infections(&smoothed, b)),
    )?;
    Ok(Outcome::Done)
}

fn write_weights<W: Write>(pools: &[PoolScores], out: W) -> fearsource_core::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stratum", "combo", "members", "singleton", "weight", "status", "days_used"])?;
    for pool in pools {
        let label = pool.pool.label();
        for fit in pool.weights.fits() {
            let members: Vec<&str> = fit.combo.members().iter().map(|s| s.name()).collect();
            let status = match fit.status {
                FitStatus::Fitted => "fitted".to_string(),
                FitStatus::NoData => "no_data".to_string(),
                FitStatus::Underdetermined { days, unknowns } => format!("underdetermined({days}<{unknowns})"),
            };
            let base = [label.clone(), fit.combo.mask().to_string(), members.join("+")];
            match &fit.weights {
                Some(ws) => {
                    for (s, v) in ws {
                        w.write_record(base.iter().cloned().chain([
                            s.name().to_string(),
                            v.to_string(),
                            status.clone(),
                            fit.days_used.to_string(),
                        ]))?;
                    }
                }
                None => {
                    w.write_record(base.iter().cloned().chain([
                        String::new(),
                        String::new(),
                        status.clone(),
                        fit.days_used.to_string(),
                    ]))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn write_variation<W: Write>(pools: &[PoolScores], out: W) -> fearsource_core::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stratum", "singleton", "cv_usage", "cv_fear"])?;
    for pool in pools {
        for s in Singleton::ALL {
            let cv = |kind: SeriesKind| {
                scores::coefficient_of_variation(kind.series(pool, s).values())
                    .map(|v| v.to_string())
                    .unwrap_or_default()
            };
            w.write_record([pool.pool.label(), s.name().to_string(), cv(SeriesKind::Usage), cv(SeriesKind::Fear)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn stage_score(ctx: &mut Context, out: &mut ArtifactWriter) -> Result<Outcome> {
    let window = ctx.cfg.window;
    for g in Grouping::ALL {
        let pools = ctx.scores(g)?;
        let l = g.label();
        for kind in [SeriesKind::Usage, SeriesKind::Fear] {
            let name = match kind {
                SeriesKind::Usage => "usage",
                SeriesKind::Fear => "fear",
            };
            out.text(
                &format!("scores/{name}_{l}.csv"),
                csv_body(|b| scores::write_singleton_series(pools, kind, None, b)),
            )?;
            out.text(
                &format!("scores/{name}_{l}_smoothed.csv"),
                csv_body(|b| scores::write_singleton_series(pools, kind, Some(window), b)),
            )?;
            out.text(
                &format!("scores/boxplot_{name}_{l}.csv"),
                csv_body(|b| scores::write_boxplots(pools, kind, b)),
            )?;
        }
        out.text(&format!("scores/weights_{l}.csv"), csv_body(|b| write_weights(pools, b)))?;
        out.text(&format!("scores/variation_{l}.csv"), csv_body(|b| write_variation(pools, b)))?;
    }
    Ok(Outcome::Done)
}

fn stage_stats(ctx: &mut Context, out: &mut ArtifactWriter) -> Result<Outcome> {
    let options = BatteryOptions {
        alpha: ctx.cfg.alpha,
        bonferroni: ctx.cfg.bonferroni,
    };
    let infections = ctx.national_infections()?;
    let mut groupings = vec![Grouping::Ungrouped];
    if ctx.cfg.grouping != Grouping::Ungrouped {
        groupings.push(ctx.cfg.grouping);
    }
    for g in groupings {
        let pools = ctx.scores(g)?;
        let strata: Vec<StratumSeries> = pools
            .iter()
            .filter_map(|p| {
                p.pool.stratum().map(|stratum| StratumSeries {
                    stratum,
                    series: PerSingleton::from_fn(|s| p.fear_series(s)),
                })
            })
            .collect();
        let report = stats::run_test_battery(&strata, options);
        let l = g.label();
        out.text(&format!("stats/battery_{l}.csv"), csv_body(|b| report.write_csv(b)))?;
        out.json(
            &format!("stats/battery_{l}_summary.json"),
            &serde_json::json!({
                "grouping": l,
                "alpha": options.alpha,
                "bonferroni": options.bonferroni,
                "threshold": report.threshold(),
                "summary": report.summary(),
            }),
        )?;
        for pool in pools {
            for kind in [SeriesKind::Fear, SeriesKind::Usage] {
                let mut series: Vec<DailySeries> = Singleton::ALL.iter().map(|&s| kind.series(pool, s)).collect();
                series.extend(infections.clone());
                let name = match kind {
                    SeriesKind::Usage => "usage",
                    SeriesKind::Fear => "fear",
                };
                let rel = format!("stats/corr_{name}_{}.csv", pool.pool.label());
                match stats::correlation_matrix(&series) {
                    Ok(m) => {
                        out.text(&rel, csv_body(|b| m.write_csv(b)))?;
                    }
                    Err(e) => log::warn!("skipping {rel}: {e}"),
                }
            }
        }
    }
    Ok(Outcome::Done)
}

fn stage_causal(ctx: &mut Context, out: &mut ArtifactWriter) -> Result<Outcome> {
    let dag = CausalDag::default();
    if !causal::validate_dag(&dag) {
        return Err(anyhow!("causal graph failed validation"));
    }
    let mut edges = Vec::new();
    dag.write_edge_list(&mut edges)?;
    out.text("causal/dag.txt", |b| {
        b.extend_from_slice(&edges);
        Ok(())
    })?;
    log::info!("scoring demographic cells for attribution");
    let cells = scores::score_panel(&ctx.panel, Scope::National, Pooling::Cells, ctx.cfg.disentangle_mode)?;
    let obs = causal::build_observations(&ctx.panel, &cells)?;
    let attribution = causal::shapley_attribution(&obs)?;
    let sequential = causal::sequential_anova(&obs, &[Predictor::Age, Predictor::Education, Predictor::Source])?;
    out.text("causal/attribution.csv", csv_body(|b| attribution.write_csv(b)))?;
    out.json(
        "causal/attribution.json",
        &serde_json::json!({
            "observations": obs.len(),
            "attribution": attribution,
            "sequential_anova": sequential
                .iter()
                .map(|(p, v)| serde_json::json!({ "driver": p.label(), "share": v }))
                .collect::<Vec<_>>(),
        }),
    )?;
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct ClusterSummary<'a> {
    kind: FeatureKind,
    grouping: Grouping,
    standardized: bool,
    states: usize,
    excluded: &'a [(StateCode, String)],
    selected_k: usize,
    candidates: &'a [(usize, Option<f64>, f64)],
    selected: &'a cluster::ClusterReport,
    two_clusters: &'a cluster::ClusterReport,
    comparisons: &'a [cluster::ElectionComparison],
    swing_states: &'a [StateCode],
}

fn stage_cluster(ctx: &mut Context, out: &mut ArtifactWriter) -> Result<Outcome> {
    let Some(elections) = ctx.elections.clone() else {
        return Ok(Outcome::Skipped("no elections input; clustering not run".into()));
    };
    log::info!("scoring states for clustering");
    let aggregates = cluster::state_aggregates(&ctx.panel, &Grouping::ALL, ctx.cfg.disentangle_mode)?;
    let swing = match (elections.get(&2020), elections.get(&2024)) {
        (Some(a), Some(b)) => cluster::swing_states(a, b),
        _ => Vec::new(),
    };
    let seed = ctx.cfg.seed;
    for kind in FeatureKind::ALL {
        let groupings: &[Grouping] = if kind.is_stratified() {
            &[Grouping::ByAge, Grouping::ByEducation]
        } else {
            &[Grouping::Ungrouped]
        };
        for &g in groupings {
            let mut set = cluster::build_state_features(&aggregates, kind, g)?;
            if ctx.cfg.standardize {
                cluster::standardize(&mut set.features);
            }
            let tag = if kind.is_stratified() {
                format!("{kind}_{}", g.label())
            } else {
                kind.to_string()
            };
            let n = set.features.len();
            if n < 3 {
                log::warn!("{tag}: only {n} states with complete features; skipped");
                continue;
            }
            let k_max = ctx.cfg.k_max.min(n - 1);
            let k_min = ctx.cfg.k_min.min(k_max);
            let selection = cluster::select_k(&set.features, k_min, k_max, seed)
                .with_context(|| format!("selecting k for {tag}"))?;
            let two = if selection.k == 2 {
                selection.report.clone()
            } else {
                cluster::best_of_restarts(&set.features, 2, seed)?
            };
            let comparisons: Vec<_> = elections
                .values()
                .map(|labels| cluster::compare_with_elections(&two, labels))
                .collect::<Result<_, _>>()?;
            for cmp in &comparisons {
                out.text(
                    &format!("cluster/{tag}_{}.csv", cmp.year),
                    csv_body(|b| cluster::write_cluster_csv(&two, Some(cmp), &swing, b)),
                )?;
            }
            out.text(&format!("cluster/features_{tag}.csv"), |b| {
                let mut w = csv::Writer::from_writer(b);
                let mut header = vec!["state".to_string()];
                header.extend((0..kind.len()).map(|i| format!("x{i}")));
                w.write_record(&header)?;
                for f in &set.features {
                    w.write_record(std::iter::once(f.state.to_string()).chain(f.vector.iter().map(|v| v.to_string())))?;
                }
                w.flush()?;
                Ok(())
            })?;
            out.json(
                &format!("cluster/{tag}.json"),
                &ClusterSummary {
                    kind,
                    grouping: g,
                    standardized: ctx.cfg.standardize,
                    states: n,
                    excluded: &set.excluded,
                    selected_k: selection.k,
                    candidates: &selection.candidates,
                    selected: &selection.report,
                    two_clusters: &two,
                    comparisons: &comparisons,
                    swing_states: &swing,
                },
            )?;
        }
    }
    Ok(Outcome::Done)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub stages: Vec<StageRecord>,
    pub out_dir: std::path::PathBuf,
}

/// Runs `stages` in order, writing a manifest that records every stage
/// reached. Fails on the first stage error, after writing the manifest.
pub fn run(cfg: &PipelineConfig, stages: &[Stage]) -> Result<RunSummary> {
    cfg.validate()?;
    let meta = Meta::new(cfg.seed, &cfg.digest()?);
    let mut out = ArtifactWriter::new(&cfg.out, meta)?;
    let mut records = Vec::new();
    let mut ctx = match Context::load(cfg) {
        Ok(ctx) => ctx,
        Err(e) => {
            records.push(StageRecord {
                name: "load".into(),
                status: StageStatus::Failed,
                note: Some(format!("{e:#}")),
            });
            out.write_manifest(&records)?;
            return Err(e);
        }
    };
    for note in &ctx.notes {
        log::warn!("{note}");
    }
    let mut ordered = stages.to_vec();
    ordered.sort();
    ordered.dedup();
    for stage in ordered {
        log::info!("stage {stage}");
        out.set_stage(stage.name());
        let result = match stage {
            Stage::Validate => stage_validate(&mut ctx, &mut out),
            Stage::Epi => stage_epi(&mut ctx, &mut out),
            Stage::Score => stage_score(&mut ctx, &mut out),
            Stage::Stats => stage_stats(&mut ctx, &mut out),
            Stage::Causal => stage_causal(&mut ctx, &mut out),
            Stage::Cluster => stage_cluster(&mut ctx, &mut out),
        };
        let record = |status, note| StageRecord {
            name: stage.name().into(),
            status,
            note,
        };
        match result {
            Ok(Outcome::Done) => records.push(record(StageStatus::Completed, None)),
            Ok(Outcome::Skipped(note)) => {
                log::warn!("stage {stage} skipped: {note}");
                records.push(record(StageStatus::Skipped, Some(note)));
            }
            Err(e) => {
                records.push(record(StageStatus::Failed, Some(format!("{e:#}"))));
                out.write_manifest(&records)?;
                return Err(e.context(format!("stage {stage} failed")));
            }
        }
    }
    out.write_manifest(&records)?;
    Ok(RunSummary {
        stages: records,
        out_dir: cfg.out.clone(),
    })
}

