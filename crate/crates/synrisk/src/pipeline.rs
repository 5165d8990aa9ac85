//! Runs a validated configuration end to end and writes its outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use synrisk_core::attribute::{
    AttributeAssessor, AttributeRiskResult, AttributeScenario, GridExtent, GridSpec, GuessMode, Knowledge, Prior,
};
use synrisk_core::identification::{IdentificationResult, MatchConfig, PopulationSource, Radius, RadiusMetric};
use synrisk_core::synthesis::{self, GibbsConfig, SyntheticRelease};
use synrisk_core::{Dataset, Schema};

use crate::config::{
    AttributeConfig, GuessConfig, IdentificationConfig, KnowledgeConfig, MetricConfig, PopulationConfig, PriorConfig,
    RecordSelection, RunConfig, SynthesizerConfig,
};
use crate::error::{CliError, Result};
use crate::io;
use crate::report::{
    self, AttributeSection, GeoSection, IdentificationSection, MatchEntry, RankCount, RecordDetail, ReleaseSection,
    ReportBody, ReportHeader, RiskReport, TargetDetail, POSTERIOR_DETAIL_CAP, SCHEMA_VERSION,
};

/// Where a run's outputs went.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RiskReport,
    pub report_path: PathBuf,
    pub files: Vec<PathBuf>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn index(schema: &Schema, name: &str) -> Result<usize> {
    schema.index_of(name).ok_or_else(|| CliError::Config { violations: vec![format!("unknown variable `{name}`")] })
}

/// Builds the core scenario from its configuration.
pub fn scenario(cfg: &AttributeConfig, schema: &Schema) -> Result<AttributeScenario> {
    let knowledge = match &cfg.knowledge {
        KnowledgeConfig::WorstCase => Knowledge::WorstCase,
        KnowledgeConfig::KnownSubset(names) => {
            Knowledge::KnownSubset(names.iter().map(|n| index(schema, n)).collect::<Result<_>>()?)
        }
    };
    let prior = match &cfg.prior {
        PriorConfig::Uniform => Prior::Uniform,
        PriorConfig::Explicit(p) => Prior::Explicit(p.clone()),
    };
    let guesses = match &cfg.guesses {
        GuessConfig::Neighborhood => GuessMode::Neighborhood,
        GuessConfig::FullEnumeration => GuessMode::FullEnumeration { cap: cfg.enumeration_cap },
        GuessConfig::Explicit(rows) => {
            let synthesized: Vec<usize> = (0..schema.len()).filter(|&j| schema.variable(j).synthesized).collect();
            let mut out = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                if row.len() != synthesized.len() {
                    return Err(CliError::Config {
                        violations: vec![format!(
                            "attribute.guesses.explicit row {} has {} values, expected {}",
                            i + 1,
                            row.len(),
                            synthesized.len()
                        )],
                    });
                }
                let cells = synthesized
                    .iter()
                    .zip(row)
                    .map(|(&j, text)| schema.parse_cell(j, text, i + 1))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| CliError::Config { violations: vec![format!("attribute.guesses.explicit: {e}")] })?;
                out.push(cells);
            }
            GuessMode::Explicit(out)
        }
        GuessConfig::Grid(g) => {
            let extent = match (g.half_width, g.x_bounds, g.y_bounds) {
                (Some(half_width), _, _) => GridExtent::Local { half_width },
                (None, Some(x), Some(y)) => GridExtent::Fixed { x: (x[0], x[1]), y: (y[0], y[1]) },
                _ => GridExtent::Declared,
            };
            GuessMode::Grid(GridSpec {
                x_var: index(schema, &g.x)?,
                y_var: index(schema, &g.y)?,
                extent,
                points_per_axis: g.points_per_axis,
            })
        }
    };
    Ok(AttributeScenario { knowledge, prior, metadata_known: cfg.metadata_known, guesses })
}

/// Builds the core matching configuration from its configuration.
pub fn match_config(cfg: &IdentificationConfig, schema: &Schema) -> Result<MatchConfig> {
    let population = match &cfg.population {
        PopulationConfig::None => PopulationSource::None,
        PopulationConfig::Constant(n) => PopulationSource::Constant(*n),
        PopulationConfig::Table(path) => PopulationSource::PerTarget(io::load_population(path)?),
    };
    let mut radii = BTreeMap::new();
    for (name, r) in &cfg.radii {
        let metric = match r.metric {
            MetricConfig::Absolute => RadiusMetric::Absolute,
            MetricConfig::Relative => RadiusMetric::Relative,
        };
        radii.insert(index(schema, name)?, Radius { radius: r.radius, metric });
    }
    Ok(MatchConfig {
        in_sample: cfg.in_sample,
        population,
        radii,
        iterations: cfg.iterations,
        metadata_known: cfg.metadata_known,
        selection_reason: Vec::new(),
    })
}

/// Fits the configured synthesizer and generates the release.
pub fn synthesize(cfg: &SynthesizerConfig, data: &Dataset, seed: u64) -> Result<SyntheticRelease> {
    match cfg {
        SynthesizerConfig::Mixture { classes, burn_in, thin, draws, m } => {
            let gibbs = GibbsConfig { classes: *classes, burn_in: *burn_in, thin: *thin, draws: *draws };
            let model = synthesis::fit_mixture(data, &gibbs, seed).map_err(CliError::core("fit mixture"))?;
            let mut release =
                synthesis::generate_mixture_release(&model, data, *m, seed).map_err(CliError::core("generate release"))?;
            let hp = &mut release.provenance.hyperparameters;
            hp.insert("burn_in".into(), burn_in.to_string());
            hp.insert("thin".into(), thin.to_string());
            Ok(release)
        }
        SynthesizerConfig::Cart { order, min_leaf, m } => {
            let schema = data.schema();
            let order: Vec<usize> = match order {
                Some(names) => names.iter().map(|n| index(schema, n)).collect::<Result<_>>()?,
                None => (0..schema.len()).filter(|&j| schema.variable(j).synthesized).collect(),
            };
            let model = synthesis::fit_cart(data, &order, *min_leaf).map_err(CliError::core("fit cart"))?;
            synthesis::cart_generate(&model, data, *m, seed).map_err(CliError::core("generate release"))
        }
    }
}

/// Attribute risk with the configured kernel widths layered over the
/// grid-derived ones.
pub fn attribute_risk(
    cfg: &AttributeConfig,
    release: &SyntheticRelease,
    data: &Dataset,
) -> Result<(AttributeScenario, AttributeRiskResult)> {
    let schema = data.schema();
    let scenario = scenario(cfg, schema)?;
    scenario.validate(schema).map_err(CliError::core("attribute scenario"))?;
    let mut bandwidths = scenario.bandwidths(schema);
    for (name, &w) in &cfg.bandwidths {
        bandwidths.insert(index(schema, name)?, w);
    }
    let predictive = release.model.predictive(schema, &bandwidths);
    let assessor =
        AttributeAssessor::new(release, predictive.as_ref(), data).map_err(CliError::core("attribute likelihoods"))?;
    let ids = match &cfg.records {
        RecordSelection::All => None,
        RecordSelection::Ids(ids) => Some(ids.as_slice()),
    };
    let result = synrisk_core::attribute::assess_with(&assessor, data, &scenario, ids)
        .map_err(CliError::core("attribute risk"))?;
    Ok((scenario, result))
}

fn release_section(release: &SyntheticRelease, manifest: Option<String>) -> ReleaseSection {
    ReleaseSection {
        synthesizer: release.provenance.synthesizer.clone(),
        m: release.m(),
        retained_draws: release.model.draw_count(),
        n_rows: release.n_rows(),
        seed: release.provenance.seed,
        hyperparameters: release.provenance.hyperparameters.clone(),
        manifest,
    }
}

fn describe<T: serde::Serialize>(value: &T) -> String {
    match serde_json::to_value(value).expect("serializable") {
        serde_json::Value::String(s) => s,
        serde_json::Value::Object(m) => m.keys().next().cloned().unwrap_or_default(),
        other => other.to_string(),
    }
}

fn attribute_section(
    cfg: &AttributeConfig,
    result: &AttributeRiskResult,
    summary_only: bool,
    warnings: &mut Vec<String>,
) -> AttributeSection {
    let dropped_total: usize = result.records.iter().map(|r| r.dropped_draws).sum();
    let with_drops = result.records.iter().filter(|r| r.dropped_draws > 0).count();
    if with_drops > 0 {
        let w = format!("{with_drops} records dropped draws with negligible proposal density ({dropped_total} in total)");
        log::warn!("{w}");
        warnings.push(w);
    }
    let geo = result.map.as_ref().map(|map| {
        let mut r1: Vec<f64> = result.records.iter().filter_map(|r| r.geo.map(|g| g.r1)).collect();
        let mut r2: Vec<f64> = result.records.iter().filter_map(|r| r.geo.map(|g| g.r2 as f64)).collect();
        let n = r1.len().max(1) as f64;
        let tied = result.records.iter().filter(|r| r.geo.is_some_and(|g| g.tied)).count();
        if tied > 0 {
            let w = format!("{tied} records have a tied posterior mode; the lowest grid index was used");
            log::warn!("{w}");
            warnings.push(w);
        }
        GeoSection {
            mean_r1: r1.iter().sum::<f64>() / n,
            median_r1: report::median(&mut r1),
            mean_r2: r2.iter().sum::<f64>() / n,
            median_r2: report::median(&mut r2),
            tied_modes: tied,
            map_correct_pct: map.map_correct_pct,
            unique_map_correct_pct: map.unique_map_correct_pct,
            mean_map_distance: map.mean_distance,
        }
    });
    let records = (!summary_only).then(|| {
        result
            .records
            .iter()
            .map(|r| RecordDetail {
                record_id: r.record_id,
                guesses: r.posterior.len(),
                rank: r.rank,
                true_probability: r.true_probability,
                max_probability: r.posterior.iter().copied().fold(0.0, f64::max),
                dropped_draws: r.dropped_draws,
                r1: r.geo.map(|g| g.r1),
                r2: r.geo.map(|g| g.r2),
                posterior: (r.posterior.len() <= POSTERIOR_DETAIL_CAP).then(|| r.posterior.clone()),
            })
            .collect()
    });
    AttributeSection {
        knowledge: describe(&cfg.knowledge),
        prior: describe(&cfg.prior),
        guesses: describe(&cfg.guesses),
        metadata_known: cfg.metadata_known,
        records_assessed: result.summary.records,
        rank_distribution: result
            .summary
            .rank_counts
            .iter()
            .map(|(&rank, &count)| RankCount { rank, count })
            .collect(),
        mean_true_probability: result.summary.mean_probability,
        median_true_probability: result.summary.median_probability,
        dropped_draws_total: dropped_total,
        geo,
        records,
    }
}

fn identification_section(
    cfg: &MatchConfig,
    result: &IdentificationResult,
    targets: &synrisk_core::TargetFile,
    base: &Dataset,
    summary_only: bool,
    warnings: &mut Vec<String>,
) -> IdentificationSection {
    let s = &result.summary;
    if s.excluded > 0 {
        let w = format!("{} targets have no known true record and are excluded from the summaries", s.excluded);
        warnings.push(w);
    }
    if s.no_unique_matches {
        let w = "no target has a unique maximum match; the false match rate is reported as 0".to_string();
        log::warn!("{w}");
        warnings.push(w);
    }
    let per_target = (!summary_only).then(|| {
        result
            .targets
            .iter()
            .zip(&targets.targets)
            .map(|(t, src)| TargetDetail {
                target_id: t.target_id.clone(),
                true_row_id: src.true_row_id,
                c: t.stats.c,
                t: t.stats.t,
                k: t.stats.k(),
                f: t.stats.f(),
                max_probability: t.max_probability,
                not_in_release: t.probabilities.outside,
                matches: t
                    .probabilities
                    .entries
                    .iter()
                    .map(|&(r, p)| MatchEntry { row_id: base.row_id(r), probability: p })
                    .collect(),
            })
            .collect()
    });
    IdentificationSection {
        in_sample: cfg.in_sample,
        metadata_known: cfg.metadata_known,
        iterations: cfg.iterations,
        targets: result.targets.len(),
        evaluated: s.evaluated,
        excluded: s.excluded,
        expected_match_risk: s.expected_match_risk,
        true_match_rate: s.true_match_rate,
        false_match_rate: s.false_match_rate,
        unique_matches: s.unique_matches,
        no_unique_matches: s.no_unique_matches,
        per_target,
    }
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| CliError::Config { violations: vec![format!("{what} path required")] })
}

/// Computes the report without writing anything except a synthesized
/// release, which goes to `<output_dir>/release`.
pub fn build_report(config: &RunConfig) -> Result<RiskReport> {
    let started = now();
    let pipeline = config.pipeline;
    let schema: Arc<Schema> = io::load_schema(require(&config.schema, "schema")?)?;
    let data = match &config.data {
        Some(p) => Some(io::load_dataset(p, schema.clone())?),
        None => None,
    };
    let mut warnings = Vec::new();

    let (release, manifest) = if pipeline.synthesizes() {
        let data = data.as_ref().ok_or_else(|| CliError::Config { violations: vec!["data path required".into()] })?;
        let release = synthesize(&config.synthesizer, data, config.seed)?;
        let dir = config.output_dir.join("release");
        io::write_release(&dir, &release)?;
        log::info!("release written to {}", dir.display());
        (release, Some("release/manifest.json".to_string()))
    } else {
        (io::load_release(require(&config.release_manifest, "release_manifest")?, Some(&schema))?, None)
    };

    let attribute = if pipeline.attribute() {
        let data = data.as_ref().ok_or_else(|| CliError::Config { violations: vec!["data path required".into()] })?;
        if !release.preserves_unsynthesized(data) {
            return Err(CliError::input(
                config.data.clone().unwrap_or_default(),
                "un-synthesized columns of the release differ from the confidential data",
            ));
        }
        let (_, result) = attribute_risk(&config.attribute, &release, data)?;
        Some(attribute_section(&config.attribute, &result, config.summary_only, &mut warnings))
    } else {
        None
    };

    let identification = if pipeline.identification() {
        let targets_path = require(&config.targets, "targets")?;
        let targets = io::load_targets(targets_path, &schema)?;
        let mc = match_config(&config.identification, &schema)?;
        let result = synrisk_core::identification::monte_carlo_identification(&targets, &release, &mc, config.seed)
            .map_err(CliError::core("identification risk"))?;
        Some(identification_section(
            &mc,
            &result,
            &targets,
            &release.datasets[0],
            config.summary_only,
            &mut warnings,
        ))
    } else {
        None
    };

    Ok(RiskReport {
        schema_version: SCHEMA_VERSION,
        header: ReportHeader {
            tool: "synrisk".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config.hash(),
            started_unix: started,
            finished_unix: now(),
        },
        body: ReportBody {
            pipeline: pipeline.name().into(),
            seed: config.seed,
            release: Some(release_section(&release, manifest)),
            attribute,
            identification,
            warnings,
        },
    })
}

/// Runs the configuration on a pool of `config.jobs` threads and writes
/// the report, digest and tables. `report_path` defaults to
/// `<output_dir>/report.json`.
pub fn run(config: &RunConfig, report_path: Option<&Path>) -> Result<RunOutcome> {
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(CliError::io(out))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| CliError::Config { violations: vec![format!("cannot start {} worker threads: {e}", config.jobs)] })?;
    let report = pool.install(|| build_report(config))?;

    let report_path = report_path.map(Path::to_path_buf).unwrap_or_else(|| out.join("report.json"));
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    io::write_json(&report_path, &report)?;
    let digest = report_path.with_extension("txt");
    fs::write(&digest, report::render_text(&report)).map_err(CliError::io(&digest))?;
    let mut files = vec![report_path.clone(), digest];
    files.extend(report::write_tables(out, &report)?.into_iter().map(|f| out.join(f)));
    if report.body.release.as_ref().is_some_and(|r| r.manifest.is_some()) {
        files.push(out.join("release/manifest.json"));
    }
    Ok(RunOutcome { report, report_path, files })
}
