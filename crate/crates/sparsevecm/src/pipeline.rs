//! The end-to-end workflow: summarize, unit-root tests, Chow tests at
//! period boundaries, lag selection, fit, VECM rank, JIRF scenarios and
//! bootstrap bands.
//!
//! Every artifact path in the manifest is relative to the output
//! directory and the manifest carries no timestamps, so identical inputs,
//! config and seed give a byte-identical manifest. While a run is in
//! progress, and after a failed one, the output directory holds a
//! `.partial` marker.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparsevecm_core::bootstrap::bootstrap_jirfs;
use sparsevecm_core::jirf::jirf_for_fit;
use sparsevecm_core::panel::{
    aggregate, deflate, exclude_sparse, interpolate, log_transform, summarize, AggregateOptions, Month, PeriodSpec,
    PeriodSummary,
};
use sparsevecm_core::stattests::{
    chow_test, pairwise_cointegration, panel_unit_root, ChowResult, Deterministic, PairwiseCointegration,
    PanelUnitRootResult,
};
use sparsevecm_core::varnet::LagSelection;
use sparsevecm_core::vecm::{rank_report, DEFAULT_FLAG_TOLERANCE};
use sparsevecm_core::{
    build_shock, fit_var, select_lag, to_vecm, Error as CoreError, JirfResult, PricePanel, ShockScenario, ShockSource,
    VarFit, VecmView,
};

use crate::config::{MagnitudeSource, PipelineConfig};
use crate::error::{AppError, AppResult};
use crate::grid::export_grid;
use crate::io;

pub const MARKER: &str = ".partial";
pub const MANIFEST: &str = "manifest.json";
pub const BUNDLE: &str = "bundle.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Summarize,
    UnitRoot,
    Chow,
    LagSelect,
    Fit,
    VecmRank,
    Jirf,
    Bootstrap,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Summarize,
        Stage::UnitRoot,
        Stage::Chow,
        Stage::LagSelect,
        Stage::Fit,
        Stage::VecmRank,
        Stage::Jirf,
        Stage::Bootstrap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Summarize => "summarize",
            Stage::UnitRoot => "unit_root",
            Stage::Chow => "chow",
            Stage::LagSelect => "lag_select",
            Stage::Fit => "fit",
            Stage::VecmRank => "vecm_rank",
            Stage::Jirf => "jirf",
            Stage::Bootstrap => "bootstrap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub inputs: Vec<Artifact>,
    pub stages: Vec<StageRecord>,
}

/// What `serve` needs to load a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleIndex {
    pub series: Vec<String>,
    pub panel_csv: String,
    pub panel_json: String,
    pub periods: Vec<BundlePeriod>,
    pub elastic_net: sparsevecm_core::ElasticNetConfig,
    pub bootstrap: crate::config::BootstrapSettings,
    pub seed: u64,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundlePeriod {
    pub name: String,
    pub lags: usize,
    pub fit: String,
}

#[derive(Debug, Clone, Serialize)]
struct SummaryArtifact<'a> {
    excluded_regions: &'a [String],
    deflation_base: Option<String>,
    summaries: &'a [PeriodSummary],
}

#[derive(Debug, Clone, Serialize)]
struct UnitRootArtifact {
    period: String,
    adf_max_lag: usize,
    levels: PanelUnitRootResult,
    differences: PanelUnitRootResult,
    cointegration: Vec<PairwiseCointegration>,
}

#[derive(Debug, Clone, Serialize)]
struct ChowArtifact {
    boundary: String,
    break_index: usize,
    break_date: String,
    lags: usize,
    result: Option<ChowResult>,
    skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct LagArtifact {
    period: String,
    lag: usize,
    fixed: bool,
    selection: Option<LagSelection>,
}

/// File-name-safe form of a label.
pub fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// `floor(12 (n/100)^{1/4})`, capped so the ADF regression keeps enough rows.
pub fn default_adf_lag(n: usize) -> usize {
    let schwert = (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize;
    schwert.min(n.saturating_sub(11))
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    seed: u64,
    levels: Option<PricePanel>,
    panel: Option<PricePanel>,
    periods: Vec<String>,
    lags: BTreeMap<String, usize>,
    fits: BTreeMap<String, VarFit>,
    sub_fits: BTreeMap<(String, String), VarFit>,
    vecms: BTreeMap<String, VecmView>,
    scenarios: BTreeMap<String, Vec<(String, ShockScenario)>>,
    jirfs: BTreeMap<(String, String), JirfResult>,
    written: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    fn panel(&self) -> &PricePanel {
        self.panel.as_ref().expect("summarize stage ran")
    }

    fn path(&mut self, rel: &str) -> AppResult<PathBuf> {
        let p = self.out.join(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        }
        self.written.push(p.clone());
        Ok(p)
    }

    fn json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> AppResult<()> {
        let p = self.path(rel)?;
        io::write_json(&p, value)
    }

    fn summarize(&mut self) -> AppResult<()> {
        let cfg = self.cfg;
        let raw = io::read_prices(&cfg.resolve(&cfg.prices))?;
        let options = AggregateOptions { commodities: cfg.commodities.clone() };
        let mut panel = aggregate(&raw, &options)?;
        let mut base_label = None;
        if let Some(cpi_path) = &cfg.cpi {
            let cpi = io::read_cpi(&cfg.resolve(cpi_path))?;
            let base = match &cfg.cpi_base {
                Some(b) => Month::parse(b).ok_or_else(|| AppError::Config(format!("bad cpi_base `{b}`")))?,
                None => Month::of(panel.dates[0]),
            };
            base_label = Some(base.to_string());
            panel = deflate(&panel, &cpi, base)?;
        }
        let specs = if cfg.periods.is_empty() {
            vec![PeriodSpec {
                name: "All".into(),
                start: panel.dates[0],
                end: *panel.dates.last().expect("non-empty panel"),
            }]
        } else {
            cfg.periods.clone()
        };
        panel.tag_periods(&specs)?;
        let (panel, excluded) = exclude_sparse(&panel, cfg.exclusion_threshold);
        if panel.n_series() == 0 {
            return Err(AppError::Config("every region exceeded the exclusion threshold".into()));
        }
        for r in &excluded {
            log::warn!("region {r} dropped: too many missing weeks");
        }
        self.periods = panel.periods.iter().map(|p| p.name.clone()).collect();
        let names: Vec<&str> = self.periods.iter().map(String::as_str).collect();
        let summaries = summarize(&panel, &names)?;
        self.json(
            "summary.json",
            &SummaryArtifact { excluded_regions: &excluded, deflation_base: base_label, summaries: &summaries },
        )?;
        let logged = log_transform(&interpolate(&panel)?)?;
        let (c, j) = io::write_panel(&self.out, "panel", &logged)?;
        self.written.extend([c, j]);
        self.levels = Some(panel);
        self.panel = Some(logged);
        Ok(())
    }

    fn unit_root(&mut self) -> AppResult<()> {
        let mut records = Vec::new();
        for name in self.periods.clone() {
            let slice = self.panel().slice_period(&name)?;
            let n = slice.n_times() - 1;
            let max_lag = self.cfg.adf_max_lag.unwrap_or_else(|| default_adf_lag(n));
            let levels = panel_unit_root(&slice, Deterministic::Constant, max_lag)
                .map_err(|e| e.context(format!("levels, period {name}")))?;
            let diff = PricePanel::new(slice.dates[1..].to_vec(), slice.series.clone(), slice.diff())?;
            let differences = panel_unit_root(&diff, Deterministic::Constant, max_lag.min(default_adf_lag(n - 1)))
                .map_err(|e| e.context(format!("differences, period {name}")))?;
            let mut cointegration = Vec::new();
            for c in self.panel().commodities() {
                if self.panel().commodity_columns(&c).len() >= 2 {
                    cointegration.push(pairwise_cointegration(
                        self.panel(),
                        &c,
                        Some(&name),
                        max_lag,
                        self.cfg.significance,
                    )?);
                }
            }
            records.push(UnitRootArtifact { period: name, adf_max_lag: max_lag, levels, differences, cointegration });
        }
        self.json("unit_root.json", &records)
    }

    fn chow(&mut self) -> AppResult<()> {
        let panel = self.panel();
        let mut records = Vec::new();
        for w in panel.periods.windows(2) {
            let at = w[1].start;
            let lags = self.cfg.chow_lags;
            let (result, skipped) = match chow_test(panel, at, lags) {
                Ok(r) => (Some(r), None),
                Err(e)
                    if matches!(
                        e.root(),
                        CoreError::TooFewObservations { .. } | CoreError::SeriesTooShort { .. }
                    ) =>
                {
                    log::warn!("Chow test at {} skipped: {e}", w[1].name);
                    (None, Some(e.to_string()))
                }
                Err(e) => return Err(e.into()),
            };
            records.push(ChowArtifact {
                boundary: format!("{}|{}", w[0].name, w[1].name),
                break_index: at,
                break_date: panel.dates[at].to_string(),
                lags,
                result,
                skipped,
            });
        }
        self.json("chow.json", &records)
    }

    fn lag_select(&mut self) -> AppResult<()> {
        let mut records = Vec::new();
        for name in self.periods.clone() {
            let record = match self.cfg.lags {
                Some(p) => LagArtifact { period: name.clone(), lag: p, fixed: true, selection: None },
                None => {
                    let slice = self.panel().slice_period(&name)?;
                    let sel = select_lag(&slice, self.cfg.max_lag, &self.cfg.elastic_net)
                        .map_err(|e| e.context(format!("period {name}")))?;
                    LagArtifact { period: name.clone(), lag: sel.lag, fixed: false, selection: Some(sel) }
                }
            };
            self.lags.insert(name, record.lag);
            records.push(record);
        }
        self.json("lags.json", &records)
    }

    fn fit(&mut self) -> AppResult<()> {
        let en = self.cfg.elastic_net.clone();
        let mut periods = Vec::new();
        for name in self.periods.clone() {
            let lags = self.lags[&name];
            let slice = self.panel().slice_period(&name)?;
            let fit = fit_var(&slice, lags, &en).map_err(|e| e.context(format!("period {name}")))?;
            let rel = format!("fits/{}.json", slug(&name));
            self.json(&rel, &fit)?;
            periods.push(BundlePeriod { name: name.clone(), lags, fit: rel });
            if self.cfg.rank_by_commodity {
                for c in slice.commodities() {
                    let sub = slice.select_series(&slice.commodity_columns(&c));
                    let sub_fit =
                        fit_var(&sub, lags, &en).map_err(|e| e.context(format!("period {name}, commodity {c}")))?;
                    self.json(&format!("fits/{}_{}.json", slug(&name), slug(&c)), &sub_fit)?;
                    self.sub_fits.insert((c, name.clone()), sub_fit);
                }
            }
            self.fits.insert(name, fit);
        }
        let bundle = BundleIndex {
            series: self.panel().labels(),
            panel_csv: "panel.csv".into(),
            panel_json: "panel.json".into(),
            periods,
            elastic_net: en,
            bootstrap: self.cfg.bootstrap.clone(),
            seed: self.seed,
            horizon: self.cfg.jirf.horizon,
        };
        self.json(BUNDLE, &bundle)
    }

    fn vecm_rank(&mut self) -> AppResult<()> {
        let mut full = BTreeMap::new();
        let mut sub = BTreeMap::new();
        for name in self.periods.clone() {
            let vecm = to_vecm(&self.fits[&name])?;
            self.json(&format!("vecm/{}.json", slug(&name)), &vecm)?;
            let mut labels = vec![String::from("pi")];
            labels.extend((1..vecm.lags).map(|k| format!("gamma{k}")));
            for label in labels {
                let grid = export_grid(&vecm, &label, &name)?;
                self.json(&format!("grids/{}_{label}.json", slug(&name)), &grid)?;
                self.json(&format!("grids/{}_{label}.render.json", slug(&name)), &grid.rendering())?;
            }
            full.insert(name.clone(), vecm.pi.clone());
            self.vecms.insert(name, vecm);
        }
        let commodities = if self.cfg.rank_by_commodity { self.panel().commodities() } else { Vec::new() };
        for ((c, p), fit) in &self.sub_fits {
            sub.insert((c.clone(), p.clone()), to_vecm(fit)?.pi);
        }
        let table = rank_report(&self.periods, &commodities, &full, &sub, DEFAULT_FLAG_TOLERANCE)?;
        self.json("rank.json", &table)?;
        let p = self.path("rank.txt")?;
        io::write_text(&p, &table.to_text())
    }

    fn scenarios_for(&self, name: &str) -> AppResult<Vec<(String, ShockScenario)>> {
        let cfg = &self.cfg.jirf;
        let panel = self.panel();
        let fit = &self.fits[name];
        let source = match cfg.shock_source {
            MagnitudeSource::SeriesStd => ShockSource::SeriesStd { period: Some(name.to_string()) },
            MagnitudeSource::ResidualStd => ShockSource::ResidualStd,
        };
        let mut out = Vec::new();
        let commodities = panel.commodities();
        for c in &commodities {
            let labels: Vec<String> = panel.commodity_columns(c).iter().map(|j| panel.series[*j].label()).collect();
            out.push((format!("all-{c}"), build_shock(panel, Some(fit), &labels, source.clone(), cfg.horizon)?));
        }
        if cfg.top_k > 0 {
            let c = cfg.top_k_commodity.clone().unwrap_or_else(|| commodities[0].clone());
            let cols = panel.commodity_columns(&c);
            if cols.is_empty() {
                return Err(AppError::Config(format!("top_k_commodity `{c}` is not in the panel")));
            }
            let labels: Vec<String> = cols.iter().map(|j| panel.series[*j].label()).collect();
            let all = build_shock(panel, Some(fit), &labels, source.clone(), cfg.horizon)?;
            let mut order: Vec<usize> = (0..labels.len()).collect();
            order.sort_by(|a, b| all.magnitudes[*b].total_cmp(&all.magnitudes[*a]).then(a.cmp(b)));
            let k = cfg.top_k.min(labels.len());
            let mut chosen: Vec<usize> = order[..k].to_vec();
            chosen.sort_unstable();
            let picked: Vec<String> = chosen.iter().map(|i| labels[*i].clone()).collect();
            out.push((format!("top{k}-{c}"), build_shock(panel, Some(fit), &picked, source.clone(), cfg.horizon)?));
        }
        for s in &cfg.scenarios {
            let src = match &s.magnitudes {
                Some(m) => ShockSource::User { magnitudes: m.clone() },
                None => source.clone(),
            };
            out.push((s.name.clone(), build_shock(panel, Some(fit), &s.series, src, cfg.horizon)?));
        }
        Ok(out)
    }

    fn jirf(&mut self) -> AppResult<()> {
        for name in self.periods.clone() {
            let scenarios = self.scenarios_for(&name)?;
            for (sname, sc) in &scenarios {
                let result = jirf_for_fit(&self.fits[&name], sc).map_err(|e| e.context(format!("scenario {sname}")))?;
                let stem = format!("jirf/{}_{}", slug(&name), slug(sname));
                self.json(&format!("{stem}.json"), &result)?;
                let p = self.path(&format!("{stem}.csv"))?;
                io::write_jirf_csv(&p, &result)?;
                self.jirfs.insert((name.clone(), sname.clone()), result);
            }
            self.scenarios.insert(name, scenarios);
        }
        Ok(())
    }

    fn bootstrap(&mut self) -> AppResult<()> {
        for (k, name) in self.periods.clone().into_iter().enumerate() {
            let slice = self.panel().slice_period(&name)?;
            let spec = self.cfg.bootstrap.spec(self.seed.wrapping_add(k as u64));
            let scenarios = &self.scenarios[&name];
            let only: Vec<ShockScenario> = scenarios.iter().map(|(_, s)| s.clone()).collect();
            let dists = bootstrap_jirfs(&self.fits[&name], &slice, &only, &spec, &self.cfg.elastic_net)
                .map_err(|e| e.context(format!("period {name}")))?;
            let names: Vec<String> = scenarios.iter().map(|(n, _)| n.clone()).collect();
            for (sname, dist) in names.iter().zip(dists) {
                let mut result = self.jirfs[&(name.clone(), sname.clone())].clone();
                let stem = format!("bootstrap/{}_{}", slug(&name), slug(sname));
                if spec.keep_draws {
                    let p = self.path(&format!("{stem}_draws.csv"))?;
                    io::write_draws_csv(&p, &dist)?;
                }
                let mut summary = dist;
                summary.draws.clear();
                result.bootstrap = Some(summary);
                self.json(&format!("{stem}.json"), &result)?;
            }
        }
        Ok(())
    }

    fn run_stage(&mut self, stage: Stage) -> AppResult<()> {
        match stage {
            Stage::Summarize => self.summarize(),
            Stage::UnitRoot => self.unit_root(),
            Stage::Chow => self.chow(),
            Stage::LagSelect => self.lag_select(),
            Stage::Fit => self.fit(),
            Stage::VecmRank => self.vecm_rank(),
            Stage::Jirf => self.jirf(),
            Stage::Bootstrap => self.bootstrap(),
        }
    }
}

fn artifact(out: &Path, path: &Path) -> AppResult<Artifact> {
    let rel = path.strip_prefix(out).unwrap_or(path);
    let bytes = fs::metadata(path).map_err(|e| AppError::io(path, e))?.len();
    Ok(Artifact {
        path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
        sha256: io::sha256_file(path)?,
        bytes,
    })
}

/// Runs every stage up to and including `until`, writing artifacts and the
/// manifest into the configured output directory.
pub fn run_pipeline(cfg: &PipelineConfig, until: Stage) -> AppResult<Manifest> {
    let out = cfg.output_dir();
    fs::create_dir_all(&out).map_err(|e| AppError::io(&out, e))?;
    let marker = out.join(MARKER);
    io::write_text(&marker, "running\n")?;
    let seed = cfg.resolved_seed()?;
    let mut inputs = vec![(cfg.prices.clone(), cfg.resolve(&cfg.prices))];
    if let Some(c) = &cfg.cpi {
        inputs.push((c.clone(), cfg.resolve(c)));
    }
    let mut manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config: cfg.clone(),
        inputs: Vec::new(),
        stages: Vec::new(),
    };
    let mut run = Run {
        cfg,
        out: out.clone(),
        seed,
        levels: None,
        panel: None,
        periods: Vec::new(),
        lags: BTreeMap::new(),
        fits: BTreeMap::new(),
        sub_fits: BTreeMap::new(),
        vecms: BTreeMap::new(),
        scenarios: BTreeMap::new(),
        jirfs: BTreeMap::new(),
        written: Vec::new(),
    };
    let result = (|| -> AppResult<()> {
        for (given, path) in &inputs {
            let mut a = artifact(&out, path)?;
            a.path = given.to_string_lossy().into_owned();
            manifest.inputs.push(a);
        }
        for stage in Stage::ALL.into_iter().filter(|s| *s <= until) {
            log::info!("stage {}", stage.name());
            run.written.clear();
            run.run_stage(stage)
                .map_err(|e| AppError::Stage { stage: stage.name().into(), source: Box::new(e) })?;
            let artifacts = run.written.iter().map(|p| artifact(&out, p)).collect::<AppResult<Vec<_>>>()?;
            manifest.stages.push(StageRecord { name: stage.name().into(), artifacts });
        }
        Ok(())
    })();
    io::write_json(&out.join(MANIFEST), &manifest)?;
    match result {
        Ok(()) => {
            fs::remove_file(&marker).map_err(|e| AppError::io(&marker, e))?;
            Ok(manifest)
        }
        Err(e) => {
            io::write_text(&marker, &format!("{e}\n"))?;
            Err(e)
        }
    }
}

/// Loads the panel and fits written by the `fit` stage.
pub struct ModelBundle {
    pub index: BundleIndex,
    pub panel: PricePanel,
    pub fits: BTreeMap<String, VarFit>,
}

impl ModelBundle {
    pub fn load(dir: &Path) -> AppResult<Self> {
        let index: BundleIndex = io::read_json(&dir.join(BUNDLE))?;
        let panel = io::read_panel(&dir.join(&index.panel_csv), &dir.join(&index.panel_json))?;
        let mut fits = BTreeMap::new();
        for p in &index.periods {
            let fit: VarFit = io::read_json(&dir.join(&p.fit))?;
            if fit.series != panel.series {
                return Err(AppError::schema(dir.join(&p.fit), "fit series do not match the panel"));
            }
            fits.insert(p.name.clone(), fit);
        }
        Ok(ModelBundle { index, panel, fits })
    }
}
