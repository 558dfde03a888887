//! Experiment registry.
//!
//! Each experiment is a trait object with a name, a parameter table with
//! defaults, and an `execute` step that fills tables from replicas run on
//! the worker pool. Replica `k` always uses `StreamKey::new(seed, k)`.

use std::path::Path;
use std::sync::Arc;

use bbmx_core::bbm::{simulate, summarize, PruneConfig};
use bbmx_core::cluster::{
    x_statistic, zeta_sample, ClusterMode, ClusterSampler, ConstantZ, GammaEstimate, ZBank, ZSource,
    ZetaGrid,
};
use bbmx_core::extremal::{
    exp_intensity_mass, stable1_sample, tip_contributions, CompensatedMass, CompensatedMassConfig,
    StableSamplerConfig,
};
use bbmx_core::stats::{empirical_laplace, ComparisonReport};
use bbmx_core::StreamKey;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{
    append_record, reports_jsonl, unix_now, write_file, Cell, Diagnostics, FileHeader, RunRecord, Table,
    TOOL_VERSION,
};
use crate::pool::WorkerPool;
use crate::suite::{parse_selection, Suite, SuiteScale};

/// Shared state handed to an experiment.
pub struct RunContext<'a> {
    pub seed: u64,
    pub replicas: usize,
    pub pool: &'a WorkerPool,
}

impl RunContext<'_> {
    pub fn replica_key(&self, k: usize) -> StreamKey {
        StreamKey::new(self.seed, k as u64)
    }
}

/// Tables and checks produced by one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub summary: Table,
    pub extra: Vec<Table>,
    pub diagnostics: Diagnostics,
    pub reports: Vec<ComparisonReport>,
}

impl ExperimentOutput {
    pub fn new(summary: Table) -> Self {
        Self {
            summary,
            extra: Vec::new(),
            diagnostics: Diagnostics::default(),
            reports: Vec::new(),
        }
    }
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;

    fn about(&self) -> &'static str;

    /// Every accepted parameter with its default value.
    fn defaults(&self) -> &'static [(&'static str, &'static str)];

    fn execute(&self, config: &ExperimentConfig, ctx: &RunContext) -> CliResult<ExperimentOutput>;
}

pub struct Registry {
    experiments: Vec<Box<dyn Experiment>>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::standard()
    }
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            experiments: Vec::new(),
        }
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(SimulateBbm));
        r.register(Box::new(SampleCluster));
        r.register(Box::new(SampleStable));
        r.register(Box::new(SampleZeta));
        r.register(Box::new(EstimateGamma));
        r.register(Box::new(CompensatedMassExperiment));
        r.register(Box::new(VerifySuite));
        r
    }

    pub fn register(&mut self, experiment: Box<dyn Experiment>) {
        self.experiments.retain(|e| e.name() != experiment.name());
        self.experiments.push(experiment);
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Experiment> {
        self.experiments.iter().map(|e| e.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.iter().map(|e| e.name()).collect()
    }

    pub fn get(&self, name: &str) -> CliResult<&dyn Experiment> {
        self.iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| CliError::UnknownExperiment {
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }

    /// Completes the configuration with the experiment's defaults.
    pub fn resolve(&self, mut config: ExperimentConfig) -> CliResult<ExperimentConfig> {
        let exp = self.get(&config.experiment)?;
        config.apply_defaults(exp.defaults())?;
        config.validate()?;
        Ok(config)
    }

    /// Executes a run and writes its data files and record under
    /// `config.out`:
    ///
    /// * `<experiment>.csv`: per-replica summary rows;
    /// * `<experiment>-<table>.csv`: further tables;
    /// * `<experiment>-report.jsonl`: verification reports, if any;
    /// * `runs.jsonl`: the run record, appended.
    pub fn run(&self, config: ExperimentConfig) -> CliResult<RunRecord> {
        let config = self.resolve(config)?;
        let exp = self.get(&config.experiment)?;
        let workers = config.worker_budget()?;
        let pool = WorkerPool::new(workers)?;
        let ctx = RunContext {
            seed: config.seed,
            replicas: config.replicas,
            pool: &pool,
        };
        let started = unix_now();
        let output = exp.execute(&config, &ctx)?;
        let header = FileHeader {
            tool_version: TOOL_VERSION.to_string(),
            experiment: config.experiment.clone(),
            seed: config.seed,
            config_hash: config.hash(),
        };
        let mut files = vec![write_file(
            &config.out,
            &format!("{}.csv", config.experiment),
            &output.summary.to_csv(&header),
        )?];
        for t in &output.extra {
            files.push(write_file(
                &config.out,
                &format!("{}-{}.csv", config.experiment, t.name),
                &t.to_csv(&header),
            )?);
        }
        if !output.reports.is_empty() {
            files.push(write_file(
                &config.out,
                &format!("{}-report.jsonl", config.experiment),
                &reports_jsonl(&header, &output.reports)?,
            )?);
        }
        let record = RunRecord {
            experiment: config.experiment.clone(),
            config_hash: header.config_hash.clone(),
            config: config.canonical(),
            tool_version: TOOL_VERSION.to_string(),
            started_unix: started,
            finished_unix: unix_now(),
            seed: config.seed,
            replicas: config.replicas,
            workers,
            summary: output.summary,
            extra: output.extra,
            diagnostics: output.diagnostics,
            reports: output.reports,
            files,
        };
        append_record(&config.out, &record)?;
        Ok(record)
    }
}

/// Runs a configuration through the standard registry.
pub fn run(config: ExperimentConfig) -> CliResult<RunRecord> {
    Registry::standard().run(config)
}

/// Cluster sampler from the `mode`, `c0`, `z_bank` and `s_cut` parameters
/// shared by the cluster experiments.
/// `z_bank=none` uses `Z ≡ 1`; otherwise it names a bank file.
pub fn cluster_sampler(config: &ExperimentConfig) -> CliResult<ClusterSampler> {
    let mode: ClusterMode = config.text("mode")?.parse()?;
    let z: Arc<dyn ZSource> = match config.text("z_bank")?.as_str() {
        "none" => Arc::new(ConstantZ(1.0)),
        path => Arc::new(ZBank::load(Path::new(path))?),
    };
    let mut sampler = ClusterSampler::new(mode, config.real("c0")?, z);
    sampler.s_cut = config.real("s_cut")?;
    Ok(sampler)
}

pub struct SimulateBbm;

impl Experiment for SimulateBbm {
    fn name(&self) -> &'static str {
        "simulate-bbm"
    }

    fn about(&self) -> &'static str {
        "Branching Brownian motion to horizon t: population, maximum, derivative martingale, level-set count"
    }

    fn defaults(&self) -> &'static [(&'static str, &'static str)] {
        &[
            ("t", "4"),
            ("prune", "true"),
            ("prune_window", "10"),
            ("c_diamond", "1"),
            ("level", "1"),
        ]
    }

    fn execute(&self, config: &ExperimentConfig, ctx: &RunContext) -> CliResult<ExperimentOutput> {
        let t = config.real("t")?;
        let prune = PruneConfig {
            enabled: config.flag("prune")?,
            ..PruneConfig::with_window(config.real("prune_window")?)
        };
        let c_diamond = config.real("c_diamond")?;
        let level = config.real("level")?;
        let rows = ctx.pool.map(ctx.replicas, |k| -> CliResult<_> {
            let system = simulate(t, prune, ctx.replica_key(k))?;
            Ok(summarize(&system, c_diamond, level)?)
        })?;
        let mut table = Table::new(
            "summary",
            &[
                "replica",
                "t",
                "population",
                "max_height",
                "centered_max",
                "z_t",
                "level",
                "level_count",
                "pruned",
                "prune_bias_bound",
            ],
        );
        let mut diag = Diagnostics::default();
        for (k, s) in rows.iter().enumerate() {
            diag.prune_bias_bound = diag.prune_bias_bound.max(s.prune_bias_bound);
            table.push(vec![
                k.into(),
                s.t.into(),
                s.population.into(),
                s.max_height.into(),
                s.centered_max.into(),
                s.z_t.into(),
                s.level.into(),
                s.level_count.map_or(Cell::Text(String::new()), Cell::from),
                s.pruned_count.into(),
                s.prune_bias_bound.into(),
            ]);
        }
        if rows.iter().any(|s| s.level_count.is_none()) {
            diag.notes
                .push(format!("level {level} exceeds the prune-safe range; level_count left empty"));
        }
        let mut out = ExperimentOutput::new(table);
        out.diagnostics = diag;
        Ok(out)
    }
}

pub struct SampleCluster;

impl Experiment for SampleCluster {
    fn name(&self) -> &'static str {
        "sample-cluster"
    }

    fn about(&self) -> &'static str {
        "Cluster masses C([-v, 0]) from the backbone representation"
    }

    fn defaults(&self) -> &'static [(&'static str, &'static str)] {
        &[
            ("v", "10"),
            ("horizon", "auto"),
            ("mode", "surrogate"),
            ("c0", "1"),
            ("z_bank", "none"),
            ("s_cut", "10"),
        ]
    }

    fn execute(&self, config: &ExperimentConfig, ctx: &RunContext) -> CliResult<ExperimentOutput> {
        let mut sampler = cluster_sampler(config)?;
        let v = config.real("v")?;
        // `auto`: the minimum horizon; `adaptive`: extended while late
        // returns of the backbone may matter; otherwise a fixed horizon.
        let horizon = if config.text("horizon").is_ok_and(|h| h == "adaptive") {
            sampler.adaptive = true;
            None
        } else {
            config.opt_real("horizon")?
        };
        // Samples are reduced to their summary row on the worker; full
        // backbones at large v run to hundreds of thousands of events.
        let rows = ctx.pool.map(ctx.replicas, |k| -> CliResult<(Vec<Cell>, f64, usize)> {
            let s = sampler.sample(v, horizon, ctx.replica_key(k))?;
            let d = &s.diagnostics;
            let row = vec![
                k.into(),
                v.into(),
                s.mass.into(),
                s.mass.ln().into(),
                x_statistic(&s)?.into(),
                s.timestamps.len().into(),
                d.exact_events.into(),
                d.surrogate_events.into(),
                d.horizon.into(),
                d.extensions.into(),
                d.truncation_bound.into(),
                d.late_return_prob.into(),
                d.regime_warnings.into(),
            ];
            Ok((row, d.truncation_bound, d.regime_warnings))
        })?;
        let mut table = Table::new(
            "summary",
            &[
                "replica",
                "v",
                "mass",
                "log_mass",
                "x",
                "events",
                "exact_events",
                "surrogate_events",
                "horizon",
                "extensions",
                "truncation_bound",
                "late_return_prob",
                "regime_warnings",
            ],
        );
        let mut diag = Diagnostics::default();
        for (row, bound, warnings) in rows {
            diag.truncation_bound = diag.truncation_bound.max(bound);
            diag.regime_warnings += warnings;
            table.push(row);
        }
        diag.notes.push(format!(
            "mode {}, ĉ₀ = {}, Z source: {}",
            sampler.mode,
            sampler.surrogate.c0,
            sampler.surrogate.z_source.describe()
        ));
        let mut out = ExperimentOutput::new(table);
        out.diagnostics = diag;
        Ok(out)
    }
}

pub struct SampleStable;

fn stable_config(config: &ExperimentConfig) -> CliResult<StableSamplerConfig> {
    let cfg = StableSamplerConfig {
        t: config.real("t")?,
        rho: config.real("rho")?,
        z_min: config.real("z_min")?,
        z_max: config.real("z_max")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl Experiment for SampleStable {
    fn name(&self) -> &'static str {
        "sample-stable"
    }

    fn about(&self) -> &'static str {
        "Totally asymmetric 1-stable samples by truncated jump sums, with empirical Laplace transforms"
    }

    fn defaults(&self) -> &'static [(&'static str, &'static str)] {
        &[
            ("t", "1"),
            ("rho", "1"),
            ("z_min", "1e-3"),
            ("z_max", "1e6"),
            ("lambdas", "0.5,1,2"),
        ]
    }

    fn execute(&self, config: &ExperimentConfig, ctx: &RunContext) -> CliResult<ExperimentOutput> {
        let cfg = stable_config(config)?;
        let lambdas = config.reals("lambdas")?;
        let values = ctx
            .pool
            .map(ctx.replicas, |k| stable1_sample(&cfg, ctx.replica_key(k)))?;
        let mut table = Table::new("summary", &["replica", "value"]);
        for (k, v) in values.iter().enumerate() {
            table.push(vec![k.into(), (*v).into()]);
        }
        let mut laplace = Table::new(
            "laplace",
            &["lambda", "empirical", "stderr", "target", "truncation_bound"],
        );
        let mut diag = Diagnostics::default();
        for &l in &lambdas {
            let (emp, se) = empirical_laplace(&values, l)?;
            let bound = cfg.truncation_bound(l)?;
            diag.truncation_bound = diag.truncation_bound.max(bound);
            laplace.push(vec![
                l.into(),
                emp.into(),
                se.into(),
                cfg.laplace_target(l)?.into(),
                bound.into(),
            ]);
        }
        let mut out = ExperimentOutput::new(table);
        out.extra.push(laplace);
        out.diagnostics = diag;
        Ok(out)
    }
}

pub struct SampleZeta;

fn zeta_grid(config: &ExperimentConfig) -> CliResult<ZetaGrid> {
    let grid = ZetaGrid {
        s_min: config.real("s_min")?,
        s_max: config.real("s_max")?,
        points: config.count("points")?,
        rounds: config.count("rounds")?,
    };
    grid.validate()?;
    Ok(grid)
}

impl Experiment for SampleZeta {
    fn name(&self) -> &'static str {
        "sample-zeta"
    }

    fn about(&self) -> &'static str {
        "Grid infimum of sqrt(2) Y_s + 1/(2s) over Bessel-3 paths, with refinement history"
    }

    fn defaults(&self) -> &'static [(&'static str, &'static str)] {
        &[("s_min", "1e-3"), ("s_max", "1e3"), ("points", "64"), ("rounds", "8")]
    }

    fn execute(&self, config: &ExperimentConfig, ctx: &RunContext) -> CliResult<ExperimentOutput> {
        let grid = zeta_grid(config)?;
        let samples = ctx
            .pool
            .map(ctx.replicas, |k| zeta_sample(grid, ctx.replica_key(k)))?;
        let mut table = Table::new(
            "summary",
            &["replica", "zeta", "argmin_s", "initial_grid_value", "previous_round_value"],
        );
        for (k, z) in samples.iter().enumerate() {
            let n = z.round_values.len();
            let prev = if n >= 2 { z.round_values[n - 2] } else { z.value };
            table.push(vec![
                k.into(),
                z.value.into(),
                z.argmin_s.into(),
                z.round_values[0].into(),
                prev.into(),
            ]);
        }
        Ok(ExperimentOutput::new(table))
    }
}

pub struct EstimateGamma;

impl Experiment for EstimateGamma {
    fn name(&self) -> &'static str {
        "estimate-gamma"
    }

    fn about(&self) -> &'static str {
        "Tail w P(X(w) > y) of the normalized cluster mass and the plug-in first moment"
    }

    fn defaults(&self) -> &'static [(&'static str, &'static str)] {
        &[
            ("w", "30"),
            ("y_grid", "0.5,1,2,4"),
            ("mode", "surrogate"),
            ("c0", "1"),
            ("z_bank", "none"),
            ("s_cut", "10"),
        ]
    }

    fn execute(&self, config: &ExperimentConfig, ctx: &RunContext) -> CliResult<ExperimentOutput> {
        let w = config.real("w")?;
        let y_grid = config.reals("y_grid")?;
        let sampler = cluster_sampler(config)?;
        let xs = ctx.pool.map(ctx.replicas, |k| -> CliResult<f64> {
            Ok(x_statistic(&sampler.sample(w, None, ctx.replica_key(k))?)?)
        })?;
        let est = GammaEstimate::from_x(w, &xs, &y_grid)?;
        let mut table = Table::new("summary", &["replica", "w", "x"]);
        for (k, x) in xs.iter().enumerate() {
            table.push(vec![k.into(), w.into(), (*x).into()]);
        }
        let mut tail = Table::new("tail", &["w", "y", "tail", "stderr"]);
        for ((y, t), se) in est.y_grid.iter().zip(&est.tail).zip(&est.stderr) {
            tail.push(vec![w.into(), (*y).into(), (*t).into(), (*se).into()]);
        }
        let mut moment = Table::new("c_star", &["w", "c_star", "stderr", "n"]);
        moment.push(vec![w.into(), est.c_star.into(), est.c_star_stderr.into(), est.n_samples.into()]);
        let mut out = ExperimentOutput::new(table);
        out.extra.push(tail);
        out.extra.push(moment);
        Ok(out)
    }
}

pub struct CompensatedMassExperiment;

fn compensated_config(config: &ExperimentConfig) -> CliResult<CompensatedMassConfig> {
    let cfg = CompensatedMassConfig {
        u: config.real("u")?,
        x_minus: config.real("x_minus")?,
        x_plus: config.real("x_plus")?,
        rho: config.real("rho")?,
        n_comp: config.count("n_comp")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl Experiment for CompensatedMassExperiment {
    fn name(&self) -> &'static str {
        "compensated-mass"
    }

    fn about(&self) -> &'static str {
        "Compensated extremal cluster mass at level u, one statistic per replica"
    }

    fn defaults(&self) -> &'static [(&'static str, &'static str)] {
        &[
            ("u", "12"),
            ("x_minus", "-3"),
            ("x_plus", "3"),
            ("rho", "1"),
            ("n_comp", "100000"),
            ("mode", "surrogate"),
            ("c0", "1"),
            ("z_bank", "none"),
            ("s_cut", "10"),
        ]
    }

    fn execute(&self, config: &ExperimentConfig, ctx: &RunContext) -> CliResult<ExperimentOutput> {
        let sampler = cluster_sampler(config)?;
        let cfg = compensated_config(config)?;
        // The compensator is shared by all replicas; it uses a stream outside
        // the replica range.
        let comp_key = StreamKey::new(ctx.seed, u64::MAX);
        let comp = compensator(&cfg, &sampler, comp_key, ctx.pool)?;
        let rows = ctx.pool.map(ctx.replicas, |k| -> CliResult<(f64, usize)> {
            let tips = tip_contributions(&cfg, &sampler, ctx.replica_key(k))?;
            let raw: f64 = tips.iter().map(|t| t.1).sum();
            Ok((raw - comp.compensator, tips.len()))
        })?;
        let mut table = Table::new("summary", &["replica", "statistic", "tips"]);
        for (k, (s, n)) in rows.iter().enumerate() {
            table.push(vec![k.into(), (*s).into(), (*n).into()]);
        }
        let mut c = Table::new(
            "compensator",
            &["u", "rho", "n_comp", "compensator", "stderr", "expected_tips"],
        );
        c.push(vec![
            cfg.u.into(),
            cfg.rho.into(),
            cfg.n_comp.into(),
            comp.compensator.into(),
            comp.compensator_stderr.into(),
            exp_intensity_mass(cfg.u, &cfg.window())?.into(),
        ]);
        let mut out = ExperimentOutput::new(table);
        out.extra.push(c);
        out.diagnostics.notes.extend(comp.warnings.iter().cloned());
        Ok(out)
    }
}

/// Compensator estimate, equal to `CompensatedMass::new(cfg, sampler, key)`
/// but with the cluster draws spread over the pool.
pub fn compensator(
    cfg: &CompensatedMassConfig,
    sampler: &ClusterSampler,
    key: StreamKey,
    pool: &WorkerPool,
) -> CliResult<CompensatedMass> {
    let plan = CompensatedMass::plan(cfg, key)?;
    let masses = pool.map(plan.len(), |i| sampler.sample(plan[i].0, None, plan[i].1).map(|s| s.mass))?;
    Ok(CompensatedMass::from_masses(*cfg, &masses)?)
}

pub struct VerifySuite;

impl Experiment for VerifySuite {
    fn name(&self) -> &'static str {
        "verify-suite"
    }

    fn about(&self) -> &'static str {
        "Acceptance checks: closed-form oracles and statistical shape targets"
    }

    fn defaults(&self) -> &'static [(&'static str, &'static str)] {
        &[("criteria", "all"), ("quick", "false")]
    }

    fn execute(&self, config: &ExperimentConfig, ctx: &RunContext) -> CliResult<ExperimentOutput> {
        let ids = parse_selection(&config.text("criteria")?)?;
        let scale = if config.flag("quick")? {
            SuiteScale::Quick
        } else {
            SuiteScale::Full
        };
        let suite = Suite::new(ctx.seed, ctx.pool, scale);
        let mut reports = Vec::new();
        let mut verdicts = Table::new("criteria", &["criterion", "title", "pass", "checks"]);
        let mut diag = Diagnostics::default();
        for id in ids {
            let result = suite.criterion(id)?;
            verdicts.push(vec![
                format!("C{id}").into(),
                result.title.into(),
                result.pass().into(),
                result.reports.len().into(),
            ]);
            diag.notes.extend(result.notes.iter().cloned());
            reports.extend(result.reports);
        }
        let mut table = Table::new(
            "summary",
            &[
                "criterion",
                "statistic",
                "kind",
                "value",
                "target",
                "threshold",
                "stderr",
                "n",
                "pass",
            ],
        );
        for r in &reports {
            table.push(vec![
                r.criterion.clone().into(),
                r.statistic.clone().into(),
                format!("{:?}", r.kind).into(),
                r.value.into(),
                r.target.map_or(Cell::Text(String::new()), Cell::from),
                r.threshold.into(),
                r.stderr.map_or(Cell::Text(String::new()), Cell::from),
                r.n.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ").into(),
                r.pass.into(),
            ]);
        }
        let mut out = ExperimentOutput::new(table);
        out.extra.push(verdicts);
        out.reports = reports;
        out.diagnostics = diag;
        Ok(out)
    }
}
