//! Command-line surface: one subcommand per experiment, each writing a
//! JSON result record and flat CSV tables into the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use crate::error::{Error, Result};
use crate::experiments::drm::{run_drm, DrmList};
use crate::experiments::forgetting::run_forgetting;
use crate::experiments::spacing::run_spacing;
use crate::experiments::tot::run_tot;
use crate::geometry::cap::{cap_estimate, cap_verification_cells, cap_fraction_analytic};
use crate::geometry::dims::{dim_report, spectral_effective_rank, two_nn, LocalDimEstimator};
use crate::geometry::spp::spp_test;
use crate::hazard::{
    interarrival_alpha, population_retention, population_retention_closed_form, retention_analytic,
    retention_empirical, simulate_arrivals,
};
use crate::io::config::ExperimentConfig;
use crate::io::drm_lists::load_drm_lists;
use crate::io::embeddings::load_embeddings;
use crate::io::records::{num, ResultRecord, Table};
use crate::rng::{seeded, substream};
use crate::solutions::{pareto_sweep, run_solutions, SolutionsReport};
use crate::stats::fit::{fit_power, fit_stretched};
use crate::synth::{sample_drm_clusters, sample_forgetting_pool, ForgettingPool};
use crate::vector::{dot, Embeddings};

const TAG_POOL: u64 = 101;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "kernmem", version, about = "Kernel-threshold memory experiments")]
pub struct Cli {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for result records and tables.
    #[arg(long, global = true, default_value = "results")]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Related vs unrelated similarity test.
    Spp,
    /// Spherical cap mass, analytic vs Monte Carlo.
    Capmass,
    /// Effective dimensionality of the embedding pool.
    Dims,
    /// Retention under interfering arrivals and its population mixture.
    Hazard,
    /// Interference forgetting curves per backend.
    Forgetting,
    /// False recall threshold sweep and hull diagnostics.
    Drm,
    /// Repetition spacing.
    Spacing,
    /// Tip-of-tongue rate.
    Tot,
    /// Forgetting and usefulness of each mitigation.
    Solutions,
    /// Dominance labels over the solution sweep.
    Pareto,
    /// Every experiment in turn.
    All,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spp => "spp",
            Command::Capmass => "capmass",
            Command::Dims => "dims",
            Command::Hazard => "hazard",
            Command::Forgetting => "forgetting",
            Command::Drm => "drm",
            Command::Spacing => "spacing",
            Command::Tot => "tot",
            Command::Solutions => "solutions",
            Command::Pareto => "pareto",
            Command::All => "all",
        }
    }
}

impl Error {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => EXIT_CONFIG,
            Error::BadMagic { .. }
            | Error::UnsupportedEncoding { .. }
            | Error::TruncatedPayload { .. }
            | Error::NonFiniteValue { .. }
            | Error::MissingLabel { .. }
            | Error::Data(_)
            | Error::PoolTooSmall { .. }
            | Error::Io(_) => EXIT_DATA,
            _ => EXIT_FAILURE,
        }
    }
}

/// Resolved configuration plus where results go.
pub struct Runner {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub out: PathBuf,
}

type Output = (ResultRecord, Vec<Table>);

impl Runner {
    pub fn new(cfg: ExperimentConfig, out: &Path) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.hash()?;
        Ok(Self { cfg, hash, out: out.to_path_buf() })
    }

    fn record(&self, name: &str) -> ResultRecord {
        ResultRecord::new(name, &self.hash)
    }

    /// Target/competitor pools for `seeds`: the embedding dump when one is
    /// configured, else synthetic pools.
    pub fn pools(&self, seeds: &[u64]) -> Result<Vec<ForgettingPool>> {
        let data = &self.cfg.data;
        if let Some(path) = &data.embeddings {
            let loaded = load_embeddings(path, data.renormalize())?;
            return Ok(vec![pool_from_dump(loaded.embeddings, loaded.labels, data.synth.n_targets)?]);
        }
        let pc = data.synth.pool();
        let seeds = if data.synth.pool_per_seed { seeds } else { &seeds[..1.min(seeds.len())] };
        seeds.iter().map(|&s| sample_forgetting_pool(&pc, &mut substream(s, &[TAG_POOL]))).collect()
    }

    pub fn run(&self, cmd: Command) -> Result<()> {
        if cmd == Command::All {
            for c in [
                Command::Spp,
                Command::Capmass,
                Command::Dims,
                Command::Hazard,
                Command::Forgetting,
                Command::Drm,
                Command::Spacing,
                Command::Tot,
                Command::Solutions,
                Command::Pareto,
            ] {
                self.run(c)?;
            }
            return Ok(());
        }
        info!("running {}", cmd.name());
        let start = Instant::now();
        let (mut rec, tables) = match cmd {
            Command::Spp => self.spp()?,
            Command::Capmass => self.capmass()?,
            Command::Dims => self.dims()?,
            Command::Hazard => self.hazard()?,
            Command::Forgetting => self.forgetting()?,
            Command::Drm => self.drm()?,
            Command::Spacing => self.spacing()?,
            Command::Tot => self.tot()?,
            Command::Solutions => self.solutions()?,
            Command::Pareto => self.pareto()?,
            Command::All => unreachable!(),
        };
        rec.wall_time_s = start.elapsed().as_secs_f64();
        for w in &rec.warnings {
            warn!("{}: {w}", cmd.name());
        }
        rec.save(&self.out)?;
        for t in &tables {
            t.save(&self.out)?;
        }
        Ok(())
    }

    fn first_seed(&self) -> u64 {
        self.cfg.forgetting.seeds[0]
    }

    fn spp(&self) -> Result<Output> {
        let pool = self.pools(&[self.first_seed()])?.swap_remove(0);
        let nt = pool.targets.n_rows();
        let n = self.cfg.spp.n_pairs.min(pool.competitors.n_rows());
        if nt < 2 {
            return Err(Error::PoolTooSmall { available: nt, needed: 2 });
        }
        let mut table = Table::new("spp", &["pair", "related_cosine", "unrelated_cosine"]);
        let (mut related, mut unrelated) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for c in 0..n {
            let a = pool.anchors[c];
            let r = dot(pool.targets.row(a), pool.competitors.row(c));
            let u = dot(pool.targets.row((a + 1) % nt), pool.competitors.row(c));
            table.push([c.to_string(), num(r), num(u)]);
            related.push(r);
            unrelated.push(u);
        }
        let report = spp_test(&related, &unrelated, self.cfg.spp.paired)?;
        let mut rec = self.record("spp");
        rec.aggregates = serde_json::to_value(report)?;
        Ok((rec, vec![table]))
    }

    fn capmass(&self) -> Result<Output> {
        let c = &self.cfg.capmass;
        let mut table =
            Table::new("capmass", &["d", "theta_deg", "analytic_fraction", "mc_fraction", "mc_stderr", "ratio"]);
        let mut cells = Vec::new();
        for (k, (d, theta)) in cap_verification_cells(c.n_samples).into_iter().enumerate() {
            let e = cap_estimate(d, theta, c.n_samples, &mut substream(c.seed, &[k as u64]))?;
            table.push([
                d.to_string(),
                num(theta.to_degrees()),
                num(e.analytic_fraction),
                num(e.mc_fraction),
                num(e.mc_stderr),
                num(e.ratio()),
            ]);
            cells.push(e);
        }
        let worst = cells.iter().map(|e| (e.ratio() - 1.0).abs()).fold(0.0, f64::max);
        let mut rec = self.record("capmass");
        rec.per_seed = serde_json::to_value(&cells)?;
        rec.aggregates = json!({
            "n_cells": cells.len(),
            "max_abs_ratio_error": worst,
            "analytic_d8_theta20": cap_fraction_analytic(8, 20f64.to_radians())?,
        });
        Ok((rec, vec![table]))
    }

    fn dims(&self) -> Result<Output> {
        let pool = self.pools(&[self.first_seed()])?.swap_remove(0);
        let all = pool.targets.stack(&pool.competitors)?;
        let n = all.n_rows();
        let m = self.cfg.dims.sample.min(n);
        let sample = all.select(&(0..m).map(|i| i * n / m).collect::<Vec<_>>());
        let report = dim_report(&sample, LocalDimEstimator::LevinaBickel { k: self.cfg.dims.lb_k })?;
        let twonn = two_nn(&sample)?;
        let rank = spectral_effective_rank(&report.eigenvalues, self.cfg.dims.rank_gamma);
        let mut table = Table::new("dims", &["estimator", "value_dims"]);
        for (name, v) in [
            ("participation_ratio", report.participation_ratio),
            ("levina_bickel", report.levina_bickel),
            ("two_nn", twonn),
            ("d95", report.d95 as f64),
            ("d99", report.d99 as f64),
            ("spectral_rank", rank as f64),
        ] {
            table.push([name.to_string(), num(v)]);
        }
        let mut spectrum = Table::new("dims_spectrum", &["component", "eigenvalue"]);
        for (i, &v) in report.eigenvalues.iter().enumerate() {
            spectrum.push([(i + 1).to_string(), num(v)]);
        }
        let mut rec = self.record("dims");
        rec.aggregates = json!({
            "n_rows": m,
            "d_nom": report.d_nom,
            "participation_ratio": report.participation_ratio,
            "levina_bickel": report.levina_bickel,
            "two_nn": twonn,
            "d95": report.d95,
            "d99": report.d99,
            "spectral_rank": rank,
        });
        Ok((rec, vec![table, spectrum]))
    }

    fn hazard(&self) -> Result<Output> {
        let h = &self.cfg.hazard;
        let arr = &h.arrivals;
        let times: Vec<f64> = (1..=h.n_times).map(|i| arr.horizon * i as f64 / h.n_times as f64).collect();
        let emp = retention_empirical(h.mu_cap, arr, h.n_items, &times, &mut seeded(h.seed))?;
        let mut items = Table::new("hazard_items", &["t_days", "retention_empirical", "retention_analytic"]);
        for (&t, &r) in times.iter().zip(&emp.retention) {
            items.push([num(t), num(r), num(retention_analytic(t, h.mu_cap, arr)?)]);
        }
        let (ft, fr): (Vec<f64>, Vec<f64>) =
            times.iter().zip(&emp.retention).filter(|(_, &r)| r > 0.0 && r < 1.0).map(|(&t, &r)| (t, r)).unzip();
        let stretched = fit_stretched(&ft, &fr)?;
        let power = fit_power(&ft, &fr)?;

        let (lo, hi) = (h.population_t_min.ln(), h.population_t_max.ln());
        let np = h.population_points.max(2);
        let grid: Vec<f64> = (0..np).map(|i| (lo + (hi - lo) * i as f64 / (np - 1) as f64).exp()).collect();
        let pop = population_retention(&h.mixture, &grid)?;
        let mut population = Table::new("hazard_population", &["t_days", "retention_quadrature", "retention_closed_form"]);
        for (&t, &r) in grid.iter().zip(&pop.retention) {
            population.push([num(t), num(r), num(population_retention_closed_form(&h.mixture, t))]);
        }
        let tail_lo = (h.population_t_max / 100.0).max(h.population_t_min);
        let slope = pop.loglog_slope(tail_lo, h.population_t_max)?;

        let streams = (0..h.n_streams as u64)
            .map(|i| simulate_arrivals(arr, &mut substream(h.seed, &[7, i])))
            .collect::<Result<Vec<_>>>()?;
        let mut rec = self.record("hazard");
        rec.aggregates = json!({
            "stretched_exponent": stretched.param("exponent"),
            "expected_exponent": 1.0 - arr.alpha,
            "stretched_r_squared": stretched.r_squared_linear,
            "power_r_squared": power.r_squared_linear,
            "population_slope": slope,
            "population_slope_window": [tail_lo, h.population_t_max],
            "expected_population_slope": -h.mixture.population_exponent(),
        });
        match interarrival_alpha(&streams) {
            Ok(fit) => rec.aggregates["interarrival"] = serde_json::to_value(fit)?,
            Err(e) => rec.warnings.push(format!("inter-arrival fit skipped: {e}")),
        }
        rec.fits = json!({ "stretched": stretched, "power": power });
        Ok((rec, vec![items, population]))
    }

    fn forgetting(&self) -> Result<Output> {
        let cfg = &self.cfg.forgetting;
        let pools = self.pools(&cfg.seeds)?;
        let mut curves = Table::new("forgetting_curves", &["backend", "n_near", "age_days", "accuracy"]);
        let mut fits = Table::new(
            "forgetting_fits",
            &["backend", "n_near", "b_mean", "b_ci_lo", "b_ci_hi", "curve_b", "curve_r_squared"],
        );
        let mut per_seed = Table::new("forgetting_seeds", &["backend", "n_near", "seed", "b", "overall_accuracy"]);
        let mut reports = Vec::new();
        for &backend in &self.cfg.backends {
            let rep = run_forgetting(cfg, &pools, backend)?;
            for lv in &rep.levels {
                for (&t, &a) in lv.curve.times.iter().zip(&lv.curve.retention) {
                    curves.push([backend.name().into(), lv.n_near.to_string(), num(t), num(a)]);
                }
                fits.push([
                    backend.name().into(),
                    lv.n_near.to_string(),
                    num(lv.b_mean),
                    num(lv.b_ci.lo),
                    num(lv.b_ci.hi),
                    num(lv.fit.param("b").unwrap_or(f64::NAN)),
                    num(lv.fit.r_squared),
                ]);
                for s in &lv.seeds {
                    per_seed.push([
                        backend.name().into(),
                        lv.n_near.to_string(),
                        s.seed.to_string(),
                        num(s.b),
                        num(s.overall_accuracy),
                    ]);
                }
            }
            reports.push(rep);
        }
        let mut rec = self.record("forgetting");
        rec.aggregates = json!(reports
            .iter()
            .map(|r| json!({
                "backend": r.backend,
                "b_nondecreasing": r.b_nondecreasing_up_to_ci(),
                "levels": r.levels.iter().map(|l| json!({
                    "n_near": l.n_near, "b_mean": l.b_mean, "b_ci": l.b_ci, "curve": l.curve,
                })).collect::<Vec<_>>(),
            }))
            .collect::<Vec<_>>());
        rec.per_seed = json!(reports
            .iter()
            .map(|r| json!({ "backend": r.backend, "levels": r.levels.iter().map(|l| &l.seeds).collect::<Vec<_>>() }))
            .collect::<Vec<_>>());
        rec.fits = json!(reports
            .iter()
            .map(|r| json!({ "backend": r.backend, "levels": r.levels.iter().map(|l| &l.fit).collect::<Vec<_>>() }))
            .collect::<Vec<_>>());
        Ok((rec, vec![curves, fits, per_seed]))
    }

    fn drm_lists(&self) -> Result<(Vec<DrmList>, Vec<String>)> {
        let data = &self.cfg.data;
        match (&data.drm_embeddings, &data.drm_lists) {
            (Some(emb_path), Some(list_path)) => {
                let loaded = load_embeddings(emb_path, data.renormalize())?;
                let labels = loaded
                    .labels
                    .ok_or_else(|| Error::Data(format!("{} has no label sidecar", emb_path.display())))?;
                load_drm_lists(list_path, &loaded.embeddings, &labels)
            }
            (None, None) => Ok((
                sample_drm_clusters(&data.synth.drm_manifold(), data.synth.drm_delta, &mut seeded(self.cfg.drm.seed))?,
                Vec::new(),
            )),
            _ => Err(Error::Config("drm_embeddings and drm_lists must be given together".into())),
        }
    }

    fn drm(&self) -> Result<Output> {
        let (lists, load_warnings) = self.drm_lists()?;
        let report = run_drm(&lists, &self.cfg.drm.theta_grid)?;
        let mut sweep = Table::new("drm_sweep", &["theta", "hit_rate", "lure_fa", "unrelated_fa"]);
        for r in &report.sweep {
            sweep.push([num(r.theta), num(r.hit_rate), num(r.lure_fa), num(r.unrelated_fa)]);
        }
        let mut per_list = Table::new(
            "drm_lists",
            &["list_id", "delta_star", "margin", "tau", "lure_score", "bound", "bound_holds", "premise_holds"],
        );
        for l in &report.lists {
            let c = &l.convexity;
            per_list.push([
                l.scores.list_id.clone(),
                num(c.delta_star),
                num(c.margin),
                num(c.tau),
                num(c.lure_score),
                num(c.lure_bound),
                l.check.bound_holds.to_string(),
                l.check.premise_holds.to_string(),
            ]);
        }
        let mut rec = self.record("drm");
        rec.warnings = load_warnings.into_iter().chain(report.warnings.iter().cloned()).collect();
        rec.aggregates = json!({
            "n_lists": lists.len(),
            "calibrated_theta": report.calibrated_theta,
            "sweep": report.sweep,
            "premise_holds": report.lists.iter().filter(|l| l.check.premise_holds).count(),
            "bound_holds": report.lists.iter().filter(|l| l.check.bound_holds).count(),
        });
        rec.per_seed = serde_json::to_value(&report.lists)?;
        Ok((rec, vec![sweep, per_list]))
    }

    fn spacing(&self) -> Result<Output> {
        let cfg = &self.cfg.spacing;
        let report = run_spacing(cfg, &self.pools(&cfg.seeds)?)?;
        let mut table = Table::new("spacing", &["condition", "window_days", "seed", "retention"]);
        for (c, w) in report.conditions.iter().zip(&cfg.windows) {
            for (s, r) in cfg.seeds.iter().zip(&c.per_seed) {
                table.push([c.condition.clone(), num(w.days), s.to_string(), num(*r)]);
            }
        }
        let mut rec = self.record("spacing");
        rec.warnings = report.warnings.clone();
        rec.per_seed = serde_json::to_value(&report.conditions)?;
        rec.aggregates = json!({
            "retention": report.conditions.iter().map(|c| json!({"condition": c.condition, "mean": c.retention})).collect::<Vec<_>>(),
            "cohens_d": report.cohens_d,
            "wilcoxon_p": report.wilcoxon_p,
        });
        Ok((rec, vec![table]))
    }

    fn tot(&self) -> Result<Output> {
        let cfg = &self.cfg.tot;
        let result = run_tot(cfg, &self.pools(&cfg.seeds)?)?;
        let mut table = Table::new("tot", &["seed", "item", "rank", "top1_similarity", "tot"]);
        for r in &result.records {
            table.push([r.seed.to_string(), r.item.to_string(), r.rank.to_string(), num(r.top1_similarity), r.tot.to_string()]);
        }
        let mut rec = self.record("tot");
        rec.per_seed = serde_json::to_value(&result.records)?;
        rec.aggregates = json!({ "tot_rate": result.tot_rate, "recall_rate": result.recall_rate });
        Ok((rec, vec![table]))
    }

    fn solutions_report(&self) -> Result<SolutionsReport> {
        let f = &self.cfg.forgetting;
        run_solutions(f, &self.cfg.solutions, &self.pools(&f.seeds)?)
    }

    fn solutions(&self) -> Result<Output> {
        let report = self.solutions_report()?;
        let mut rec = self.record("solutions");
        rec.warnings = report.warnings.clone();
        rec.aggregates = serde_json::to_value(&report)?;
        Ok((rec, vec![points_table("solutions", &report)]))
    }

    /// Reuses `solutions.json` from the output directory when it was made
    /// under the same configuration.
    fn pareto(&self) -> Result<Output> {
        let path = self.out.join("solutions.json");
        let cached = match ResultRecord::load(&path) {
            Ok(r) if r.config_hash == self.hash => Some(serde_json::from_value::<SolutionsReport>(r.aggregates)?),
            _ => None,
        };
        let mut report = match cached {
            Some(r) => r,
            None => self.solutions_report()?,
        };
        report.points = pareto_sweep(report.points);
        let frontier: Vec<_> = report.points.iter().filter(|p| !p.dominated).map(|p| (&p.solution, &p.config)).collect();
        let mut rec = self.record("pareto");
        rec.aggregates = json!({ "points": report.points, "frontier": frontier });
        Ok((rec, vec![points_table("pareto", &report)]))
    }
}

fn points_table(name: &str, report: &SolutionsReport) -> Table {
    let mut t = Table::new(
        name,
        &[
            "solution",
            "config",
            "forgetting_b",
            "b_ci_lo",
            "b_ci_hi",
            "usefulness",
            "usefulness_ci_lo",
            "usefulness_ci_hi",
            "usefulness_metric",
            "d_eff_after_dims",
            "n_competitors",
            "dominated",
        ],
    );
    for p in &report.points {
        t.push([
            p.solution.clone(),
            p.config.clone(),
            num(p.forgetting_b),
            num(p.b_ci.0),
            num(p.b_ci.1),
            num(p.usefulness),
            num(p.usefulness_ci.0),
            num(p.usefulness_ci.1),
            p.usefulness_metric.clone(),
            num(p.d_eff_after),
            p.n_competitors.to_string(),
            p.dominated.to_string(),
        ]);
    }
    t
}

/// Split a dump into targets (first `n_targets` rows) and competitors. Each
/// competitor is anchored to its most similar target; documents are the
/// labels when present.
pub fn pool_from_dump(emb: Embeddings, labels: Option<Vec<String>>, n_targets: usize) -> Result<ForgettingPool> {
    let n = emb.n_rows();
    if n < n_targets || n_targets == 0 {
        return Err(Error::PoolTooSmall { available: n, needed: n_targets.max(1) });
    }
    let targets = emb.select(&(0..n_targets).collect::<Vec<_>>());
    let competitors = emb.select(&(n_targets..n).collect::<Vec<_>>());
    let anchors = competitors
        .rows()
        .map(|c| {
            (0..n_targets)
                .max_by(|&a, &b| dot(targets.row(a), c).total_cmp(&dot(targets.row(b), c)).then(b.cmp(&a)))
                .expect("n_targets > 0")
        })
        .collect();
    let docs: Vec<String> = labels.unwrap_or_else(|| (0..n).map(|i| format!("item{i}")).collect());
    Ok(ForgettingPool {
        targets,
        competitors,
        anchors,
        target_docs: docs[..n_targets].to_vec(),
        competitor_docs: docs[n_targets..].to_vec(),
    })
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let runner = Runner::new(cfg.resolved_from_env(), &cli.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| runner.run(cli.command))
}

/// Parse `args` (program name first), run, and return the exit status.
/// Errors go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(run(["kernmem", "bogus"]), EXIT_CONFIG);
        assert_eq!(run(["kernmem"]), EXIT_CONFIG);
    }

    #[test]
    fn bad_config_exits_2_and_bad_data_exits_3() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "mystery = 1\n").unwrap();
        let out = dir.path().join("out");
        assert_eq!(run(["kernmem", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "dims"]), EXIT_CONFIG);
        std::fs::write(dir.path().join("e.bin"), b"NOPE").unwrap();
        std::fs::write(&cfg, "[data]\nembeddings = \"e.bin\"\n").unwrap();
        assert_eq!(run(["kernmem", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "dims"]), EXIT_DATA);
    }

    #[test]
    fn capmass_writes_seven_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "[capmass]\nn_samples = 1000000\n").unwrap();
        let out = dir.path().join("out");
        assert_eq!(run(["kernmem", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "capmass"]), EXIT_OK);
        let text = std::fs::read_to_string(out.join("capmass.csv")).unwrap();
        assert_eq!(text.lines().count(), 8);
        assert!(out.join("capmass.json").exists());
    }

    #[test]
    fn dump_pool_anchors_to_nearest_target() {
        let e = Embeddings::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.1, 0.99], vec![0.99, 0.1]]).unwrap();
        let p = pool_from_dump(e, None, 2).unwrap();
        assert_eq!(p.anchors, vec![1, 0]);
        assert_eq!(p.competitor_docs, vec!["item2", "item3"]);
    }
}
