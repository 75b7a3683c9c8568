use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Composition, ExperimentConfig};
use crate::bounds::{self, BoundReport};
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::mdp::{self, families::mix_seed, CoverageMode, OccupancyMeasure, TabularMdp};
use crate::relabel::{self, EffectiveDataset, ReweightContext, StrategyContext, StrategyKind, StrategySpec};
use crate::solver::{self, ConservativeConfig, SolveResult};

/// One (composition, seed, strategy) arm. Numeric fields are empty when the
/// arm failed before producing them; `error` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub composition: String,
    pub labeled_quality: String,
    pub labeled_size: usize,
    pub unlabeled_quality: String,
    pub unlabeled_size: usize,
    pub seed: u64,
    pub strategy: String,
    pub alpha: f64,
    pub j_true: Option<f64>,
    pub j_empirical: Option<f64>,
    pub j_optimal: Option<f64>,
    pub term_a_reward_bias: Option<f64>,
    pub term_b_sampling_error: Option<f64>,
    pub term_c_policy_improvement: Option<f64>,
    pub zeta_err: Option<f64>,
    pub j_true_behavior: Option<f64>,
    pub guarantee_holds: Option<bool>,
    pub delta: f64,
    pub c_r: Option<f64>,
    pub c_p: Option<f64>,
    pub coverage_min: Option<usize>,
    pub coverage_mean: Option<f64>,
    pub uncovered_pairs: Option<usize>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

impl RunRecord {
    fn skeleton(hash: &str, comp: &Composition, seed: u64, spec: &StrategySpec, cfg: &ExperimentConfig) -> Self {
        Self {
            config_hash: hash.to_string(),
            composition: comp.name.clone(),
            labeled_quality: comp.labeled.quality.name().to_string(),
            labeled_size: comp.labeled.size,
            unlabeled_quality: comp.unlabeled.quality.name().to_string(),
            unlabeled_size: comp.unlabeled.size,
            seed,
            strategy: spec.kind.name().to_string(),
            alpha: cfg.solver.alpha,
            j_true: None,
            j_empirical: None,
            j_optimal: None,
            term_a_reward_bias: None,
            term_b_sampling_error: None,
            term_c_policy_improvement: None,
            zeta_err: None,
            j_true_behavior: None,
            guarantee_holds: None,
            delta: cfg.delta,
            c_r: None,
            c_p: None,
            coverage_min: None,
            coverage_mean: None,
            uncovered_pairs: None,
            iterations: None,
            converged: None,
            error: None,
        }
    }

    /// Field value by column name, as JSON.
    pub fn field(&self, key: &str) -> Result<serde_json::Value> {
        match serde_json::to_value(self)? {
            serde_json::Value::Object(mut map) => {
                map.remove(key).ok_or_else(|| Error::UnknownKey(key.to_string()))
            }
            _ => unreachable!("records serialize to objects"),
        }
    }
}

/// Everything the strategies of one (composition, seed) share.
pub struct SeedContext {
    pub mdp: TabularMdp,
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub j_optimal: f64,
    /// Labeled-only conservative solution (feeds the reweighting).
    pub labeled_solution: SolveResult,
    /// Conservative Q of the unfiltered zero-reward and oracle-reward shares;
    /// CDS filters against the solution trained on the data it judges.
    pub uds_q: Vec<f64>,
    pub shared_q: Vec<f64>,
    pub reweight_d_pi: Option<OccupancyMeasure>,
    pub c1: f64,
    pub c2: f64,
}

impl SeedContext {
    pub fn build(
        mdp_spec: &crate::mdp::families::MdpSpec,
        comp: &Composition,
        solver_cfg: &ConservativeConfig,
        delta: f64,
        seed: u64,
    ) -> Result<Self> {
        let mdp = mdp_spec.build(seed);
        let pi_l = data::behavior_policy(&mdp, &comp.labeled.quality)?;
        let pi_u = data::behavior_policy(&mdp, &comp.unlabeled.quality)?;
        let labeled = data::sample_labeled_as(
            &mdp,
            &pi_l,
            comp.labeled.size,
            mix_seed(seed, 1),
            &comp.labeled.options(true),
            format!("{}/{}", comp.labeled.quality.name(), comp.labeled.size),
        )?;
        let unlabeled = data::sample_labeled_as(
            &mdp,
            &pi_u,
            comp.unlabeled.size,
            mix_seed(seed, 2),
            &comp.unlabeled.options(false),
            format!("{}/{}", comp.unlabeled.quality.name(), comp.unlabeled.size),
        )?;
        let (_, q_star) = mdp::optimal_policy(&mdp)?;
        let j_optimal = {
            let v: Vec<f64> = q_star
                .chunks(mdp.num_actions())
                .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            mdp::dot(mdp.initial_dist(), &v)
        };
        let gamma = mdp.discount();
        let ns = relabel::apply_no_sharing(&labeled)?;
        let labeled_solution = solver::solve_conservative(&ns, solver_cfg, gamma, mdp.initial_dist())?;
        let uds = relabel::apply_uds(&labeled, &unlabeled)?;
        let emp = uds.empirical(gamma, mdp.initial_dist(), CoverageMode::Lenient)?;
        let uds_q = solver::solve_conservative(&uds, solver_cfg, gamma, mdp.initial_dist())?.conservative_q;
        let all = relabel::apply_sharing_all(&labeled, &unlabeled, &mdp)?;
        let shared_q = solver::solve_conservative(&all, solver_cfg, gamma, mdp.initial_dist())?.conservative_q;
        let reweight_d_pi = mdp::occupancy(&emp.mdp, &labeled_solution.policy).ok();
        let constants =
            bounds::concentration_constants(mdp.num_states(), mdp.num_actions(), delta, 1.0)?;
        let (c1, c2) = bounds::theorem3_constants(
            labeled.len() as f64,
            (labeled.len() + unlabeled.len()) as f64,
            constants.c_p,
            gamma,
        )?;
        Ok(Self {
            mdp,
            labeled,
            unlabeled,
            j_optimal,
            labeled_solution,
            uds_q,
            shared_q,
            reweight_d_pi,
            c1,
            c2,
        })
    }

    pub fn strategy_context(&self, kind: StrategyKind) -> StrategyContext<'_> {
        let q = match kind {
            StrategyKind::CdsUds => &self.uds_q,
            _ => &self.shared_q,
        };
        StrategyContext {
            oracle: Some(&self.mdp),
            conservative_q: Some(q),
            predictor: None,
            reweight: self.reweight_d_pi.as_ref().map(|d_pi| ReweightContext {
                d_pi,
                c1: self.c1,
                c2: self.c2,
            }),
        }
    }

    /// Applies `spec`, solves, and evaluates.
    pub fn run(&self, spec: &StrategySpec, solver_cfg: &ConservativeConfig) -> Result<ArmOutcome> {
        let effective = relabel::apply_strategy(spec, &self.labeled, &self.unlabeled, &self.strategy_context(spec.kind))?;
        let result = solver::solve_conservative(
            &effective,
            solver_cfg,
            self.mdp.discount(),
            self.mdp.initial_dist(),
        )?;
        let j_true = mdp::evaluate_return(&self.mdp, &result.policy)?;
        Ok(ArmOutcome {
            effective,
            result,
            j_true,
        })
    }
}

pub struct ArmOutcome {
    pub effective: EffectiveDataset,
    pub result: SolveResult,
    pub j_true: f64,
}

fn fill(record: &mut RunRecord, ctx: &SeedContext, arm: &ArmOutcome, report: Result<BoundReport>) {
    record.j_true = Some(arm.j_true);
    record.j_empirical = Some(arm.result.empirical_return);
    record.j_optimal = Some(ctx.j_optimal);
    record.iterations = Some(arm.result.iterations);
    record.converged = Some(arm.result.converged);
    record.uncovered_pairs = Some(arm.result.uncovered.len());
    let counts = arm.effective.counts_eff();
    record.coverage_min = counts.iter().copied().min();
    record.coverage_mean = Some(counts.iter().sum::<usize>() as f64 / counts.len() as f64);
    match report {
        Ok(r) => {
            record.term_a_reward_bias = Some(r.term_a_reward_bias);
            record.term_b_sampling_error = Some(r.term_b_sampling_error);
            record.term_c_policy_improvement = Some(r.term_c_policy_improvement);
            record.zeta_err = Some(r.zeta_err);
            record.j_true_behavior = Some(r.j_true_behavior);
            record.guarantee_holds = Some(r.guarantee_holds);
            record.c_r = Some(r.c_r);
            record.c_p = Some(r.c_p);
        }
        Err(e) => record.error = Some(format!("bound report: {e}")),
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Records of one (composition, seed) unit with per-arm wall times.
fn run_unit(cfg: &ExperimentConfig, hash: &str, comp: &Composition, seed: u64) -> Vec<(RunRecord, f64)> {
    let start = Instant::now();
    let ctx = catch_unwind(AssertUnwindSafe(|| {
        SeedContext::build(&cfg.mdp, comp, &cfg.solver, cfg.delta, seed)
    }));
    let ctx = match ctx {
        Ok(Ok(c)) => c,
        Ok(Err(e)) => return failed(cfg, hash, comp, seed, format!("setup: {e}"), start),
        Err(p) => return failed(cfg, hash, comp, seed, format!("setup panicked: {}", panic_message(p)), start),
    };
    let setup = start.elapsed().as_secs_f64();
    cfg.strategies
        .iter()
        .map(|spec| {
            let t0 = Instant::now();
            let mut record = RunRecord::skeleton(hash, comp, seed, spec, cfg);
            let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<()> {
                let arm = ctx.run(spec, &cfg.solver)?;
                let report = bounds::theorem1_report(&ctx.mdp, &arm.effective, &arm.result, cfg.delta, cfg.solver.alpha);
                fill(&mut record, &ctx, &arm, report);
                Ok(())
            }));
            match outcome {
                Ok(Ok(())) => {}
                Ok(Err(e)) => record.error = Some(e.to_string()),
                Err(p) => record.error = Some(format!("panicked: {}", panic_message(p))),
            }
            (record, setup + t0.elapsed().as_secs_f64())
        })
        .collect()
}

fn failed(
    cfg: &ExperimentConfig,
    hash: &str,
    comp: &Composition,
    seed: u64,
    message: String,
    start: Instant,
) -> Vec<(RunRecord, f64)> {
    cfg.strategies
        .iter()
        .map(|spec| {
            let mut r = RunRecord::skeleton(hash, comp, seed, spec, cfg);
            r.error = Some(message.clone());
            (r, start.elapsed().as_secs_f64())
        })
        .collect()
}

/// Output of a sweep: records in (composition, seed, strategy) config order
/// and the matching per-arm wall times.
pub struct SweepOutput {
    pub records: Vec<RunRecord>,
    pub wall_times: Vec<f64>,
}

/// Runs every (composition x seed x strategy) arm on a worker pool.
///
/// Output order is fixed by the config, independent of scheduling; a failure
/// in one arm is recorded in its `error` column and never aborts the sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    let comps = cfg.compositions()?;
    let units: Vec<(&Composition, u64)> = comps
        .iter()
        .flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cfg.parallel {
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let per_unit: Vec<Vec<(RunRecord, f64)>> = pool.install(|| {
        units
            .par_iter()
            .map(|(c, s)| run_unit(cfg, &hash, c, *s))
            .collect()
    });
    let (records, wall_times) = per_unit.into_iter().flatten().unzip();
    Ok(SweepOutput {
        records,
        wall_times,
    })
}

/// The records as `records.csv` text.
pub fn records_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    std::fs::write(path, records_csv(records)?)?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config_hash: String,
    package: &'static str,
    version: &'static str,
    seeds: &'a [u64],
    compositions: Vec<String>,
    strategies: Vec<&'static str>,
    records: usize,
    failed_arms: usize,
    config: &'a ExperimentConfig,
}

/// Runs the sweep and writes `records.csv`, `timings.csv` and
/// `manifest.json` under `cfg.output_dir`. Only `timings.csv` varies between
/// identical runs.
pub fn run_and_persist(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let out = run_experiment(cfg)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    write_records(&dir.join("records.csv"), &out.records)?;

    let mut t = csv::Writer::from_path(dir.join("timings.csv"))?;
    t.write_record(["composition", "seed", "strategy", "wall_time"])?;
    for (r, secs) in out.records.iter().zip(&out.wall_times) {
        t.write_record([
            r.composition.clone(),
            r.seed.to_string(),
            r.strategy.clone(),
            format!("{secs:.6}"),
        ])?;
    }
    t.flush()?;

    let manifest = Manifest {
        config_hash: cfg.hash(),
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seeds: &cfg.seeds,
        compositions: cfg.compositions()?.into_iter().map(|c| c.name).collect(),
        strategies: cfg.strategies.iter().map(|s| s.kind.name()).collect(),
        records: out.records.len(),
        failed_arms: out.records.iter().filter(|r| r.error.is_some()).count(),
        config: cfg,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(out)
}
