use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskward::agent::{
    self, AgentError, BaselineActor, BaselineKind, ObservationScaler, Policy, PolicyActor, ValueHead,
};
use riskward::env::{run_episode, Actor, EnvData, EnvError, TradingEnv};
use riskward::marketdata::write_ohlcv_csv;
use riskward::reward::{self, Component, GRADIENT_TOLERANCE};
use riskward::tuner::{self, AllocationActor, BaselineChoice, MetricKey, PolicySource, SweepSummary};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::data::{load_panel, read_merged};
use crate::error::CliError;
use crate::output::OutDir;

fn finish(out: &mut OutDir, command: &str, cfg: &RunConfig) -> Result<(), CliError> {
    let files = out.written().to_vec();
    out.write_json(
        &format!("{command}_manifest.json"),
        &json!({
            "command": command,
            "seed": cfg.seed,
            "config_hash": cfg.hash(),
            "files": files,
        }),
    )?;
    println!("wrote {} files to {}", files.len() + 1, out.path().display());
    Ok(())
}

fn env_error(e: EnvError) -> CliError {
    match e {
        EnvError::Config(m) => CliError::Config(m),
        EnvError::Window { .. } => CliError::Config(format!("{e}; widen the date range or shorten indicator windows")),
        other => CliError::Runtime(other.to_string()),
    }
}

fn build_env(cfg: &RunConfig) -> Result<TradingEnv, CliError> {
    let panel = load_panel(cfg)?;
    let data = Arc::new(EnvData::new(panel, &cfg.indicators).map_err(|e| CliError::Data(e.to_string()))?);
    let env_cfg = cfg.env_config();
    let window = data.full_window(&env_cfg);
    if window.start >= window.end {
        return Err(CliError::Config(format!(
            "date range has {} dates but indicator warm-up needs {}",
            data.panel.len(),
            window.start + 2
        )));
    }
    TradingEnv::new(data, env_cfg, window).map_err(env_error)
}

pub fn ingest(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate(true)?;
    let merged = read_merged(&cfg.data.paths)?;
    let summaries = merged.summaries();
    for s in &summaries {
        println!("{:<10} {:>6} rows  {} .. {}", s.ticker, s.rows, s.first, s.last);
    }
    if merged.dedup.duplicate_rows > 0 {
        println!("deduplicated {} identical rows across files", merged.dedup.duplicate_rows);
        for (t, n) in &merged.dedup.by_ticker {
            println!("  {t}: {n}");
        }
    }
    let series = merged.price_series()?;
    let mut out = OutDir::create(cfg.out_dir())?;
    out.write_with("prices.csv", |w| {
        write_ohlcv_csv(&series, w).map_err(|e| std::io::Error::other(e.to_string()))
    })?;
    out.write_json(
        "ingest_summary.json",
        &json!({
            "seed": cfg.seed,
            "config_hash": cfg.hash(),
            "tickers": summaries,
            "dedup": merged.dedup,
        }),
    )?;
    finish(&mut out, "ingest", cfg)
}

fn checkpoint_scaler_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".scaler.json");
    PathBuf::from(name)
}

fn load_checkpoint(path: &Path) -> Result<agent::Checkpoint, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open checkpoint {}: {e}", path.display())))?;
    agent::read_checkpoint(BufReader::new(file)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn backtest(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate(true)?;
    let mut env = build_env(cfg)?;
    let n = env.stock_dim();
    let checkpoint;
    let scaler;
    let mut allocation = None;
    let mut actor: Box<dyn Actor + '_> = match cfg.backtest.policy.as_str() {
        "checkpoint" => {
            let path = cfg
                .backtest
                .checkpoint
                .as_deref()
                .ok_or_else(|| CliError::Config("--policy checkpoint needs --checkpoint".into()))?;
            checkpoint = load_checkpoint(path)?;
            if checkpoint.policy.obs_dim != env.state_dimension() || checkpoint.policy.stock_dim != n {
                return Err(CliError::Config("checkpoint shape does not match the environment".into()));
            }
            let sp = checkpoint_scaler_path(path);
            scaler = match std::fs::read(&sp) {
                Ok(bytes) => serde_json::from_slice(&bytes)
                    .map_err(|e| CliError::Config(format!("{}: {e}", sp.display())))?,
                Err(_) => ObservationScaler::fit(&env),
            };
            Box::new(PolicyActor::<ChaCha8Rng> {
                policy: &checkpoint.policy,
                scaler: &scaler,
                rng: None,
            })
        }
        "allocator" => {
            let f = tuner::best_allocation(&env);
            let a = AllocationActor::new(&env, &f);
            allocation = Some(f);
            Box::new(a)
        }
        other => {
            let kind: BaselineKind = other.parse().map_err(|e: AgentError| CliError::Config(e.to_string()))?;
            Box::new(agent::baseline_policy(kind, n, cfg.seed))
        }
    };
    let episode = run_episode(&mut env, actor.as_mut()).map_err(env_error)?;
    drop(actor);
    let record = tuner::episode_record(cfg.weights, &env, &episode, cfg.seed, allocation);
    let breakdown = reward::composite_reward(
        &episode.returns,
        &episode.benchmark,
        &episode.market,
        &cfg.weights,
        &cfg.metrics,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    println!(
        "{} on {} assets, {} steps: R = {:.6}, ann_return = {:.6}, max_dd = {:.6}, fees = {:.2}",
        cfg.backtest.policy,
        n,
        episode.returns.len(),
        breakdown.total,
        record.ann_return,
        record.max_dd,
        episode.total_fees
    );
    if !record.flags.is_empty() {
        println!("flags: {}", record.flags.join(", "));
    }

    let hash = cfg.hash();
    let mut out = OutDir::create(cfg.out_dir())?;
    out.write_with("episode_log.csv", |w| env.write_episode_log(w))?;
    out.write_with("indicators.csv", |w| env.data().indicators.write_csv(w))?;
    out.write_json(
        "metrics.json",
        &json!({
            "seed": cfg.seed,
            "config_hash": hash,
            "policy": cfg.backtest.policy,
            "tickers": env.data().panel.tickers(),
            "window": env.window(),
            "total_fees": episode.total_fees,
            "final_value": episode.final_state.portfolio_value,
            "metrics": record,
        }),
    )?;
    out.write_json(
        "reward_breakdown.json",
        &json!({
            "seed": cfg.seed,
            "config_hash": hash,
            "breakdown": breakdown,
        }),
    )?;
    finish(&mut out, "backtest", cfg)
}

/// Random return triple with no portfolio return near zero.
fn gradcheck_instance(rng: &mut ChaCha8Rng, periods: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut p = Vec::with_capacity(periods);
    let mut b = Vec::with_capacity(periods);
    let mut m = Vec::with_capacity(periods);
    while p.len() < periods {
        let mk: f64 = rng.random_range(-0.02..0.02);
        let r = 0.9 * mk + rng.random_range(-0.015..0.015);
        if r.abs() < 1e-6 {
            continue;
        }
        m.push(mk);
        b.push(0.8 * mk + rng.random_range(-0.005..0.005));
        p.push(r);
    }
    (p, b, m)
}

#[derive(Debug, Serialize)]
struct ComponentSummary {
    component: &'static str,
    weight: f64,
    skipped: bool,
    max_rel_error: f64,
    failures: usize,
}

#[derive(Debug, Serialize)]
struct GradcheckFailure {
    instance: usize,
    component: &'static str,
    coordinate: Option<usize>,
    rel_error: f64,
}

pub fn gradcheck(cfg: &RunConfig, inject_fault: Option<&str>) -> Result<(), CliError> {
    cfg.validate(false)?;
    let g = &cfg.gradcheck;
    if g.instances == 0 || g.periods < 2 {
        return Err(CliError::Config("gradcheck needs instances >= 1 and periods >= 2".into()));
    }
    let flip_downside = match inject_fault {
        None => false,
        Some("downside-sign") => true,
        Some(other) => return Err(CliError::Config(format!("unknown fault `{other}`"))),
    };
    let weights = cfg.weights;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut summaries: Vec<ComponentSummary> = Component::ALL
        .iter()
        .map(|&c| ComponentSummary {
            component: c.symbol(),
            weight: c.weight(&weights),
            skipped: c.weight(&weights) == 0.0,
            max_rel_error: 0.0,
            failures: 0,
        })
        .collect();
    let mut failures = Vec::new();
    for i in 0..g.instances {
        let (p, b, m) = gradcheck_instance(&mut rng, g.periods);
        let mut analytic = reward::reward_gradient(&p, &b, &m, &weights, &cfg.metrics)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        if flip_downside {
            let down = analytic.components.get_mut(Component::DownsideDeviation);
            for (t, d) in down.iter_mut().enumerate() {
                analytic.d_returns[t] -= 2.0 * *d;
                *d = -*d;
            }
        }
        let report = reward::check_gradient_against(&analytic, &p, &b, &m, &weights, &cfg.metrics, g.h)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        for (s, c) in summaries.iter_mut().zip(&report.components) {
            if c.skipped {
                continue;
            }
            s.max_rel_error = s.max_rel_error.max(c.max_rel_error);
        }
        for c in report.failures() {
            let s = summaries.iter_mut().find(|s| s.component == c.component.symbol()).expect("known component");
            s.failures += 1;
            failures.push(GradcheckFailure {
                instance: i,
                component: c.component.symbol(),
                coordinate: c.worst_index,
                rel_error: c.max_rel_error,
            });
        }
    }
    let passed = failures.is_empty();
    for s in &summaries {
        if s.skipped {
            println!("{:<10} skipped (weight 0)", s.component);
        } else {
            println!(
                "{:<10} max rel error {:.3e}  {}",
                s.component,
                s.max_rel_error,
                if s.failures == 0 { "ok".to_string() } else { format!("FAIL in {} instances", s.failures) }
            );
        }
    }
    let mut out = OutDir::create(cfg.out_dir())?;
    out.write_json(
        "gradcheck.json",
        &json!({
            "seed": cfg.seed,
            "config_hash": cfg.hash(),
            "instances": g.instances,
            "periods": g.periods,
            "h": g.h,
            "tolerance": GRADIENT_TOLERANCE,
            "passed": passed,
            "components": summaries,
            "failures": failures,
        }),
    )?;
    finish(&mut out, "gradcheck", cfg)?;
    if let Some(f) = failures.first() {
        return Err(CliError::GradcheckFailed(format!(
            "{} failures; first: component {} coordinate {} in instance {} (rel error {:.3e})",
            failures.len(),
            f.component,
            f.coordinate.map_or("-".to_string(), |c| c.to_string()),
            f.instance,
            f.rel_error
        )));
    }
    println!("gradient check passed on {} instances", g.instances);
    Ok(())
}

pub fn tune(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate(true)?;
    let grid = tuner::simplex_grid(cfg.tuner.step).map_err(|e| CliError::Config(e.to_string()))?;
    let source = match cfg.tuner.policy.as_str() {
        "trained" => PolicySource::Trained(cfg.agent.clone()),
        other => PolicySource::Baseline(
            other
                .parse::<BaselineChoice>()
                .map_err(|_| CliError::Config(format!("unknown tuner policy `{other}`")))?,
        ),
    };
    let return_key: MetricKey = cfg.tuner.return_key.parse().map_err(|e: tuner::TuneError| CliError::Config(e.to_string()))?;
    let risk_key: MetricKey = cfg.tuner.risk_key.parse().map_err(|e: tuner::TuneError| CliError::Config(e.to_string()))?;
    let env = build_env(cfg)?;
    let data = env.data().clone();
    let window = env.window();
    let records = tuner::sweep(&grid.points, &data, &cfg.env_config(), window, &source, cfg.seed);
    let frontier =
        tuner::pareto_frontier(&records, return_key, risk_key).map_err(|e| CliError::Runtime(e.to_string()))?;
    let summary = SweepSummary::new(&records, &frontier, grid.step, cfg.seed, window);
    println!(
        "{} configurations, {} on the {}/{} frontier, {} flagged",
        records.len(),
        frontier.members.len(),
        return_key.name(),
        risk_key.name(),
        summary.flagged
    );
    if let Some(i) = summary.best_composite {
        let r = &records[i];
        println!("best composite R {:.6} at weights {:?}", r.composite_r, r.weights.as_array());
    }
    let mut out = OutDir::create(cfg.out_dir())?;
    out.write_with("sweep.csv", |w| {
        tuner::write_sweep_csv(&records, w).map_err(|e| std::io::Error::other(e.to_string()))
    })?;
    out.write_json(
        "frontier.json",
        &json!({
            "config_hash": cfg.hash(),
            "summary": summary,
            "dominated": frontier.dominated,
        }),
    )?;
    out.write_json("records.json", &records)?;
    finish(&mut out, "tune", cfg)
}

pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> Result<(), CliError> {
    cfg.validate(true)?;
    let mut env = build_env(cfg)?;
    let d = env.state_dimension();
    let n = env.stock_dim();
    let ppo = agent::PpoConfig {
        seed: cfg.seed,
        ..cfg.agent.clone()
    };
    let (policy, value) = match resume {
        Some(path) => {
            let c = load_checkpoint(path)?;
            if c.policy.obs_dim != d || c.policy.stock_dim != n {
                return Err(CliError::Config("checkpoint shape does not match the environment".into()));
            }
            (c.policy, c.value)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (Policy::new(d, n, ppo.init_log_std, &mut rng), ValueHead::new(d))
        }
    };
    let hash = cfg.hash();
    let mut out = OutDir::create(cfg.out_dir())?;
    out.write_with("checkpoint_init.ckpt", |w| agent::write_checkpoint(w, &policy, &value, cfg.seed))?;

    let trained = agent::train(&env, policy, value, &ppo).map_err(|e| match e {
        AgentError::Divergence { .. } => CliError::Divergence(e.to_string()),
        AgentError::Config(m) => CliError::Config(m),
        other => CliError::Runtime(other.to_string()),
    })?;
    let greedy = agent::evaluate_policy(&mut env, &trained.policy, &trained.scaler)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut baseline = |mut a: BaselineActor| -> Result<f64, CliError> {
        Ok(run_episode(&mut env, &mut a).map_err(env_error)?.objective)
    };
    let buy_and_hold = baseline(agent::baseline_policy(BaselineKind::BuyAndHold, n, cfg.seed))?;
    let flat = baseline(agent::baseline_policy(BaselineKind::Flat, n, cfg.seed))?;

    let report = &trained.report;
    let last = report.records.last().map(|r| r.mean_reward).unwrap_or(f64::NAN);
    println!(
        "{} iterations: final mean episode reward {:.6}, last-quartile slope {:.3e}",
        report.records.len(),
        last,
        report.last_quartile_slope
    );
    println!(
        "greedy policy R = {:.6} (buy-and-hold {:.6}, flat {:.6})",
        greedy.objective, buy_and_hold, flat
    );

    out.write_with("training_report.jsonl", |w| {
        for r in &report.records {
            let mut line = serde_json::to_value(r)?;
            line["seed"] = json!(cfg.seed);
            line["config_hash"] = json!(hash);
            serde_json::to_writer(&mut *w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    out.write_with("checkpoint.ckpt", |w| {
        agent::write_checkpoint(w, &trained.policy, &trained.value, cfg.seed)
    })?;
    out.write_json("checkpoint.ckpt.scaler.json", &trained.scaler)?;
    out.write_json(
        "training_summary.json",
        &json!({
            "seed": cfg.seed,
            "config_hash": hash,
            "iterations": report.records.len(),
            "final_mean_reward": last,
            "last_quartile_slope": report.last_quartile_slope,
            "greedy_objective": greedy.objective,
            "buy_and_hold_objective": buy_and_hold,
            "flat_objective": flat,
        }),
    )?;
    finish(&mut out, "train", cfg)
}
