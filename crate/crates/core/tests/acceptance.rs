//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use riskward::agent::{self, advantages, ppo_clip_objective, BaselineActor, BaselineKind, Policy, PpoConfig, ValueHead};
use riskward::env::{run_episode, EnvConfig, EnvData, RewardMode, TradingEnv};
use riskward::indicators::IndicatorConfig;
use riskward::marketdata::{align, PriceSeries};
use riskward::metrics::{self, MetricContext};
use riskward::reward::{
    composite_reward, composite_reward_fixed_beta, finite_difference_check, reward_bound, RewardWeights,
};
use riskward::tuner::{pareto_indices, simplex_grid};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn random_weights(rng: &mut ChaCha8Rng) -> RewardWeights {
    let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    RewardWeights::new(raw[0] / s, raw[1] / s, raw[2] / s, raw[3] / s).unwrap()
}

/// Portfolio, benchmark and market returns bounded by `cap`, no portfolio return within `gap` of 0.
fn random_series(rng: &mut ChaCha8Rng, t: usize, cap: f64, gap: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (mut p, mut b, mut m) = (Vec::new(), Vec::new(), Vec::new());
    while p.len() < t {
        let mk = rng.random_range(-cap..cap);
        let r: f64 = (0.8 * mk + rng.random_range(-cap..cap) * 0.5).clamp(-cap, cap);
        if r.abs() < gap {
            continue;
        }
        m.push(mk);
        b.push((0.7 * mk + rng.random_range(-cap..cap) * 0.3).clamp(-cap, cap));
        p.push(r);
    }
    (p, b, m)
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ctx = MetricContext::default();
    let mut worst = 0.0f64;
    for i in 0..100 {
        let w = random_weights(&mut rng);
        let (p, b, m) = random_series(&mut rng, 50, 0.03, 1e-6);
        let report = finite_difference_check(&p, &b, &m, &w, &ctx, 1e-7).map_err(|e| e.to_string())?;
        worst = worst.max(report.max_rel_error);
        ensure(report.passed && report.max_rel_error < 1e-6, || {
            format!("instance {i}: max rel error {:.3e}", report.max_rel_error)
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("100 instances, max rel error {worst:.2e}, {elapsed:.2?}"))
}

fn boundedness_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ctx = MetricContext::default();
    let cap = ctx.r_max / ctx.periods_per_year;
    let mut checked = 0;
    for i in 0..10_000 {
        let t = rng.random_range(2..=60);
        let w = random_weights(&mut rng);
        let extreme = i % 10 == 0;
        let draw = |rng: &mut ChaCha8Rng| {
            if extreme {
                if rng.random_bool(0.5) { cap } else { -cap }
            } else {
                rng.random_range(-cap..=cap)
            }
        };
        let p: Vec<f64> = (0..t).map(|_| draw(&mut rng)).collect();
        let b: Vec<f64> = (0..t).map(|_| draw(&mut rng)).collect();
        let m: Vec<f64> = (0..t).map(|_| draw(&mut rng)).collect();
        let br = composite_reward(&p, &b, &m, &w, &ctx).map_err(|e| format!("instance {i}: {e}"))?;
        let c = &br.components;
        ensure(c.r_ann.abs() <= ctx.r_max + 1e-12, || format!("instance {i}: |R_ann| = {}", c.r_ann))?;
        ensure((ctx.beta_min..=ctx.beta_max).contains(&c.beta_clamped), || {
            format!("instance {i}: beta {}", c.beta_clamped)
        })?;
        ensure(c.t_ry.abs() <= ctx.treynor_bound() + 1e-12, || format!("instance {i}: |T_ry| = {}", c.t_ry))?;
        ensure(c.d_ret.abs() <= ctx.differential_bound() + 1e-12, || {
            format!("instance {i}: |D_ret| = {}", c.d_ret)
        })?;
        let bound = reward_bound(&w, &ctx);
        ensure(br.total.abs() <= bound, || format!("instance {i}: |R| = {} > {bound}", br.total))?;
        checked += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("{checked} guarded inputs within bounds, {elapsed:.2?}"))
}

fn monotonicity_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ctx = MetricContext::default();
    let eps = 1e-4;
    for i in 0..1000 {
        let t = rng.random_range(5..=60);
        let w = random_weights(&mut rng);
        let (p, b, m) = random_series(&mut rng, t, 0.01, 0.0);
        let (beta, _) = metrics::reward_beta(&p, &m, &ctx).map_err(|e| e.to_string())?;
        let base = composite_reward_fixed_beta(&p, &b, beta, &w, &ctx).map_err(|e| e.to_string())?;

        // more return, beta held fixed
        let up: Vec<f64> = p.iter().map(|r| r + eps).collect();
        let shifted = composite_reward_fixed_beta(&up, &b, beta, &w, &ctx).map_err(|e| e.to_string())?;
        ensure(shifted.total > base.total, || format!("instance {i}: R did not increase"))?;
        ensure(
            shifted.decomposition.return_reward > base.decomposition.return_reward,
            || format!("instance {i}: return reward did not increase"),
        )?;

        // deeper losses, downside term in isolation
        let deeper: Vec<f64> = p.iter().map(|&r| if r < 0.0 { r * (1.0 + eps) } else { r }).collect();
        let s0 = metrics::downside_deviation(&p).map_err(|e| e.to_string())?;
        let s1 = metrics::downside_deviation(&deeper).map_err(|e| e.to_string())?;
        ensure(-w.w2 * s1 <= -w.w2 * s0, || format!("instance {i}: downside term increased"))?;

        // stronger benchmark
        let bb: Vec<f64> = b.iter().map(|r| r + eps).collect();
        let bumped = composite_reward_fixed_beta(&p, &bb, beta, &w, &ctx).map_err(|e| e.to_string())?;
        let expected = -w.w3 * eps / beta.clamped;
        let got = bumped.total - base.total;
        ensure(got < 0.0 && (got - expected).abs() <= 1e-10, || {
            format!("instance {i}: benchmark shift changed R by {got}, expected {expected}")
        })?;
    }
    Ok("3 directional properties on 1000 instances each".into())
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ctx = MetricContext::default();
    let n = 600;
    let check = |name: &str, i: usize, a: f64, b: f64| {
        ensure(rel_err(a, b) <= 1e-10, || format!("{name} instance {i}: {a} vs {b}"))
    };
    for i in 0..n {
        let t = rng.random_range(2..=12);
        let p: Vec<f64> = (0..t).map(|_| rng.random_range(-0.05..0.05)).collect();
        let b: Vec<f64> = (0..t).map(|_| rng.random_range(-0.05..0.05)).collect();
        let mut m: Vec<f64> = (0..t).map(|_| rng.random_range(-0.05..0.05)).collect();
        if m.iter().all(|x| *x == m[0]) {
            m[0] += 0.01;
        }

        let sq: f64 = p.iter().filter(|r| **r < 0.0).map(|r| r * r).sum();
        check("downside", i, metrics::downside_deviation(&p).unwrap(), (sq / t as f64).sqrt())?;

        // pairwise-difference forms of covariance and variance
        let tf = t as f64;
        let (mut cov, mut var) = (0.0, 0.0);
        for x in 0..t {
            for y in 0..t {
                cov += (p[x] - p[y]) * (m[x] - m[y]);
                var += (m[x] - m[y]) * (m[x] - m[y]);
            }
        }
        cov /= 2.0 * tf * tf;
        var /= 2.0 * tf * tf;
        let est = metrics::beta(&p, &m, &ctx).unwrap();
        check("beta", i, est.raw, cov / var)?;
        let clamped = (cov / var).clamp(ctx.beta_min, ctx.beta_max);
        check("beta clamp", i, est.clamped, clamped)?;

        let diff: f64 = p.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / tf;
        check("differential", i, metrics::differential_return(&p, &b, clamped).unwrap(), diff / clamped)?;

        let mut equity = vec![100.0];
        for r in &p {
            equity.push(equity.last().unwrap() * (1.0 + r));
        }
        let mut dd = 0.0f64;
        for x in 0..equity.len() {
            for y in x..equity.len() {
                dd = dd.max((equity[x] - equity[y]) / equity[x]);
            }
        }
        check("max drawdown", i, metrics::max_drawdown(&equity).unwrap(), dd)?;

        let wins = p.iter().filter(|x| **x > 0.0).count() as f64;
        check("win rate", i, metrics::win_rate(&p).unwrap(), wins / tf)?;

        let values: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gamma = rng.random_range(0.0..=1.0);
        let lambda = rng.random_range(0.0..=1.0);
        let fast = advantages(&p, &values, gamma, lambda);
        for s in 0..t {
            let mut acc = 0.0;
            for k in 0..t - s {
                let next = if s + k + 1 < t { values[s + k + 1] } else { 0.0 };
                let delta = p[s + k] + gamma * next - values[s + k];
                acc += (gamma * lambda).powi(k as i32) * delta;
            }
            ensure((fast[s] - acc).abs() <= 1e-10 * acc.abs().max(1.0), || {
                format!("gae instance {i} step {s}: {} vs {acc}", fast[s])
            })?;
        }

        let k = rng.random_range(1..=30);
        let pts: Vec<(f64, f64)> = (0..k)
            .map(|_| (rng.random_range(0..8) as f64 * 0.05, rng.random_range(0..8) as f64 * 0.03))
            .collect();
        let mut front = pareto_indices(&pts);
        front.sort();
        let brute: Vec<usize> = (0..k)
            .filter(|&x| {
                !(0..k).any(|y| {
                    pts[y].0 >= pts[x].0 && pts[y].1 <= pts[x].1 && (pts[y].0 > pts[x].0 || pts[y].1 < pts[x].1)
                })
            })
            .collect();
        ensure(front == brute, || format!("pareto instance {i}: {front:?} vs {brute:?}"))?;
    }
    Ok(format!("7 quantities on {n} instances each"))
}

fn small_indicators() -> IndicatorConfig {
    IndicatorConfig {
        macd_fast: 3,
        macd_slow: 6,
        bollinger_window: 5,
        bollinger_k: 2.0,
        rsi_window: 4,
        cci_window: 4,
        dmi_window: 4,
        sma_short: 5,
        sma_long: 10,
        turbulence_lookback: 10,
    }
}

fn panel_data(closes: &[Vec<f64>], index: &[f64]) -> Arc<EnvData> {
    let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
    let assets: Vec<PriceSeries> = closes
        .iter()
        .enumerate()
        .map(|(i, c)| PriceSeries::from_closes(format!("S{i}"), start, c).unwrap())
        .collect();
    let idx = PriceSeries::from_closes("IDX", start, index).unwrap();
    Arc::new(EnvData::new(align(&assets, &idx, &idx).unwrap(), &small_indicators()).unwrap())
}

fn random_walk(rng: &mut ChaCha8Rng, len: usize, start: f64, drift: f64, vol: f64) -> Vec<f64> {
    let mut p = start;
    (0..len)
        .map(|_| {
            let out = p;
            let z: f64 = rng.sample(StandardNormal);
            p *= (drift + vol * z).exp();
            out
        })
        .collect()
}

fn random_data(rng: &mut ChaCha8Rng, assets: usize, len: usize) -> Arc<EnvData> {
    let closes: Vec<Vec<f64>> = (0..assets)
        .map(|_| {
            let s = rng.random_range(5.0..300.0);
            let drift = rng.random_range(-0.002..0.003);
            let vol = rng.random_range(0.005..0.04);
            random_walk(rng, len, s, drift, vol)
        })
        .collect();
    let index = random_walk(rng, len, 1000.0, 0.0005, 0.01);
    panel_data(&closes, &index)
}

fn telescoping_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for ep in 0..100 {
        let n = rng.random_range(1..=3);
        let len = rng.random_range(30..70);
        let data = random_data(&mut rng, n, len);
        let cfg = EnvConfig {
            weights: random_weights(&mut rng),
            reward_mode: RewardMode::Potential,
            ..EnvConfig::default()
        };
        let window = data.full_window(&cfg);
        let mut env = TradingEnv::new(data, cfg.clone(), window).map_err(|e| e.to_string())?;
        let mut actor = agent::baseline_policy(BaselineKind::Random, n, ep);
        let summary = run_episode(&mut env, &mut actor).map_err(|e| e.to_string())?;
        let summed: f64 = summary.rewards.iter().sum();
        let terminal = composite_reward(&summary.returns, &summary.benchmark, &summary.market, &cfg.weights, &cfg.metrics)
            .map_err(|e| e.to_string())?
            .total;
        worst = worst.max((summed - terminal).abs());
        ensure((summed - terminal).abs() <= 1e-9, || {
            format!("episode {ep}: sum {summed} vs terminal {terminal}")
        })?;
    }
    Ok(format!("100 episodes, max |sum - R| = {worst:.2e}"))
}

fn environment_accounting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut steps = 0usize;
    let mut episodes = 0usize;
    while steps < 100_000 {
        let n = rng.random_range(1..=4);
        let len = rng.random_range(40..160);
        let data = random_data(&mut rng, n, len);
        let zero_cost = episodes % 2 == 0;
        let cfg = EnvConfig {
            transaction_cost_rate: if zero_cost { 0.0 } else { 0.001 },
            initial_amount: rng.random_range(1e3..1e7),
            reward_mode: RewardMode::Terminal,
            ..EnvConfig::default()
        };
        let window = data.full_window(&cfg);
        let mut env = TradingEnv::new(data, cfg.clone(), window).map_err(|e| e.to_string())?;
        env.reset();
        loop {
            let action: Vec<f64> = (0..n).map(|_| rng.random_range(-1.2..1.2)).collect();
            let out = env.step(&action).map_err(|e| e.to_string())?;
            let info = &out.info;
            let s = &out.state;
            steps += 1;
            ensure(s.cash >= 0.0, || format!("step {steps}: negative cash {}", s.cash))?;
            let expected_fees: f64 = info
                .fills
                .iter()
                .zip(&info.prices)
                .map(|(f, p)| f.unsigned_abs() as f64 * p * cfg.transaction_cost_rate)
                .sum();
            ensure(rel_err(info.fees, expected_fees) <= 1e-12, || {
                format!("step {steps}: fees {} vs {expected_fees}", info.fees)
            })?;
            if zero_cost {
                ensure(rel_err(info.value_post_trade, info.value_before) <= 1e-12, || {
                    format!("step {steps}: value {} -> {} with zero cost", info.value_before, info.value_post_trade)
                })?;
            } else {
                ensure(rel_err(info.value_before - info.fees, info.value_post_trade) <= 1e-12, || {
                    format!("step {steps}: trade leaked value beyond fees")
                })?;
            }
            let marked = s.cash + s.holdings_value();
            ensure(rel_err(marked, s.portfolio_value) <= 1e-6, || format!("step {steps}: value mismatch"))?;
            if out.done {
                break;
            }
        }
        episodes += 1;
    }
    Ok(format!("{steps} random steps over {episodes} episodes"))
}

fn grid_counts() -> Outcome {
    let binom = |n: u64, k: u64| (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1));
    let mut seen = Vec::new();
    for (step, expected) in [(1.0, 4usize), (0.5, 10), (0.1, 286)] {
        let g = simplex_grid(step).map_err(|e| e.to_string())?;
        let oracle = binom(g.divisions as u64 + 3, 3) as usize;
        ensure(g.len() == expected && g.len() == oracle, || {
            format!("step {step}: {} points, expected {expected}", g.len())
        })?;
        seen.push(g.len().to_string());
    }
    Ok(format!("sizes {}", seen.join(" / ")))
}

fn training_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let len = 200;
    let up = random_walk(&mut rng, len, 50.0, 0.0015, 0.01);
    let flat = vec![20.0; len];
    let data = panel_data(&[up.clone(), flat], &up);
    let cfg = EnvConfig::default();
    let window = data.full_window(&cfg);
    let env = TradingEnv::new(data, cfg, window).map_err(|e| e.to_string())?;

    let mut scratch = env.clone();
    let buy_and_hold = run_episode(&mut scratch, &mut BaselineActor::buy_and_hold_only(2, 0))
        .map_err(|e| e.to_string())?
        .objective;
    let flat_r = run_episode(&mut scratch, &mut agent::baseline_policy(BaselineKind::Flat, 2, 0))
        .map_err(|e| e.to_string())?
        .objective;

    let ppo = PpoConfig {
        iterations: 200,
        seed: 1,
        ..PpoConfig::default()
    };
    let d = env.state_dimension();
    let mut init_rng = ChaCha8Rng::seed_from_u64(ppo.seed);
    let policy = Policy::new(d, 2, ppo.init_log_std, &mut init_rng);
    let trained = agent::train(&env, policy, ValueHead::new(d), &ppo).map_err(|e| e.to_string())?;
    let trained_r = agent::evaluate_policy(&mut scratch, &trained.policy, &trained.scaler)
        .map_err(|e| e.to_string())?
        .objective;
    // mean sampled-episode reward over the last tenth of training
    let tail = &trained.report.records[ppo.iterations - ppo.iterations / 10..];
    let sampled_r = tail.iter().map(|r| r.mean_reward).sum::<f64>() / tail.len() as f64;
    let elapsed = start.elapsed();
    let detail = format!(
        "greedy {trained_r:.4}, sampled {sampled_r:.4}, buy-and-hold {buy_and_hold:.4}, flat {flat_r:.4}, {elapsed:.2?}"
    );
    let floor = buy_and_hold - 0.1 * buy_and_hold.abs();
    for r in [trained_r, sampled_r] {
        ensure(r >= flat_r, || format!("below flat: {detail}"))?;
        ensure(r >= floor, || format!("below buy-and-hold: {detail}"))?;
    }
    ensure(elapsed < Duration::from_secs(120), || format!("too slow: {detail}"))?;
    Ok(detail)
}

fn clip_truth_table() -> Outcome {
    let cases = [(1.0, 1.0, 1.0), (1.5, 1.0, 1.2), (0.5, -1.0, -0.8)];
    for (r, a, expected) in cases {
        let got = ppo_clip_objective(r, a, 0.2).map_err(|e| e.to_string())?;
        ensure(got == expected, || format!("L(r={r}, A={a}) = {got}, expected {expected}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = 1e-6;
    let eps = 0.2;
    let mut flat_regions = 0;
    for i in 0..1000 {
        let a: f64 = rng.random_range(-3.0..3.0);
        // ratios in the saturated region on the side where the gradient vanishes
        let r = if a > 0.0 {
            rng.random_range(1.0 + eps + 2.0 * h..3.0)
        } else {
            rng.random_range(0.01..1.0 - eps - 2.0 * h)
        };
        let up = ppo_clip_objective(r + h, a, eps).map_err(|e| e.to_string())?;
        let dn = ppo_clip_objective(r - h, a, eps).map_err(|e| e.to_string())?;
        ensure(up - dn == 0.0, || format!("case {i}: nonzero difference at r={r}, A={a}"))?;
        ensure(agent::clip_inactive_gradient(r, a, eps), || format!("case {i}: region misclassified"))?;
        flat_regions += 1;
        // inside the trust region the slope is A
        let r_in = rng.random_range(1.0 - eps + 2.0 * h..1.0 + eps - 2.0 * h);
        let up = ppo_clip_objective(r_in + h, a, eps).map_err(|e| e.to_string())?;
        let dn = ppo_clip_objective(r_in - h, a, eps).map_err(|e| e.to_string())?;
        ensure(((up - dn) / (2.0 * h) - a).abs() < 1e-8, || format!("case {i}: slope mismatch inside"))?;
    }
    Ok(format!("3 table rows exact, {flat_regions} zero-gradient probes"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient suite", gradient_suite),
        ("boundedness suite", boundedness_suite),
        ("monotonicity suite", monotonicity_suite),
        ("oracle equivalence", oracle_equivalence),
        ("telescoping identity", telescoping_identity),
        ("environment accounting", environment_accounting),
        ("grid counts", grid_counts),
        ("desk-scale training check", training_check),
        ("clip-objective truth table", clip_truth_table),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
