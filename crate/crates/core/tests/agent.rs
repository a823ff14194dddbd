use std::sync::Arc;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use riskward::agent::{read_checkpoint, train, write_checkpoint, Policy, PpoConfig, ValueHead};
use riskward::env::{EnvConfig, EnvData, TradingEnv};
use riskward::indicators::IndicatorConfig;
use riskward::marketdata::{align, PriceSeries};

fn env() -> TradingEnv {
    let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
    let up: Vec<f64> = (0..80).map(|i| 30.0 * (1.0 + 0.004 * i as f64 + 0.01 * (i as f64).sin())).collect();
    let wavy: Vec<f64> = (0..80).map(|i| 12.0 + (i as f64 * 0.3).cos()).collect();
    let assets = vec![
        PriceSeries::from_closes("UP", start, &up).unwrap(),
        PriceSeries::from_closes("WAVY", start, &wavy).unwrap(),
    ];
    let idx = PriceSeries::from_closes("IDX", start, &up).unwrap();
    let ind = IndicatorConfig {
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
    };
    let data = Arc::new(EnvData::new(align(&assets, &idx, &idx).unwrap(), &ind).unwrap());
    let cfg = EnvConfig::default();
    let window = data.full_window(&cfg);
    TradingEnv::new(data, cfg, window).unwrap()
}

fn fresh(env: &TradingEnv, seed: u64) -> (Policy, ValueHead) {
    let d = env.state_dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (Policy::new(d, env.stock_dim(), -0.5, &mut rng), ValueHead::new(d))
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let env = env();
    let (policy, value) = fresh(&env, 3);
    let cfg = PpoConfig {
        iterations: 5,
        learning_rate: 0.0,
        value_learning_rate: 0.0,
        seed: 3,
        ..PpoConfig::default()
    };
    let trained = train(&env, policy.clone(), value.clone(), &cfg).unwrap();
    assert_eq!(trained.policy, policy);
    assert_eq!(trained.value, value);
    assert_eq!(trained.report.records.len(), 5);
}

#[test]
fn same_seed_gives_identical_reports() {
    let env = env();
    let cfg = PpoConfig {
        iterations: 8,
        seed: 11,
        ..PpoConfig::default()
    };
    let (p, v) = fresh(&env, 11);
    let a = train(&env, p.clone(), v.clone(), &cfg).unwrap();
    let b = train(&env, p, v, &cfg).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.policy, b.policy);

    let other = PpoConfig { seed: 12, ..cfg };
    let (p, v) = fresh(&env, 11);
    let c = train(&env, p, v, &other).unwrap();
    assert_ne!(a.report, c.report);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let env = env();
    let cfg = PpoConfig {
        iterations: 3,
        seed: 5,
        ..PpoConfig::default()
    };
    let (p, v) = fresh(&env, 5);
    let trained = train(&env, p, v, &cfg).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &trained.policy, &trained.value, 5).unwrap();
    let back = read_checkpoint(&buf[..]).unwrap();
    assert_eq!(back.policy, trained.policy);
    assert_eq!(back.value, trained.value);
    assert_eq!(back.seed, 5);
}
