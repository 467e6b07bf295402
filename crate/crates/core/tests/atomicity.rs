use std::path::PathBuf;

use flashopt::atomicity::{
    non_atomic_arbitrage, rows_to_csv, sweep, StreamSource, SweepConfig, TradeStream,
    TwoExchangeMarket,
};

fn manifest(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn sample_sweep() -> String {
    let market = TwoExchangeMarket::builtin();
    let trace = TradeStream::load(&manifest("scenarios/sample_trace.csv")).unwrap();
    let config = SweepConfig {
        trials: 300,
        seed: 0,
        ..Default::default()
    };
    let rows = sweep(
        &market,
        5.0,
        &StreamSource::Replay(trace),
        &[0, 10, 50, 100, 250],
        &config,
    )
    .unwrap();
    rows_to_csv(&rows)
}

#[test]
fn replayed_sample_matches_golden() {
    let path = manifest("tests/golden/sample_sweep.csv");
    let actual = sample_sweep();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &actual).unwrap();
    }
    let expected =
        std::fs::read_to_string(&path).expect("golden file; run with UPDATE_GOLDEN=1 to create it");
    assert_eq!(actual, expected);
}

#[test]
fn sample_trace_has_unrouted_events() {
    let trace = TradeStream::load(&manifest("scenarios/sample_trace.csv")).unwrap();
    assert_eq!(trace.events.len(), 600);
    assert!(trace.events.iter().any(|e| e.exchange.is_none()));
}

#[test]
fn identity_holds_along_the_sample() {
    let market = TwoExchangeMarket::builtin();
    let trace = TradeStream::load(&manifest("scenarios/sample_trace.csv")).unwrap();
    for i in 0..=trace.events.len() {
        let o = non_atomic_arbitrage(&market, 5.0, &trace.events, i).unwrap();
        assert_eq!(o.profit_difference, o.aarb - (o.naarb - o.hv));
        if i == 0 {
            assert_eq!(o.profit_difference, 0.0);
        }
    }
}

#[test]
fn sweep_does_not_depend_on_thread_count() {
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    assert_eq!(single.install(sample_sweep), sample_sweep());
}
