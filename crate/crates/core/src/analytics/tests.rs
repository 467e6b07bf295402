use approx::assert_relative_eq;
use proptest::prelude::*;

use super::*;

const AAVE: &str = "0x398eC7346DcD622eDc5ae82352F02bE94C62d119";
const UNISWAP: &str = "0x2a1530C4C41db0B0b2bB646CB5Eb1A67b7158667";
const KYBER: &str = "0x7a3370075a54B187d7bD5DceBf0ff2B5552d4F7D";
const STRANGER: &str = "0x0000000000000000000000000000000000000001";

fn record(touched: &[&str], asset: &str, amount: f64, gas: f64) -> LoanRecord {
    LoanRecord {
        tx: format!("0x{:064x}", touched.len()),
        touched: touched.iter().map(|s| s.to_string()).collect(),
        asset: asset.into(),
        amount,
        gas,
    }
}

fn set(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[test]
fn bundled_map_has_every_entry() {
    let map = AddressMap::builtin();
    assert_eq!(map.len(), 45);
    assert_eq!(map.lookup(AAVE).unwrap(), Some("Aave"));
    assert_eq!(map.lookup(&AAVE.to_lowercase()).unwrap(), Some("Aave"));
    assert_eq!(
        map.lookup(&AAVE.to_uppercase().replace("0X", "0x"))
            .unwrap(),
        Some("Aave")
    );
}

#[test]
fn classify_examples() {
    let map = AddressMap::builtin();
    assert_eq!(
        classify(&record(&[AAVE], "DAI", 1.0, 1.0), &map).unwrap(),
        set(&["Aave"])
    );
    assert!(classify(&record(&[], "DAI", 1.0, 1.0), &map)
        .unwrap()
        .is_empty());
    assert_eq!(
        classify(&record(&[STRANGER], "DAI", 1.0, 1.0), &map).unwrap(),
        set(&[UNKNOWN])
    );
    assert_eq!(
        classify(&record(&[UNISWAP, AAVE, UNISWAP], "DAI", 1.0, 1.0), &map).unwrap(),
        set(&["Aave", "Uniswap"])
    );
}

#[test]
fn malformed_addresses() {
    for bad in [
        "0x123",
        "398eC7346DcD622eDc5ae82352F02bE94C62d119",
        "0xZZ8eC7346DcD622eDc5ae82352F02bE94C62d119",
        "",
    ] {
        assert!(
            matches!(
                normalize_address(bad),
                Err(AnalyticsError::MalformedAddress(_))
            ),
            "{bad}"
        );
    }
}

#[test]
fn map_file_errors_carry_line() {
    let text = format!("# comment\n{AAVE},Aave\n{AAVE},Again\n");
    assert!(matches!(
        AddressMap::parse(&text),
        Err(AnalyticsError::Parse { line: 3, .. })
    ));
    assert!(matches!(
        AddressMap::parse("0x12,Foo\n"),
        Err(AnalyticsError::Parse { line: 1, .. })
    ));
}

#[test]
fn three_eth_records() {
    let map = AddressMap::builtin();
    let records: Vec<_> = [1.0, 2.0, 3.0]
        .map(|a| record(&[AAVE], "ETH", a, 100.0))
        .into();
    let t = aggregate(records.iter().enumerate(), &map, &PriceTable::default());
    // below five occurrences, so the set lands in Others
    assert_eq!(t.rows.len(), 1);
    let others = &t.rows[0];
    assert_eq!(others.platforms, OTHERS);
    assert_eq!(others.count, 3);
    assert_relative_eq!(others.amount_usd, 2_100.0);
    assert_eq!((others.gas_mean, others.gas_std), (100.0, 0.0));
    assert_eq!(t.total.count, 3);
}

#[test]
fn empty_input_empty_table() {
    let t = aggregate(
        std::iter::empty(),
        &AddressMap::builtin(),
        &PriceTable::default(),
    );
    assert!(t.is_empty());
    assert_eq!(t.total.count, 0);
}

#[test]
fn missing_price_is_flagged_not_summed() {
    let map = AddressMap::builtin();
    let mut records: Vec<_> = (0..5).map(|_| record(&[KYBER], "DAI", 10.0, 1.0)).collect();
    records.push(record(&[KYBER], "XYZ", 1e9, 1.0));
    let t = aggregate(records.iter().enumerate(), &map, &PriceTable::default());
    assert_eq!(t.rows[0].platforms, "Kyber");
    assert_eq!(t.rows[0].count, 6);
    assert_eq!(t.rows[0].amount_usd, 50.0);
    assert_eq!(t.rows[0].missing_price, 1);
    assert!(t.to_text().contains("(1 unpriced)"));
}

#[test]
fn bad_record_does_not_stop_processing() {
    let text = format!(
        "{}\nnot json\n{}\n{{\"tx\":\"t\",\"touched\":[],\"asset\":\"ETH\",\"amount\":-1,\"gas\":0}}\n",
        serde_json::to_string(&record(&[AAVE], "ETH", 1.0, 5.0)).unwrap(),
        serde_json::to_string(&record(&["0xnope"], "ETH", 1.0, 5.0)).unwrap(),
    );
    let (records, mut errors) = parse_records(&text);
    assert_eq!(records.len(), 2);
    assert_eq!(
        errors.iter().map(|e| e.line).collect::<Vec<_>>(),
        vec![2, 4]
    );
    let t = aggregate(
        records.iter().map(|(l, r)| (*l, r)),
        &AddressMap::builtin(),
        &PriceTable::default(),
    );
    assert_eq!(t.total.count, 1);
    errors.extend(t.errors);
    assert_eq!(errors.len(), 3);
}

#[test]
fn prices_must_be_positive() {
    assert!(PriceTable::from_json(r#"{"ETH": 0}"#).is_err());
    assert_eq!(
        PriceTable::from_json(r#"{"ETH": 400}"#).unwrap().get("ETH"),
        Some(400.0)
    );
    assert_eq!(PriceTable::default().get("WBTC"), Some(10_000.0));
}

#[test]
fn wash_cost_examples() {
    assert_eq!(wash_trading_cost(0.0, 0.003, 0.0009, 0.5, 4).unwrap(), 2.0);
    assert_relative_eq!(
        wash_trading_cost(481_893.0, 0.003, 0.0, 0.01, 1).unwrap(),
        1_445.69,
        epsilon = 5e-3
    );
    assert!(wash_trading_cost(1.0, 1.0, 0.0, 0.0, 1).is_err());
}

fn arb_record() -> impl Strategy<Value = LoanRecord> {
    let addrs = prop::sample::subsequence(vec![AAVE, UNISWAP, KYBER, STRANGER], 0..=4);
    (
        addrs,
        prop::sample::select(vec!["ETH", "DAI", "XYZ"]),
        0.0f64..1e6,
        0.0f64..5e6,
    )
        .prop_map(|(a, asset, amount, gas)| record(&a, asset, amount, gas))
}

proptest! {
    #[test]
    fn classify_ignores_order_and_repeats(r in arb_record(), seed in any::<u64>()) {
        let map = AddressMap::builtin();
        let mut shuffled = r.clone();
        shuffled.touched.extend(r.touched.clone());
        let n = shuffled.touched.len();
        if n > 0 {
            shuffled.touched.rotate_left(seed as usize % n);
        }
        prop_assert_eq!(classify(&r, &map).unwrap(), classify(&shuffled, &map).unwrap());
    }

    #[test]
    fn total_is_column_sum(records in prop::collection::vec(arb_record(), 0..60)) {
        let t = aggregate(records.iter().enumerate(), &AddressMap::builtin(), &PriceTable::default());
        prop_assert_eq!(t.rows.iter().map(|r| r.count).sum::<u64>(), t.total.count);
        prop_assert_eq!(t.rows.iter().map(|r| r.missing_price).sum::<u64>(), t.total.missing_price);
        let usd: f64 = t.rows.iter().map(|r| r.amount_usd).sum();
        prop_assert!((usd - t.total.amount_usd).abs() <= 1e-9 * t.total.amount_usd.max(1.0));
    }

    #[test]
    fn sharded_merge_matches_single_pass(records in prop::collection::vec(arb_record(), 0..60), cut in 0usize..60) {
        let (map, prices) = (AddressMap::builtin(), PriceTable::default());
        let whole = aggregate(records.iter().enumerate(), &map, &prices);
        let cut = cut.min(records.len());
        let mut left = UsageAccumulator::default();
        let mut right = UsageAccumulator::default();
        for (k, r) in records.iter().enumerate() {
            if k < cut { left.add(k, r, &map, &prices) } else { right.add(k, r, &map, &prices) }
        }
        right.merge(left);
        let merged = right.finish();
        prop_assert_eq!(merged.rows.len(), whole.rows.len());
        for (a, b) in merged.rows.iter().zip(&whole.rows) {
            prop_assert_eq!(&a.platforms, &b.platforms);
            prop_assert_eq!(a.count, b.count);
            prop_assert!((a.gas_mean - b.gas_mean).abs() <= 1e-9 * b.gas_mean.max(1.0));
            prop_assert!((a.gas_std - b.gas_std).abs() <= 1e-6 * b.gas_mean.max(1.0));
        }
    }

    #[test]
    fn wash_cost_is_linear(v in 0.0f64..1e8, dex in 0.0f64..0.1, loan in 0.0f64..0.1, gas in 0.0f64..100.0, n in 0u64..100) {
        let base = wash_trading_cost(0.0, dex, loan, gas, n).unwrap();
        let one = wash_trading_cost(v, dex, loan, gas, n).unwrap() - base;
        let two = wash_trading_cost(2.0 * v, dex, loan, gas, n).unwrap() - base;
        prop_assert!((two - 2.0 * one).abs() <= 1e-9 * two.max(1.0));
        prop_assert!(wash_trading_cost(v + 1.0, dex, loan, gas, n).unwrap() >= wash_trading_cost(v, dex, loan, gas, n).unwrap());
    }
}
