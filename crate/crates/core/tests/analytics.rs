use approx::assert_relative_eq;
use flashopt::analytics::{aggregate, parse_records, AddressMap, PriceTable};

const CORPUS: &str = include_str!("data/usage_corpus.jsonl");

#[test]
fn corpus_matches_hand_computed_table() {
    let (records, parse_errors) = parse_records(CORPUS);
    assert!(parse_errors.is_empty());
    assert_eq!(records.len(), 100);
    let t = aggregate(
        records.iter().map(|(l, r)| (*l, r)),
        &AddressMap::builtin(),
        &PriceTable::default(),
    );

    let expected: [(&str, u64, f64, f64, f64, u64); 7] = [
        (
            "Kyber + MakerDAO + Uniswap",
            30,
            465_000.0,
            1_145_000.0,
            86_554.4144839919,
            0,
        ),
        (
            "Aave + Compound",
            25,
            113_750.0,
            512_000.0,
            7_211.102550927979,
            0,
        ),
        ("Uniswap", 20, 100_000.0, 225_000.0, 25_000.0, 0),
        ("Compound", 7, 0.0, 150_000.0, 0.0, 7),
        ("None", 5, 5_000.0, 21_000.0, 0.0, 0),
        ("Others", 10, 70_000.0, 360_000.0, 48_989.79485566356, 0),
        (
            "Total",
            97,
            753_750.0,
            581_494.8453608247,
            403_794.9904386217,
            7,
        ),
    ];
    let rows: Vec<_> = t.rows.iter().chain(std::iter::once(&t.total)).collect();
    assert_eq!(rows.len(), expected.len());
    for (row, (name, count, usd, mean, std, missing)) in rows.iter().zip(expected) {
        assert_eq!(row.platforms, name);
        assert_eq!(row.count, count, "{name}");
        assert_relative_eq!(row.amount_usd, usd, max_relative = 1e-12);
        assert_relative_eq!(row.gas_mean, mean, max_relative = 1e-12);
        assert_relative_eq!(row.gas_std, std, max_relative = 1e-9, epsilon = 1e-6);
        assert_eq!(row.missing_price, missing, "{name}");
    }
    assert_eq!(
        t.errors.iter().map(|e| e.line).collect::<Vec<_>>(),
        vec![27, 64, 90]
    );
}

#[test]
fn csv_round_trip_keeps_counts() {
    let (records, _) = parse_records(CORPUS);
    let t = aggregate(
        records.iter().map(|(l, r)| (*l, r)),
        &AddressMap::builtin(),
        &PriceTable::default(),
    );
    let csv = t.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("platforms,count,amount_usd,gas_mean,gas_std,missing_price")
    );
    let counts: Vec<u64> = lines
        .map(|l| l.rsplit(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts, vec![30, 25, 20, 7, 5, 10, 97]);
}

#[test]
fn bundled_map_resolves_aave() {
    let map = AddressMap::builtin();
    assert_eq!(
        map.lookup("0x398eC7346DcD622eDc5ae82352F02bE94C62d119")
            .unwrap(),
        Some("Aave")
    );
}
