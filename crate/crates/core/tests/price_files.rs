use std::fs::File;

use metafolio::backtest::{generate_synthetic_market, RegimeSpec};
use metafolio::market_data::{load_prices, read_prices, write_prices};
use metafolio::MarketSpec;

fn spec() -> MarketSpec {
    MarketSpec {
        assets: vec!["AAA".into(), "BBB".into(), "CCC".into()],
        regimes: vec![RegimeSpec {
            name: "only".into(),
            mean: vec![1e-4, 2e-4, -1e-4],
            covariance: vec![vec![1e-4, 2e-5, 0.0], vec![2e-5, 2e-4, 0.0], vec![0.0, 0.0, 5e-5]],
            min_duration: 10,
            max_duration: 10,
        }],
        days: 120,
        start: chrono::NaiveDate::from_ymd_opt(2011, 3, 4).unwrap(),
        initial_price: 20.0,
    }
}

#[test]
fn written_prices_load_back_exactly() {
    let market = generate_synthetic_market(&spec(), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prices.csv");
    write_prices(&market.prices, File::create(&path).unwrap()).unwrap();

    let all = read_prices(File::open(&path).unwrap()).unwrap();
    assert_eq!(all, market.prices);

    let picked = load_prices(&path, &["CCC".to_string(), "AAA".to_string()]).unwrap();
    assert_eq!(picked, market.prices.select(&["CCC".to_string(), "AAA".to_string()]).unwrap());
    assert_eq!(picked.len(), 120);
}

#[test]
fn synthetic_files_are_byte_stable() {
    let render = |seed| {
        let mut buf = Vec::new();
        write_prices(&generate_synthetic_market(&spec(), seed).unwrap().prices, &mut buf).unwrap();
        buf
    };
    assert_eq!(render(8), render(8));
    assert_ne!(render(8), render(9));
    let text = String::from_utf8(render(8)).unwrap();
    assert!(text.starts_with("date,ticker,price\n2011-03-04,AAA,20\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 120);
}
