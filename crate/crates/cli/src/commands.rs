use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use metafolio::backtest::{
    compare_strategies, generate_synthetic_market, run_universes, strategy_density_surface, write_density_csv,
    write_importances_csv, write_report_features_csv, write_wealth_csv,
};
use metafolio::market_data::{compute_returns, load_prices, write_prices};
use metafolio::{BacktestReport, Error, MarketSpec, SignificanceSummary, SignificanceTest};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const THREADS_VAR: &str = "METAFOLIO_THREADS";

/// A command outcome other than success, carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Findings(Vec<String>),
    Config(String),
    Data(String),
    Internal(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Findings(_) => 1,
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Internal(_) => 4,
        }
    }

    pub fn report(&self) {
        match self {
            Failure::Findings(lines) => {
                for l in lines {
                    eprintln!("finding: {l}");
                }
            }
            Failure::Config(m) => eprintln!("config error: {m}"),
            Failure::Data(m) => eprintln!("data error: {m}"),
            Failure::Internal(m) => eprintln!("internal error: {m}"),
        }
    }
}

fn classify(e: Error) -> Failure {
    match e {
        Error::UnknownAsset(_)
        | Error::NoOverlappingDates
        | Error::InvalidPrice { .. }
        | Error::DuplicateRow { .. }
        | Error::Parse { .. }
        | Error::Io(_)
        | Error::InsufficientHistory { .. }
        | Error::InsufficientAssets { .. }
        | Error::DegenerateVariance { .. } => Failure::Data(e.to_string()),
        Error::InvalidConfig(m) | Error::InvalidSpec(m) => Failure::Config(m),
        other => Failure::Internal(other.to_string()),
    }
}

fn internal(context: &str) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Internal(format!("{context}: {e}"))
}

/// Reads and parses the config; the returned directory anchors relative paths.
pub fn load_config(path: &Path) -> Result<(RunConfig, String, PathBuf), Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = RunConfig::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, text, base))
}

/// Sizes the global worker pool from `METAFOLIO_THREADS` when set.
pub fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Config(format!("{THREADS_VAR} must be a positive integer, got `{raw}`")))?;
    // A pool already built (e.g. by an earlier call) keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn validate(config: &Path) -> Result<(), Failure> {
    let (cfg, _, _) = load_config(config)?;
    let findings = cfg.findings();
    if findings.is_empty() {
        println!("{}: ok ({} universes)", config.display(), cfg.universes.len());
        Ok(())
    } else {
        Err(Failure::Findings(findings))
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    version: &'static str,
    config_sha256: String,
    seed: u64,
    config: &'a RunConfig,
    universes: &'a [BacktestReport],
    significance: Option<SignificanceSummary>,
}

pub const OUTPUT_FILES: [&str; 5] = ["report.json", "wealth.csv", "features.csv", "importances.csv", "density.csv"];

pub fn run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let (cfg, text, base) = load_config(config)?;
    let findings = cfg.findings();
    if !findings.is_empty() {
        return Err(Failure::Config(findings.join("; ")));
    }
    configure_threads()?;
    let seed = seed.unwrap_or(cfg.seed);
    let data = RunConfig::resolve(&base, &cfg.data);
    let out_dir = out.unwrap_or_else(|| RunConfig::resolve(&base, &cfg.output));

    let mut panels = Vec::with_capacity(cfg.universes.len());
    for u in &cfg.universes {
        let prices = load_prices(&data, &u.tickers)
            .map_err(|e| Failure::Data(format!("universe {}: {}: {e}", u.universe_id, data.display())))?;
        let returns = compute_returns(&prices).map_err(|e| Failure::Data(format!("universe {}: {e}", u.universe_id)))?;
        log::info!("universe {}: {} return rows, {} assets", u.universe_id, returns.len(), returns.n_assets());
        panels.push((u.universe_id, returns));
    }

    let backtest = cfg.backtest();
    let mut reports = Vec::with_capacity(panels.len());
    for (id, result) in run_universes(&panels, &backtest, seed) {
        let report = result.map_err(|e| match classify(e) {
            Failure::Data(m) => Failure::Data(format!("universe {id}: {m}")),
            Failure::Config(m) => Failure::Config(format!("universe {id}: {m}")),
            other => other,
        })?;
        for f in &report.fallbacks {
            log::warn!("universe {id} {}: {} fell back: {}", f.date, f.component, f.message);
        }
        reports.push(report);
    }
    let significance = if reports.len() >= 2 {
        Some(compare_strategies(&reports, cfg.significance).map_err(classify)?)
    } else {
        None
    };

    let mut surfaces = Vec::with_capacity(reports.len());
    for r in &reports {
        let bucket = cfg.density_bucket.min(r.daily.mpm.len());
        surfaces.push((r.universe_id, strategy_density_surface(r, bucket).map_err(classify)?));
    }

    fs::create_dir_all(&out_dir).map_err(internal("creating output directory"))?;
    let create = |name: &str| -> Result<BufWriter<File>, Failure> {
        let path = out_dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Failure::Internal(format!("creating {}: {e}", path.display())))
    };

    let provenance = RunReport {
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect(),
        seed,
        config: &cfg,
        universes: &reports,
        significance: significance.clone(),
    };
    let mut json = create(OUTPUT_FILES[0])?;
    serde_json::to_writer_pretty(&mut json, &provenance).map_err(|e| Failure::Internal(e.to_string()))?;
    json.write_all(b"\n").map_err(internal("writing report.json"))?;
    json.flush().map_err(internal("writing report.json"))?;
    write_wealth_csv(&reports, create(OUTPUT_FILES[1])?).map_err(classify)?;
    write_report_features_csv(&reports, create(OUTPUT_FILES[2])?).map_err(classify)?;
    write_importances_csv(&reports, create(OUTPUT_FILES[3])?).map_err(classify)?;
    write_density_csv(&surfaces, create(OUTPUT_FILES[4])?).map_err(classify)?;

    print!("{}", summary_table(&reports));
    if let Some(s) = &significance {
        print!("{}", significance_table(s));
    }
    println!("wrote {}", out_dir.display());
    Ok(out_dir)
}

pub fn summary_table(reports: &[BacktestReport]) -> String {
    let mut s = format!(
        "{:>8} | {:>8} {:>8} {:>8} | {:>9} {:>9} {:>9}\n",
        "universe", "HRP", "NRP", "MPM", "HRP", "NRP", "MPM"
    );
    s.push_str(&format!("{:>8} | {:^26} | {:^29}\n", "", "Sharpe", "cumulative return"));
    for r in reports {
        let m = &r.metrics;
        s.push_str(&format!(
            "{:>8} | {:>8.3} {:>8.3} {:>8.3} | {:>8.1}% {:>8.1}% {:>8.1}%\n",
            r.universe_id,
            m.hrp.sharpe,
            m.nrp.sharpe,
            m.mpm.sharpe,
            100.0 * m.hrp.cumulative_return,
            100.0 * m.nrp.cumulative_return,
            100.0 * m.mpm.cumulative_return,
        ));
    }
    s
}

pub fn significance_table(summary: &SignificanceSummary) -> String {
    let test = match summary.test {
        SignificanceTest::PairedT => "paired one-sided t-test",
        SignificanceTest::Wilcoxon => "one-sided Wilcoxon signed-rank",
    };
    let mut s = format!("MPM minus baseline, {test}\n");
    for c in &summary.comparisons {
        s.push_str(&format!(
            "  vs {:<3} {:<17} mean {:>+9.4}  stat {:>8.3}  p {:.4}\n",
            c.baseline.to_uppercase(),
            c.metric,
            c.mean_delta,
            c.outcome.statistic,
            c.outcome.p_value
        ));
    }
    s
}

/// Spec files ending in `.json` are JSON; anything else is TOML.
pub fn read_market_spec(path: &Path) -> Result<MarketSpec, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

pub fn synth(spec: &Path, seed: u64, out: &Path) -> Result<(), Failure> {
    let spec = read_market_spec(spec)?;
    let market = generate_synthetic_market(&spec, seed).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(internal("creating output directory"))?;
    }
    let file = File::create(out).map_err(|e| Failure::Internal(format!("creating {}: {e}", out.display())))?;
    write_prices(&market.prices, BufWriter::new(file)).map_err(classify)?;
    println!(
        "wrote {} ({} days, {} assets)",
        out.display(),
        market.prices.len(),
        market.prices.n_assets()
    );
    Ok(())
}
