use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use flashopt::scenario::Scenario;
use flashopt::vector::{
    build_oracle_vector_with, build_paa_vector, AttackVector, BorrowCapMode, OracleOptions,
    PriceSource,
};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriceArg {
    /// Collateral valued at the AMM spot price after the pump.
    Amm,
    /// Collateral valued at the lower of the AMM and reserve prices.
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapArg {
    Residual,
    Ignore,
    HardCap,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VectorArgs {
    /// Scenario JSON file, or the name of a bundled scenario (paa, oracle).
    #[arg(long)]
    pub scenario: String,
    /// Bundled vector name (paa, oracle) or a vector JSON file.
    #[arg(long)]
    pub vector: String,
    /// Drop constraints whose description starts with NAME (e.g. zY).
    #[arg(long = "ignore-constraint", value_name = "NAME")]
    pub ignore: Vec<String>,
    /// Tighten a parameter's upper bound, e.g. p2=1344.
    #[arg(long, value_name = "PARAM=VALUE", value_parser = parse_bound)]
    pub upper: Vec<(String, f64)>,
    /// Collateral price for the bundled oracle vector.
    #[arg(long, value_enum, default_value_t = PriceArg::Amm)]
    pub oracle_price: PriceArg,
    /// Borrow-capacity handling for the bundled oracle vector.
    #[arg(long, value_enum, default_value_t = CapArg::Residual)]
    pub borrow_cap: CapArg,
}

fn parse_bound(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected PARAM=VALUE")?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|e| format!("bad bound `{value}`: {e}"))?;
    if !value.is_finite() {
        return Err("bound must be finite".into());
    }
    Ok((name.trim().to_string(), value))
}

pub struct Loaded {
    pub scenario: Scenario,
    pub vector: AttackVector,
    /// Canonical scenario and vector JSON, hashed into reports.
    pub scenario_json: String,
    pub vector_json: String,
}

pub fn load_scenario(spec: &str) -> Result<Scenario> {
    let path = Path::new(spec);
    if path.exists() {
        return Scenario::load(path).with_context(|| format!("scenario {spec}"));
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(spec);
    if Scenario::builtin_source(stem).is_some()
        && path.parent().is_none_or(|p| p.as_os_str().is_empty())
    {
        return Ok(Scenario::builtin(stem)?);
    }
    bail!("scenario {spec}: no such file or bundled scenario")
}

pub fn load_vector(args: &VectorArgs) -> Result<Loaded> {
    let scenario = load_scenario(&args.scenario)?;
    let oracle_options = OracleOptions {
        price: match args.oracle_price {
            PriceArg::Amm => PriceSource::AmmSpot,
            PriceArg::Min => PriceSource::MinOfAmmAndReserve,
        },
        borrow_cap: match args.borrow_cap {
            CapArg::Residual => BorrowCapMode::Residual,
            CapArg::Ignore => BorrowCapMode::Ignore,
            CapArg::HardCap => BorrowCapMode::HardCap,
        },
    };
    let is_oracle = args.vector == "oracle";
    if !is_oracle && oracle_options != OracleOptions::default() {
        bail!("--oracle-price and --borrow-cap only apply to the bundled oracle vector");
    }
    let mut vector = match args.vector.as_str() {
        "paa" => build_paa_vector(&scenario)?,
        "oracle" => build_oracle_vector_with(&scenario, oracle_options)?,
        file => AttackVector::load(file).with_context(|| format!("vector {file}"))?,
    };
    for name in &args.ignore {
        let before = vector.constraints.len();
        vector
            .constraints
            .retain(|c| c.description.split_whitespace().next() != Some(name.as_str()));
        if vector.constraints.len() == before {
            bail!("--ignore-constraint {name}: no constraint starts with `{name}`");
        }
    }
    for (name, value) in &args.upper {
        let Some(p) = vector.params.iter_mut().find(|p| &p.name == name) else {
            bail!("--upper {name}: unknown parameter");
        };
        if *value < p.lower {
            bail!("--upper {name}={value}: below the lower bound {}", p.lower);
        }
        p.upper = p.upper.min(*value);
    }
    vector.validate(&scenario.state)?;
    Ok(Loaded {
        scenario_json: scenario.to_json(),
        vector_json: vector.to_json(),
        scenario,
        vector,
    })
}
