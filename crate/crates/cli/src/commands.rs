use std::io::Read;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use flashopt::analytics::{aggregate, parse_records, AddressMap, PriceTable};
use flashopt::atomicity::{
    optimal_budget, rows_to_csv, sweep, StreamSource, SweepConfig, SyntheticSpec, TradeStream,
    TwoExchangeMarket,
};
use flashopt::models::STRICT_TOLERANCE;
use flashopt::optimizer::{
    binding_constraints, grid_oracle, solve, OptimizationResult, SolverConfig, VectorProblem,
};
use flashopt::vector::{evaluate, list_constraints};
use serde_json::{json, Value};

use crate::inputs::{load_scenario, load_vector, CapArg, PriceArg, VectorArgs};
use crate::report::RunReport;

pub struct Invocation {
    pub argv: Vec<String>,
    pub seed: u64,
    pub strict: bool,
}

pub struct Outcome {
    pub report: RunReport,
    pub text: String,
    pub csv: String,
    pub exit: u8,
}

/// Columns holding any number are right-aligned, text columns left-aligned.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    let mut numeric = vec![false; header.len()];
    for row in rows {
        for (k, c) in row.iter().enumerate() {
            widths[k] = widths[k].max(c.len());
            numeric[k] |= c.parse::<f64>().is_ok();
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (k, c) in cells.iter().enumerate() {
            let sep = if k == 0 { "" } else { "  " };
            let w = widths[k];
            if numeric[k] {
                s.push_str(&format!("{sep}{c:>w$}"));
            } else {
                s.push_str(&format!("{sep}{c:<w$}"));
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

fn csv_lines(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub vector: VectorArgs,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Finite-difference step in parameter units.
    #[arg(long, default_value_t = 1e-4)]
    pub fd_step: f64,
    #[arg(long, default_value_t = 16)]
    pub starts: usize,
    /// Grid points per axis for the brute-force check (0 disables it).
    /// Defaults to 200 for up to two parameters and 60 for three.
    #[arg(long)]
    pub grid_res: Option<usize>,
    /// Largest tolerated relative shortfall of the solver against the grid.
    #[arg(long, default_value_t = 0.02)]
    pub agree_tol: f64,
}

fn result_row(r: &OptimizationResult) -> Vec<String> {
    let mut row = vec![r.method.clone(), format!("{:.6}", r.best_objective)];
    row.extend(r.best_params.iter().map(|p| format!("{p:.6}")));
    row.push(format!("{:.3e}", r.worst_residual));
    row.push(if r.feasible { "yes" } else { "no" }.into());
    row.push(r.iterations.to_string());
    row
}

pub fn optimize(ctx: &Invocation, args: &OptimizeArgs) -> Result<Outcome> {
    let loaded = load_vector(&args.vector)?;
    let (vector, state) = (&loaded.vector, &loaded.scenario.state);
    let config = SolverConfig {
        max_iterations: args.max_iter,
        tolerance: args.tol,
        fd_step: args.fd_step,
        starts: args.starts,
        seed: ctx.seed,
        ..SolverConfig::default()
    };
    config.validate()?;
    let problem = VectorProblem::new(vector, state)?;
    let n = vector.n_params();
    let grid_res = args.grid_res.unwrap_or(if n <= 2 { 200 } else { 60 });
    if n > 3 && args.grid_res.is_some_and(|r| r > 0) {
        bail!("--grid-res needs at most 3 parameters, the vector has {n}");
    }

    let result = solve(&problem, &config)?;
    let grid = if grid_res > 0 && n <= 3 {
        Some(grid_oracle(
            &problem,
            grid_res,
            config.feasibility_tolerance,
        )?)
    } else {
        None
    };
    let trace = evaluate(vector, state, &result.best_params)?;
    let strict_violation = trace.min_constraint() < -STRICT_TOLERANCE;
    let binding = binding_constraints(&problem, &result, 1e-6);

    let mut notes = Vec::new();
    let agreement = grid.as_ref().map(|g| {
        let gap = (g.best_objective - result.best_objective) / g.best_objective.abs().max(1.0);
        if gap > args.agree_tol {
            notes.push(format!(
                "solver objective is {:.2}% below the grid; treat the solver result with suspicion",
                100.0 * gap
            ));
        }
        json!({ "relative_gap": gap, "tolerance": args.agree_tol, "agree": gap <= args.agree_tol })
    });
    if !result.feasible {
        notes.push("no feasible point found".into());
    }
    if ctx.strict && strict_violation {
        notes.push(format!(
            "strict mode: a constraint is below -{STRICT_TOLERANCE:e} at the reported point"
        ));
    }
    let names: Vec<&str> = vector.params.iter().map(|p| p.name.as_str()).collect();
    for &j in &binding {
        let c = &vector.constraints[j];
        if c.description.starts_with("zY ") {
            notes.push(format!(
                "binding borrow cap `{}`: the optimum borrows the lending pool's entire available debt; \
                 without the cap (--ignore-constraint zY) the optimum moves and overdraws the pool",
                c.description
            ));
        }
    }

    let results = json!({
        "vector": vector.name,
        "scenario": loaded.scenario.name,
        "params": names,
        "solver": config,
        "sqp": result,
        "grid": grid,
        "agreement": agreement,
        "trace_objective": trace.objective,
        "binding": binding.iter().map(|&j| vector.constraints[j].description.clone()).collect::<Vec<_>>(),
        "notes": notes,
    });
    let exit = if !result.feasible || (ctx.strict && strict_violation) {
        1
    } else {
        0
    };

    let mut header = vec!["method", "objective"];
    header.extend(&names);
    header.extend(["worst_residual", "feasible", "iterations"]);
    let mut rows = vec![result_row(&result)];
    rows.extend(grid.iter().map(result_row));
    let mut text = format!(
        "optimize {} on scenario {}: {} parameters, {} constraints, {} starts\n",
        vector.name,
        loaded.scenario.name,
        n,
        vector.constraints.len(),
        result.starts_tried
    );
    text.push_str(&table(&header, &rows));
    if let Some(a) = &agreement {
        text.push_str(&format!(
            "grid gap: {:.4}% (tolerance {:.2}%)\n",
            100.0 * a["relative_gap"].as_f64().unwrap_or(0.0),
            100.0 * args.agree_tol
        ));
    }
    for &j in &binding {
        text.push_str(&format!("binding: {}\n", vector.constraints[j].description));
    }
    for note in &notes {
        text.push_str(&format!("note: {note}\n"));
    }

    let config_value = json!({ "command": "optimize", "args": args.vector, "solver": config, "grid_res": grid_res, "agree_tol": args.agree_tol });
    let report = RunReport::new(
        ctx.argv.clone(),
        &config_value,
        &[
            loaded.scenario_json.as_bytes(),
            loaded.vector_json.as_bytes(),
        ],
        results,
    );
    Ok(Outcome {
        report,
        text,
        csv: csv_lines(&header, &rows),
        exit,
    })
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub vector: VectorArgs,
    /// Comma-separated parameter values.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub params: Vec<f64>,
}

pub fn evaluate_cmd(ctx: &Invocation, args: &EvaluateArgs) -> Result<Outcome> {
    let loaded = load_vector(&args.vector)?;
    let (scenario, vector) = (&loaded.scenario, &loaded.vector);
    let trace = evaluate(vector, &scenario.state, &args.params)?;
    let trader = &vector.trader;
    let violated = |v: f64| v < -STRICT_TOLERANCE;

    let step_names: Vec<String> = std::iter::once("initial".to_string())
        .chain(vector.steps.iter().map(|s| s.name.clone()))
        .collect();
    let balances: Vec<Value> = trace
        .states
        .iter()
        .zip(&step_names)
        .enumerate()
        .map(|(i, (s, name))| {
            let b: serde_json::Map<String, Value> = scenario
                .assets
                .iter()
                .map(|a| (a.to_string(), json!(s.balance(trader, a))))
                .collect();
            json!({ "state": i, "step": name, "balances": b })
        })
        .collect();
    let constraints: Vec<Value> = vector
        .constraints
        .iter()
        .zip(&trace.constraints)
        .map(|(c, v)| json!({ "description": c.description, "value": v, "violated": violated(*v) }))
        .collect();
    let any_violation = trace
        .constraints
        .iter()
        .chain(trace.residuals.iter().map(|r| &r.value))
        .any(|v| violated(*v));
    let results = json!({
        "vector": vector.name,
        "scenario": scenario.name,
        "params": args.params,
        "states": balances,
        "residuals": trace.residuals,
        "constraints": constraints,
        "objective": trace.objective,
        "violated": any_violation,
    });

    let mut header = vec!["state", "step"];
    let asset_names: Vec<String> = scenario.assets.iter().map(|a| a.to_string()).collect();
    header.extend(asset_names.iter().map(String::as_str));
    let state_rows: Vec<Vec<String>> = trace
        .states
        .iter()
        .zip(&step_names)
        .enumerate()
        .map(|(i, (s, name))| {
            let mut row = vec![format!("S{i}"), name.clone()];
            row.extend(
                scenario
                    .assets
                    .iter()
                    .map(|a| format!("{:.6}", s.balance(trader, a))),
            );
            row
        })
        .collect();
    let mark = |v: f64| if violated(v) { "  VIOLATED" } else { "" };
    let residual_rows: Vec<Vec<String>> = trace
        .residuals
        .iter()
        .map(|r| {
            vec![
                r.step.to_string(),
                r.call.to_string(),
                r.kind.to_string(),
                format!("{:.6}{}", r.value, mark(r.value)),
            ]
        })
        .collect();
    let constraint_rows: Vec<Vec<String>> = vector
        .constraints
        .iter()
        .zip(&trace.constraints)
        .enumerate()
        .map(|(j, (c, v))| {
            vec![
                j.to_string(),
                c.description.clone(),
                format!("{v:.6}{}", mark(*v)),
            ]
        })
        .collect();
    let mut text = format!(
        "evaluate {} on scenario {} at {:?}\n\n",
        vector.name, scenario.name, args.params
    );
    text.push_str(&format!("balances of {trader}\n"));
    text.push_str(&table(&header, &state_rows));
    text.push_str("\nresiduals\n");
    text.push_str(&table(&["step", "call", "kind", "value"], &residual_rows));
    text.push_str("\nconstraints\n");
    text.push_str(&table(&["#", "description", "value"], &constraint_rows));
    text.push_str(&format!("\nobjective: {:.6}\n", trace.objective));

    let mut csv_rows: Vec<Vec<String>> = Vec::new();
    for (i, s) in trace.states.iter().enumerate() {
        for a in &scenario.assets {
            csv_rows.push(vec![
                "balance".into(),
                i.to_string(),
                a.to_string(),
                s.balance(trader, a).to_string(),
            ]);
        }
    }
    for r in &trace.residuals {
        csv_rows.push(vec![
            "residual".into(),
            r.step.to_string(),
            r.kind.to_string(),
            r.value.to_string(),
        ]);
    }
    for (c, v) in vector.constraints.iter().zip(&trace.constraints) {
        csv_rows.push(vec![
            "constraint".into(),
            String::new(),
            c.description.clone(),
            v.to_string(),
        ]);
    }
    csv_rows.push(vec![
        "objective".into(),
        String::new(),
        String::new(),
        trace.objective.to_string(),
    ]);

    let exit = if ctx.strict && any_violation { 1 } else { 0 };
    let config_value = json!({ "command": "evaluate", "args": args.vector, "params": args.params, "strict": ctx.strict });
    let report = RunReport::new(
        ctx.argv.clone(),
        &config_value,
        &[
            loaded.scenario_json.as_bytes(),
            loaded.vector_json.as_bytes(),
        ],
        results,
    );
    Ok(Outcome {
        report,
        text,
        csv: csv_lines(&["section", "index", "name", "value"], &csv_rows),
        exit,
    })
}

#[derive(Debug, Clone, Args)]
pub struct AtomicityArgs {
    /// Two-exchange market JSON; defaults to the bundled DAI/ETH market.
    #[arg(long)]
    pub market: Option<PathBuf>,
    /// Replay this trace instead of generating random intermediary trades.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Median synthetic trade size as a fraction of the mean pool reserves.
    #[arg(long, default_value_t = 1e-3)]
    pub fraction: f64,
    /// Log-normal shape of synthetic trade sizes.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Comma-separated intermediary counts.
    #[arg(long = "i", value_delimiter = ',', default_value = "0,10,100,1000")]
    pub i_values: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// First-leg input in X, or `optimal` for the profit-maximizing size.
    #[arg(long, default_value = "5")]
    pub budget: String,
    #[arg(long, default_value_t = 2000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

pub fn atomicity(ctx: &Invocation, args: &AtomicityArgs) -> Result<Outcome> {
    let (market, market_text) = match &args.market {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("market {}", p.display()))?;
            (
                TwoExchangeMarket::from_json(&text)
                    .with_context(|| format!("market {}", p.display()))?,
                text,
            )
        }
        None => {
            let m = TwoExchangeMarket::builtin();
            let text = serde_json::to_string(&m)?;
            (m, text)
        }
    };
    let budget = match args.budget.as_str() {
        "optimal" => {
            let b = optimal_budget(&market);
            if b <= 0.0 {
                bail!("--budget optimal: the pools show no price gap");
            }
            b
        }
        s => s.parse::<f64>().with_context(|| format!("--budget {s}"))?,
    };
    let (source, trace_text) = match &args.trace {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("trace {}", p.display()))?;
            (
                StreamSource::Replay(
                    TradeStream::parse(&text).with_context(|| format!("trace {}", p.display()))?,
                ),
                text,
            )
        }
        None => {
            let spec = SyntheticSpec::for_market(&market, args.fraction, args.sigma);
            spec.validate()?;
            (StreamSource::Synthetic(spec), String::new())
        }
    };
    let config = SweepConfig {
        trials: args.trials,
        seed: ctx.seed,
        resamples: args.resamples,
        level: args.level,
    };
    let rows = sweep(&market, budget, &source, &args.i_values, &config)?;

    let text_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.i.to_string(),
                format!("{:.6e}", r.mean),
                format!("{:.6e}", r.ci_low),
                format!("{:.6e}", r.ci_high),
                r.trials.to_string(),
            ]
        })
        .collect();
    let mode = if args.trace.is_some() {
        "replayed trace"
    } else {
        "synthetic random walk"
    };
    let mut text = format!(
        "profit difference (units of {}) for budget {budget} over a {mode}, {:.0}% bootstrap interval\n",
        market.exchange_a.asset_x,
        100.0 * args.level
    );
    text.push_str(&table(
        &["i", "mean", "ci_low", "ci_high", "trials"],
        &text_rows,
    ));

    let results = json!({ "budget": budget, "mode": mode, "rows": rows });
    let config_value = json!({
        "command": "atomicity",
        "fraction": args.fraction,
        "sigma": args.sigma,
        "i": args.i_values,
        "trials": args.trials,
        "budget": budget,
        "resamples": args.resamples,
        "level": args.level,
        "seed": ctx.seed,
    });
    let report = RunReport::new(
        ctx.argv.clone(),
        &config_value,
        &[market_text.as_bytes(), trace_text.as_bytes()],
        results,
    );
    Ok(Outcome {
        report,
        text,
        csv: rows_to_csv(&rows),
        exit: 0,
    })
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    /// JSON-lines loan records; reads standard input when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `address,project` lines; defaults to the bundled map.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// JSON object of asset symbol to USD price.
    #[arg(long)]
    pub prices: Option<PathBuf>,
}

pub fn classify(ctx: &Invocation, args: &ClassifyArgs) -> Result<Outcome> {
    let input = match &args.input {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("input {}", p.display()))?,
        None => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .context("reading standard input")?;
            s
        }
    };
    let map = match &args.map {
        Some(p) => AddressMap::load(p)?,
        None => AddressMap::builtin(),
    };
    let prices = match &args.prices {
        Some(p) => PriceTable::load(p)?,
        None => PriceTable::default(),
    };
    let (records, mut errors) = parse_records(&input);
    let mut usage = aggregate(records.iter().map(|(l, r)| (*l, r)), &map, &prices);
    errors.append(&mut usage.errors);
    errors.sort_by_key(|e| e.line);
    usage.errors = errors;

    let mut text = usage.to_text();
    for e in &usage.errors {
        text.push_str(&format!("skipped line {}: {}\n", e.line, e.message));
    }
    let results = serde_json::to_value(&usage)?;
    let config_value = json!({ "command": "classify", "map_entries": map.len(), "prices": prices });
    let report = RunReport::new(
        ctx.argv.clone(),
        &config_value,
        &[input.as_bytes()],
        results,
    );
    Ok(Outcome {
        report,
        csv: usage.to_csv(),
        text,
        exit: 0,
    })
}

#[derive(Debug, Clone, Args)]
pub struct DescribeArgs {
    /// Scenario JSON file, or the name of a bundled scenario (paa, oracle).
    #[arg(long)]
    pub scenario: String,
    /// Bundled vector name (paa, oracle) or a vector JSON file.
    #[arg(long)]
    pub vector: Option<String>,
    #[arg(long, value_enum, default_value_t = PriceArg::Amm)]
    pub oracle_price: PriceArg,
    #[arg(long, value_enum, default_value_t = CapArg::Residual)]
    pub borrow_cap: CapArg,
}

pub fn describe(ctx: &Invocation, args: &DescribeArgs) -> Result<Outcome> {
    let scenario = load_scenario(&args.scenario)?;
    let scenario_json = scenario.to_json();
    let mut text = format!(
        "scenario {}: adversary {}, assets {}, {} pools\n",
        scenario.name,
        scenario.adversary,
        scenario
            .assets
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(", "),
        scenario.state.pools().len(),
    );
    for (id, pool) in scenario.state.pools() {
        text.push_str(&format!("  {id}: {}\n", pool.kind_name()));
    }
    let mut results = json!({ "scenario": serde_json::from_str::<Value>(&scenario_json)? });
    let mut csv_rows = Vec::new();
    let mut vector_json = String::new();
    if let Some(v) = &args.vector {
        let loaded = load_vector(&VectorArgs {
            scenario: args.scenario.clone(),
            vector: v.clone(),
            ignore: Vec::new(),
            upper: Vec::new(),
            oracle_price: args.oracle_price,
            borrow_cap: args.borrow_cap,
        })?;
        let vector = &loaded.vector;
        text.push_str(&format!(
            "\nvector {}: {} steps, closed form {}\n",
            vector.name,
            vector.steps.len(),
            if vector.closed_form.is_some() {
                "available"
            } else {
                "absent"
            }
        ));
        for (k, s) in vector.steps.iter().enumerate() {
            text.push_str(&format!("  {}. {}\n", k + 1, s.name));
        }
        let param_rows: Vec<Vec<String>> = vector
            .params
            .iter()
            .map(|p| {
                vec![
                    p.name.clone(),
                    format!("{}", p.lower),
                    format!("{}", p.upper),
                ]
            })
            .collect();
        text.push('\n');
        text.push_str(&table(&["param", "lower", "upper"], &param_rows));
        let list = list_constraints(vector);
        let rows: Vec<Vec<String>> = list
            .iter()
            .map(|c| {
                vec![
                    c.index.to_string(),
                    c.description.clone(),
                    c.step.map_or("-".into(), |s| s.to_string()),
                    if c.linear { "linear" } else { "nonlinear" }.into(),
                ]
            })
            .collect();
        text.push('\n');
        text.push_str(&table(&["#", "constraint", "step", "kind"], &rows));
        csv_rows = rows;
        results["vector"] = serde_json::from_str::<Value>(&loaded.vector_json)?;
        results["constraints"] = serde_json::to_value(&list)?;
        vector_json = loaded.vector_json;
    }
    let config_value = json!({ "command": "describe", "vector": args.vector, "oracle_price": args.oracle_price, "borrow_cap": args.borrow_cap });
    let report = RunReport::new(
        ctx.argv.clone(),
        &config_value,
        &[scenario_json.as_bytes(), vector_json.as_bytes()],
        results,
    );
    Ok(Outcome {
        report,
        text,
        csv: csv_lines(&["index", "constraint", "step", "kind"], &csv_rows),
        exit: 0,
    })
}
