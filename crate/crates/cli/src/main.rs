mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use kmexpand::diagnostics::{boundary_attainability, bs_implied_vol, feller_check, parity_check};
use kmexpand::experiments::{
    self, closed_point, km_point, mc_point, point_spec, reference_point, ExperimentOutput, ExperimentSpec, ModelSpec,
    Quantity, Reference,
};
use kmexpand::mc::McConfig;
use kmexpand::symx::dump_dag;

#[derive(Parser)]
#[command(name = "kmx", version, about = "Series-expansion option and futures pricing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Monte Carlo seed.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Write CSV output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// File of key=value overrides, applied before --set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one parameter, e.g. --set kappa=1.5 (repeatable).
    #[arg(long = "set", global = true, value_parser = config::parse_pair)]
    overrides: Vec<(String, String)>,
    /// Leave the generation time out of the CSV header, for byte-stable output.
    #[arg(long, global = true)]
    no_header_timestamp: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Km,
    Ft,
    Mc,
    Closed,
}

#[derive(Args)]
struct Point {
    /// heston, cev, sz or commodity.
    #[arg(long, default_value = "heston")]
    model: String,
    /// Highest correction order.
    #[arg(long, default_value_t = 4)]
    order: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Price at one point; KM prints every order up to --order.
    Price {
        #[command(flatten)]
        point: Point,
        /// call, put or futures (futures for the commodity model).
        #[arg(long)]
        quantity: Option<String>,
        #[arg(long, value_enum, default_value_t = Method::Km)]
        method: Method,
    },
    /// Delta, gamma and sensitivity to the second state variable.
    Greeks {
        #[command(flatten)]
        point: Point,
        #[arg(long, value_enum, default_value_t = Method::Km)]
        method: Method,
    },
    /// Monte Carlo estimate with its confidence interval.
    Mc {
        #[arg(long, default_value = "cev")]
        model: String,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Model checks at one point: Feller, boundary attainability, implied
    /// volatility of the transform price and parity of the expansion.
    Diagnose {
        #[command(flatten)]
        point: Point,
    },
    /// Size of each correction term; --dump also prints the expressions.
    Expand {
        #[command(flatten)]
        point: Point,
        #[arg(long)]
        dump: bool,
    },
    /// Run a registered experiment; exits non-zero if a check fails.
    Run {
        id: Option<String>,
        /// List registered experiments.
        #[arg(long)]
        list: bool,
    },
}

type Failure = Box<dyn std::error::Error>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("kmx: {e}");
            ExitCode::from(2)
        }
    }
}

fn overrides(g: &Global) -> Result<Vec<(String, String)>, Failure> {
    let mut all = match &g.config {
        Some(p) => config::load(p)?,
        None => Vec::new(),
    };
    all.extend(g.overrides.iter().cloned());
    Ok(all)
}

fn configure(mut spec: ExperimentSpec, g: &Global) -> Result<ExperimentSpec, Failure> {
    spec.seed = g.seed;
    for (k, v) in overrides(g)? {
        spec.set(&k, &v)?;
    }
    spec.grid = vec![if spec.axis == experiments::Axis::Spot { spec.spot } else { spec.level }];
    Ok(spec)
}

fn default_quantity(model: &str) -> Quantity {
    if model == "commodity" {
        Quantity::Futures
    } else {
        Quantity::Call
    }
}

fn point(model: &str, q: Quantity, order: usize, g: &Global) -> Result<ExperimentSpec, Failure> {
    let mut spec = point_spec(model, q)?;
    spec.orders = (0..=order).collect();
    configure(spec, g)
}

fn timestamp(g: &Global) -> Option<u64> {
    if g.no_header_timestamp {
        None
    } else {
        SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
    }
}

fn header(spec: &ExperimentSpec, command: &str, g: &Global) -> String {
    let out = ExperimentOutput { spec: spec.clone(), rows: Vec::new(), checks: Vec::new() };
    let mut s = format!("# command={command}\n");
    for line in out.header(timestamp(g)) {
        s.push_str("# ");
        s.push_str(&line);
        s.push('\n');
    }
    s
}

fn table(head: &[&str], rows: &[Vec<String>]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(head)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn emit(text: &str, g: &Global) -> Result<(), Failure> {
    match &g.out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn price(p: &Point, quantity: Option<&str>, method: Method, g: &Global) -> Result<bool, Failure> {
    let q = match quantity {
        Some(s) => s.parse()?,
        None => default_quantity(&p.model),
    };
    if !matches!(q, Quantity::Call | Quantity::Put | Quantity::Futures) {
        return Err(format!("`{q}` is not a price; use the greeks command").into());
    }
    let mut spec = point(&p.model, q, p.order, g)?;
    let head = ["method", "order", "value", "std_error", "ci_lower", "ci_upper"];
    let rows = match method {
        Method::Km => {
            let mut rows = vec![vec![
                "closed".into(),
                String::new(),
                num(closed_point(&spec)?),
                String::new(),
                String::new(),
                String::new(),
            ]];
            for (n, v) in spec.orders.iter().zip(km_point(&spec)?) {
                rows.push(vec!["km".into(), n.to_string(), num(v), String::new(), String::new(), String::new()]);
            }
            rows
        }
        Method::Ft => {
            spec.reference = Reference::Fourier;
            vec![vec![
                "ft".into(),
                String::new(),
                num(reference_point(&spec)?.0),
                String::new(),
                String::new(),
                String::new(),
            ]]
        }
        Method::Mc => {
            let r = mc_point(&spec)?;
            vec![vec!["mc".into(), String::new(), num(r.estimate), num(r.std_error), num(r.ci_lower), num(r.ci_upper)]]
        }
        Method::Closed => {
            vec![vec![
                "closed".into(),
                String::new(),
                num(closed_point(&spec)?),
                String::new(),
                String::new(),
                String::new(),
            ]]
        }
    };
    emit(&(header(&spec, "price", g) + &table(&head, &rows)?), g)?;
    Ok(true)
}

fn greeks(p: &Point, method: Method, g: &Global) -> Result<bool, Failure> {
    let specs = [Quantity::Delta, Quantity::Gamma, Quantity::Vega]
        .into_iter()
        .map(|q| {
            let mut s = point(&p.model, q, p.order, g)?;
            s.reference = Reference::Fourier;
            Ok(s)
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let rows = match method {
        Method::Km => {
            let cols = specs.iter().map(km_point).collect::<Result<Vec<_>, _>>()?;
            (0..specs[0].orders.len())
                .map(|i| {
                    vec!["km".into(), specs[0].orders[i].to_string(), num(cols[0][i]), num(cols[1][i]), num(cols[2][i])]
                })
                .collect()
        }
        Method::Ft => {
            let v = specs.iter().map(|s| reference_point(s).map(|r| r.0)).collect::<Result<Vec<_>, _>>()?;
            vec![vec!["ft".into(), String::new(), num(v[0]), num(v[1]), num(v[2])]]
        }
        Method::Closed => {
            let v = specs.iter().map(closed_point).collect::<Result<Vec<_>, _>>()?;
            vec![vec!["closed".into(), String::new(), num(v[0]), num(v[1]), num(v[2])]]
        }
        Method::Mc => return Err("no Monte Carlo greeks".into()),
    };
    let level = specs[0].model.level_var();
    let head = ["method", "order", "delta", "gamma", &format!("d_{level}")];
    emit(&(header(&specs[0], "greeks", g) + &table(&head, &rows)?), g)?;
    Ok(true)
}

fn monte_carlo(model: &str, steps: Option<usize>, paths: Option<usize>, g: &Global) -> Result<bool, Failure> {
    let mut spec = point(model, default_quantity(model), 0, g)?;
    let mut cfg = match spec.reference {
        Reference::MonteCarlo(c) => c,
        Reference::Fourier => McConfig::option_default(spec.seed),
    };
    cfg.steps = steps.unwrap_or(cfg.steps);
    cfg.paths = paths.unwrap_or(cfg.paths);
    spec.reference = Reference::MonteCarlo(cfg);
    let r = mc_point(&spec)?;
    let head = ["estimate", "std_error", "ci_lower", "ci_upper", "negative_variance_events", "total_steps"];
    let rows = vec![vec![
        num(r.estimate),
        num(r.std_error),
        num(r.ci_lower),
        num(r.ci_upper),
        r.negative_variance_events.to_string(),
        r.total_steps.to_string(),
    ]];
    emit(&(header(&spec, "mc", g) + &table(&head, &rows)?), g)?;
    Ok(true)
}

fn diagnose(p: &Point, g: &Global) -> Result<bool, Failure> {
    let q = default_quantity(&p.model);
    let spec = point(&p.model, q, p.order, g)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut put = |k: &str, v: String| rows.push(vec![k.to_string(), v]);
    let square_root = match spec.model {
        ModelSpec::Heston(h) => Some((h.kappa, h.theta, h.omega, 0.5)),
        ModelSpec::Cev(c) => Some((c.kappa, c.theta, c.omega, c.gamma)),
        _ => None,
    };
    if let Some((kappa, theta, omega, gamma)) = square_root {
        let f = feller_check(kappa, theta, omega)?;
        put("feller_statistic", num(f.statistic));
        put("feller_satisfied", f.satisfied.to_string());
        for rep in boundary_attainability(kappa, theta, omega, gamma)? {
            let b = format!("{:?}", rep.boundary).to_lowercase();
            put(&format!("boundary_{b}"), format!("{:?}: {}", rep.verdict, rep.note).to_lowercase());
        }
    }
    let km = km_point(&spec)?;
    let top = *km.last().unwrap();
    put(&format!("km_order_{}", p.order), num(top));
    put("closed", num(closed_point(&spec)?));
    if q == Quantity::Call {
        let r = match spec.model {
            ModelSpec::Heston(h) => h.r,
            ModelSpec::Cev(c) => c.r,
            ModelSpec::Sz(s) => s.r,
            ModelSpec::Commodity(_) => unreachable!(),
        };
        let tau = spec.maturities[0];
        if let Ok((ft, _)) = reference_point(&spec) {
            put("ft", num(ft));
            put("percent_diff", num((top - ft) / ft * 100.0));
            match bs_implied_vol(ft, spec.spot, spec.strike, r, tau) {
                Ok(v) => put("ft_implied_vol", num(v)),
                Err(e) => put("ft_implied_vol", format!("error: {e}")),
            }
        }
        let mut put_spec = spec.clone();
        put_spec.quantity = Quantity::Put;
        let km_put = *km_point(&put_spec)?.last().unwrap();
        put("parity_residual", num(parity_check(top, km_put, spec.spot, spec.strike, r, tau)));
    }
    emit(&(header(&spec, "diagnose", g) + &table(&["key", "value"], &rows)?), g)?;
    Ok(true)
}

fn expand(p: &Point, dump: bool, g: &Global) -> Result<bool, Failure> {
    let spec = point(&p.model, default_quantity(&p.model), p.order, g)?;
    let x = experiments::series(&spec)?;
    let rows: Vec<Vec<String>> = x
        .deltas
        .iter()
        .enumerate()
        .map(|(n, d)| vec![n.to_string(), d.node_count().to_string(), d.dag_size().to_string()])
        .collect();
    let mut text = header(&spec, "expand", g) + &table(&["order", "tree_nodes", "distinct_nodes"], &rows)?;
    if dump {
        text.push_str(&format!("## baseline\n{}", dump_dag(&x.baseline_price)));
        for (n, d) in x.deltas.iter().enumerate() {
            text.push_str(&format!("## order {n}\n{}", dump_dag(d)));
        }
    }
    emit(&text, g)?;
    Ok(true)
}

fn run(id: Option<&str>, list: bool, g: &Global) -> Result<bool, Failure> {
    if list {
        let rows: Vec<Vec<String>> = experiments::registry().into_iter().map(|s| vec![s.id, s.description]).collect();
        emit(&table(&["id", "description"], &rows)?, g)?;
        return Ok(true);
    }
    let id = id.ok_or("missing experiment id (see run --list)")?;
    let mut spec = experiments::lookup(id)?;
    spec.seed = g.seed;
    for (k, v) in overrides(g)? {
        spec.set(&k, &v)?;
    }
    let out = experiments::run(&spec)?;
    let csv = out.to_csv(timestamp(g))?;
    match g.out.as_ref().or(spec.out.as_ref()) {
        Some(p) => std::fs::write(p, csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    eprint!("{}", out.summary());
    Ok(out.passed())
}

fn execute(cli: Cli) -> Result<bool, Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Price { point, quantity, method } => price(point, quantity.as_deref(), *method, g),
        Command::Greeks { point, method } => greeks(point, *method, g),
        Command::Mc { model, steps, paths } => monte_carlo(model, *steps, *paths, g),
        Command::Diagnose { point } => diagnose(point, g),
        Command::Expand { point, dump } => expand(point, *dump, g),
        Command::Run { id, list } => run(id.as_deref(), *list, g),
    }
}
