use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use shallow_calib::diagnostics::{run_lemma_check, LemmaCheckConfig, LemmaId};
use shallow_calib::distributions::load_idx;
use shallow_calib::distributions::{Distribution, DistributionSpec};
use shallow_calib::harness::bounds::{compute_bound_terms, BoundInputs};
use shallow_calib::harness::experiment::{run_experiment_full, EXIT_OK};
use shallow_calib::harness::frozen_norm::{frozen_norm_experiment, FrozenNormConfig};
use shallow_calib::harness::regime::{default_task, RegimeConfig};
use shallow_calib::harness::sweep::{consistency_sweep, sweep, Axis};
use shallow_calib::interpolation::excess_risk_comparison;
use shallow_calib::trainer::Radius;

#[derive(Parser)]
#[command(name = "shallow-calib", version, about = "Shallow ReLU network calibration experiments")]
struct Cli {
    /// Root seed; overrides any seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for result files; results go to stdout when omitted.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and report risks, monitors and bound terms.
    Train(ConfigArgs),
    /// Multi-seed sweep of one axis of a config.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_parser = ["n", "m", "eps"])]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
    },
    /// Consistency schedule across sample sizes.
    Consistency {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 0.5)]
        xi: f64,
        #[arg(long, value_delimiter = ',', default_value = "256,1024,4096")]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
    },
    /// 1-NN, k-NN and linear interpolation on constant-noise 1-D data.
    InterpLb {
        #[arg(long, default_value_t = 0.75)]
        p: f64,
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        #[arg(long, default_value_t = 1.0)]
        hi: f64,
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
    },
    /// Monte Carlo check of one concentration or linearization lemma.
    LemmaCheck {
        #[arg(long, value_parser = ["gauss-count", "flip-count", "sphere-gap", "risk-ratio", "gen-gap"])]
        lemma: String,
        /// JSON file with lemma-check parameters.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate the excess-risk bound terms.
    Bound(BoundArgs),
    /// Frozen-feature norm experiment on an IDX class pair.
    FrozenNorm(FrozenNormArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat JSON config with regime config field names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args)]
struct BoundArgs {
    /// JSON file with any of the fields below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    eps_gd: Option<f64>,
    /// A number or `inf`.
    #[arg(long)]
    r_gd: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    r_sup: Option<f64>,
    #[arg(long)]
    ref_risk: Option<f64>,
    #[arg(long)]
    ref_kl: Option<f64>,
    #[arg(long)]
    emp_ref_risk: Option<f64>,
}

#[derive(Deserialize)]
struct BoundRequest {
    m: usize,
    n: usize,
    d: usize,
    rho: f64,
    t: usize,
    eps_gd: f64,
    #[serde(default = "infinite")]
    r_gd: Radius,
    #[serde(default = "default_delta")]
    delta: f64,
    r_sup: f64,
    ref_risk: f64,
    #[serde(default)]
    ref_kl: f64,
    #[serde(default)]
    emp_ref_risk: Option<f64>,
}

fn infinite() -> Radius {
    Radius::Infinite
}

fn default_delta() -> f64 {
    0.05
}

#[derive(Args)]
struct FrozenNormArgs {
    #[arg(long)]
    train_images: PathBuf,
    #[arg(long)]
    train_labels: PathBuf,
    #[arg(long)]
    test_images: PathBuf,
    #[arg(long)]
    test_labels: PathBuf,
    /// Two digit classes, e.g. `3,5`; the first is labeled +1.
    #[arg(long, value_delimiter = ',', default_value = "3,5")]
    pair: Vec<u8>,
    #[arg(long, default_value_t = 1024)]
    m: usize,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.5)]
    target_ratio: f64,
    #[arg(long, default_value_t = 10_000)]
    max_steps: usize,
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    root_seed: u64,
    version: &'a str,
    files: Vec<String>,
}

type CliResult<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn read_json(path: &Path) -> CliResult<Value> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn regime_config(args: &ConfigArgs, seed: Option<u64>) -> CliResult<RegimeConfig> {
    let mut obj = match &args.config {
        Some(p) => read_json(p)?,
        None => json!({}),
    };
    let map = obj.as_object_mut().ok_or("config must be a JSON object")?;
    if let Some(r) = &args.regime {
        map.insert("regime".into(), json!(r));
    }
    if let Some(e) = args.eps {
        map.insert("eps".into(), json!(e));
    }
    if !map.contains_key("regime") {
        map.insert("regime".into(), json!("clairvoyant"));
    }
    if !map.contains_key("eps") && map["regime"] != "consistency" {
        map.insert("eps".into(), json!(0.5));
    }
    if let Some(s) = seed {
        map.insert("seed".into(), json!(s));
    }
    Ok(RegimeConfig::from_json(&obj)?)
}

/// Writes named outputs into the out dir (plus a metadata sidecar), or
/// prints the primary one to stdout.
struct Output<'a> {
    cli: &'a Cli,
    command: &'a str,
    root_seed: u64,
}

impl Output<'_> {
    fn emit(&self, json_value: &Value, csv: Option<(&str, Vec<u8>)>) -> CliResult<()> {
        self.emit_with(json_value, csv, Vec::new())
    }

    fn emit_with(&self, json_value: &Value, csv: Option<(&str, Vec<u8>)>, extra: Vec<(&str, Vec<u8>)>) -> CliResult<()> {
        let primary_csv = self.cli.format == Format::Csv;
        let Some(dir) = &self.cli.out_dir else {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            match (&csv, primary_csv) {
                (Some((_, bytes)), true) => out.write_all(bytes)?,
                _ => writeln!(out, "{}", serde_json::to_string_pretty(json_value)?)?,
            }
            eprintln!("root_seed: {}", self.root_seed);
            return Ok(());
        };
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        let mut write = |name: String, bytes: &[u8]| -> CliResult<()> {
            let mut f = BufWriter::new(File::create(dir.join(&name))?);
            f.write_all(bytes)?;
            files.push(name);
            Ok(())
        };
        write(format!("{}.json", self.command), serde_json::to_string_pretty(json_value)?.as_bytes())?;
        if let Some((name, bytes)) = csv {
            write(format!("{name}.csv"), &bytes)?;
        }
        for (name, bytes) in extra {
            write(name.to_string(), &bytes)?;
        }
        let meta = Metadata {
            command: self.command,
            root_seed: self.root_seed,
            version: env!("CARGO_PKG_VERSION"),
            files,
        };
        let f = File::create(dir.join("metadata.json"))?;
        serde_json::to_writer_pretty(f, &meta)?;
        Ok(())
    }
}

fn run(cli: &Cli) -> CliResult<i32> {
    match &cli.command {
        Command::Train(args) => {
            let cfg = regime_config(args, cli.seed)?;
            let run = run_experiment_full(&cfg)?;
            let mut traj = Vec::new();
            run.trajectory.write_csv(&mut traj)?;
            let out = Output { cli, command: "train", root_seed: cfg.seed };
            let mut net = Vec::new();
            run.network.write_to(&mut net)?;
            out.emit_with(&serde_json::to_value(&run.report)?, Some(("trajectory", traj)), vec![("network.bin", net)])?;
            Ok(run.report.exit_code())
        }
        Command::Sweep { config, axis, values, seeds } => {
            let cfg = regime_config(config, cli.seed)?;
            let table = sweep(&cfg, Axis::from_name(axis)?, values, *seeds)?;
            let mut csv = Vec::new();
            table.write_csv(&mut csv)?;
            let out = Output { cli, command: "sweep", root_seed: cfg.seed };
            out.emit(&serde_json::to_value(&table)?, Some(("sweep", csv)))?;
            Ok(EXIT_OK)
        }
        Command::Consistency { config, xi, ns, seeds } => {
            let mut template = RegimeConfig::from_json(&json!({"regime": "consistency", "n": ns.first().copied().unwrap_or(2), "xi": xi}))?;
            if config.config.is_some() {
                let given = regime_config(config, cli.seed)?;
                template.distribution = given.distribution;
                template.reference = given.reference;
                template.augment = given.augment;
                template.delta = given.delta;
                template.mc_features = given.mc_features;
                template.eval_nodes = given.eval_nodes;
                template.r = given.r;
                template.seed = given.seed;
            } else {
                let (d, r) = default_task();
                template.distribution = d;
                template.reference = r;
            }
            if let Some(s) = cli.seed {
                template.seed = s;
            }
            let table = consistency_sweep(&template, ns, *xi, *seeds)?;
            let mut csv = Vec::new();
            table.write_csv(&mut csv)?;
            let out = Output { cli, command: "consistency", root_seed: template.seed };
            out.emit(&serde_json::to_value(&table)?, Some(("consistency", csv)))?;
            Ok(EXIT_OK)
        }
        Command::InterpLb { p, lo, hi, ns, trials } => {
            let seed = cli.seed.unwrap_or(0);
            let dist = Distribution::new(DistributionSpec::Constant { p: *p, lo: *lo, hi: *hi }, false)?;
            let table = excess_risk_comparison(&dist, ns, *trials, seed)?;
            let mut csv = Vec::new();
            table.write_csv(&mut csv)?;
            let summary = json!({ "seed": seed, "p": p, "summary": table.summary });
            let out = Output { cli, command: "interp-lb", root_seed: seed };
            out.emit(&summary, Some(("interp-lb", csv)))?;
            Ok(EXIT_OK)
        }
        Command::LemmaCheck { lemma, config } => {
            let mut cfg: LemmaCheckConfig = match config {
                Some(p) => serde_json::from_value(read_json(p)?)?,
                None => LemmaCheckConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let report = run_lemma_check(LemmaId::from_name(lemma)?, &cfg)?;
            let value = json!({ "config": cfg, "report": report });
            let out = Output { cli, command: "lemma-check", root_seed: cfg.seed };
            out.emit(&value, Some(("lemma-check", flat_csv(&serde_json::to_value(&report)?))))?;
            Ok(EXIT_OK)
        }
        Command::Bound(args) => {
            let req = bound_request(args)?;
            let inputs = BoundInputs {
                m: req.m,
                n: req.n,
                d: req.d,
                rho: req.rho,
                t: req.t,
                eps_gd: req.eps_gd,
                r_gd: req.r_gd,
                delta: req.delta,
            };
            let terms = compute_bound_terms(&inputs, req.r_sup, req.ref_risk, req.ref_kl, req.emp_ref_risk)?;
            let value = serde_json::to_value(terms)?;
            let out = Output { cli, command: "bound", root_seed: cli.seed.unwrap_or(0) };
            out.emit(&json!({ "inputs": inputs, "terms": value }), Some(("bound", flat_csv(&value))))?;
            Ok(EXIT_OK)
        }
        Command::FrozenNorm(a) => {
            let [p0, p1] = a.pair[..] else {
                return Err("--pair needs exactly two classes".into());
            };
            let train = load_idx(&a.train_images, &a.train_labels, (p0, p1))?;
            let test = load_idx(&a.test_images, &a.test_labels, (p0, p1))?;
            let cfg = FrozenNormConfig {
                m: a.m,
                rho: a.rho,
                target_ratio: a.target_ratio,
                max_steps: a.max_steps,
                seed: cli.seed.unwrap_or(0),
            };
            let report = frozen_norm_experiment(&train, &test, &cfg)?;
            let value = serde_json::to_value(&report)?;
            let out = Output { cli, command: "frozen-norm", root_seed: cfg.seed };
            out.emit(&json!({ "config": cfg, "report": value }), Some(("frozen-norm", flat_csv(&value))))?;
            Ok(EXIT_OK)
        }
    }
}

fn bound_request(a: &BoundArgs) -> CliResult<BoundRequest> {
    let mut obj = match &a.config {
        Some(p) => read_json(p)?,
        None => json!({}),
    };
    let map = obj.as_object_mut().ok_or("bound config must be a JSON object")?;
    let mut set = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v);
        }
    };
    set("m", a.m.map(|v| json!(v)));
    set("n", a.n.map(|v| json!(v)));
    set("d", a.d.map(|v| json!(v)));
    set("rho", a.rho.map(|v| json!(v)));
    set("t", a.t.map(|v| json!(v)));
    set("eps_gd", a.eps_gd.map(|v| json!(v)));
    set(
        "r_gd",
        a.r_gd
            .as_ref()
            .map(|v| v.parse::<f64>().map(|x| json!(x)).unwrap_or_else(|_| json!(v))),
    );
    set("delta", a.delta.map(|v| json!(v)));
    set("r_sup", a.r_sup.map(|v| json!(v)));
    set("ref_risk", a.ref_risk.map(|v| json!(v)));
    set("ref_kl", a.ref_kl.map(|v| json!(v)));
    set("emp_ref_risk", a.emp_ref_risk.map(|v| json!(v)));
    Ok(serde_json::from_value(obj)?)
}

/// `key,value` rows for the scalar top-level fields of a JSON object.
fn flat_csv(v: &Value) -> Vec<u8> {
    let mut out = b"key,value\n".to_vec();
    if let Some(map) = v.as_object() {
        for (k, v) in map {
            let s = match v {
                Value::String(s) => s.clone(),
                Value::Number(_) | Value::Bool(_) => v.to_string(),
                _ => continue,
            };
            out.extend_from_slice(format!("{k},{s}\n").as_bytes());
        }
    }
    out
}
