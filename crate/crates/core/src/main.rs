use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fairaudit::learners::CostPair;
use fairaudit::metrics::Metric;
use fairaudit::report::{self, AuditConfig, AuditError, DatasetPaths, ProbeEntry};
use fairaudit::synthgen::{self, BiasInjection, ClinicalOutcome, GeneratorConfig};
use fairaudit::Error;

/// Fairness audits for binary clinical risk models.
#[derive(Parser)]
#[command(name = "fairaudit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an audit config without running it.
    Validate(ConfigArgs),
    /// Write a synthetic cohort (CSV plus schema JSON).
    Generate(GenerateArgs),
    /// Run the full audit and write the model card.
    Audit(ConfigArgs),
    /// Fit only the utility guide tree.
    Card(ConfigArgs),
}

/// The config file is authoritative; flags override single fields.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    bootstrap_replicates: Option<usize>,
    #[arg(long)]
    caliper: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Comma-separated probe tags, e.g. W,SWAP,PSM.
    #[arg(long, value_delimiter = ',')]
    probes: Option<Vec<String>>,
    /// Comma-separated metrics, e.g. FNR,FPR.
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    #[arg(long)]
    c_neg: Option<f64>,
    #[arg(long)]
    c_pos: Option<f64>,
    #[arg(long)]
    oob_bootstrap: Option<bool>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Mortality,
    Aki,
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator config JSON.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in cohort calibrated to the clinical marginals.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// JSON list of bias injections.
    #[arg(long)]
    injections: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value = "cohort")]
    stem: String,
}

fn fail(module: &'static str, error: Error) -> AuditError {
    AuditError { module, error }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, AuditError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| fail("config", Error::Config(format!("{}: {e}", path.display()))))?;
    serde_json::from_str(&text).map_err(|e| fail("config", Error::Config(format!("{}: {e}", path.display()))))
}

fn load_config(args: &ConfigArgs) -> Result<AuditConfig, AuditError> {
    let mut cfg = AuditConfig::load(&args.config).map_err(|e| fail("config", e))?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = &args.output_dir {
        // Flags are relative to the working directory, not the config.
        cfg.output_dir = std::path::absolute(d).unwrap_or_else(|_| d.clone());
    }
    match (&args.csv, &args.schema) {
        (None, None) => {}
        (Some(csv), Some(schema)) => {
            cfg.generator = None;
            cfg.dataset = Some(DatasetPaths {
                csv: std::path::absolute(csv).unwrap_or_else(|_| csv.clone()),
                schema: std::path::absolute(schema).unwrap_or_else(|_| schema.clone()),
            });
        }
        _ => return Err(fail("config", Error::Config("--csv and --schema go together".into()))),
    }
    if let Some(r) = args.bootstrap_replicates {
        cfg.bootstrap_replicates = r;
    }
    if let Some(c) = args.caliper {
        cfg.caliper = c;
    }
    if let Some(f) = args.test_fraction {
        cfg.test_fraction = f;
    }
    if let Some(p) = &args.probes {
        cfg.probes = p.iter().map(|t| ProbeEntry::Tag(t.trim().to_string())).collect();
    }
    if let Some(m) = &args.metrics {
        cfg.metrics = m
            .iter()
            .map(|s| {
                serde_json::from_value::<Metric>(serde_json::Value::String(s.trim().to_uppercase()))
                    .map_err(|_| fail("config", Error::Config(format!("unknown metric `{s}`"))))
            })
            .collect::<Result<_, _>>()?;
    }
    if args.c_neg.is_some() || args.c_pos.is_some() {
        cfg.costs = CostPair {
            c_neg: args.c_neg.unwrap_or(cfg.costs.c_neg),
            c_pos: args.c_pos.unwrap_or(cfg.costs.c_pos),
        };
    }
    if let Some(o) = args.oob_bootstrap {
        cfg.oob_bootstrap = o;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), AuditError> {
    match cli.command {
        Command::Validate(args) => {
            let cfg = load_config(&args)?;
            cfg.validate().map_err(|e| fail("config", e))?;
            println!("config ok");
        }
        Command::Generate(args) => {
            let mut cfg: GeneratorConfig = match (&args.config, args.preset) {
                (Some(p), _) => read_json(p)?,
                (None, Some(preset)) => {
                    let outcome = match preset {
                        Preset::Mortality => ClinicalOutcome::Mortality,
                        Preset::Aki => ClinicalOutcome::Aki,
                    };
                    synthgen::clinical_preset(outcome, 52499, 0)
                }
                (None, None) => unreachable!("clap requires one"),
            };
            if let Some(n) = args.n {
                cfg.n = n;
            }
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            let injections: Vec<BiasInjection> = match &args.injections {
                Some(p) => read_json(p)?,
                None => Vec::new(),
            };
            let data = synthgen::generate(&cfg, &injections).map_err(|e| fail("synthgen", e))?;
            let (csv, schema) =
                synthgen::write_cohort(&data, &args.out, &args.stem).map_err(|e| fail("synthgen", e))?;
            println!("{}\n{}", csv.display(), schema.display());
        }
        Command::Audit(args) => {
            let cfg = load_config(&args)?;
            let report = report::run_audit(&cfg)?;
            let files = report::emit_outputs(&report, &cfg.output_path()).map_err(|e| fail("cli_report", e))?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Card(args) => {
            let cfg = load_config(&args)?;
            if cfg.utility.is_none() {
                return Err(fail("config", Error::Config("config has no `utility` section".into())));
            }
            let prepared = report::prepare(&cfg)?;
            let card = report::utility_card(&cfg, &prepared)?.expect("utility configured");
            let dir = cfg.output_path();
            let write = |name: &str, text: &str| -> Result<(), AuditError> {
                std::fs::create_dir_all(&dir).map_err(|e| fail("cli_report", Error::io(&dir, e)))?;
                let p = dir.join(name);
                std::fs::write(&p, text).map_err(|e| fail("cli_report", Error::io(&p, e)))?;
                println!("{}", p.display());
                Ok(())
            };
            write("guide.txt", &card.guide.text)?;
            write("tree.dot", &card.guide.dot)?;
            let json = serde_json::to_string_pretty(&card.tree).map_err(|e| fail("cli_report", e.into()))?;
            write("tree.json", &(json + "\n"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("FAIRAUDIT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        // Ignored if a pool already exists; results do not depend on it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
