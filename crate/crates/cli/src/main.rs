use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};

use distreg::config::{DEFAULT_RUN_DEADLINE_SECS, DEFAULT_WAIT_MAX_SECS, DEFAULT_WAIT_MIN_SECS};
use distreg::coordinator::{load_initial_estimates, run_coordinator, FitOutputs};
use distreg::dataset::AnalyticDataset;
use distreg::local::run_local;
use distreg::oracle::oracle_fit;
use distreg::partition::{even_sizes, partition, write_parts};
use distreg::protocol::{FileRelay, FsCoordinatorLink, FsWorkerLink, Outcome, PollPolicy, RequestLayout};
use distreg::report::{render_report, write_report};
use distreg::wire::{fmt17, write_rows};
use distreg::worker::{run_worker, Worker};
use distreg::{DraError, ModelSpec, Result, WorkerConfig};

/// Federated linear and logistic regression over horizontally partitioned data.
#[derive(Debug, Parser)]
#[command(name = "distreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the analysis center against partners exchanging files under --root.
    Coordinator {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding the request directory.
        #[arg(long)]
        root: PathBuf,
    },
    /// Run one data partner.
    Worker {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        root: PathBuf,
        #[command(flatten)]
        poll: PollArgs,
    },
    /// Single-process test mode; partner k reads <reg_ds_in>_<k>.csv from --data.
    Local {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        root: PathBuf,
        /// Per-partner override of min_count_per_grp_glob.
        #[arg(long)]
        min_count: Option<u64>,
    },
    /// Split a pooled CSV into partner files.
    Partition {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated row counts, e.g. 172,182,152.
        #[arg(long, value_delimiter = ',', conflicts_with = "parts")]
        sizes: Option<Vec<usize>>,
        /// Number of near-equal parts.
        #[arg(long)]
        parts: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Append dummy_dp_var2..K partner indicators.
        #[arg(long)]
        dummies: bool,
        /// Output file stem; files are <stem>_<k>.csv.
        #[arg(long, default_value = "analytic")]
        stem: String,
    },
    /// Fit the same model to one pooled CSV.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Write the estimates table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a text report and plot data from a run's output files.
    Report {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        prefix: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shuttle exchanges between a coordinator root and partner roots.
    Relay {
        #[arg(long)]
        coordinator_root: PathBuf,
        /// DP=ROOT, once per partner.
        #[arg(long = "partner", value_parser = parse_partner, required = true)]
        partners: Vec<(u32, PathBuf)>,
        #[arg(long, default_value = distreg::config::DEFAULT_REQUEST_ID)]
        request_id: String,
        #[command(flatten)]
        poll: PollArgs,
    },
}

#[derive(Debug, Args)]
struct PollArgs {
    /// Initial polling interval in seconds.
    #[arg(long, default_value_t = DEFAULT_WAIT_MIN_SECS)]
    wait_min: f64,
    #[arg(long, default_value_t = DEFAULT_WAIT_MAX_SECS)]
    wait_max: f64,
    /// Give up after this many seconds.
    #[arg(long, default_value_t = DEFAULT_RUN_DEADLINE_SECS)]
    deadline: f64,
}

impl PollArgs {
    fn policy(&self) -> Result<PollPolicy> {
        let secs = |name: &str, v: f64| {
            Duration::try_from_secs_f64(v).map_err(|_| DraError::Config(format!("{name} must be a non-negative number")))
        };
        Ok(PollPolicy::new(
            secs("wait_min", self.wait_min)?,
            secs("wait_max", self.wait_max)?,
            secs("deadline", self.deadline)?,
        ))
    }
}

fn parse_partner(text: &str) -> std::result::Result<(u32, PathBuf), String> {
    let (dp, root) = text.split_once('=').ok_or("expected DP=ROOT")?;
    let dp = dp.trim().parse::<u32>().map_err(|_| format!("`{dp}` is not a partner code"))?;
    Ok((dp, PathBuf::from(root)))
}

fn load_spec(path: &Path) -> Result<ModelSpec> {
    let mut spec = ModelSpec::from_toml_file(path)?;
    if let Some(init) = &spec.initial_estimates {
        let p = Path::new(init);
        if p.is_relative() {
            if let Some(dir) = path.parent() {
                spec.initial_estimates = Some(dir.join(p).to_string_lossy().into_owned());
            }
        }
    }
    Ok(spec)
}

fn spec_policy(spec: &ModelSpec) -> PollPolicy {
    PollPolicy::new(spec.poll_interval_min(), spec.poll_interval_max(), spec.deadline())
}

fn summarize(out: &FitOutputs<f64>) {
    println!(
        "{} {} regression: {} iteration(s), converged = {}",
        out.spec.run_id,
        out.spec.family.name(),
        out.state.iteration,
        out.state.converged
    );
    for c in &out.coefficients {
        println!("  {:<16} {:>22} {:>22}", c.label, fmt17(c.estimate), fmt17(c.std_error));
    }
    for w in &out.warnings {
        warn!("{w}");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Coordinator { config, root } => {
            let spec = load_spec(&config)?;
            let layout = RequestLayout::new(&root, &spec.request_id);
            layout.create_coordinator(&spec.dp_cd_list)?;
            let beta0 = match &spec.initial_estimates {
                Some(p) => Some(load_initial_estimates(Path::new(p), &spec.parameter_labels())?),
                None => None,
            };
            let out_dir = layout.msoc();
            let mut link = FsCoordinatorLink::new(layout, spec_policy(&spec));
            let out = run_coordinator(spec, beta0, &mut link, &out_dir)?;
            summarize(&out);
            info!("outputs written to {}", out_dir.display());
        }
        Command::Worker { config, root, poll } => {
            let cfg = WorkerConfig::from_toml_file(&config)?;
            let layout = RequestLayout::new(&root, &cfg.request_id);
            layout.create_worker()?;
            let dplocal = layout.dplocal();
            let mut link = FsWorkerLink::new(layout, poll.policy()?);
            let mut worker = Worker::<f64>::new(cfg);
            run_worker(&mut worker, &mut link, Some(&dplocal))?;
        }
        Command::Local {
            config,
            data,
            root,
            min_count,
        } => {
            let spec = load_spec(&config)?;
            let configs = spec
                .dp_cd_list
                .iter()
                .map(|&dp| {
                    let mut c = WorkerConfig::new(dp, &data);
                    c.min_count_per_grp = min_count;
                    c.request_id = spec.request_id.clone();
                    c
                })
                .collect();
            let out = run_local::<f64>(&spec, configs, &root)?;
            summarize(&out);
        }
        Command::Partition {
            input,
            out,
            sizes,
            parts,
            seed,
            dummies,
            stem,
        } => {
            let data = AnalyticDataset::<f64>::from_csv_path(0, &input)?;
            let sizes = match (sizes, parts) {
                (Some(s), _) => s,
                (None, Some(k)) => even_sizes(data.n_rows(), k)?,
                (None, None) => return Err(DraError::Config("give --sizes or --parts".into())),
            };
            let split = partition(&data, &sizes, seed, dummies)?;
            for p in write_parts(&split, &out, &stem)? {
                println!("{}", p.display());
            }
        }
        Command::Oracle { config, data, out } => {
            let spec = load_spec(&config)?;
            let pooled = AnalyticDataset::<f64>::from_csv_path(0, &data)?;
            let beta0 = match &spec.initial_estimates {
                Some(p) => Some(load_initial_estimates::<f64>(Path::new(p), &spec.parameter_labels())?),
                None => None,
            };
            let fit = oracle_fit(&pooled, &spec, beta0.as_deref())?;
            let mut rows = vec![["Variable", "Estimate", "StdErr", "RobustStdErr"].map(String::from).to_vec()];
            for (i, l) in fit.labels.iter().enumerate() {
                rows.push(vec![l.clone(), fmt17(fit.beta[i]), fmt17(fit.model_se[i]), fmt17(fit.robust_se[i])]);
            }
            let bytes = write_rows(&rows);
            match out {
                Some(p) => std::fs::write(&p, bytes).map_err(|e| DraError::Dataset(format!("{}: {e}", p.display())))?,
                None => print!("{}", String::from_utf8_lossy(&bytes)),
            }
            if let Some(roc) = &fit.roc {
                println!("AUC {}", fmt17(roc.auc));
            }
            if let Some(hl) = &fit.hl {
                println!("Hosmer-Lemeshow chi-square {} on {} df, p = {}", fmt17(hl.chi_sq), hl.df, fmt17(hl.p_value));
            }
        }
        Command::Report { dir, prefix, out } => {
            let report = render_report(&dir, &prefix)?;
            print!("{}", report.text);
            for p in write_report(&report, out.as_deref().unwrap_or(&dir), &prefix)? {
                info!("wrote {}", p.display());
            }
        }
        Command::Relay {
            coordinator_root,
            partners,
            request_id,
            poll,
        } => {
            let relay = FileRelay {
                coordinator: RequestLayout::new(&coordinator_root, &request_id),
                partners: partners
                    .into_iter()
                    .map(|(dp, root)| (dp, RequestLayout::new(root, &request_id)))
                    .collect(),
                poll: poll.policy()?,
            };
            if let Outcome::Failure(reason) = relay.run()? {
                return Err(DraError::Protocol(format!("run failed: {reason}")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
