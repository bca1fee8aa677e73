use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::mpsc;
use std::thread;

use clap::{Parser, Subcommand};
use log::{error, info};

use rotqg::experiment::{execute, ExperimentConfig, Progress};
use rotqg::norms::{sobolev_norm, sup_norm};
use rotqg::snapshot;
use rotqg::strichartz::{mk, probe_grid, strichartz_ratio, DispersionProbe};
use rotqg::PhysicalParams;

/// Thread count for the rayon pool; nothing else is read from the environment.
const THREADS_VAR: &str = "ROTQG_THREADS";

#[derive(Parser, Debug)]
#[command(name = "rotqg", version, about = "Rotating low Mach / fast rotation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a TOML config and write its outputs.
    Run { config: PathBuf },
    /// Measure Strichartz ratios of single dyadic blocks.
    Probe {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        k: Vec<i32>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.01")]
        delta: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long, default_value_t = 4.0)]
        q: f64,
        /// Space exponent: 2 or inf.
        #[arg(long, default_value = "inf")]
        r: f64,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 256)]
        samples: usize,
    },
    /// Print the grid, norms and sidecar metadata of a snapshot file.
    Inspect { snapshot: PathBuf },
}

fn configure_threads() -> rotqg::Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v
            .parse()
            .map_err(|_| rotqg::Error::Config(format!("{THREADS_VAR}={v} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| rotqg::Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(path: &PathBuf) -> rotqg::Result<()> {
    let config = ExperimentConfig::load(path)?;
    info!("{} sweep over delta = {:?}", config.experiment.kind.name(), config.sweep.delta_list);
    let (tx, rx) = mpsc::channel::<Progress>();
    let consumer = thread::spawn(move || {
        for p in rx {
            info!("delta {:<8} step {}/{}", p.delta, p.step, p.steps);
        }
    });
    let result = execute(&config, Some(tx));
    consumer.join().expect("progress consumer");
    let (records, files) = result?;
    for r in &records {
        let exp = r.exponent.map_or_else(|| "-".to_string(), |p| format!("{p:.4}"));
        println!("{:<10} {:<32} {:.6e}  exponent {}", r.delta, r.norm_name, r.value, exp);
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn probe(ks: &[i32], deltas: &[f64], nu: f64, gamma: f64, q: f64, r: f64, n: usize, samples: usize) -> rotqg::Result<()> {
    println!("{:>3} {:>8} {:>10} {:>12} {:>12} {:>12}", "k", "delta", "M_k", "lhs", "rhs", "ratio");
    for &k in ks {
        let grid = probe_grid(k, n)?;
        for &delta in deltas {
            let params = PhysicalParams::new(gamma, delta, nu)?;
            let probe = DispersionProbe::new(k, params, &grid, None)?;
            let rec = strichartz_ratio(&probe, q, r, samples)?;
            println!(
                "{:>3} {:>8} {:>10} {:>12.5e} {:>12.5e} {:>12.5e}",
                k,
                delta,
                mk(k, nu),
                rec.lhs,
                rec.rhs,
                rec.ratio
            );
        }
    }
    Ok(())
}

fn inspect(path: &PathBuf) -> rotqg::Result<()> {
    let f = snapshot::load(path)?;
    let g = f.grid();
    let points: Vec<usize> = (0..g.dim()).map(|a| g.n(a)).collect();
    let lengths: Vec<f64> = (0..g.dim()).map(|a| g.length(a)).collect();
    println!("grid        {points:?} box {lengths:?}");
    println!("components  {}", f.components());
    println!("L2          {:.6e}", f.l2_norm());
    println!("H1          {:.6e}", sobolev_norm(&f, 1.0));
    println!("sup         {:.6e}", sup_norm(&f, 1));
    for c in 0..f.components() {
        println!("  comp {c}    L2 {:.6e}", f.select(&[c]).l2_norm());
    }
    let meta = path.with_extension("meta");
    if meta.exists() {
        for (k, v) in snapshot::read_metadata(&meta)? {
            println!("{k} = {v}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Run { config } => run(config),
        Command::Probe { k, delta, nu, gamma, q, r, n, samples } => probe(k, delta, *nu, *gamma, *q, *r, *n, *samples),
        Command::Inspect { snapshot } => inspect(snapshot),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
