use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use peersched::config::{parse_list, ConfigError, KvConfig};
use peersched::experiment::{self, ExperimentConfig, ExperimentError};

/// Run the scheduling simulator.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    slots: Option<u64>,
    #[arg(long = "V")]
    v: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated V values; writes sweep.csv instead of a trace.
    #[arg(long)]
    sweep: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(args: &Args) -> Result<ExperimentConfig, ExperimentError> {
    let mut kv = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
                path: path.clone(),
                source,
            })?;
            KvConfig::parse(&text)?
        }
        None => KvConfig::default(),
    };
    if let Some(s) = args.slots {
        kv.set("slots", s);
    }
    if let Some(v) = args.v {
        kv.set("V", v);
    }
    if let Some(a) = args.alpha {
        kv.set("alpha", a);
    }
    if let Some(b) = args.beta {
        kv.set("beta", b);
    }
    if let Some(s) = args.seed {
        kv.set("seed", s);
    }
    if let Some(o) = &args.out {
        kv.set("out", o.display());
    }
    Ok(ExperimentConfig::from_kv(&kv)?)
}

fn main_inner(args: &Args) -> Result<(), ExperimentError> {
    let cfg = load(args)?;
    if let Some(list) = &args.sweep {
        let vs: Vec<f64> = parse_list(list).map_err(|e| ConfigError::invalid("sweep", list, e))?;
        let reports = experiment::sweep(&cfg, &vs)?;
        experiment::write_sweep(&reports, &cfg.out)?;
        print!("{}", experiment::sweep_csv(&reports));
        for r in &reports {
            experiment::require_bounds(r)?;
        }
    } else {
        let out = experiment::run(&cfg)?;
        experiment::write_run(&out, &cfg.out)?;
        let r = &out.report;
        println!(
            "slots={} V={} throughput={:.4} ap={:.4} p2p={:.4} utility={:.4} max_Q={} max_H={:.3} bounds={}",
            r.slots,
            r.v,
            r.throughput,
            r.ap_throughput,
            r.p2p_throughput,
            r.utility,
            r.max_q,
            r.max_h,
            if r.bounds.pass { "pass" } else { "FAIL" }
        );
        experiment::require_bounds(r)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match main_inner(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
