use std::process::ExitCode;

use clap::Parser;
use wlansim::cli::Cli;
use wlansim::SimError;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.run() {
        Ok(summary) => {
            for c in &summary.configs {
                println!(
                    "{:>6}  DL median {:8.1} p5 {:8.1}  UL median {:8.1} p5 {:8.1} Mb/s",
                    c.label, c.dl.median_mbps, c.dl.p5_mbps, c.ul.median_mbps, c.ul.p5_mbps
                );
            }
            for (pair, r) in &summary.ratios {
                let parts: Vec<String> = r.iter().map(|(k, v)| format!("{k} {v:.2}")).collect();
                println!("{pair}: {}", parts.join(", "));
            }
            ExitCode::SUCCESS
        }
        Err(e @ SimError::Argument(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
