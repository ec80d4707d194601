use std::process::ExitCode;

use clap::Parser;

use spheroid_mc::cli::{run, write_error_record, Args};

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(report) => {
            if !args.quiet {
                println!("# resolved configuration (sha256 {})", report.config_hash);
                print!("{}", report.resolved_config);
                println!();
                for line in &report.summary {
                    println!("{line}");
                }
                for path in &report.artifacts {
                    println!("wrote {}", path.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            write_error_record(&args.out, &e);
            ExitCode::from(e.exit_code())
        }
    }
}
