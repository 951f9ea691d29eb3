use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pks_cli::config::parse_number;
use pks_cli::output::write_tables;
use pks_cli::runner::{self, RunOptions, EXIT_CONFIG, EXIT_OK};

#[derive(Parser)]
#[command(name = "pks", version, about = "Keller-Segel scenario runner")]
struct Cli {
    /// Output root; each scenario writes into <DIR>/<name>/.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Scenarios run at once.
    #[arg(long, global = true, value_name = "K", default_value_t = 1)]
    parallel: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario files or bundled scenario names.
    Run {
        #[arg(required = true)]
        configs: Vec<String>,
    },
    /// List recipes and bundled scenarios.
    List,
    /// Log-correction constant with its oracle cross-check, as JSON.
    Constants {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "1", value_parser = number)]
        mass: f64,
        /// One value (along e₁) or three comma-separated components.
        #[arg(long, default_value = "1,0,0")]
        b0: String,
    },
    /// The planar self-similar profile as r,G CSV.
    Profile {
        #[arg(long, value_parser = number)]
        mass: f64,
    },
}

fn number(s: &str) -> Result<f64, String> {
    parse_number(s).ok_or_else(|| format!("`{s}` is not a number"))
}

fn parse_b0(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s.split(',').map(|c| number(c.trim())).collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x] => Ok([*x, 0.0, 0.0]),
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err(format!("--b0 takes one or three components, got {}", v.len())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { configs } => {
            let opts = RunOptions { out: cli.out, seed: cli.seed };
            let reports = runner::run_many(&configs, &opts, cli.parallel.max(1));
            for r in &reports {
                let text = r.render();
                if r.exit == EXIT_OK {
                    print!("{text}");
                } else {
                    eprint!("{text}");
                }
            }
            runner::combined_exit(&reports)
        }
        Command::List => {
            print!("{}", runner::list_scenarios());
            EXIT_OK
        }
        Command::Constants { n, mass, b0 } => match parse_b0(&b0) {
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
            Ok(b0) => match runner::export_constants(n, mass, b0, cli.seed.unwrap_or(1)) {
                Ok(v) => {
                    println!("{}", serde_json::to_string_pretty(&v).expect("json"));
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    runner::exit_code(&e)
                }
            },
        },
        Command::Profile { mass } => match runner::profile_table(mass) {
            Ok((table, residual)) => {
                eprintln!("profile residual {residual:.3e}");
                match cli.out {
                    Some(dir) => match write_tables(&dir, &[table]) {
                        Ok(()) => EXIT_OK,
                        Err(e) => {
                            eprintln!("error: {e}");
                            runner::EXIT_NUMERIC
                        }
                    },
                    None => {
                        print!("{}", table.to_csv());
                        EXIT_OK
                    }
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                runner::exit_code(&e)
            }
        },
    };
    ExitCode::from(code as u8)
}
