use clap::Parser;

use risksea_cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return;
        }
        Err(e) => {
            let err = risksea_cli::CliError::Config(e.to_string().lines().next().unwrap_or("").to_string());
            eprintln!("{}", err.to_json_line("args"));
            std::process::exit(err.exit_code());
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("{}", e.to_json_line(cli.command.stage_name()));
        std::process::exit(e.exit_code());
    }
}
