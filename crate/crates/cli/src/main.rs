use clap::error::ErrorKind;
use clap::Parser;

use vaxmed_cli::{run, Cli, CliError, ErrorCategory};

fn main() {
    let code = match Cli::try_parse() {
        Ok(cli) => match run(&cli) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("{}", e.to_json());
                e.exit_code()
            }
        },
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            0
        }
        Err(e) => {
            let err = CliError::new(ErrorCategory::Parse, e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            err.exit_code()
        }
    };
    std::process::exit(code);
}
