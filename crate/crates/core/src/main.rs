use std::io;
use std::process::ExitCode;

use chsh_delay::cli::{self, ConfigError};

fn main() -> ExitCode {
    let config = match cli::parse_config(std::env::args()) {
        Ok(config) => config,
        Err(error) => {
            if error.is_informational() {
                // --help / --version render through clap and exit cleanly.
                if let ConfigError::Flags(inner) = error {
                    let _ = inner.print();
                }
                return ExitCode::SUCCESS;
            }
            eprintln!("{error}");
            return ExitCode::from(1);
        }
    };
    let stdout = io::stdout();
    let stderr = io::stderr();
    match cli::run(&config, &mut stdout.lock(), &mut stderr.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(2)
        }
    }
}
