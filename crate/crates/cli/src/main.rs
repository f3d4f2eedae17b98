use clap::Parser;
use skywatch_cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(written) => {
            for path in written {
                eprintln!("wrote {}", path.display());
            }
        }
        Err(err) => {
            eprintln!("error ({}): {err}", err.class().as_str());
            std::process::exit(exit_code(&err));
        }
    }
}
