use std::io::Write;

use clap::Parser;

fn main() {
    let cli = subid_tool::Cli::parse();
    match subid_tool::run(&cli) {
        Ok(lines) => {
            let mut out = std::io::stdout().lock();
            for line in lines {
                // a closed pipe (e.g. `| head`) is not an error
                if writeln!(out, "{line}").is_err() {
                    return;
                }
            }
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}
