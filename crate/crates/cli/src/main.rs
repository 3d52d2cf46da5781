use clap::Parser;

fn main() {
    homog_cli::init_logging();
    let cli = match homog_cli::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // usage errors are configuration errors, not solver failures
            let code = if e.use_stderr() { homog_cli::exit::CONFIG } else { homog_cli::exit::OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    std::process::exit(homog_cli::run(cli));
}
