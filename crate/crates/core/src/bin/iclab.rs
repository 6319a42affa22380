use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let seed = match iclab::cli::env_seed() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(iclab::cli::EXIT_USAGE as u8);
        }
    };
    let code = iclab::cli::run(std::env::args_os(), seed, &mut io::stdout(), &mut io::stderr());
    ExitCode::from(code as u8)
}
