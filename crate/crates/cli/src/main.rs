use std::process::ExitCode;

fn main() -> ExitCode {
    match specshap_cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", specshap_cli::one_line(&e));
            ExitCode::FAILURE
        }
    }
}
