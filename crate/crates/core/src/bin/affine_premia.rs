use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(affine_premia::cli::run())
}
