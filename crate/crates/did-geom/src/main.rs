use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(did_geom::cli::run(std::env::args()) as u8)
}
