use std::io::{stderr, stdout};

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let code = choicectx::cli::run(std::env::args_os(), &mut stdout(), &mut stderr());
    std::process::exit(code);
}
