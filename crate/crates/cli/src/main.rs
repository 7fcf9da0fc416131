use std::io::{self, BufRead, Write};

use tracing_subscriber::EnvFilter;

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("ACE_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();
    let stdin = io::stdin();
    let mut stdin: Box<dyn BufRead> = Box::new(stdin.lock());
    let mut stdout = io::stdout().lock();
    let mut stderr = io::stderr().lock();
    let mut io = ace_cli::cli::Io { stdin: &mut stdin, stdout: &mut stdout, stderr: &mut stderr };
    let code = ace_cli::cli::run(std::env::args_os(), &mut io);
    let _ = stdout.flush();
    std::process::exit(code);
}
