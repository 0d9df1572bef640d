use std::io::{self, BufRead, Write};

fn main() {
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut out = io::stdout().lock();
    let mut err = io::stderr().lock();
    let code = rlfa_cli::run(std::env::args_os(), &mut input as &mut dyn BufRead, &mut out, &mut err);
    let _ = out.flush();
    std::process::exit(code);
}
