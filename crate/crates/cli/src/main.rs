use std::io::Write;

fn main() {
    let args: Vec<std::ffi::OsString> = std::env::args_os().collect();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr();
    let threads = std::env::var("ATLASDIFFEO_THREADS").ok().map(|v| v.trim().parse::<usize>());
    let code = match threads {
        Some(Ok(n)) if n > 0 => {
            drop(out);
            let mut buf = Vec::new();
            let code = atlasdiffeo_cli::run_with_threads(args, n, &mut buf, &mut err);
            let _ = std::io::stdout().write_all(&buf);
            code
        }
        Some(_) => {
            let _ = writeln!(err, "error: ATLASDIFFEO_THREADS must be a positive integer");
            atlasdiffeo_cli::EXIT_INPUT
        }
        None => atlasdiffeo_cli::run(args, &mut out, &mut err),
    };
    std::process::exit(code);
}
