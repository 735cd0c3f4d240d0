use cefrkit::cli::{self, Context};

fn main() {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    // the HTTP client is only built once a remote backend is needed
    let mut ctx = Context { stdout: &mut out, stderr: &mut err, transport: None };
    let code = cli::run(std::env::args().collect(), &mut ctx);
    std::process::exit(code);
}
