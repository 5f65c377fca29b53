use dilute_bose::cli::{run, THREADS_ENV};

fn main() {
    let env = std::env::var(THREADS_ENV).ok();
    let code = run(std::env::args_os(), env.as_deref(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
