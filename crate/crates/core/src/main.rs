fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REELWRIGHT_LOG", "warn")).init();
    let code = reelwright::cli::run_cli(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
