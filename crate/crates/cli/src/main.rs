use clap::Parser;

#[tokio::main]
async fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match roomkit_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Exit 2 means an aborted game, so usage errors report 1.
            let code = if e.use_stderr() { roomkit_cli::exit::ENVIRONMENT } else { roomkit_cli::exit::OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = roomkit_cli::run(cli).await;
    std::process::exit(code);
}
