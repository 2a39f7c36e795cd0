use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use geostore::config::Config;
use geostore::server::{serve, Service};
use tracing_subscriber::EnvFilter;

/// Geospatial chunk store server.
///
/// Settings come from the config file and can be overridden with
/// GEOSTORE_<SECTION>_<KEY> environment variables, for example
/// GEOSTORE_SERVER_PORT=8080 or GEOSTORE_STORE_BACKEND=memory.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// TOML configuration file.
    #[arg(short, long, env = "GEOSTORE_CONFIG")]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    let config = match Config::load(args.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("geostore-server: {e}");
            return ExitCode::from(1);
        }
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("geostore-server: {e}");
            return ExitCode::FAILURE;
        }
    };
    let result = runtime.block_on(async {
        let addr = (config.server.host.clone(), config.server.port);
        let service = tokio::task::spawn_blocking(move || Service::open(config))
            .await
            .map_err(std::io::Error::other)?
            .map_err(std::io::Error::other)?;
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let local = listener.local_addr()?;
        println!("listening on http://{local}");
        std::io::stdout().flush()?;
        serve(service, listener).await
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("geostore-server: {e}");
            ExitCode::FAILURE
        }
    }
}
