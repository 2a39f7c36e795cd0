//! `geostore` command-line client.
//!
//! Every command maps to a fixed sequence of HTTP requests; `--dry-run`
//! prints that sequence instead of sending it.

mod client;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use geostore_core::model::LayerPath;
use url::Url;

use client::{Client, ImportRequest};

pub const DEFAULT_URL: &str = "http://localhost:63020";

const QUOTING: &str = "\
Queries are passed to the server as a single argument. Most shells treat
parentheses specially, so quote the whole query:

    geostore search 'AND(NOT(LTE(deleted 2018-09-13)) Köln)'
    geostore delete 'LT(deleted 2018)'

Exit codes: 0 success, 1 usage error, 2 error reported by the server,
3 server unreachable.";

#[derive(Debug, Parser)]
#[command(name = "geostore", version, about = "Client for the geostore server", after_help = QUOTING)]
struct Cli {
    /// Server address.
    #[arg(long, global = true, env = "GEOSTORE_URL", default_value = DEFAULT_URL)]
    url: Url,

    /// Print the HTTP requests instead of sending them.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Upload files, wait until they are indexed and print chunk counts.
    #[command(after_help = QUOTING)]
    Import(ImportArgs),
    /// Export the chunks matching a query as one document.
    #[command(after_help = QUOTING)]
    Search(SearchArgs),
    /// Delete the chunks matching a query.
    #[command(after_help = QUOTING)]
    Delete(DeleteArgs),
    /// Set or remove properties of the chunks matching a query.
    #[command(subcommand)]
    Property(PropertyCommand),
    /// Add or remove tags of the chunks matching a query.
    #[command(subcommand)]
    Tag(TagCommand),
}

#[derive(Debug, Args)]
struct Layer {
    /// Layer to work on; searches include all sub-layers.
    #[arg(short, long, default_value = "/")]
    layer: String,
}

#[derive(Debug, Args)]
struct ImportArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[command(flatten)]
    layer: Layer,
    /// Comma-separated tags attached to every chunk.
    #[arg(long)]
    tags: Option<String>,
    /// Comma-separated key:value properties attached to every chunk.
    #[arg(long)]
    props: Option<String>,
    /// CRS recorded for features that do not name one.
    #[arg(long)]
    fallback_crs: Option<String>,
    /// Files uploaded at the same time.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u16).range(1..))]
    parallel: u16,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(default_value = "")]
    query: String,
    #[command(flatten)]
    layer: Layer,
    /// Write the document to a file instead of standard output.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DeleteArgs {
    #[arg(default_value = "")]
    query: String,
    #[command(flatten)]
    layer: Layer,
    /// Allow an empty query, deleting the whole layer.
    #[arg(long)]
    all: bool,
}

#[derive(Debug, Args)]
struct Target {
    #[arg(default_value = "")]
    query: String,
    #[command(flatten)]
    layer: Layer,
}

#[derive(Debug, Subcommand)]
enum PropertyCommand {
    /// Set properties, given as key:value,...
    #[command(after_help = QUOTING)]
    Set {
        #[arg(long, required = true)]
        props: String,
        #[command(flatten)]
        target: Target,
    },
    /// Remove properties, given as key,...
    #[command(after_help = QUOTING)]
    Rm {
        #[arg(long, required = true)]
        props: String,
        #[command(flatten)]
        target: Target,
    },
}

#[derive(Debug, Subcommand)]
enum TagCommand {
    /// Add tags, given as tag,...
    #[command(after_help = QUOTING)]
    Add {
        #[arg(long, required = true)]
        tags: String,
        #[command(flatten)]
        target: Target,
    },
    /// Remove tags, given as tag,...
    #[command(after_help = QUOTING)]
    Rm {
        #[arg(long, required = true)]
        tags: String,
        #[command(flatten)]
        target: Target,
    },
}

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Server(String),
    Connection(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Server(_) => 2,
            Failure::Connection(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Server(m) | Failure::Connection(m) => m,
        }
    }
}

/// Accepts the single-dash `-props` and `-tags` spellings.
fn normalize_args(args: impl IntoIterator<Item = OsString>) -> Vec<OsString> {
    args.into_iter()
        .map(|a| match a.to_str() {
            Some(s) if s == "-props" || s.starts_with("-props=") => format!("-{s}").into(),
            Some(s) if s == "-tags" || s.starts_with("-tags=") => format!("-{s}").into(),
            _ => a,
        })
        .collect()
}

fn layer(raw: &str) -> Result<LayerPath, Failure> {
    LayerPath::parse(raw).map_err(|e| Failure::Usage(e.to_string()))
}

fn items(raw: &str) -> Vec<&str> {
    raw.split(',').filter(|s| !s.is_empty()).collect()
}

fn check_pairs(raw: &str) -> Result<(), Failure> {
    let pairs = items(raw);
    if pairs.is_empty() {
        return Err(Failure::Usage("no properties given".into()));
    }
    for item in pairs {
        match item.split_once(':') {
            Some((k, _)) if !k.is_empty() => {}
            _ => {
                return Err(Failure::Usage(format!(
                    "malformed property `{item}`, expected key:value"
                )))
            }
        }
    }
    Ok(())
}

fn check_list(raw: &str, what: &str) -> Result<(), Failure> {
    if items(raw).is_empty() {
        return Err(Failure::Usage(format!("no {what} given")));
    }
    Ok(())
}

/// Runs one invocation and returns the process exit code. `out` receives
/// documents, counts and dry-run transcripts; `err` receives diagnostics.
pub fn run(args: impl IntoIterator<Item = OsString>, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let cli = match Cli::try_parse_from(normalize_args(args)) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "geostore: {}", f.message());
            f.exit_code()
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let client = Client::new(cli.url, cli.dry_run)?;
    match cli.command {
        Command::Import(a) => {
            let layer = layer(&a.layer.layer)?;
            if let Some(p) = &a.props {
                check_pairs(p)?;
            }
            for f in &a.files {
                if !f.is_file() {
                    return Err(Failure::Usage(format!("no such file: {}", f.display())));
                }
            }
            let request = ImportRequest {
                layer,
                tags: a.tags,
                properties: a.props,
                fallback_crs: a.fallback_crs,
            };
            client.import(&a.files, &request, a.parallel.into(), out, err)
        }
        Command::Search(a) => {
            let layer = layer(&a.layer.layer)?;
            client.search(&layer, &a.query, a.output.as_deref(), out)
        }
        Command::Delete(a) => {
            let layer = layer(&a.layer.layer)?;
            if a.query.trim().is_empty() && !a.all {
                return Err(Failure::Usage(format!(
                    "refusing to delete everything in {layer}; pass --all to confirm"
                )));
            }
            let n = client.delete(&layer, &a.query, a.all, out)?;
            report(out, "deleted", n)
        }
        Command::Property(PropertyCommand::Set { props, target }) => {
            check_pairs(&props)?;
            let layer = layer(&target.layer.layer)?;
            let n = client.metadata("PUT", &layer, &target.query, "properties", &props, out)?;
            report(out, "affected", n)
        }
        Command::Property(PropertyCommand::Rm { props, target }) => {
            check_list(&props, "properties")?;
            let layer = layer(&target.layer.layer)?;
            let n = client.metadata("DELETE", &layer, &target.query, "properties", &props, out)?;
            report(out, "affected", n)
        }
        Command::Tag(TagCommand::Add { tags, target }) => {
            check_list(&tags, "tags")?;
            let layer = layer(&target.layer.layer)?;
            let n = client.metadata("PUT", &layer, &target.query, "tags", &tags, out)?;
            report(out, "affected", n)
        }
        Command::Tag(TagCommand::Rm { tags, target }) => {
            check_list(&tags, "tags")?;
            let layer = layer(&target.layer.layer)?;
            let n = client.metadata("DELETE", &layer, &target.query, "tags", &tags, out)?;
            report(out, "affected", n)
        }
    }
}

fn report(out: &mut dyn Write, what: &str, n: Option<u64>) -> Result<(), Failure> {
    if let Some(n) = n {
        writeln!(out, "{what}: {n}").map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}
