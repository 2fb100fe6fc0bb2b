//! The `earmetrics` command line: argument definitions, subcommand
//! implementations and the annotation HTTP service.

pub mod args;
pub mod commands;
pub mod error;
pub mod server;

use std::ffi::OsString;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::{json, Value};

use args::{Cli, Command, ServeArgs};
use error::{CliError, Result};

/// Run one parsed command, returning its JSON summary.
pub fn run(cli: &Cli) -> Result<Value> {
    log::info!(
        "resolved config: {}",
        serde_json::to_string(cli).expect("arguments serialize")
    );
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::AnnotateServe(a) => annotate_serve(a),
        Command::Extract(a) => commands::extract(a),
        Command::Augment(a) => commands::augment(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Finetune(a) => commands::finetune(a),
        Command::Eval(a) => commands::eval(a),
    }
}

fn annotate_serve(a: &ServeArgs) -> Result<Value> {
    if !a.images.is_dir() {
        return Err(CliError::Data(format!(
            "{}: not a directory",
            a.images.display()
        )));
    }
    if let Some(dir) = &a.assets {
        if !dir.is_dir() {
            return Err(CliError::Data(format!(
                "{}: not a directory",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::data(a.out.display(), e))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
    let state = Arc::new(server::AppState::new(a.images.clone(), a.out.clone()));
    let addr = format!("{}:{}", a.host, a.port);
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::data(&addr, e))?;
        let local = listener
            .local_addr()
            .map_err(|e| CliError::data(&addr, e))?;
        log::info!("serving annotations on http://{local}");
        server::serve(listener, state, a.assets.clone())
            .await
            .map_err(|e| CliError::data(&addr, e))?;
        Ok(json!({ "command": "annotate-serve", "address": local.to_string() }))
    })
}

/// Parse `argv`, run, print the summary (stdout) or error (stderr) and
/// return the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            0
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
