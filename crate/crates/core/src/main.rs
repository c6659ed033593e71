use clap::Parser;

use qexpr::cli::{dispatch, Cli};

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli.command, &argv) {
        // Machine-readable error on stderr, nonzero exit.
        let payload = serde_json::json!({
            "error": { "kind": e.kind(), "message": e.to_string() }
        });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}
