//! Drive the command-line front end in-process: generate data, dry-run a
//! plan, train briefly and evaluate one fold.
//!
//!     cargo run --release --example command_line

use std::ffi::OsString;

use deltagate::cli::run;

fn cli(args: &[&str]) {
    let argv: Vec<OsString> = std::iter::once("deltagate").chain(args.iter().copied()).map(OsString::from).collect();
    println!("$ deltagate {}", args.join(" "));
    let code = run(argv);
    println!("-> {code:?}\n");
}

fn main() {
    let dir = std::env::temp_dir().join("deltagate-cli-example");
    let data = dir.join("small.eegd");
    let out = dir.join("run");
    let (data, out) = (data.to_str().unwrap(), out.to_str().unwrap());
    cli(&["gen-data", "--out", data, "--subjects", "5", "--samples-per-subject", "12", "--channels", "4", "--timesteps", "64", "--separation", "2.0"]);
    cli(&["train", "--data", data, "--dry-run", "--protocol", "inter"]);
    cli(&["train", "--data", data, "--out", out, "--epochs", "20", "--depth", "4", "--mlp-hidden", "32", "--lr", "0.003"]);
    let manifest = format!("{out}/manifest.json");
    let params = format!("{out}/fold0.params.dgnw");
    cli(&["eval", "--params", &params, "--manifest", &manifest, "--fold", "0"]);
}
