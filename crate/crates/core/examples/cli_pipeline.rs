//! Drives the command-line interface in-process: generate data, pretrain,
//! encode and evaluate, printing the classification report.
//!
//! `cargo run --release --example cli_pipeline -- [work_dir]`

use std::path::PathBuf;

use mtsrl::cli::main_with;

fn step(args: &[&str]) {
    println!("$ mtsrl {}", args.join(" "));
    let code = main_with(std::iter::once("mtsrl").chain(args.iter().copied()));
    assert_eq!(code, 0, "command failed with exit code {code}");
}

fn main() {
    let work = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "cli_pipeline_out".into()));
    let p = |rel: &str| work.join(rel).to_string_lossy().into_owned();
    std::fs::create_dir_all(&work).unwrap();
    let config = work.join("run.toml");
    std::fs::write(
        &config,
        format!(
            "seed = 1\noutput_dir = {:?}\n[data]\ntrain = {:?}\ntest = {:?}\n[train]\niterations = 60\n[eval]\ncheckpoint = {:?}\n",
            p("out"),
            p("data/train.csv"),
            p("data/test.csv"),
            p("out/checkpoint.bin"),
        ),
    )
    .unwrap();
    let config = config.to_string_lossy().into_owned();

    step(&["generate", "sinusoid", "--out", &p("data"), "--seed", "1"]);
    step(&["pretrain", "--config", &config]);
    step(&["encode", "--config", &config, "--checkpoint", &p("out/checkpoint.bin"), "--data", &p("data/test.csv")]);
    step(&["eval", "cls", "--config", &config]);
    println!("{}", std::fs::read_to_string(work.join("out/report_cls.json")).unwrap());
}
