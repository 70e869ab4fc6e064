//! `rawmark`: train, embed, develop, extract and evaluate RAW-domain
//! watermarks.
//!
//! Exit status: 0 on success, 1 when an input fails validation, 2 on I/O
//! failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "rawmark", version, about = "Watermark Bayer RAW images so the mark survives the ISP")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Config file (TOML). Defaults to $RAWIW_CONFIG when set.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set lambda=[2,1,1,1,1]`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a procedural RGB corpus and mosaic random crops into a dataset.
    Synth(commands::SynthArgs),
    /// Scan a directory of `<id>_raw.png` / `<id>_rgb.png` pairs into a manifest.
    Ingest(commands::IngestArgs),
    /// Create a bundle and fit its deep ISP to the dataset.
    IspTrain(commands::IspTrainArgs),
    /// Run watermark training stages on a bundle with a pretrained ISP.
    Train(commands::TrainArgs),
    /// Embed a payload into a RAW mosaic.
    Embed(commands::EmbedArgs),
    /// Render a RAW mosaic to RGB.
    Develop(commands::DevelopArgs),
    /// Recover the payload from an RGB image.
    Extract(commands::ExtractArgs),
    /// BER of each distortion alone at every sweep level.
    Sweep(commands::SweepArgs),
    /// Quality and BER through the deep and classical ISPs.
    Eval(commands::EvalArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    // Single-threaded kernels keep outputs byte-reproducible.
    tch::set_num_threads(1);
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Ingest(a) => commands::ingest(&a),
        Command::IspTrain(a) => commands::isp_train(&cli.config, &a),
        Command::Train(a) => commands::train(&cli.config, &a),
        Command::Embed(a) => commands::embed(&a),
        Command::Develop(a) => commands::develop(&cli.config, &a),
        Command::Extract(a) => commands::extract(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Eval(a) => commands::eval(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
