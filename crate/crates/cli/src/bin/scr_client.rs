use clap::Parser;

#[path = "../scr_cmd.rs"]
mod scr_cmd;

#[derive(Parser)]
#[command(
    name = "scr-client",
    version,
    about = "Drive an SCR race server with a saved agent"
)]
struct Cli {
    #[command(flatten)]
    args: scr_cmd::ScrArgs,
}

fn main() -> anyhow::Result<()> {
    scr_cmd::run(Cli::parse().args)
}
