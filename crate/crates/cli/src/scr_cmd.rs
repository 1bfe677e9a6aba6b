use anyhow::{Context, Result};
use clap::Args;
use lanekeep::agents::{Agent, AgentCheckpoint};
use lanekeep::scr::{run_client, AgentDriver, ClientConfig};
use std::path::PathBuf;
use std::time::Duration;

#[derive(Args, Debug)]
pub struct ScrArgs {
    #[arg(long, default_value = "localhost")]
    pub host: String,
    #[arg(long, default_value_t = 3001)]
    pub port: u16,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub timeout_ms: u64,
    #[arg(long, default_value = "SCR")]
    pub id: String,
    #[arg(long, default_value_t = 5)]
    pub retries: u32,
    #[arg(long)]
    pub max_steps: Option<u64>,
}

pub fn run(args: ScrArgs) -> Result<()> {
    let ckpt = AgentCheckpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let agent = Agent::from_checkpoint(&ckpt)?;
    let mut cfg = ClientConfig::new(args.host, args.port);
    cfg.client_id = args.id;
    cfg.timeout = Duration::from_millis(args.timeout_ms);
    cfg.retries = args.retries;
    cfg.max_steps = args.max_steps;
    let summary = run_client(&cfg, &mut AgentDriver { agent })?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}
