use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use bodygps::tasks::Engine;
use bodygps::{DescriptorLayout, IntensityWindow, OutputMode, Sampler};
use bodygps_service::{AppState, ServiceConfig};

use crate::common::{self, config_error};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    atlas: PathBuf,
    #[arg(long, default_value_t = 8088)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Volumes kept in memory before the least recently used is dropped.
    #[arg(long, default_value_t = ServiceConfig::default().max_sessions)]
    max_sessions: usize,
    /// Largest accepted upload, MiB.
    #[arg(long, default_value_t = 1024)]
    max_upload_mib: usize,
    #[arg(long, value_parser = common::parse_window, allow_hyphen_values = true, default_value = "-1024,3071")]
    window: IntensityWindow,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    if args.max_sessions == 0 {
        return Err(config_error("--max-sessions must be at least 1"));
    }
    let layout = DescriptorLayout::default_layout();
    let params = common::load_model(&args.model, &layout, OutputMode::AtlasCoord)?;
    let atlas = Arc::new(common::load_atlas(&args.atlas)?);
    let engine = Engine::new(params, Sampler::new(layout, args.window), atlas)?;
    let state = AppState::new(
        Arc::new(engine),
        ServiceConfig {
            max_upload_bytes: args.max_upload_mib.saturating_mul(1 << 20),
            max_sessions: args.max_sessions,
        },
    );
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(bodygps_service::serve(state, SocketAddr::new(args.host, args.port)))?;
    Ok(())
}
