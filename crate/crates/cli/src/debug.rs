//! `sgl debug`: the debug API over a paused world.

use crate::run::open_world;
use crate::{EngineFlags, Failure};
use clap::Args;
use sgl::debug::{checkpoint, router, Session};
use sgl::runtime::{EngineConfig, TraceConfig};
use std::fs;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;

#[derive(Args)]
pub struct DebugArgs {
    /// Source files, analyzed as one unit in the given order.
    #[arg(required = true)]
    sources: Vec<PathBuf>,
    #[arg(long, value_name = "PATH")]
    world: Option<PathBuf>,
    /// Start from a checkpoint instead of a world document.
    #[arg(long, value_name = "PATH", conflicts_with = "world")]
    resume: Option<PathBuf>,
    /// Port to listen on; 0 picks a free one.
    #[arg(long, default_value_t = 7878)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// Write a checkpoint here when the server shuts down.
    #[arg(long, value_name = "PATH")]
    checkpoint_on_exit: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineFlags,
}

pub fn debug(a: &DebugArgs) -> Result<(), Failure> {
    // The effect drilldown needs entry logging, so it is on unless the
    // config or flags choose otherwise.
    let defaults = EngineConfig {
        trace: TraceConfig {
            effects: vec!["*".into()],
        },
        ..EngineConfig::default()
    };
    let world = open_world(&a.sources, a.world.as_deref(), a.resume.as_deref(), &a.engine, defaults)?;
    let addr: SocketAddr = format!("{}:{}", a.bind, a.port)
        .parse()
        .map_err(|e| Failure::Env(format!("bad address {}:{}: {e}", a.bind, a.port)))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::Env(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::Env(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| Failure::Env(e.to_string()))?;
        let handle = Session::spawn(world);
        println!("sgl debug listening on http://{local}");
        let _ = std::io::stdout().flush();
        axum::serve(listener, router(handle.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Failure::Env(e.to_string()))?;
        let world = handle.shutdown().await.ok_or_else(|| Failure::Invariant("engine thread vanished".into()))?;
        eprintln!("stopped at tick {}", world.tick());
        if let Some(path) = &a.checkpoint_on_exit {
            let f = fs::File::create(path).map_err(|e| Failure::Env(format!("{}: {e}", path.display())))?;
            let meta = checkpoint(&world, BufWriter::new(f)).map_err(|e| Failure::Env(e.to_string()))?;
            eprintln!("checkpoint at tick {} written to {}", meta.tick, path.display());
        }
        Ok(())
    })
}
