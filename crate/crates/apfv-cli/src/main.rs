//! Command-line front end: single runs, convergence studies, the quasi-1-D
//! demo table, and mesh export.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use apfv::harness::{
    convergence_study, execute_run, parse_config, table1_demo, HarnessError,
};
use apfv::mesh::{MeshKind, Rect};

#[derive(Parser)]
#[command(name = "apfv", about = "Asymptotic-preserving finite-volume solver for Friedrichs systems with stiff relaxation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a single run described by a TOML config file.
    Run { config: PathBuf },
    /// Execute a convergence study over the config's refinement list.
    Study { config: PathBuf },
    /// Print the coarse-AP-versus-fine-upwind error table.
    #[command(name = "demo-table1")]
    DemoTable1,
    /// Generate a mesh and write it in the plain-text format.
    ExportMesh {
        kind: String,
        nx: usize,
        ny: usize,
        seed: u64,
        path: PathBuf,
    },
}

fn init_threads() {
    if let Ok(t) = std::env::var("APFV_THREADS") {
        if let Ok(n) = t.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        } else {
            eprintln!("warning: ignoring unparseable APFV_THREADS={t}");
        }
    }
}

fn load_config(path: &PathBuf) -> Result<apfv::harness::RunConfig, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn dispatch(cmd: Cmd) -> Result<(), HarnessError> {
    match cmd {
        Cmd::Run { config } => {
            let cfg = load_config(&config)?;
            let out = execute_run(&cfg)?;
            println!(
                "cells {}  steps {}  dt {:.6e}  wall {:.3}s",
                out.mesh.n_cells(),
                out.steps,
                out.dt,
                out.wall_s
            );
            if let (Some(l1), Some(l2)) = (out.l1, out.l2) {
                println!("L1 {l1:.6e}  L2 {l2:.6e}");
            }
            Ok(())
        }
        Cmd::Study { config } => {
            let cfg = load_config(&config)?;
            let rows = convergence_study(&cfg)?;
            println!("{:>6} {:>6} {:>12} {:>13} {:>13} {:>9} {:>9}", "nx", "ny", "h", "L1", "L2", "ord_L1", "ord_L2");
            for r in rows {
                let ord = |o: Option<f64>| o.map(|x| format!("{x:9.3}")).unwrap_or_else(|| "        -".into());
                println!(
                    "{:>6} {:>6} {:>12.5e} {:>13.6e} {:>13.6e} {} {}",
                    r.nx,
                    r.ny,
                    r.h,
                    r.l1,
                    r.l2,
                    ord(r.order_l1),
                    ord(r.order_l2)
                );
            }
            Ok(())
        }
        Cmd::DemoTable1 => {
            let rows = table1_demo()?;
            println!("{:>10} {:>7} {:>13} {:>13} {:>9}", "scheme", "cells", "L1", "L2", "wall[s]");
            for r in rows {
                println!(
                    "{:>10} {:>7} {:>13.6e} {:>13.6e} {:>9.3}",
                    r.scheme, r.cells, r.l1, r.l2, r.wall_s
                );
            }
            Ok(())
        }
        Cmd::ExportMesh { kind, nx, ny, seed, path } => {
            let k = MeshKind::parse(&kind)
                .ok_or_else(|| HarnessError::Config(format!("unknown mesh kind `{kind}`")))?;
            let mesh = k.build(nx, ny, seed, Rect::unit())?;
            mesh.export_file(&path)?;
            println!("wrote {} ({} nodes, {} cells)", path.display(), mesh.nodes.len(), mesh.n_cells());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
