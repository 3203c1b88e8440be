//! Command-line entry points. Exit codes: 0 success, 1 runtime failure
//! (divergence, numerical errors, I/O), 2 invalid flags or config.

use crate::error::Error;
use crate::harness::run::{gradient_fd_suite, newton_demo, run, ExperimentConfig};
use crate::mesh::{build_laplacian, icosphere, laplacian_spectrum, load_off, write_off};
use clap::{Parser, Subcommand};
use std::io::BufReader;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "msino", about = "Sobolev training of neural maps on manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run an experiment described by a JSON config
    Train {
        /// Path to the experiment config (JSON)
        #[arg(long)]
        config: PathBuf,
    },
    /// Finite-difference audit of the analytic loss gradients
    CheckGradients {
        /// RNG seed for the audit cases
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Print the lowest k Laplacian eigenvalues of a mesh
    LaplacianEig {
        /// OFF mesh path; defaults to a built-in subdivision-3 icosphere
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// How many eigenvalues (including the trivial zero mode)
        #[arg(long, default_value_t = 6)]
        k: usize,
    },
    /// Two-step Newton contraction demo on a tiny teacher-student problem
    NewtonDemo,
    /// Generate an icosphere mesh and write it as OFF
    GenMesh {
        /// Subdivision level (0 = icosahedron)
        #[arg(long)]
        subdiv: usize,
        /// Output OFF path
        #[arg(long)]
        out: PathBuf,
    },
}

fn runtime(e: Error) -> i32 {
    match e {
        Error::Config(msg) => {
            eprintln!("config error: {msg}");
            2
        }
        other => {
            eprintln!("error: {other}");
            1
        }
    }
}

pub fn run_cli() -> i32 {
    run_cli_from(std::env::args_os())
}

/// Testable variant of [`run_cli`] with explicit arguments.
pub fn run_cli_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // help/version requests are successes, bad flags are usage errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Cmd::Train { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("cannot read {}: {e}", config.display());
                    return 2;
                }
            };
            let cfg: ExperimentConfig = match serde_json::from_str(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("invalid config: {e}");
                    return 2;
                }
            };
            match run(&cfg) {
                Ok(art) => {
                    println!("metrics: {}", art.metrics_csv.display());
                    if art.diverged {
                        eprintln!("run diverged; diagnostic row written");
                        1
                    } else {
                        0
                    }
                }
                Err(e) => runtime(e),
            }
        }
        Cmd::CheckGradients { seed } => match gradient_fd_suite(seed) {
            Ok(worst) => {
                println!("max relative gradient error over 50 cases: {worst:.3e}");
                if worst <= 1e-5 {
                    println!("PASS (tolerance 1e-5)");
                    0
                } else {
                    println!("FAIL (tolerance 1e-5)");
                    1
                }
            }
            Err(e) => runtime(e),
        },
        Cmd::LaplacianEig { mesh, k } => {
            let result = (|| {
                let m = match mesh {
                    Some(p) => {
                        let f = std::fs::File::open(&p).map_err(Error::from)?;
                        load_off(BufReader::new(f))?
                    }
                    None => icosphere::<f64>(3),
                };
                let op = build_laplacian(&m)?;
                laplacian_spectrum(&op, k)
            })();
            match result {
                Ok(evals) => {
                    for (i, ev) in evals.iter().enumerate() {
                        println!("lambda_{} = {ev:.6}", i + 1);
                    }
                    0
                }
                Err(e) => runtime(e),
            }
        }
        Cmd::NewtonDemo => match newton_demo() {
            Ok(errors) => {
                println!("k\te_k (parameter error)");
                for (k, e) in errors.iter().enumerate() {
                    println!("{k}\t{e:.6e}");
                }
                0
            }
            Err(e) => runtime(e),
        },
        Cmd::GenMesh { subdiv, out } => {
            if subdiv > 7 {
                eprintln!("subdiv {subdiv} too large (max 7)");
                return 2;
            }
            let mesh = icosphere::<f64>(subdiv);
            let result = (|| -> Result<(), Error> {
                let mut f = std::io::BufWriter::new(std::fs::File::create(&out)?);
                write_off(&mesh, &mut f)?;
                Ok(())
            })();
            match result {
                Ok(()) => {
                    println!(
                        "wrote {} ({} vertices, {} faces)",
                        out.display(),
                        mesh.vertices.len(),
                        mesh.faces.len()
                    );
                    0
                }
                Err(e) => runtime(e),
            }
        }
    }
}
