//! Command-line front end for the shelling pipeline.
//!
//! Every subcommand reads and writes the text formats of the library
//! modules, prints a structured report to stdout, and exits 0 exactly when
//! no violation or error occurred (1 = violations found, 2 = error).
//! Reports are deterministic for a fixed configuration and inputs, apart
//! from the `# timestamp:` header line; all sampling is driven by `--seed`.

mod commands;
mod context;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "shelling-cli",
    about = "Build and verify shortlex shellings, growth data, divergence graphs, \
             populated patches, and pattern rules on hyperbolic groups",
    version
)]
pub struct Cli {
    #[command(flatten)]
    pub run: RunArgs,

    #[command(subcommand)]
    pub command: Command,
}

/// Configuration shared by every subcommand.
#[derive(Args)]
pub struct RunArgs {
    /// Built-in presentation (line = ℤ, free2 = F₂, genus2 = the one-relator
    /// genus-2 surface group)
    #[arg(long, global = true, value_enum, conflicts_with = "presentation")]
    pub preset: Option<Preset>,

    /// Path to a presentation file (`generators:` / `relator:` lines)
    #[arg(long, global = true)]
    pub presentation: Option<PathBuf>,

    /// Path to a serialized automaton; built from scratch when absent
    #[arg(long, global = true)]
    pub fsa: Option<PathBuf>,

    /// Lookahead for automaton construction (default: 1 for free
    /// presentations, half the relator length minus one otherwise)
    #[arg(long, global = true)]
    pub lookahead: Option<usize>,

    /// State cap for automaton construction
    #[arg(long, global = true, default_value_t = 100_000)]
    pub max_states: usize,

    /// Slimness parameter δ (default: surveyed on a small ball)
    #[arg(long, global = true)]
    pub delta: Option<usize>,

    /// Ball radius used when surveying δ
    #[arg(long, global = true, default_value_t = 3)]
    pub delta_radius: usize,

    /// Work budget for breadth-first enumerations
    #[arg(long, global = true, default_value_t = 50_000_000)]
    pub budget: usize,

    /// Interval-arithmetic precision in bits (≥ 64); the
    /// SHELLING_PRECISION_BITS environment variable sets the default
    #[arg(long, global = true, env = "SHELLING_PRECISION_BITS", default_value_t = 192)]
    pub precision_bits: u32,

    /// Seed for all randomized sampling (basepoint choice)
    #[arg(long, global = true, default_value_t = 0xC0FFEE)]
    pub seed: u64,

    /// Directory for artifacts written without an explicit --out
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Preset {
    Line,
    Free2,
    Genus2,
}

#[derive(Subcommand)]
pub enum Command {
    /// Enumerate the ball and report sphere sizes
    Ball {
        #[arg(long, default_value_t = 6)]
        radius: usize,
    },
    /// Survey geodesic triangles and report the observed slimness constant
    Delta {
        #[arg(long, default_value_t = 3)]
        radius: usize,
    },
    /// Build or validate the shortlex automaton
    Fsa {
        #[command(subcommand)]
        action: FsaAction,
    },
    /// Growth rate λ, weight vector μ, and commensurability analysis
    Growth {
        /// Population base for the commensurability test
        #[arg(long, default_value_t = 2)]
        q: u64,
        /// Exponent bound for the q^m = λ^n scan
        #[arg(long, default_value_t = 12)]
        inc_bound: u32,
    },
    /// Generate or check shelling patches
    Shell {
        #[command(subcommand)]
        action: ShellAction,
    },
    /// Build the divergence graph of one horosphere and check its structure
    Divergence {
        #[arg(long, default_value_t = 5)]
        radius: usize,
        /// Basepoint word (sampled by seed when absent)
        #[arg(long)]
        basepoint: Option<String>,
        /// Pick pool size for the sampled basepoint
        #[arg(long, default_value_t = 40)]
        dict_samples: usize,
        /// Horosphere level, relative to the basepoint height
        #[arg(long, default_value_t = 0)]
        level: i32,
        /// Future depth of the edge test
        #[arg(long, default_value_t = 2)]
        depth: usize,
        /// Write the graph file here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a populated patch: densities, growth exponents, matchings
    Populate {
        #[arg(long, default_value_t = 5)]
        radius: usize,
        #[arg(long)]
        basepoint: Option<String>,
        /// Dictionary samples per shell that a later check will use; the
        /// sampled basepoint is drawn from those picks
        #[arg(long, default_value_t = 40)]
        dict_samples: usize,
        #[arg(long, default_value_t = 2)]
        q: u32,
        /// Starting density ν₀ (rational, e.g. 10 or 41/4); default A
        #[arg(long)]
        nu0: Option<String>,
        /// Telescoping anchor ⋆ (rational)
        #[arg(long, default_value_t = String::from("0"))]
        star: String,
        /// Divergence depth for the level graphs
        #[arg(long, default_value_t = 2)]
        depth: usize,
        /// Jump-bound override L
        #[arg(long)]
        l_bound: Option<usize>,
        /// Skip levels with more cells than this
        #[arg(long, default_value_t = 1500)]
        max_level_cells: usize,
        /// Exponent bound for the commensurability precheck
        #[arg(long, default_value_t = 12)]
        inc_bound: u32,
        /// Write the populated-patch file here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a stored patch or populated patch; exit 0 iff clean
    Verify {
        /// Patch file or populated-patch file
        input: PathBuf,
        /// Skip the window-pattern dictionary clause
        #[arg(long)]
        no_dict: bool,
        /// Samples per shell for the dictionary scan
        #[arg(long, default_value_t = 40)]
        dict_samples: usize,
    },
    /// Analyze a growth-exponent sequence for periodicity
    Analyze {
        /// Populated-patch file; a synthetic balanced sequence is analyzed
        /// when absent
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        q: u32,
        /// Window base A (rational) for the synthetic sequence
        #[arg(long, default_value_t = String::from("10"))]
        a: String,
        /// ν₀ for the synthetic sequence; default A
        #[arg(long)]
        nu0: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        length: usize,
        #[arg(long, default_value_t = 1000)]
        max_period: usize,
        #[arg(long, default_value_t = 12)]
        inc_bound: u32,
    },
    /// Greedy distance-N coloring of a ball, exhaustively checked
    Color {
        #[arg(long, default_value_t = 4)]
        radius: usize,
        /// Minimum distance at which equal colors are allowed
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Write the coloring file here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a stored automaton or divergence graph as Graphviz DOT
    ExportDot {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
pub enum FsaAction {
    /// Construct the automaton from the presentation
    Build {
        /// Write the automaton file here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the automaton against breadth-first enumeration
    Validate {
        #[arg(long, default_value_t = 6)]
        radius: usize,
    },
}

#[derive(Subcommand)]
pub enum ShellAction {
    /// Generate a patch of shelling data around a basepoint
    Generate {
        #[arg(long, default_value_t = 5)]
        radius: usize,
        /// Basepoint word (sampled by seed from the dictionary-certified
        /// picks when absent)
        #[arg(long)]
        basepoint: Option<String>,
        /// Dictionary samples per shell that a later check will use; the
        /// sampled basepoint is drawn from those picks
        #[arg(long, default_value_t = 40)]
        dict_samples: usize,
        /// Write the patch file here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a stored patch against the local rules
    Check {
        input: PathBuf,
        #[arg(long)]
        no_dict: bool,
        #[arg(long, default_value_t = 40)]
        dict_samples: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(violations) => {
            if violations == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
