use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kur_cli::commands::{self, Dialect, Format, MchainOp};

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum FormatArg {
    Text,
    Machine,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum DialectArg {
    Fooo,
    Mw,
}

#[derive(Parser)]
#[command(name = "kur", about = "Exact checks for finite Kuranishi data", version)]
struct Cli {
    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value = "text")]
    format: FormatArg,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate any document against its structural axioms.
    Validate { file: PathBuf },
    /// Compose two morphism documents (result applies FIRST, then SECOND).
    Compose {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide whether a chart morphism is a coordinate change.
    Coordchange { file: PathBuf },
    /// Report pointwise invariants and the classification of an atlas.
    Invariants { file: PathBuf },
    /// Check transversality and certify the fibre product of two space morphisms.
    FibreProduct { left: PathBuf, right: PathBuf },
    /// Check 2-category coherence laws on a fragment document.
    Laws {
        file: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check stack descent axioms for the hom prestacks of an atlas.
    Stack { file: PathBuf },
    /// Operate on polytope chains.
    Mchain {
        #[command(subcommand)]
        op: MchainCmd,
    },
    /// Import a coordinate change written in an external dialect.
    Import {
        file: PathBuf,
        #[arg(long, value_enum)]
        dialect: DialectArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Orient an atlas, reporting one sign per chart.
    Orient { file: PathBuf },
}

#[derive(Subcommand)]
enum MchainCmd {
    /// Boundary of a chain.
    Boundary {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Canonical normal form of a chain.
    Normalize {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pushforward of a chain along an affine map document.
    Pushforward {
        file: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    // Accepted for compatibility; all checks here are single-threaded.
    let _threads = std::env::var("KUR_THREADS").ok();

    let cli = Cli::parse();
    let format = match cli.format {
        FormatArg::Text => Format::Text,
        FormatArg::Machine => Format::Machine,
    };
    let outcome = match &cli.cmd {
        Cmd::Validate { file } => commands::validate(format, file),
        Cmd::Compose { first, second, out } => {
            commands::compose(format, first, second, out.as_ref())
        }
        Cmd::Coordchange { file } => commands::coordchange(format, file),
        Cmd::Invariants { file } => commands::invariants(format, file),
        Cmd::FibreProduct { left, right } => commands::fibre_product(format, left, right),
        Cmd::Laws {
            file,
            samples,
            seed,
        } => commands::laws(format, file, *samples, *seed),
        Cmd::Stack { file } => commands::stack(format, file),
        Cmd::Mchain { op } => match op {
            MchainCmd::Boundary { file, out } => {
                commands::mchain(format, &MchainOp::Boundary, file, out.as_ref())
            }
            MchainCmd::Normalize { file, out } => {
                commands::mchain(format, &MchainOp::Normalize, file, out.as_ref())
            }
            MchainCmd::Pushforward { file, map, out } => {
                commands::mchain(format, &MchainOp::Pushforward(map.clone()), file, out.as_ref())
            }
        },
        Cmd::Import { file, dialect, out } => {
            let d = match dialect {
                DialectArg::Fooo => Dialect::Fooo,
                DialectArg::Mw => Dialect::Mw,
            };
            commands::import(format, file, d, out.as_ref())
        }
        Cmd::Orient { file } => commands::orient(format, file),
    };
    print!("{}", outcome.stdout);
    ExitCode::from(outcome.exit as u8)
}
