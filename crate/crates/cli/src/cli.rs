use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use ladderforge_core::generator::GenerationParams;
use ladderforge_core::storage::DATA_DIR_ENV;

#[derive(Debug, Parser)]
#[command(
    name = "ladderforge",
    version,
    about = "Feedback ladders for buggy programming submissions"
)]
pub struct Cli {
    /// Store root.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "ladderforge-data")]
    pub data_dir: PathBuf,

    /// `java`, `sh`, or a toolchain config file (`path` or `path#name`).
    #[arg(long, global = true, default_value = "java")]
    pub toolchain: String,

    #[arg(long, global = true)]
    pub model: Option<String>,

    #[arg(long, global = true)]
    pub temperature: Option<f64>,

    #[arg(long, global = true)]
    pub max_tokens: Option<u32>,

    /// Chat-completion endpoint root, e.g. `https://api.openai.com/v1`.
    #[arg(long, global = true)]
    pub base_url: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn generation_params(&self) -> GenerationParams {
        let mut params = GenerationParams::default();
        if let Some(m) = &self.model {
            params.model_name = m.clone();
        }
        if let Some(t) = self.temperature {
            params.temperature = t;
        }
        if let Some(n) = self.max_tokens {
            params.max_tokens = n;
        }
        if let Some(u) = &self.base_url {
            params.base_url = u.clone();
        }
        params
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load problem bundles and/or a submission table.
    Ingest {
        /// A bundle directory or a directory of bundles.
        #[arg(long)]
        problems: Option<PathBuf>,
        /// CSV or JSON-lines submission table.
        #[arg(long)]
        submissions: Option<PathBuf>,
        /// JSON object renaming submission columns.
        #[arg(long)]
        columns: Option<PathBuf>,
    },
    /// Compile and test submissions. Without ids or `--all`, grades the
    /// submissions that have no grade yet.
    Grade {
        #[arg(long, conflicts_with = "ids")]
        all: bool,
        ids: Vec<String>,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
    /// Pick one Low, Mid and High submission per problem.
    Select,
    /// Generate ladders. Defaults to the study selection, or every eligible
    /// graded submission when nothing is selected.
    Generate {
        /// Directory of `<submission-id>.txt` responses used instead of the
        /// remote endpoint.
        #[arg(long)]
        mock: Option<PathBuf>,
        ids: Vec<String>,
        /// Regenerate ladders that already exist.
        #[arg(long)]
        force: bool,
        /// Completion calls in flight at once.
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
    /// Check ladders by execution. Exits 1 when any error-severity flag is raised.
    Validate { ids: Vec<String> },
    /// Write agreement and figure tables as CSV.
    Analyze {
        /// Output directory; defaults to `<data-dir>/exports`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the study, ladder and analytics HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Build the study definition from the selection and a template.
    StudyInit { template: PathBuf },
}
