use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub enum CliError {
    Lib(dyngamma::Error),
    Io(String),
    Config(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(s) => write!(f, "{s}"),
            CliError::Config(s) => write!(f, "{s}"),
        }
    }
}

impl From<dyngamma::Error> for CliError {
    fn from(e: dyngamma::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        use dyngamma::Error::*;
        match self {
            CliError::Lib(Data(_) | Parse { .. } | Shape { .. }) | CliError::Io(_) => "data",
            CliError::Lib(Numeric(_) | Domain { .. }) => "numeric",
            CliError::Lib(Config(_)) | CliError::Config(_) => "config",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "data" => 2,
            "numeric" => 3,
            _ => 4,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Fixed 6-decimal rendering used for every CSV float.
pub fn f6(x: f64) -> String {
    format!("{x:.6}")
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    args: Vec<String>,
    inputs: &'a [InputDigest],
    outputs: &'a [String],
}

/// Collects the inputs and outputs of one command and writes the
/// `<command>.meta.json` sidecar.
pub struct Run {
    command: &'static str,
    seed: u64,
    out_dir: PathBuf,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(command: &'static str, seed: u64, out_dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
        Ok(Self {
            command,
            seed,
            out_dir: out_dir.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Open an input file, recording its digest.
    pub fn input(&mut self, path: &Path) -> CliResult<File> {
        let bytes = fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        File::open(path).map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))
    }

    fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.out_dir.join(name);
        let f = File::create(&path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn csv(&mut self, name: &str) -> CliResult<csv::Writer<BufWriter<File>>> {
        Ok(csv::Writer::from_writer(self.create(name)?))
    }

    pub fn raw(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        self.create(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let w = self.create(name)?;
        serde_json::to_writer_pretty(w, value).map_err(|e| CliError::Io(format!("cannot write {name}: {e}")))
    }

    pub fn finish(mut self) -> CliResult<()> {
        let name = format!("{}.meta.json", self.command);
        let meta = Meta {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            args: std::env::args().skip(1).collect(),
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let value = serde_json::to_value(&meta).map_err(|e| CliError::Io(e.to_string()))?;
        self.json(&name, &value)
    }
}

pub fn write_err(e: csv::Error) -> CliError {
    CliError::Io(format!("write failed: {e}"))
}
