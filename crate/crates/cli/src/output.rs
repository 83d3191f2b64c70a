use std::fmt::{self, Display};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mmw_gate::model::ValidatedConfig;

use crate::CliError;

/// Writes `path` through a sibling temp file that is renamed into place only
/// after `fill` succeeds, so a failed run never leaves a partial CSV.
pub fn write_atomic<E: Display>(
    path: &Path,
    fill: impl FnOnce(&mut BufWriter<File>) -> Result<(), E>,
) -> Result<(), CliError> {
    let tmp = temp_path(path);
    let result = (|| {
        let file = File::create(&tmp).map_err(|e| e.to_string())?;
        let mut w = BufWriter::new(file);
        fill(&mut w).map_err(|e| e.to_string())?;
        let file = w.into_inner().map_err(|e| e.to_string())?;
        file.sync_all().map_err(|e| e.to_string())?;
        fs::rename(&tmp, path).map_err(|e| e.to_string())
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::Io(format!("{}: {e}", path.display()))
    })
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Plain-text record of what produced a results directory: the command,
/// the seed list and the full resolved scenario.
pub struct Manifest {
    command: String,
    config: String,
    seeds: Vec<u64>,
    notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ValidatedConfig, seeds: Vec<u64>) -> Self {
        Manifest {
            command: command.to_string(),
            config: cfg.to_toml_string().expect("a validated config serializes"),
            seeds,
            notes: Vec::new(),
        }
    }

    pub fn note(&mut self, line: String) {
        self.notes.push(line);
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_atomic(&dir.join("manifest.txt"), |w| write!(w, "{self}"))
    }
}

impl Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# mmw-gate {} {}", self.command, env!("CARGO_PKG_VERSION"))?;
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        writeln!(f, "# seeds: {}", seeds.join(","))?;
        for n in &self.notes {
            writeln!(f, "# {n}")?;
        }
        writeln!(f, "# each run uses the config below with rng_seed set to its seed")?;
        writeln!(f)?;
        f.write_str(&self.config)
    }
}
