//! CSV files with a `#` metadata header.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct CsvOut {
    writer: csv::Writer<File>,
    pub path: PathBuf,
}

impl CsvOut {
    /// Creates `dir/name`, writes the header comment block and the column names.
    ///
    /// Only the `generated` line differs between re-runs of the same config.
    pub fn create(
        dir: &Path,
        name: &str,
        config: &ExperimentConfig,
        notes: &[String],
        columns: &[&str],
    ) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        let mut file = File::create(&path)?;
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        writeln!(file, "# generated_unix_seconds = {stamp}")?;
        for n in notes {
            writeln!(file, "# {n}")?;
        }
        file.write_all(config.echo().as_bytes())?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(columns)?;
        Ok(Self { writer, path })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Empty field for missing values.
pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
