//! Output plumbing: JSON report envelopes and CSV artifacts.
//!
//! Every command writes its summary as `<out_dir>/<name>.json` with the shape
//! `{ "timestamp": ..., "report": {...} }`. The `report` subtree is a pure
//! function of the configuration, so reruns are byte-comparable once the
//! timestamp line is dropped.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub struct Reporter {
    out_dir: PathBuf,
}

impl Reporter {
    pub fn new(out_dir: PathBuf) -> Result<Reporter, CliError> {
        std::fs::create_dir_all(&out_dir)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", out_dir.display())))?;
        Ok(Reporter { out_dir })
    }

    pub fn out_dir(&self) -> &FsPath {
        &self.out_dir
    }

    /// Serialize `report` inside the timestamped envelope.
    pub fn write_json<T: Serialize>(&self, name: &str, report: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Envelope<'a, T> {
            timestamp: String,
            report: &'a T,
        }
        let envelope = Envelope {
            timestamp: chrono::Utc::now().to_rfc3339(),
            report,
        };
        let path = self.out_dir.join(format!("{name}.json"));
        let file = File::create(&path)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, &envelope)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        w.write_all(b"\n")?;
        w.flush()?;
        println!("wrote {}", path.display());
        Ok(())
    }

    /// Write a CSV artifact through the given closure.
    pub fn write_csv<F>(&self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let path = self.out_dir.join(name);
        let file = File::create(&path)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush()?;
        println!("wrote {}", path.display());
        Ok(())
    }

    /// Write a table of rows under a fixed header. Floats are formatted with
    /// `{}` (shortest round-trip), matching the library's CSV writers.
    pub fn write_table(
        &self,
        name: &str,
        header: &str,
        rows: &[Vec<f64>],
    ) -> Result<(), CliError> {
        self.write_csv(name, |w| {
            writeln!(w, "{header}")?;
            for row in rows {
                for (j, v) in row.iter().enumerate() {
                    if j > 0 {
                        write!(w, ",")?;
                    }
                    write!(w, "{v}")?;
                }
                writeln!(w)?;
            }
            Ok(())
        })
    }
}
