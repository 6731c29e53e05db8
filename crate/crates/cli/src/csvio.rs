//! Deterministic CSV files with a versioned header comment. Every output
//! records the toolkit version and the seed it was produced from.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use induction_lens_core::{Error, Result};

/// First line: `# induction-lens v<ver> schema=<schema> seed=<seed> [k=v ...]`
pub fn write_csv(
    path: &Path,
    schema: &str,
    seed: u64,
    extra: &[(&str, String)],
    header: &str,
    rows: &[String],
) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(
        f,
        "# induction-lens v{} schema={schema} seed={seed}",
        induction_lens_core::VERSION
    )?;
    for (k, v) in extra {
        write!(f, " {k}={v}")?;
    }
    writeln!(f)?;
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    f.flush()?;
    Ok(())
}

pub struct CsvFile {
    pub meta: BTreeMap<String, String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_csv(path: &Path) -> Result<CsvFile> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut meta = BTreeMap::new();
    let mut header: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for part in rest.split_whitespace() {
                if let Some((k, v)) = part.split_once('=') {
                    meta.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if header.is_empty() {
            header = fields;
        } else {
            rows.push(fields);
        }
    }
    if header.is_empty() {
        return Err(Error::Input(format!("{} has no header row", path.display())));
    }
    Ok(CsvFile { meta, header, rows })
}

/// Column index by name.
pub fn col(file: &CsvFile, name: &str) -> Result<usize> {
    file.header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Input(format!("missing CSV column {name:?}")))
}
