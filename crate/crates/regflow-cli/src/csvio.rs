//! CSV emission. Every file starts with a `# generated_unix <secs>` comment
//! line (the only part allowed to differ between identical runs) followed by
//! a header row naming the columns.

use std::io::Write;
use std::path::Path;

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "# generated_unix {stamp}")?;
    writeln!(file, "{header}")?;
    for row in rows {
        writeln!(file, "{row}")?;
    }
    Ok(())
}

/// Two-column plot file `(x, y)`.
pub fn write_xy(path: &Path, x_name: &str, y_name: &str, points: &[(f64, f64)]) -> std::io::Result<()> {
    let rows: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:e},{y:e}"))
        .collect();
    write_csv(path, &format!("{x_name},{y_name}"), &rows)
}
