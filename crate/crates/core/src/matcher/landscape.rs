use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::ssr::{select_candidate, SsrField};
use crate::error::{Error, Result};

/// Sidecar file holding the landscape's minimum: `name.csv` → `name.argmin.csv`.
pub fn landscape_argmin_path(path: &Path) -> PathBuf {
    path.with_extension("argmin.csv")
}

/// Writes the field as a `height × width` grid of comma-separated values
/// (invalid positions as empty cells) and its minimum as `x,y,ssr` to the
/// sidecar file.
pub fn export_ssr_landscape(field: &SsrField, path: &Path) -> Result<()> {
    let mut grid = String::new();
    for j in 0..field.height() {
        for i in 0..field.width() {
            if i > 0 {
                grid.push(',');
            }
            if let Some(v) = field.get(i, j) {
                write!(grid, "{v}").expect("writing to a string");
            }
        }
        grid.push('\n');
    }
    std::fs::write(path, grid).map_err(|e| Error::io(path, e))?;
    let c = select_candidate(field)?;
    let side = landscape_argmin_path(path);
    let text = format!("x,y,ssr\n{},{},{}\n", c.pixel.0, c.pixel.1, c.ssr_min);
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Reads a grid written by [`export_ssr_landscape`].
pub fn import_ssr_landscape(path: &Path) -> Result<SsrField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (n, line) in text.lines().enumerate() {
        let row: Vec<Option<f64>> = line
            .split(',')
            .map(|cell| {
                let cell = cell.trim();
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::parse(path, format!("line {}: bad value `{cell}`", n + 1)))
                }
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::parse(path, format!("line {} has {} cells, expected {w}", n + 1, row.len())))
            }
            _ => {}
        }
        values.extend(row);
        height += 1;
    }
    SsrField::from_values(width.unwrap_or(0), height, &values)
}
