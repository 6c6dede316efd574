//! Small helpers for the plain-text file formats used across the crate.
//! Everything is UTF-8, comma-separated, `.` decimal point.

use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let content =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(content.lines().map(|l| l.to_string()).collect())
}

pub fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn parse_f64(field: &str, path: &Path, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        file: path.display().to_string(),
        line,
        message: format!("expected a number, got {field:?}"),
    })
}

pub fn parse_i64(field: &str, path: &Path, line: usize) -> Result<i64> {
    field.trim().parse::<i64>().map_err(|_| Error::Parse {
        file: path.display().to_string(),
        line,
        message: format!("expected an integer, got {field:?}"),
    })
}

pub fn parse_usize(field: &str, path: &Path, line: usize) -> Result<usize> {
    field.trim().parse::<usize>().map_err(|_| Error::Parse {
        file: path.display().to_string(),
        line,
        message: format!("expected a count, got {field:?}"),
    })
}

/// Splits one CSV row and checks the column count. Fields may not contain
/// commas; ids are validated on write.
pub fn split_row<'a>(
    row: &'a str,
    expected: usize,
    path: &Path,
    line: usize,
) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = row.split(',').collect();
    if fields.len() != expected {
        return Err(Error::Parse {
            file: path.display().to_string(),
            line,
            message: format!("expected {expected} fields, got {}", fields.len()),
        });
    }
    Ok(fields)
}

pub fn expect_header(lines: &[String], header: &str, path: &Path) -> Result<()> {
    match lines.first() {
        Some(first) if first.trim() == header => Ok(()),
        Some(first) => Err(Error::Parse {
            file: path.display().to_string(),
            line: 1,
            message: format!("expected header {header:?}, got {first:?}"),
        }),
        None => Err(Error::Parse {
            file: path.display().to_string(),
            line: 1,
            message: format!("empty file, expected header {header:?}"),
        }),
    }
}
