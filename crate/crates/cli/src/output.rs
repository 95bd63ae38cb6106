//! CSV and report writers.
//!
//! Floats are printed with 17 significant digits so every binary64 value
//! survives a round trip through the text files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use quadlag_core::CVec;

use crate::CliError;

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// `<prefix><suffix>` as a path.
pub fn path(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}{suffix}"))
}

/// Time series of several vector-valued curves sampled at common times.
pub struct Trajectory<'a> {
    pub times: &'a [f64],
    pub series: Vec<(&'static str, Vec<CVec>)>,
}

impl Trajectory<'_> {
    pub fn render(&self) -> String {
        let dim = self.series.first().map_or(0, |(_, v)| v.first().map_or(0, |x| x.len()));
        let mut out = String::from("t");
        for k in 0..dim {
            for (name, _) in &self.series {
                write!(out, ",re_{name}_{k},im_{name}_{k}").unwrap();
            }
        }
        out.push('\n');
        for (i, &t) in self.times.iter().enumerate() {
            out.push_str(&float(t));
            for k in 0..dim {
                for (_, values) in &self.series {
                    let z = values[i][k];
                    write!(out, ",{},{}", float(z.re), float(z.im)).unwrap();
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write(path, &self.render())
    }
}

/// Plain CSV table with a header row.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { text: header.join(",") + "\n" }
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        let cells: Vec<&str> = cells.iter().map(|s| s.as_ref()).collect();
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write(path, &self.text)
    }
}

/// `key: value` lines written to `<prefix>.report.txt`.
#[derive(Default)]
pub struct Report {
    text: String,
}

impl Report {
    pub fn line(&mut self, key: &str, value: impl std::fmt::Display) {
        writeln!(self.text, "{key}: {value}").unwrap();
    }

    pub fn save(&self, prefix: &str) -> Result<PathBuf, CliError> {
        let p = path(prefix, ".report.txt");
        write(&p, &self.text)?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use quadlag_core::linalg::c;

    #[test]
    fn floats_round_trip() {
        for x in [0.1 + 0.2, -1.0 / 3.0, 1e-300, 6.02214076e23] {
            assert_eq!(float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn trajectory_columns_are_grouped_by_component() {
        let times = [0.0, 1.0];
        let v = |x: f64| CVec::from_vec(vec![c(x, 0.0), c(0.0, x)]);
        let tr = Trajectory {
            times: &times,
            series: vec![("y", vec![v(1.0), v(2.0)]), ("z", vec![v(3.0), v(4.0)])],
        };
        let text = tr.render();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,re_y_0,im_y_0,re_z_0,im_z_0,re_y_1,im_y_1,re_z_1,im_z_1");
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(row, vec![0.0, 1.0, 0.0, 3.0, 0.0, 0.0, 1.0, 0.0, 3.0]);
    }
}
