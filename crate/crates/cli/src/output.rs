//! CSV output with a fixed number format.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

/// One CSV field.
pub enum Cell {
    F(f64),
    U(u64),
    B(bool),
    S(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Cell {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Cell {
        Cell::U(x as u64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Cell {
        Cell::U(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Cell {
        Cell::B(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Cell {
        Cell::S(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Cell {
        Cell::S(x)
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => format_f64(*x),
            Cell::U(x) => x.to_string(),
            Cell::B(b) => b.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

pub struct CsvOut {
    writer: csv::Writer<BufWriter<File>>,
    width: usize,
}

impl CsvOut {
    pub fn create(dir: &Path, name: &str, header: &[&str]) -> Result<CsvOut, String> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| format!("creating {}: {e}", path.display()))?;
        let mut writer = csv::WriterBuilder::new().from_writer(BufWriter::new(file));
        writer.write_record(header).map_err(|e| e.to_string())?;
        Ok(CsvOut {
            writer,
            width: header.len(),
        })
    }

    pub fn row(&mut self, cells: Vec<Cell>) -> Result<(), String> {
        debug_assert_eq!(cells.len(), self.width);
        self.writer
            .write_record(cells.iter().map(Cell::render))
            .map_err(|e| e.to_string())
    }

    pub fn finish(mut self) -> Result<(), String> {
        self.writer.flush().map_err(|e| e.to_string())
    }
}
