use std::io::Write;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Text(String),
    Int(usize),
    Real(f64),
    Empty,
}

impl Field {
    pub fn opt(v: Option<f64>) -> Self {
        v.map_or(Field::Empty, Field::Real)
    }

    fn render(&self) -> String {
        match self {
            Field::Text(s) => s.clone(),
            Field::Int(i) => i.to_string(),
            Field::Real(x) => format!("{x:.12e}"),
            Field::Empty => String::new(),
        }
    }
}

/// Rows of one study with a fixed column layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Field>>,
}

impl ResultTable {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match the header"
        );
        self.rows.push(row);
    }

    /// Real values of a column; `None` for empty or non-real cells.
    pub fn column(&self, name: &str) -> Vec<Option<f64>> {
        let Some(c) = self.columns.iter().position(|&n| n == name) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .map(|r| match r[c] {
                Field::Real(x) => Some(x),
                Field::Int(i) => Some(i as f64),
                _ => None,
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Field::render).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = ResultTable::new(vec!["problem", "H", "err"]);
        t.push(vec![
            Field::Text("poisson".into()),
            Field::Int(4),
            Field::Real(1.0 / 3.0),
        ]);
        t.push(vec![
            Field::Text("poisson".into()),
            Field::Int(8),
            Field::Empty,
        ]);
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "problem,H,err");
        assert_eq!(lines[1], "poisson,4,3.333333333333e-1");
        assert_eq!(lines[2], "poisson,8,");
        let parsed: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
        assert!((parsed - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.column("err"), vec![Some(1.0 / 3.0), None]);
    }
}
