use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ControlPolygon;
use crate::plot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontRow {
    pub objectives: Vec<f64>,
    pub decision: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<ControlPolygon>,
}

/// Non-dominated rows from one optimization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub objective_names: Vec<String>,
    pub rows: Vec<FrontRow>,
    pub problem_hash: String,
    pub seed: u64,
}

impl ParetoFront {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn objective_matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.objectives.clone()).collect()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.objective_names.iter().position(|n| n == name)
    }

    /// One line per row: objectives, then decision variables named by `decision_names`.
    pub fn write_csv<W: Write>(&self, mut w: W, decision_names: &[&str]) -> Result<()> {
        let header: Vec<&str> = self
            .objective_names
            .iter()
            .map(String::as_str)
            .chain(decision_names.iter().copied())
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for r in &self.rows {
            if r.decision.len() != decision_names.len() {
                return Err(Error::Shape("decision names do not match the front".into()));
            }
            let cells: Vec<String> = r.objectives.iter().chain(&r.decision).map(|v| format!("{v}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Reads a CSV written by [`ParetoFront::write_csv`]; the first `objectives` columns are objectives.
    pub fn read_csv<R: BufRead>(r: R, objectives: usize) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty front file".into()))??;
        let names: Vec<String> = header.split(',').map(str::to_string).collect();
        if names.len() < objectives {
            return Err(Error::Parse("header has fewer columns than objectives".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?;
            if vals.len() != names.len() {
                return Err(Error::Parse(format!("line {}: expected {} cells", i + 2, names.len())));
            }
            rows.push(FrontRow {
                objectives: vals[..objectives].to_vec(),
                decision: vals[objectives..].to_vec(),
                polygon: None,
            });
        }
        Ok(ParetoFront {
            objective_names: names[..objectives].to_vec(),
            rows,
            problem_hash: String::new(),
            seed: 0,
        })
    }

    /// Scatter of two objective columns, with `selected` highlighted.
    pub fn to_svg(&self, x_col: usize, y_col: usize, selected: Option<usize>) -> Result<String> {
        let m = self.objective_names.len();
        if x_col >= m || y_col >= m {
            return Err(Error::Validation(format!("objective columns must be below {m}")));
        }
        let pts: Vec<(f64, f64)> = self.rows.iter().map(|r| (r.objectives[x_col], r.objectives[y_col])).collect();
        Ok(plot::scatter(
            "Pareto front",
            &self.objective_names[x_col],
            &self.objective_names[y_col],
            &pts,
            selected,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let front = ParetoFront {
            objective_names: vec!["a".into(), "b".into()],
            rows: vec![
                FrontRow {
                    objectives: vec![0.1, 1.0 / 3.0],
                    decision: vec![1e-17, 2.5],
                    polygon: None,
                },
                FrontRow {
                    objectives: vec![0.2, 0.25],
                    decision: vec![-3.0, 0.7],
                    polygon: None,
                },
                FrontRow {
                    objectives: vec![0.3, 0.125],
                    decision: vec![4.0, 5.0],
                    polygon: None,
                },
            ],
            problem_hash: String::new(),
            seed: 0,
        };
        let mut buf = Vec::new();
        front.write_csv(&mut buf, &["x", "y"]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 4);
        let back = ParetoFront::read_csv(&buf[..], 2).unwrap();
        assert_eq!(back.rows, front.rows);
        assert!(front.to_svg(0, 1, Some(1)).unwrap().starts_with("<svg"));
        assert!(front.to_svg(0, 2, None).is_err());
    }
}
