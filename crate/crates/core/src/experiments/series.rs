//! Tabular sweep output: an x-grid plus named metric columns.
//!
//! Every experiment returns a [`MetricSeries`]; the CLI serializes it as
//! CSV (header row, one line per grid point, 12-significant-digit
//! scientific notation) or JSON (columns plus a metadata block echoing
//! the scenario, seed, trial count, and build identifier). Infeasible
//! points are `NaN` in memory, the literal `NaN` in CSV, and `null` in
//! JSON; the accompanying `feasibility_fraction` column says how much
//! data is behind every mean.

use serde::Serialize;
use thiserror::Error;

/// Errors raised while assembling a series.
#[derive(Debug, Error)]
pub enum SeriesError {
    /// A column's length disagrees with the x-grid.
    #[error("column {name} has {got} values but the x grid has {want}")]
    LengthMismatch {
        /// Column name.
        name: String,
        /// Values supplied.
        got: usize,
        /// Values required.
        want: usize,
    },
    /// Two columns share a name.
    #[error("duplicate column name {0}")]
    DuplicateColumn(String),
}

/// One named metric column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricColumn {
    /// Column name as it appears in the CSV header.
    pub name: String,
    /// One value per x-grid point; `NaN` marks an undefined point.
    pub values: Vec<f64>,
}

/// Provenance attached to every series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesMetadata {
    /// Tool name, version, and build identifier.
    pub generator: String,
    /// Base RNG seed the sweep ran with.
    pub seed: u64,
    /// Monte Carlo trials per grid point (1 for deterministic sweeps).
    pub n_trials: u64,
    /// Scenario echo (full config as a JSON object), when applicable.
    pub scenario: serde_json::Value,
}

impl Default for SeriesMetadata {
    fn default() -> Self {
        Self {
            generator: generator_string(),
            seed: 0,
            n_trials: 0,
            scenario: serde_json::Value::Null,
        }
    }
}

/// Tool + version + build identifier, e.g. `hapsim 0.1.0 (3e3bbc2)`.
pub fn generator_string() -> String {
    format!(
        "hapsim {} ({})",
        env!("CARGO_PKG_VERSION"),
        env!("HAPSIM_GIT_DESCRIBE")
    )
}

/// An x-grid with named metric columns and provenance metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSeries {
    /// Name of the swept quantity (the CSV's first column).
    pub x_label: String,
    /// Sweep grid.
    pub x_values: Vec<f64>,
    /// Metric columns, each as long as `x_values`.
    pub columns: Vec<MetricColumn>,
    /// Provenance block (serialized in JSON output only).
    pub metadata: SeriesMetadata,
}

impl MetricSeries {
    /// Starts a series over the given grid.
    pub fn new(x_label: impl Into<String>, x_values: Vec<f64>) -> Self {
        Self {
            x_label: x_label.into(),
            x_values,
            columns: Vec::new(),
            metadata: SeriesMetadata::default(),
        }
    }

    /// Appends a column, enforcing grid length and name uniqueness.
    pub fn push_column(
        &mut self,
        name: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<(), SeriesError> {
        let name = name.into();
        if values.len() != self.x_values.len() {
            return Err(SeriesError::LengthMismatch {
                name,
                got: values.len(),
                want: self.x_values.len(),
            });
        }
        if self.columns.iter().any(|c| c.name == name) {
            return Err(SeriesError::DuplicateColumn(name));
        }
        self.columns.push(MetricColumn { name, values });
        Ok(())
    }

    /// Looks a column up by name.
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    /// Renders the series as CSV: header row, then one row per grid
    /// point, every value in scientific notation with 12 digits after
    /// the point. Undefined values print as the literal `NaN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.x_label);
        for c in &self.columns {
            out.push(',');
            out.push_str(&c.name);
        }
        out.push('\n');
        for (i, x) in self.x_values.iter().enumerate() {
            out.push_str(&format_value(*x));
            for c in &self.columns {
                out.push(',');
                out.push_str(&format_value(c.values[i]));
            }
            out.push('\n');
        }
        out
    }

    /// Renders the series as pretty-printed JSON, metadata included.
    /// `NaN` serializes as `null`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("series serialization cannot fail") + "\n"
    }
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.12e}")
    }
}

// ---------- Tests ----------

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MetricSeries {
        let mut s = MetricSeries::new("p_dbm", vec![20.0, 30.0]);
        s.push_column("sum_rate", vec![1.5, f64::NAN]).unwrap();
        s.push_column("feasibility_fraction", vec![1.0, 0.0])
            .unwrap();
        s
    }

    #[test]
    fn csv_layout_and_precision() {
        let csv = sample().to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "p_dbm,sum_rate,feasibility_fraction"
        );
        let row = lines.next().unwrap();
        assert_eq!(row, "2.000000000000e1,1.500000000000e0,1.000000000000e0");
        let row2 = lines.next().unwrap();
        assert!(row2.contains("NaN"), "NaN must be explicit: {row2}");
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn csv_is_stable_across_renders() {
        let s = sample();
        assert_eq!(s.to_csv(), s.to_csv());
    }

    #[test]
    fn json_has_metadata_and_null_for_nan() {
        let mut s = sample();
        s.metadata.seed = 7;
        s.metadata.n_trials = 100;
        let json = s.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["metadata"]["seed"], 7);
        assert_eq!(v["metadata"]["n_trials"], 100);
        assert!(v["metadata"]["generator"]
            .as_str()
            .unwrap()
            .starts_with("hapsim "));
        assert!(v["columns"][0]["values"][1].is_null());
        assert_eq!(v["x_values"][1], 30.0);
    }

    #[test]
    fn length_and_name_collisions_are_errors() {
        let mut s = MetricSeries::new("x", vec![1.0]);
        assert!(matches!(
            s.push_column("a", vec![1.0, 2.0]),
            Err(SeriesError::LengthMismatch { .. })
        ));
        s.push_column("a", vec![1.0]).unwrap();
        assert!(matches!(
            s.push_column("a", vec![2.0]),
            Err(SeriesError::DuplicateColumn(_))
        ));
    }

    #[test]
    fn column_lookup() {
        let s = sample();
        assert_eq!(s.column("feasibility_fraction").unwrap()[0], 1.0);
        assert!(s.column("missing").is_none());
    }
}
