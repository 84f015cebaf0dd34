//! Parameter sweeps: a base scenario plus override axes, expanded into a
//! grid and run in parallel.
//!
//! ```toml
//! base = "scenario.toml"        # relative to the sweep file
//! [[axes]]
//! field = "workload.per_interval"
//! values = [10, 20, 30]
//! [[axes]]
//! field = "processors"          # integer resizes the processor list
//! values = [2, 3]
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{build_report, MetricsReport};
use crate::simkernel::{run, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: PathBuf,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub axes: Vec<Axis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    /// Dotted path into the scenario document.
    pub field: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub overrides: Vec<(String, toml::Value)>,
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub point: GridPoint,
    pub outcome: std::result::Result<MetricsReport, String>,
}

/// Lists whose length an integer override sets.
const RESIZABLE: &[&str] = &["processors", "schedulers"];

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    /// Cartesian product of the axes; the first axis varies slowest.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
        for axis in &self.axes {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push((axis.field.clone(), v.clone()));
                        p
                    })
                })
                .collect();
        }
        if self.axes.is_empty() {
            points.clear();
        }
        points
            .into_iter()
            .enumerate()
            .map(|(index, overrides)| GridPoint { index, overrides })
            .collect()
    }
}

/// Sets `field` (a dotted path) in a scenario document.
///
/// Intermediate tables must exist. An integer assigned to `processors` or
/// `schedulers` truncates the list or extends it by cloning the last entry
/// with fresh ids.
pub fn apply_override(doc: &mut toml::Value, field: &str, value: &toml::Value) -> Result<()> {
    let unknown = || Error::UnknownField(field.to_owned());
    let mut parts: Vec<&str> = field.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(unknown)?;
    let mut table = doc.as_table_mut().ok_or_else(unknown)?;
    for part in parts {
        table = table
            .get_mut(part)
            .and_then(|v| v.as_table_mut())
            .ok_or_else(unknown)?;
    }

    if let (true, Some(n)) = (RESIZABLE.contains(&last), value.as_integer()) {
        let list = table
            .get_mut(last)
            .and_then(|v| v.as_array_mut())
            .ok_or_else(unknown)?;
        let n = usize::try_from(n).map_err(|_| unknown())?;
        let template = list.last().cloned().ok_or_else(unknown)?;
        let mut next_id = list
            .iter()
            .filter_map(|e| e.get("id").and_then(|v| v.as_integer()))
            .max()
            .map_or(0, |m| m + 1);
        list.truncate(n);
        while list.len() < n {
            let mut entry = template.clone();
            if let Some(t) = entry.as_table_mut() {
                t.insert("id".into(), toml::Value::Integer(next_id));
            }
            next_id += 1;
            list.push(entry);
        }
        return Ok(());
    }
    table.insert(last.to_owned(), value.clone());
    Ok(())
}

/// The scenario for one grid point. Overrides that name no scenario field
/// are reported as [`Error::UnknownField`].
pub fn scenario_for(base: &toml::Value, point: &GridPoint) -> Result<Scenario> {
    let mut doc = base.clone();
    for (field, value) in &point.overrides {
        apply_override(&mut doc, field, value)?;
    }
    doc.try_into::<Scenario>().map_err(|e| {
        let msg = e.to_string();
        match point.overrides.iter().find(|(f, _)| {
            msg.contains("unknown field") && msg.contains(f.rsplit('.').next().unwrap_or(f))
        }) {
            Some((f, _)) => Error::UnknownField(f.clone()),
            None => Error::Parse {
                path: format!("grid point {}", point.index).into(),
                message: msg,
            },
        }
    })
}

fn run_point(base: &toml::Value, point: &GridPoint) -> Result<MetricsReport> {
    let scenario = scenario_for(base, point)?;
    Ok(build_report(&run(&scenario)?))
}

/// Runs every grid point; results come back in grid order.
pub fn run_grid(spec: &SweepSpec, base: &toml::Value) -> Vec<PointResult> {
    spec.grid()
        .into_par_iter()
        .map(|point| {
            let outcome = run_point(base, &point).map_err(|e| e.to_string());
            PointResult { point, outcome }
        })
        .collect()
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// One row per grid point keyed by its axis values.
pub fn combined_table(spec: &SweepSpec, results: &[PointResult]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header: Vec<String> = vec!["point".into()];
    header.extend(spec.axes.iter().map(|a| a.field.clone()));
    header.extend(
        [
            "status",
            "mean_cd_percent",
            "fault_percent",
            "completion_percent",
            "violations",
            "mean_response",
            "p95_response",
            "net_benefit",
            "truncated",
        ]
        .map(String::from),
    );
    w.write_record(&header).expect("in-memory write");
    for r in results {
        let mut row: Vec<String> = vec![format!("{:03}", r.point.index)];
        row.extend(r.point.overrides.iter().map(|(_, v)| value_text(v)));
        match &r.outcome {
            Ok(rep) => {
                let s = rep.summary;
                row.push("ok".into());
                row.extend([
                    s.mean_cd_percent.to_string(),
                    s.fault_percent.to_string(),
                    s.completion_percent.to_string(),
                    s.violations.to_string(),
                    s.mean_response.to_string(),
                    s.p95_response.to_string(),
                    s.net_benefit.to_string(),
                    s.truncated.to_string(),
                ]);
            }
            Err(msg) => {
                row.push(format!("error: {msg}"));
                row.extend(std::iter::repeat_n(String::new(), 8));
            }
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8")
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub output_dir: PathBuf,
    pub results: Vec<PointResult>,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// Loads a sweep file, runs the grid and writes `point-NNN.csv` per point
/// plus `combined.csv`. `output_dir` overrides the sweep file's own.
pub fn run_sweep_file(path: &Path, output_dir: Option<&Path>) -> Result<SweepOutcome> {
    let spec = SweepSpec::load(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let base_path = dir.join(&spec.base);
    let text = std::fs::read_to_string(&base_path).map_err(|source| Error::Read {
        path: base_path.clone(),
        source,
    })?;
    let base: toml::Value = toml::from_str(&text).map_err(|e| Error::Parse {
        path: base_path.clone(),
        message: e.to_string(),
    })?;
    let out = match (output_dir, &spec.output_dir) {
        (Some(o), _) => o.to_owned(),
        (None, Some(o)) => dir.join(o),
        (None, None) => return Err(Error::UnknownField("output_dir".into())),
    };
    std::fs::create_dir_all(&out)?;
    let results = run_grid(&spec, &base);
    for r in &results {
        if let Ok(rep) = &r.outcome {
            std::fs::write(
                out.join(format!("point-{:03}.csv", r.point.index)),
                rep.to_csv(),
            )?;
        }
    }
    std::fs::write(out.join("combined.csv"), combined_table(&spec, &results))?;
    Ok(SweepOutcome {
        output_dir: out,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> toml::Value {
        let s = crate::simkernel::scenario::tests::three_by_three();
        toml::Value::try_from(&s).unwrap()
    }

    fn spec(axes: &str) -> SweepSpec {
        SweepSpec::from_toml_str(&format!("base = \"b.toml\"\n{axes}")).unwrap()
    }

    #[test]
    fn grid_is_cartesian_first_axis_slowest() {
        let s = spec(
            "[[axes]]\nfield = \"workload.per_interval\"\nvalues = [10, 20, 30, 40, 50, 60, 70]\n\
             [[axes]]\nfield = \"processors\"\nvalues = [2, 3]\n",
        );
        let g = s.grid();
        assert_eq!(g.len(), 14);
        assert_eq!(g[1].overrides[0].1, toml::Value::Integer(10));
        assert_eq!(g[1].overrides[1].1, toml::Value::Integer(3));
    }

    #[test]
    fn integer_resizes_entity_lists() {
        let mut doc = base();
        apply_override(&mut doc, "processors", &toml::Value::Integer(5)).unwrap();
        let s: Scenario = doc.clone().try_into().unwrap();
        assert_eq!(s.processors.len(), 5);
        assert_eq!(s.processors[4].id.0, 4);
        apply_override(&mut doc, "processors", &toml::Value::Integer(1)).unwrap();
        let s: Scenario = doc.try_into().unwrap();
        assert_eq!(s.processors.len(), 1);
    }

    #[test]
    fn unknown_fields_are_refused() {
        let point = GridPoint {
            index: 0,
            overrides: vec![("workload.bogus".into(), toml::Value::Integer(1))],
        };
        assert!(
            matches!(scenario_for(&base(), &point), Err(Error::UnknownField(f)) if f == "workload.bogus")
        );
        let point = GridPoint {
            index: 0,
            overrides: vec![("nope.per_interval".into(), toml::Value::Integer(1))],
        };
        assert!(matches!(
            scenario_for(&base(), &point),
            Err(Error::UnknownField(_))
        ));
    }

    #[test]
    fn overrides_feed_validation() {
        let point = GridPoint {
            index: 0,
            overrides: vec![("feedback_interval".into(), toml::Value::Float(-1.0))],
        };
        assert!(matches!(run_point(&base(), &point), Err(Error::Invalid(_))));
    }

    #[test]
    fn failures_are_recorded_and_the_grid_continues() {
        let s = spec("[[axes]]\nfield = \"message_latency\"\nvalues = [0.1, -1.0, 0.2]\n");
        let results = run_grid(&s, &base());
        assert!(results[0].outcome.is_ok());
        assert!(results[1].outcome.is_err());
        assert!(results[2].outcome.is_ok());
        let table = combined_table(&s, &results);
        assert_eq!(table.lines().count(), 4);
        assert!(table.lines().nth(2).unwrap().contains("error"));
    }
}
