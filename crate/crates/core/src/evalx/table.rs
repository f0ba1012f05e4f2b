use serde::{Deserialize, Serialize};

use super::EvalError;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation; `None` for fewer than two values.
pub fn population_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    Some((xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    /// Mean over seeds, per column.
    pub values: Vec<f64>,
    /// Mean over seeds of the per-seed column average.
    pub avg: f64,
    /// Population std over seeds; present when at least two seeds ran.
    pub values_std: Option<Vec<f64>>,
    pub avg_std: Option<f64>,
    pub num_seeds: usize,
}

/// Methods × columns accuracy table with an unweighted `avg` column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    /// `values[method][seed][column]`.
    pub fn from_seeds(methods: &[String], columns: &[String], values: &[Vec<Vec<f64>>]) -> Result<Self, EvalError> {
        if columns.is_empty() {
            return Err(EvalError::Config("report needs at least one column".into()));
        }
        if methods.len() != values.len() {
            return Err(EvalError::Config("one value block per method required".into()));
        }
        let mut rows = Vec::with_capacity(methods.len());
        for (method, seeds) in methods.iter().zip(values) {
            if seeds.is_empty() || seeds.iter().any(|s| s.len() != columns.len()) {
                return Err(EvalError::Config(format!("method {method}: missing a column value")));
            }
            let per_col: Vec<Vec<f64>> = (0..columns.len()).map(|c| seeds.iter().map(|s| s[c]).collect()).collect();
            let avgs: Vec<f64> = seeds.iter().map(|s| mean(s)).collect();
            let values_std = per_col.iter().map(|c| population_std(c)).collect::<Option<Vec<f64>>>();
            rows.push(ReportRow {
                method: method.clone(),
                values: per_col.iter().map(|c| mean(c)).collect(),
                avg: mean(&avgs),
                values_std,
                avg_std: population_std(&avgs),
                num_seeds: seeds.len(),
            });
        }
        Ok(Self { columns: columns.to_vec(), rows })
    }

    pub fn row(&self, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// `method, columns..., avg`, then `_std` columns when every row has them.
    pub fn to_csv(&self) -> String {
        let with_std = !self.rows.is_empty() && self.rows.iter().all(|r| r.values_std.is_some());
        let mut header = vec!["method".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("avg".into());
        if with_std {
            header.extend(self.columns.iter().map(|c| format!("{c}_std")));
            header.push("avg_std".into());
        }
        let mut out = header.join(",");
        out.push('\n');
        for r in &self.rows {
            let mut cells = vec![r.method.clone()];
            cells.extend(r.values.iter().map(|v| format!("{v:.6}")));
            cells.push(format!("{:.6}", r.avg));
            if with_std {
                let stds = r.values_std.as_ref().expect("checked above");
                cells.extend(stds.iter().map(|v| format!("{v:.6}")));
                cells.push(format!("{:.6}", r.avg_std.unwrap_or(0.0)));
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    TrainSize,
    Temperature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: f64,
    pub mean: f64,
    pub std: Option<f64>,
    /// One value per seed, in seed order.
    pub seed_values: Vec<f64>,
}

/// Mean accuracy of one method along a sweep axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub axis: SweepAxis,
    pub method: String,
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    /// Builds a curve from per-point seed values; x must be strictly increasing.
    pub fn new(axis: SweepAxis, method: &str, xs: &[f64], per_seed: &[Vec<f64>]) -> Result<Self, EvalError> {
        check_increasing(xs)?;
        if xs.len() != per_seed.len() || per_seed.iter().any(Vec::is_empty) {
            return Err(EvalError::Config(format!("curve {method}: one non-empty value list per x")));
        }
        Ok(Self {
            axis,
            method: method.to_string(),
            points: xs
                .iter()
                .zip(per_seed)
                .map(|(&x, v)| SweepPoint { x, mean: mean(v), std: population_std(v), seed_values: v.clone() })
                .collect(),
        })
    }

    pub fn mean_at(&self, x: f64) -> Option<f64> {
        self.points.iter().find(|p| p.x == x).map(|p| p.mean)
    }
}

pub(crate) fn check_increasing(xs: &[f64]) -> Result<(), EvalError> {
    if xs.is_empty() {
        return Err(EvalError::Config("sweep needs at least one point".into()));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(EvalError::Config(format!("sweep points must be strictly increasing: {xs:?}")));
    }
    Ok(())
}

fn x_label(x: f64) -> String {
    format!("{x}")
}

/// Curves sharing one axis as a table: one column per x point, `avg` is the
/// per-seed mean over x points.
pub fn curves_to_table(curves: &[SweepCurve]) -> Result<ReportTable, EvalError> {
    let Some(first) = curves.first() else {
        return Err(EvalError::Config("no curves to tabulate".into()));
    };
    let xs: Vec<f64> = first.points.iter().map(|p| p.x).collect();
    let mut values = Vec::with_capacity(curves.len());
    for c in curves {
        if c.points.iter().map(|p| p.x).collect::<Vec<_>>() != xs {
            return Err(EvalError::Config(format!("curve {} has different x points", c.method)));
        }
        let seeds = c.points[0].seed_values.len();
        if c.points.iter().any(|p| p.seed_values.len() != seeds) {
            return Err(EvalError::Config(format!("curve {} has uneven seed counts", c.method)));
        }
        values.push((0..seeds).map(|s| c.points.iter().map(|p| p.seed_values[s]).collect()).collect());
    }
    let methods: Vec<String> = curves.iter().map(|c| c.method.clone()).collect();
    let columns: Vec<String> = xs.iter().map(|&x| x_label(x)).collect();
    ReportTable::from_seeds(&methods, &columns, &values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn population_std_needs_two_values() {
        assert_eq!(population_std(&[0.5]), None);
        assert_eq!(population_std(&[1.0, 3.0]), Some(1.0));
    }

    #[test]
    fn avg_is_unweighted_column_mean() {
        let t = ReportTable::from_seeds(
            &names(&["kd", "vanilla"]),
            &names(&["en", "de", "fr"]),
            &[vec![vec![0.9, 0.8, 0.7], vec![0.8, 0.8, 0.6]], vec![vec![0.5, 0.5, 0.5], vec![0.6, 0.4, 0.5]]],
        )
        .unwrap();
        for r in &t.rows {
            assert!((r.avg - mean(&r.values)).abs() < 1e-12);
        }
        assert!((t.row("kd").unwrap().values[0] - 0.85).abs() < 1e-12);
        assert!(t.row("kd").unwrap().values_std.is_some());
    }

    #[test]
    fn single_language_single_method() {
        let t = ReportTable::from_seeds(&names(&["m"]), &names(&["en"]), &[vec![vec![0.75]]]).unwrap();
        assert_eq!(t.to_csv(), "method,en,avg\nm,0.750000,0.750000\n");
    }

    #[test]
    fn csv_std_columns_follow_avg() {
        let t = ReportTable::from_seeds(&names(&["m"]), &names(&["en", "de"]), &[vec![vec![1.0, 0.0], vec![0.0, 0.0]]])
            .unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("method,en,de,avg,en_std,de_std,avg_std\n"));
        assert!(csv.contains("m,0.500000,0.000000,0.250000,0.500000,0.000000,0.250000"));
    }

    #[test]
    fn missing_column_rejected() {
        assert!(ReportTable::from_seeds(&names(&["m"]), &names(&["en", "de"]), &[vec![vec![1.0]]]).is_err());
    }

    #[test]
    fn curves_reject_non_increasing_x() {
        assert!(SweepCurve::new(SweepAxis::Temperature, "kd", &[0.1, 0.1], &[vec![0.5], vec![0.6]]).is_err());
        assert!(SweepCurve::new(SweepAxis::Temperature, "kd", &[1.0, 0.1], &[vec![0.5], vec![0.6]]).is_err());
        let c = SweepCurve::new(SweepAxis::TrainSize, "kd", &[10.0, 50.0], &[vec![0.5, 0.7], vec![0.6]]).unwrap();
        assert!((c.points[0].std.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(c.points[1].std, None);
    }

    #[test]
    fn curve_table_uses_x_columns() {
        let c =
            SweepCurve::new(SweepAxis::Temperature, "kd", &[0.001, 1.0], &[vec![0.5, 0.7], vec![0.6, 0.8]]).unwrap();
        let t = curves_to_table(&[c]).unwrap();
        assert_eq!(t.columns, vec!["0.001", "1"]);
        assert!((t.rows[0].avg - 0.65).abs() < 1e-12);
        assert!((t.rows[0].avg_std.unwrap() - 0.1).abs() < 1e-12);
    }
}
