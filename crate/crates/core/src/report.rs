//! Deterministic report emission: identical scenario and seed produce
//! byte-identical CSV and JSON output. Wall-clock timings are therefore
//! opt-in and excluded by default.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub task: String,
    pub id: String,
    pub eta: String,
    pub filters: String,
    pub t: String,
    pub value: String,
    pub reference: String,
    pub abs_diff: String,
    pub bound: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<u64>,
}

impl Row {
    pub fn new(task: &str, id: &str) -> Self {
        Row {
            task: task.to_string(),
            id: id.to_string(),
            eta: String::new(),
            filters: String::new(),
            t: String::new(),
            value: String::new(),
            reference: String::new(),
            abs_diff: String::new(),
            bound: String::new(),
            pass: true,
            runtime_ms: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema: u32,
    pub seed: u64,
    pub rows: Vec<Row>,
    pub summary: Summary,
}

impl Report {
    pub fn new(seed: u64) -> Self {
        Report {
            schema: 1,
            seed,
            rows: Vec::new(),
            summary: Summary { total: 0, passed: 0, failed: 0 },
        }
    }

    pub fn push(&mut self, row: Row) {
        self.summary.total += 1;
        if row.pass {
            self.summary.passed += 1;
        } else {
            self.summary.failed += 1;
        }
        self.rows.push(row);
    }

    pub fn all_pass(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,id,eta,filters,t,value,reference,abs_diff,bound,pass\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                csv_field(&r.task),
                csv_field(&r.id),
                csv_field(&r.eta),
                csv_field(&r.filters),
                csv_field(&r.t),
                csv_field(&r.value),
                csv_field(&r.reference),
                csv_field(&r.abs_diff),
                csv_field(&r.bound),
                r.pass
            ));
        }
        out.push_str(&format!(
            "# seed={} total={} passed={} failed={}\n",
            self.seed, self.summary.total, self.summary.passed, self.summary.failed
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization") + "\n"
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Stable scientific formatting for report values.
pub fn fnum(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.12e}")
    }
}

pub fn fcomplex(v: num_complex::Complex64) -> String {
    format!("{}{}{}i", fnum(v.re), if v.im >= 0.0 { "+" } else { "-" }, fnum(v.im.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_are_stable() {
        let mut r = Report::new(7);
        let mut row = Row::new("oracle", "X");
        row.value = fnum(1.25e-3);
        row.pass = true;
        r.push(row);
        let mut row = Row::new("solve", "S");
        row.pass = false;
        r.push(row);
        assert!(!r.all_pass());
        let a = r.to_csv();
        let b = r.to_csv();
        assert_eq!(a, b);
        assert!(a.contains("oracle"));
        assert!(r.to_json().contains("\"schema\": 1"));
    }
}
