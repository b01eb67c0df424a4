use serde::{Deserialize, Serialize};

use super::MetricsReport;

/// One experiment line of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// "EEG", "Speech", "EEG + Speech + Text", ...
    pub experiment: String,
    /// Feature kind, or fusion weights.
    pub features: String,
    /// Encoder or fusion strategy.
    pub model: String,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsReport {
    pub seed: u64,
    pub k: usize,
    pub unimodal: Vec<ReportRow>,
    pub fusion: Vec<ReportRow>,
}

impl ResultsReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("Subject-level {}-fold cross-validation (seed {})\n\n", self.k, self.seed);
        out.push_str("Unimodal\n");
        out.push_str(&render_table(&self.unimodal));
        out.push_str("\nFusion\n");
        out.push_str(&render_table(&self.fusion));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.unimodal.iter().chain(&self.fusion)
    }
}

/// Left-aligned text table with `mean ± std` F1 and accuracy columns.
pub fn render_table(rows: &[ReportRow]) -> String {
    let header = ["Experiment", "Features", "Model", "F1", "Accuracy"];
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.experiment.clone(),
                r.features.clone(),
                r.model.clone(),
                r.metrics.f1_display(),
                r.metrics.accuracy_display(),
            ]
        })
        .collect();
    let mut width = header.map(|h| h.chars().count());
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |vals: &[String]| {
        let padded: Vec<String> =
            vals.iter().zip(&width).map(|(v, w)| format!("{v}{}", " ".repeat(w - v.chars().count()))).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&header.map(String::from));
    out.push_str(&line(&width.map(|w| "-".repeat(w))));
    for row in &cells {
        out.push_str(&line(row));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{aggregate, FoldMetrics};

    #[test]
    fn table_is_aligned() {
        let m = aggregate(&[FoldMetrics { f1: 0.8, accuracy: 0.75 }, FoldMetrics { f1: 0.9, accuracy: 0.85 }]).unwrap();
        let rows = vec![
            ReportRow { experiment: "EEG".into(), features: "Handcrafted".into(), model: "CNN+LSTM".into(), metrics: m.clone() },
            ReportRow {
                experiment: "EEG + Speech + Text".into(),
                features: "-".into(),
                model: "Majority Voting".into(),
                metrics: m,
            },
        ];
        let t = render_table(&rows);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        let col = lines[0].find("F1").unwrap();
        assert_eq!(lines[2].chars().skip(col).take(13).collect::<String>(), "0.850 ± 0.071");
        assert!(lines[3].starts_with("EEG + Speech + Text  "));
    }
}
