use crate::scores::RankReport;

/// Aligned text rendering of a rank report.
pub fn render(report: &RankReport) -> String {
    let rows: Vec<[String; 4]> = report
        .models
        .iter()
        .map(|m| {
            [
                m.name.clone(),
                m.ground_truth.map_or("-".into(), |t| format!("{t:.4}")),
                format!("{:.4}", m.score),
                m.n_used.to_string(),
            ]
        })
        .collect();
    let header = ["model", "truth", "score", "n"].map(String::from);
    let mut widths = header.clone().map(|h| h.len());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&rows) {
        let line = format!(
            "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
            row[0],
            row[1],
            row[2],
            row[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        );
        out.push_str(line.trim_end());
        out.push('\n');
    }
    match &report.correlation {
        Some(c) => {
            out.push_str(&format!("\ntau_w  {:.4}\ntau    {:.4}\nrho    {:.4}\n", c.tau_w, c.tau, c.rho));
            if c.degenerate {
                out.push_str("(constant input: correlations are degenerate)\n");
            }
        }
        None => out.push_str("\ncorrelation skipped: fewer than two models with ground truth\n"),
    }
    if !report.excluded.is_empty() {
        out.push_str(&format!("no ground truth, excluded: {}\n", report.excluded.join(", ")));
    }
    out
}
