use num_traits::Float;

use super::{Aggregation, AgreementMatrix, GroupKey};

/// Fixed six-decimal rendering; absent values are empty and negative zero
/// prints as zero.
pub fn format_number<F: Float>(value: Option<F>) -> String {
    match value.and_then(|v| v.to_f64()) {
        None => String::new(),
        Some(v) if v.is_nan() => String::new(),
        Some(v) => {
            let s = format!("{v:.6}");
            if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
                s.trim_start_matches('-').to_string()
            } else {
                s
            }
        }
    }
}

fn write_rows(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("utf-8 fields")
}

/// Matrix with per-row averages (diagonal included and excluded) and a final
/// `overall` row.
pub fn agreement_csv<F: Float>(m: &AgreementMatrix<F>) -> String {
    let mut header = vec!["annotator".to_string()];
    header.extend(m.annotator_ids.iter().map(|a| a.to_string()));
    header.push("average".into());
    header.push("average_off_diagonal".into());
    let mut rows = vec![header];
    for (i, id) in m.annotator_ids.iter().enumerate() {
        let mut row = vec![id.to_string()];
        row.extend(m.values[i].iter().map(|v| format_number(*v)));
        row.push(format_number(m.row_averages[i]));
        row.push(format_number(m.off_diagonal_row_averages[i]));
        rows.push(row);
    }
    let mut overall = vec!["overall".to_string()];
    overall.extend(m.annotator_ids.iter().map(|_| String::new()));
    overall.push(format_number(m.overall_average));
    overall.push(format_number(m.off_diagonal_overall_average));
    rows.push(overall);
    write_rows(rows)
}

/// `problem|bucket, level, mean, std, n` rows.
pub fn aggregate_csv<F: Float>(agg: &Aggregation<F>) -> String {
    let group = match agg.cells.first().map(|c| &c.group) {
        Some(GroupKey::Bucket(_)) => "bucket",
        _ => "problem",
    };
    let mut rows = vec![["metric", group, "level", "mean", "std", "n"]
        .map(String::from)
        .to_vec()];
    for c in &agg.cells {
        rows.push(vec![
            c.metric.to_string(),
            c.group.label().to_string(),
            c.level.index().to_string(),
            format_number(Some(c.mean)),
            format_number(Some(c.std_dev)),
            c.n.to_string(),
        ]);
    }
    write_rows(rows)
}
