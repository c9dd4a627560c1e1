use serde::{Deserialize, Serialize};

use super::area::aggregate_abs_percent;

/// One leaf row of the precision/completeness table. `sigma_mm` and
/// `area_diff_pct` hold one entry per sensing system.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub sigma_mm: Vec<Option<f64>>,
    pub area_diff_pct: Vec<Option<f64>>,
    pub reference_cm2: Option<f64>,
}

impl TableRow {
    /// Mean of the sigma columns and mean absolute area difference over `rows`.
    pub fn mean_of(rows: &[TableRow], systems: usize) -> TableRow {
        let column = |pick: &dyn Fn(&TableRow) -> Option<f64>| -> Vec<f64> { rows.iter().filter_map(pick).collect() };
        let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        TableRow {
            label: "mean".into(),
            sigma_mm: (0..systems)
                .map(|s| mean(column(&|r: &TableRow| r.sigma_mm.get(s).copied().flatten())))
                .collect(),
            area_diff_pct: (0..systems)
                .map(|s| aggregate_abs_percent(&column(&|r: &TableRow| r.area_diff_pct.get(s).copied().flatten())))
                .collect(),
            reference_cm2: None,
        }
    }
}

fn cell(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.decimals$}"))
}

/// Plain-text table: leaf label, sigma per system in mm (2 decimals), area
/// difference per system in percent (1 decimal), reference area in cm²
/// (2 decimals).
pub fn format_table(systems: &[&str], rows: &[TableRow]) -> String {
    let mut header = vec!["Leaf".to_string()];
    header.extend(systems.iter().map(|s| format!("sigma {s} [mm]")));
    header.extend(systems.iter().map(|s| format!("dA {s} [%]")));
    header.push("Ref. [cm^2]".into());
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![r.label.clone()];
            line.extend((0..systems.len()).map(|s| cell(r.sigma_mm.get(s).copied().flatten(), 2)));
            line.extend((0..systems.len()).map(|s| cell(r.area_diff_pct.get(s).copied().flatten(), 1)));
            line.push(r.reference_cm2.map_or_else(String::new, |a| format!("{a:.2}")));
            line
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|l| l[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let render = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (s, w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        parts.join(" | ").trim_end().to_string()
    };
    let mut out = render(&header);
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for line in &body {
        out.push_str(&render(line));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_cells_render_as_dash() {
        let rows = [TableRow {
            label: "a".into(),
            sigma_mm: vec![Some(0.123), None],
            area_diff_pct: vec![None, Some(-2.26)],
            reference_cm2: Some(1.0),
        }];
        let t = format_table(&["x", "y"], &rows);
        let last = t.lines().nth(2).unwrap();
        let cells: Vec<&str> = last.split('|').map(str::trim).collect();
        assert_eq!(cells, vec!["a", "0.12", "-", "-", "-2.3", "1.00"]);
    }

    #[test]
    fn mean_row_uses_absolute_differences() {
        let rows = [
            TableRow {
                label: "1".into(),
                sigma_mm: vec![Some(1.0)],
                area_diff_pct: vec![Some(-4.0)],
                reference_cm2: None,
            },
            TableRow {
                label: "2".into(),
                sigma_mm: vec![Some(2.0)],
                area_diff_pct: vec![Some(2.0)],
                reference_cm2: None,
            },
        ];
        let m = TableRow::mean_of(&rows, 1);
        assert_eq!(m.sigma_mm, vec![Some(1.5)]);
        assert_eq!(m.area_diff_pct, vec![Some(3.0)]);
    }
}
