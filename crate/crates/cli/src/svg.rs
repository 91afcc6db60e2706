//! Minimal SVG rendering. Every drawing is computed from CSV text alone, so a
//! plot never carries information its table does not.

use std::fmt::Write;

use crate::error::CliError;
use crate::output::Table;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
}

fn column(table: &Table, name: &str) -> Result<usize, CliError> {
    table
        .header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::operational("internal", format!("plot column {name} missing")))
}

/// Placeholder for tables without a natural plot.
pub fn table_only(title: &str) -> String {
    let mut s = open(title);
    s.push_str("</svg>\n");
    s
}

/// One polyline per `ys` column against `x`. Empty cells break nothing; the
/// point is skipped.
pub fn line_plot(csv_text: &str, x: &str, ys: &[&str], title: &str) -> Result<String, CliError> {
    let table = Table::from_csv(csv_text)?;
    let xi = column(&table, x)?;
    let cols: Vec<usize> = ys.iter().map(|y| column(&table, y)).collect::<Result<_, _>>()?;
    let series: Vec<Vec<(f64, f64)>> = cols
        .iter()
        .map(|&c| {
            table
                .rows
                .iter()
                .filter_map(|r| Some((r[xi].parse::<f64>().ok()?, r[c].parse::<f64>().ok()?)))
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .collect()
        })
        .collect();
    let all = series.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(a, b) in all {
        x0 = x0.min(a);
        x1 = x1.max(a);
        y0 = y0.min(b);
        y1 = y1.max(b);
    }
    if !x0.is_finite() {
        return Ok(table_only(title));
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let px = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = open(title);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        "<path d=\"M{left:.2},{top:.2} L{left:.2},{bottom:.2} L{right:.2},{bottom:.2}\" stroke=\"black\" fill=\"none\"/>"
    );
    let _ = writeln!(s, "<text x=\"{left:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{x0}</text>", bottom + 16.0);
    let _ = writeln!(s, "<text x=\"{right:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{x1}</text>", bottom + 16.0);
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", WIDTH / 2.0, bottom + 32.0, escape(x));
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{bottom:.2}\" text-anchor=\"end\">{y0}</text>", left - 4.0);
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{y1}</text>", left - 4.0, top + 4.0);
    for (i, (pts, name)) in series.iter().zip(ys).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let d: Vec<String> = pts.iter().map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
        let _ = writeln!(s, "<polyline points=\"{}\" stroke=\"{color}\" fill=\"none\" stroke-width=\"1.5\"/>", d.join(" "));
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            right - 90.0,
            right - 70.0,
            right - 64.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Grid of a row-key column followed by value columns in `[0, 1]`. Empty
/// cells are drawn grey.
pub fn heatmap(csv_text: &str, title: &str) -> Result<String, CliError> {
    let table = Table::from_csv(csv_text)?;
    let cols = table.header.len().saturating_sub(1);
    let rows = table.rows.len();
    let mut s = open(title);
    if cols == 0 || rows == 0 {
        s.push_str("</svg>\n");
        return Ok(s);
    }
    let cw = (WIDTH - 2.0 * MARGIN) / cols as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / rows as f64;
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">n</text>", WIDTH / 2.0, HEIGHT - 12.0);
    let _ = writeln!(s, "<text x=\"14\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", HEIGHT / 2.0, escape(&table.header[0]));
    for (r, row) in table.rows.iter().enumerate() {
        let y = MARGIN + r as f64 * ch;
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", MARGIN - 4.0, y + ch / 2.0 + 4.0, escape(&row[0]));
        for c in 0..cols {
            let x = MARGIN + c as f64 * cw;
            let fill = match row[c + 1].parse::<f64>() {
                Ok(v) if v.is_finite() => shade(v),
                _ => "#cccccc".to_string(),
            };
            let _ = writeln!(
                s,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cw:.2}\" height=\"{ch:.2}\" fill=\"{fill}\"><title>{}</title></rect>",
                escape(&row[c + 1])
            );
        }
    }
    for (c, key) in table.header[1..].iter().enumerate() {
        let x = MARGIN + (c as f64 + 0.5) * cw;
        let _ = writeln!(s, "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", HEIGHT - MARGIN + 14.0, escape(key));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// White at 0 to dark blue at 1.
fn shade(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_a_function_of_the_table() {
        let csv = "epoch,acc,F\n0,0.5,0.25\n1,0.75,0\n";
        let a = line_plot(csv, "epoch", &["acc", "F"], "t").unwrap();
        assert_eq!(a, line_plot(csv, "epoch", &["acc", "F"], "t").unwrap());
        assert_eq!(a.matches("<polyline").count(), 2);
    }

    #[test]
    fn undefined_cells_are_grey() {
        let svg = heatmap("k,0,1\n0,,1\n", "h").unwrap();
        assert!(svg.contains("#cccccc"));
        assert!(svg.contains("#08306b"));
    }
}
