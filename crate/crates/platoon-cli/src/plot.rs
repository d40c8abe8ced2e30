//! Static SVG line charts rendered from run CSVs. No interactivity, no
//! external renderer: just polylines, axes and a legend.

use std::fmt::Write as _;
use std::path::Path;

use platoon_core::scenario::ScenarioError;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 45.0;
const MARGIN_B: f64 = 55.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series]) -> Option<(f64, f64, f64, f64)> {
    let mut pts = series.iter().flat_map(|s| s.points.iter());
    let first = pts.next()?;
    let mut b = (first.0, first.0, first.1, first.1);
    for p in pts {
        b.0 = b.0.min(p.0);
        b.1 = b.1.max(p.0);
        b.2 = b.2.min(p.1);
        b.3 = b.3.max(p.1);
    }
    // Avoid degenerate ranges.
    if b.0 == b.1 {
        b.0 -= 1.0;
        b.1 += 1.0;
    }
    if b.2 == b.3 {
        b.2 -= 1.0;
        b.3 += 1.0;
    }
    Some(b)
}

/// Render series as an SVG line chart.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1, y0, y1) = bounds(series).unwrap_or((0.0, 1.0, 0.0, 1.0));
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = move |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * plot_w;
    let sy = move |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    );
    let _ = writeln!(
        svg,
        r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<text x="{}" y="25" font-family="sans-serif" font-size="16" text-anchor="middle">{title}</text>"##,
        MARGIN_L + plot_w / 2.0
    );

    // Axes with a few ticks.
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>"##
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let px = sx(fx);
        let py = sy(fy);
        let _ = writeln!(
            svg,
            r##"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="#999"/>"##,
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{px}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{fx:.2}</text>"##,
            HEIGHT - MARGIN_B + 18.0
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{py}" x2="{MARGIN_L}" y2="{py}" stroke="#999"/>"##,
            MARGIN_L - 5.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{fy:.2}</text>"##,
            MARGIN_L - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{x_label}</text>"##,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{y_label}</text>"##,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::new();
        for (x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            let _ = write!(d, "{:.2},{:.2} ", sx(*x), sy(*y));
        }
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.4"/>"##,
            d.trim_end()
        );
        let ly = MARGIN_T + 14.0 + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_R + 12.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"##,
            lx + 22.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"##,
            lx + 28.0,
            ly + 4.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_csv(path: &Path) -> Result<Csv, ScenarioError> {
    if !path.exists() {
        return Err(ScenarioError::Config(format!(
            "{} does not exist",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| ScenarioError::Config(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    if rows.is_empty() {
        return Err(ScenarioError::Config(format!(
            "{} has no data rows",
            path.display()
        )));
    }
    Ok(Csv { header, rows })
}

impl Csv {
    fn column(&self, name: &str) -> Result<usize, ScenarioError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ScenarioError::Config(format!("missing column {name}")))
    }

    fn f64_at(&self, row: &[String], idx: usize) -> Option<f64> {
        row.get(idx).and_then(|s| s.parse::<f64>().ok())
    }
}

/// Group (x, y) points from two columns by a vehicle-id column.
fn per_vehicle_series(csv: &Csv, x_col: &str, y_col: &str) -> Result<Vec<Series>, ScenarioError> {
    let id_idx = csv.column("vehicle_id")?;
    let x_idx = csv.column(x_col)?;
    let y_idx = csv.column(y_col)?;
    let mut series: Vec<(u32, Series)> = Vec::new();
    for row in &csv.rows {
        let (Some(id), Some(x), Some(y)) = (
            row.get(id_idx).and_then(|s| s.parse::<u32>().ok()),
            csv.f64_at(row, x_idx),
            csv.f64_at(row, y_idx),
        ) else {
            continue;
        };
        let entry = match series.iter_mut().find(|(sid, _)| *sid == id) {
            Some((_, s)) => s,
            None => {
                series.push((
                    id,
                    Series {
                        label: format!("vehicle {id}"),
                        points: Vec::new(),
                    },
                ));
                &mut series.last_mut().expect("just pushed").1
            }
        };
        entry.points.push((x, y));
    }
    Ok(series.into_iter().map(|(_, s)| s).collect())
}

pub fn cmd_plot(out_dir: &Path) -> Result<(), ScenarioError> {
    let trace = read_csv(&out_dir.join("trace.csv"))?;
    let velocity = per_vehicle_series(&trace, "t", "v")?;
    std::fs::write(
        out_dir.join("velocity.svg"),
        line_chart("Velocity over time", "t [s]", "v [m/s]", &velocity),
    )?;
    let trajectory = per_vehicle_series(&trace, "x", "y")?;
    std::fs::write(
        out_dir.join("trajectory.svg"),
        line_chart("Trajectories", "x [m]", "y [m]", &trajectory),
    )?;
    let mut written = vec!["velocity.svg", "trajectory.svg"];

    // Received-signal chart when the comparison file is present.
    let received_path = out_dir.join("received_signal.csv");
    if received_path.exists() {
        let csv = read_csv(&received_path)?;
        let t_idx = csv.column("t")?;
        let true_idx = csv.column("true_v")?;
        let recv_idx = csv.column("received_v")?;
        let ch_idx = csv.column("channel")?;
        let mut series: Vec<Series> = Vec::new();
        let mut true_points: Vec<(f64, f64)> = Vec::new();
        let mut true_channel: Option<String> = None;
        for row in &csv.rows {
            let Some(t) = csv.f64_at(row, t_idx) else {
                continue;
            };
            let channel = row.get(ch_idx).cloned().unwrap_or_default();
            if let Some(v) = csv.f64_at(row, true_idx) {
                // The true curve is identical across channels; keep the first
                // channel's copy only.
                let keeper = true_channel.get_or_insert_with(|| channel.clone());
                if *keeper == channel {
                    true_points.push((t, v));
                }
            }
            if let Some(v) = csv.f64_at(row, recv_idx) {
                let label = format!("received ({channel})");
                let entry = match series.iter_mut().find(|s| s.label == label) {
                    Some(s) => s,
                    None => {
                        series.push(Series {
                            label,
                            points: Vec::new(),
                        });
                        series.last_mut().expect("just pushed")
                    }
                };
                entry.points.push((t, v));
            }
        }
        series.insert(
            0,
            Series {
                label: "true".into(),
                points: true_points,
            },
        );
        std::fs::write(
            out_dir.join("received_signal.svg"),
            line_chart(
                "Leader velocity: true vs received",
                "t [s]",
                "v [m/s]",
                &series,
            ),
        )?;
        written.push("received_signal.svg");
    }
    println!("wrote {} in {}", written.join(", "), out_dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_wellformed_svg() {
        let series = vec![Series {
            label: "a".into(),
            points: (0..50)
                .map(|k| (k as f64, (k as f64 * 0.3).sin()))
                .collect(),
        }];
        let svg = line_chart("test", "x", "y", &series);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }
}
