//! Monthly SVG charts: grouped energy bars and a PPD line chart.
//!
//! Output is a pure function of the input rows, so equal rollups give
//! byte-identical documents.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::control_sim::MonthlyRow;
use crate::error::{Error, Result};

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
const MONTHS: [&str; 12] = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];

/// One named rollup, e.g. a pipeline or the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSeries {
    pub name: String,
    pub rows: Vec<MonthlyRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonthlyCharts {
    pub energy_svg: String,
    pub ppd_svg: String,
}

pub fn render_monthly_charts(series: &[ChartSeries]) -> Result<MonthlyCharts> {
    if series.is_empty() || series.iter().all(|s| s.rows.is_empty()) {
        return Err(Error::Invalid("nothing to chart: monthly rollup is empty".into()));
    }
    let months: Vec<(i32, u32)> = series
        .iter()
        .flat_map(|s| s.rows.iter().map(|r| (r.year, r.month)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok(MonthlyCharts {
        energy_svg: energy_chart(series, &months),
        ppd_svg: ppd_chart(series, &months),
    })
}

fn row(s: &ChartSeries, month: (i32, u32)) -> Option<&MonthlyRow> {
    s.rows.iter().find(|r| (r.year, r.month) == month)
}

fn month_label(months: &[(i32, u32)], i: usize) -> String {
    let (y, m) = months[i];
    let multi_year = months.first().map(|f| f.0) != months.last().map(|l| l.0);
    if multi_year {
        format!("{} {}", MONTHS[m as usize - 1], y)
    } else {
        MONTHS[m as usize - 1].to_string()
    }
}

/// Rounds the axis maximum up to 1, 2 or 5 times a power of ten.
fn nice_max(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let p = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * p).find(|&c| c >= v).unwrap_or(10.0 * p)
}

fn header(svg: &mut String, title: &str, y_label: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#, LEFT + plot_w() / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + plot_h() / 2.0,
        escape(y_label)
    );
}

fn plot_w() -> f64 {
    WIDTH - LEFT - RIGHT
}

fn plot_h() -> f64 {
    HEIGHT - TOP - BOTTOM
}

fn y_axis(svg: &mut String, max: f64) {
    for i in 0..=5 {
        let v = max * f64::from(i) / 5.0;
        let y = TOP + plot_h() * (1.0 - f64::from(i) / 5.0);
        let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + plot_w());
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, tick(v));
    }
    let _ = writeln!(
        svg,
        r##"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="#333"/>"##,
        TOP + plot_h()
    );
}

fn tick(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

fn legend(svg: &mut String, series: &[ChartSeries], note: Option<&str>) {
    let x = WIDTH - RIGHT + 20.0;
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(svg, r#"<rect x="{x:.2}" y="{:.2}" width="12" height="12" fill="{}"/>"#, y - 10.0, color(i));
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 18.0, escape(&s.name));
    }
    if let Some(note) = note {
        let y = TOP + 10.0 + 20.0 * series.len() as f64 + 10.0;
        let _ = writeln!(svg, r##"<text x="{x:.2}" y="{y:.2}" fill="#555">{}</text>"##, escape(note));
    }
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn x_labels(svg: &mut String, months: &[(i32, u32)], centre: impl Fn(usize) -> f64) {
    let y = TOP + plot_h();
    let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#333"/>"##, LEFT + plot_w());
    for i in 0..months.len() {
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, centre(i), y + 18.0, month_label(months, i));
    }
}

fn energy_chart(series: &[ChartSeries], months: &[(i32, u32)]) -> String {
    let max = nice_max(
        series
            .iter()
            .flat_map(|s| s.rows.iter().map(|r| r.e_heat + r.e_cool))
            .fold(0.0, f64::max),
    );
    let mut svg = String::new();
    header(&mut svg, "Monthly HVAC energy", "kWh");
    y_axis(&mut svg, max);
    let group_w = plot_w() / months.len() as f64;
    let bar_w = group_w * 0.8 / series.len() as f64;
    let scale = plot_h() / max;
    let base = TOP + plot_h();
    for (mi, &month) in months.iter().enumerate() {
        let _ = writeln!(svg, r#"<g class="month" data-month="{}-{:02}">"#, month.0, month.1);
        for (si, s) in series.iter().enumerate() {
            let Some(r) = row(s, month) else { continue };
            let x = LEFT + group_w * mi as f64 + group_w * 0.1 + bar_w * si as f64;
            let h_heat = r.e_heat * scale;
            let h_cool = r.e_cool * scale;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{h_heat:.2}" fill="{}"><title>{} heating {:.1} kWh</title></rect>"#,
                base - h_heat,
                color(si),
                escape(&s.name),
                r.e_heat
            );
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{h_cool:.2}" fill="{}" fill-opacity="0.45"><title>{} cooling {:.1} kWh</title></rect>"#,
                base - h_heat - h_cool,
                color(si),
                escape(&s.name),
                r.e_cool
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    x_labels(&mut svg, months, |i| LEFT + group_w * (i as f64 + 0.5));
    legend(&mut svg, series, Some("solid heating, pale cooling"));
    svg.push_str("</svg>\n");
    svg
}

fn ppd_chart(series: &[ChartSeries], months: &[(i32, u32)]) -> String {
    let max = nice_max(series.iter().flat_map(|s| s.rows.iter().map(|r| r.mean_ppd)).fold(0.0, f64::max));
    let mut svg = String::new();
    header(&mut svg, "Monthly mean PPD", "PPD (%)");
    y_axis(&mut svg, max);
    let step = plot_w() / months.len() as f64;
    let x_of = |i: usize| LEFT + step * (i as f64 + 0.5);
    let y_of = |v: f64| TOP + plot_h() * (1.0 - v / max);
    for (si, s) in series.iter().enumerate() {
        let pts: Vec<String> = months
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| row(s, m).map(|r| format!("{:.2},{:.2}", x_of(i), y_of(r.mean_ppd))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            color(si),
            pts.join(" ")
        );
        for p in &pts {
            let (x, y) = p.split_once(',').expect("point has two coordinates");
            let _ = writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="3" fill="{}"/>"#, color(si));
        }
    }
    x_labels(&mut svg, months, x_of);
    legend(&mut svg, series, None);
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(n: u32) -> Vec<MonthlyRow> {
        (1..=n)
            .map(|m| MonthlyRow { year: 2023, month: m, e_heat: 100.0 / f64::from(m), e_cool: f64::from(m), mean_ppd: 8.0 + f64::from(m % 3), steps: 10 })
            .collect()
    }

    #[test]
    fn twelve_bar_groups() {
        let c = render_monthly_charts(&[ChartSeries { name: "mpc".into(), rows: rows(12) }]).unwrap();
        assert_eq!(c.energy_svg.matches(r#"<g class="month""#).count(), 12);
        assert_eq!(c.ppd_svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn single_series_legend() {
        let c = render_monthly_charts(&[ChartSeries { name: "a<b".into(), rows: rows(2) }]).unwrap();
        assert_eq!(c.ppd_svg.matches(r#"width="12" height="12""#).count(), 1);
        assert!(c.ppd_svg.contains("a&lt;b"));
    }

    #[test]
    fn empty_is_error() {
        assert!(render_monthly_charts(&[]).is_err());
        assert!(render_monthly_charts(&[ChartSeries { name: "x".into(), rows: vec![] }]).is_err());
    }

    #[test]
    fn deterministic() {
        let s = [ChartSeries { name: "a".into(), rows: rows(5) }, ChartSeries { name: "b".into(), rows: rows(4) }];
        assert_eq!(render_monthly_charts(&s).unwrap(), render_monthly_charts(&s).unwrap());
    }
}
