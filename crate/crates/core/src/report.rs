//! Result rendering: CSV tables, branch comparison summaries, a minimal
//! static SVG line plot, and the plain-text run report.
//!
//! All writers format floats with Rust's shortest round-trip notation, so
//! identical inputs always produce byte-identical files. The diagram table is
//! the interchange format between the online phase and the comparison
//! command: one row per (parameter point, branch), with optional geometry and
//! material columns that appear only when the scenario varies them.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rom::PointError;
use crate::solver::Branch;

/// One diagram row: the continuation parameter, optional branch parameters,
/// the output functional and the convergence flag.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagramRow {
    pub mu: f64,
    pub mu_g: Option<f64>,
    pub young: Option<f64>,
    pub poisson: Option<f64>,
    pub s: f64,
    pub converged: bool,
}

/// All online branches of one scenario in CSV-ready form.
#[derive(Debug, Clone, Default)]
pub struct DiagramTable {
    pub has_geometry: bool,
    pub has_material: bool,
    pub rows: Vec<DiagramRow>,
}

/// One branch extracted from a diagram table: a series over the mu grid.
#[derive(Debug, Clone)]
pub struct DiagramBranch {
    pub label: String,
    pub mus: Vec<f64>,
    pub s: Vec<f64>,
    pub converged: Vec<bool>,
}

impl DiagramBranch {
    /// Smallest converged parameter whose output exceeds the threshold.
    pub fn critical_mu(&self, threshold: f64) -> Option<f64> {
        self.mus
            .iter()
            .zip(&self.s)
            .zip(&self.converged)
            .find(|((_, &s), &c)| c && s > threshold)
            .map(|((&mu, _), _)| mu)
    }
}

impl DiagramTable {
    pub fn new(has_geometry: bool, has_material: bool) -> Self {
        DiagramTable { has_geometry, has_material, rows: Vec::new() }
    }

    /// Appends one branch, stamping its parameter columns on every row.
    pub fn push_branch(
        &mut self,
        branch: &Branch,
        mu_g: Option<f64>,
        material: Option<(f64, f64)>,
    ) {
        for p in &branch.points {
            self.rows.push(DiagramRow {
                mu: p.mu,
                mu_g,
                young: material.map(|m| m.0),
                poisson: material.map(|m| m.1),
                s: p.s,
                converged: p.converged,
            });
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("mu");
        if self.has_geometry {
            out.push_str(",mu_g");
        }
        if self.has_material {
            out.push_str(",young,poisson");
        }
        out.push_str(",s,converged\n");
        for r in &self.rows {
            let _ = write!(out, "{}", r.mu);
            if self.has_geometry {
                let _ = write!(out, ",{}", r.mu_g.unwrap_or(f64::NAN));
            }
            if self.has_material {
                let _ = write!(
                    out,
                    ",{},{}",
                    r.young.unwrap_or(f64::NAN),
                    r.poisson.unwrap_or(f64::NAN)
                );
            }
            let _ = writeln!(out, ",{},{}", r.s, u8::from(r.converged));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Io("diagram file is empty".into()))?;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        let expect_geometry = columns.contains(&"mu_g");
        let expect_material = columns.contains(&"young");
        let mut expected = vec!["mu"];
        if expect_geometry {
            expected.push("mu_g");
        }
        if expect_material {
            expected.extend(["young", "poisson"]);
        }
        expected.extend(["s", "converged"]);
        if columns != expected {
            return Err(Error::Io(format!(
                "unexpected diagram header '{header}' (expected '{}')",
                expected.join(",")
            )));
        }

        let mut table = DiagramTable::new(expect_geometry, expect_material);
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != expected.len() {
                return Err(Error::Io(format!(
                    "diagram row {} has {} fields, expected {}",
                    k + 2,
                    fields.len(),
                    expected.len()
                )));
            }
            let mut it = fields.into_iter();
            let mut next_f64 = |what: &str| -> Result<f64> {
                let field = it.next().unwrap();
                field.parse::<f64>().map_err(|_| {
                    Error::Io(format!("diagram row {}: bad {what} '{field}'", k + 2))
                })
            };
            let mu = next_f64("mu")?;
            let mu_g = if expect_geometry { Some(next_f64("mu_g")?) } else { None };
            let (young, poisson) = if expect_material {
                (Some(next_f64("young")?), Some(next_f64("poisson")?))
            } else {
                (None, None)
            };
            let s = next_f64("s")?;
            let converged = match it.next().unwrap() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => {
                    return Err(Error::Io(format!(
                        "diagram row {}: bad converged flag '{other}'",
                        k + 2
                    )))
                }
            };
            table.rows.push(DiagramRow { mu, mu_g, young, poisson, s, converged });
        }
        Ok(table)
    }

    /// Splits the rows into branches, grouped by the parameter columns in
    /// first-appearance order.
    pub fn branches(&self) -> Vec<DiagramBranch> {
        let mut order: Vec<String> = Vec::new();
        let mut out: Vec<DiagramBranch> = Vec::new();
        for r in &self.rows {
            let mut label = String::new();
            if let Some(g) = r.mu_g {
                let _ = write!(label, "mu_g={g}");
            }
            if let Some(e) = r.young {
                if !label.is_empty() {
                    label.push(' ');
                }
                let _ = write!(label, "young={e} poisson={}", r.poisson.unwrap_or(f64::NAN));
            }
            if label.is_empty() {
                label.push_str("branch");
            }
            let idx = match order.iter().position(|l| *l == label) {
                Some(i) => i,
                None => {
                    order.push(label.clone());
                    out.push(DiagramBranch {
                        label,
                        mus: Vec::new(),
                        s: Vec::new(),
                        converged: Vec::new(),
                    });
                    out.len() - 1
                }
            };
            out[idx].mus.push(r.mu);
            out[idx].s.push(r.s);
            out[idx].converged.push(r.converged);
        }
        out
    }
}

/// CSV dump of one continuation branch.
pub fn branch_csv(branch: &Branch) -> String {
    let mut out = String::from("mu,s,newton_iters,converged\n");
    for p in &branch.points {
        let _ = writeln!(out, "{},{},{},{}", p.mu, p.s, p.newton_iters, u8::from(p.converged));
    }
    out
}

/// CSV dump of a singular-value spectrum (1-based mode numbers).
pub fn spectrum_csv(sigma: &[f64]) -> String {
    let mut out = String::from("mode,sigma\n");
    for (i, v) in sigma.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, v);
    }
    out
}

/// CSV dump of pointwise branch deviations.
pub fn errors_csv(points: &[PointError]) -> String {
    let mut out = String::from("mu,state_error,state_error_rel,output_error,state_norm\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.mu, p.abs_state, p.rel_state, p.abs_output, p.state_norm
        );
    }
    out
}

/// Critical parameters of two diagrams plus their pointwise deviation.
#[derive(Debug, Clone)]
pub struct CompareSummary {
    pub threshold: f64,
    /// (source tag, branch label, critical mu) for every branch of both inputs.
    pub criticals: Vec<(&'static str, String, Option<f64>)>,
    /// max |s_a - s_b| over grid points converged in both diagrams.
    pub max_abs_ds: f64,
    pub n_compared: usize,
}

/// Compares two diagram tables branch-by-branch (paired in order). The mu
/// grids must match exactly.
pub fn compare_tables(
    a: &DiagramTable,
    b: &DiagramTable,
    threshold: f64,
) -> Result<CompareSummary> {
    let branches_a = a.branches();
    let branches_b = b.branches();
    if branches_a.len() != branches_b.len() {
        return Err(Error::GridMismatch(format!(
            "diagrams have {} and {} branches",
            branches_a.len(),
            branches_b.len()
        )));
    }
    let mut max_abs_ds = 0.0f64;
    let mut n_compared = 0usize;
    for (ba, bb) in branches_a.iter().zip(&branches_b) {
        if ba.mus != bb.mus {
            return Err(Error::GridMismatch(format!(
                "branches '{}' and '{}' use different parameter grids",
                ba.label, bb.label
            )));
        }
        for k in 0..ba.mus.len() {
            if ba.converged[k] && bb.converged[k] {
                max_abs_ds = max_abs_ds.max((ba.s[k] - bb.s[k]).abs());
                n_compared += 1;
            }
        }
    }
    let mut criticals = Vec::new();
    for (tag, branches) in [("a", &branches_a), ("b", &branches_b)] {
        for br in branches.iter() {
            criticals.push((tag, br.label.clone(), br.critical_mu(threshold)));
        }
    }
    Ok(CompareSummary { threshold, criticals, max_abs_ds, n_compared })
}

impl CompareSummary {
    pub fn render(&self) -> String {
        let mut out = format!(
            "branch criticals (detection threshold {}):\n",
            self.threshold
        );
        for (tag, label, critical) in &self.criticals {
            match critical {
                Some(mu) => {
                    let _ = writeln!(out, "  [{tag}] {label}: mu* = {mu}");
                }
                None => {
                    let _ = writeln!(out, "  [{tag}] {label}: no onset detected");
                }
            }
        }
        let mut ordered: Vec<_> =
            self.criticals.iter().filter(|(_, _, c)| c.is_some()).collect();
        ordered.sort_by(|x, y| x.2.unwrap().total_cmp(&y.2.unwrap()));
        if ordered.len() > 1 {
            out.push_str("ordering (earliest onset first):\n  ");
            let parts: Vec<String> = ordered
                .iter()
                .map(|(tag, label, c)| format!("[{tag}] {label} ({})", c.unwrap()))
                .collect();
            out.push_str(&parts.join(" < "));
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "max |s_a - s_b| over {} shared converged points: {}",
            self.n_compared,
            if self.n_compared == 0 { "n/a".into() } else { format!("{}", self.max_abs_ds) }
        );
        out
    }
}

/// One plotted series: a labeled polyline plus an optional onset marker.
#[derive(Debug, Clone)]
pub struct SvgSeries {
    pub label: String,
    pub mus: Vec<f64>,
    pub values: Vec<f64>,
    pub critical: Option<f64>,
}

const SVG_COLORS: [&str; 6] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Renders a static line chart of the output functional against the
/// continuation parameter.
pub fn diagram_svg(title: &str, x_label: &str, y_label: &str, series: &[SvgSeries]) -> String {
    let (width, height) = (800.0, 500.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 55.0);
    let (pw, ph) = (width - ml - mr, height - mt - mb);

    let finite = |vals: &mut Vec<f64>, take: &dyn Fn(&SvgSeries) -> Vec<f64>| {
        for s in series {
            vals.extend(take(s).into_iter().filter(|v| v.is_finite()));
        }
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    finite(&mut xs, &|s| s.mus.clone());
    finite(&mut ys, &|s| s.values.clone());
    let (x0, x1) = padded_bounds(&xs, 0.0);
    let (y0, y1) = padded_bounds(&ys, 0.05);
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="13">
<rect width="{width}" height="{height}" fill="white"/>
<text x="{:.1}" y="24" text-anchor="middle" font-size="16">{}</text>
"#,
        ml + pw / 2.0,
        xml_escape(title)
    );

    // Axes, ticks and grid.
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (gx, gy) = (ml + t * pw, mt + ph - t * ph);
        let _ = writeln!(
            out,
            r##"<line x1="{gx:.1}" y1="{mt:.1}" x2="{gx:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
            mt + ph
        );
        let _ = writeln!(
            out,
            r##"<line x1="{ml:.1}" y1="{gy:.1}" x2="{:.1}" y2="{gy:.1}" stroke="#dddddd"/>"##,
            ml + pw
        );
        let _ = writeln!(
            out,
            r#"<text x="{gx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            mt + ph + 18.0,
            fmt_tick(x0 + t * (x1 - x0))
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            ml - 6.0,
            gy + 4.0,
            fmt_tick(y0 + t * (y1 - y0))
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{ml:.1}" y="{mt:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        ml + pw / 2.0,
        height - 12.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        xml_escape(y_label)
    );

    // Series polylines, onset markers and legend.
    for (i, s) in series.iter().enumerate() {
        let color = SVG_COLORS[i % SVG_COLORS.len()];
        let points: Vec<String> = s
            .mus
            .iter()
            .zip(&s.values)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.join(" ")
        );
        if let Some(c) = s.critical {
            if c.is_finite() && c >= x0 && c <= x1 {
                let _ = writeln!(
                    out,
                    r#"<line x1="{:.2}" y1="{mt:.1}" x2="{:.2}" y2="{:.1}" stroke="{color}" stroke-dasharray="5,4" opacity="0.6"/>"#,
                    px(c),
                    px(c),
                    mt + ph
                );
            }
        }
        let ly = mt + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            ml + 10.0,
            ml + 34.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            ml + 40.0,
            ly + 4.0,
            xml_escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn padded_bounds(values: &[f64], pad: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 1.0, hi + 1.0);
    }
    let span = hi - lo;
    (lo - pad * span, hi + pad * span)
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Appends a block of text to the run report, creating the file on demand.
pub fn append_report(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::Io(format!("opening {}: {e}", path.display())))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))
}
