//! CSV and SVG emission plus the machine-readable run summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::duality::{value, ValueVariant};
use crate::error::{Error, Result};
use crate::mappings::{MapStatus, Side};
use crate::model::MpcloInstance;
use crate::partition::{Region, RegionDecomposition, RegionKind};
use crate::solver::{SolverOptions, SupportValue};

/// Fixed nine-decimal rendering used for every number we print.
pub fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else if x.is_nan() {
        "nan".into()
    } else {
        // avoid "-0.000000000"
        let s = format!("{x:.9}");
        if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    }
}

pub fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|&x| fmt_num(x)).collect();
    format!("({})", parts.join(","))
}

fn fmt_bbox(b: &[(f64, f64)]) -> String {
    let parts: Vec<String> = b.iter().map(|(lo, hi)| format!("{}:{}", fmt_num(*lo), fmt_num(*hi))).collect();
    parts.join(";")
}

fn fmt_key(k: &Option<Vec<i64>>) -> String {
    match k {
        Some(k) => {
            let parts: Vec<String> = k.iter().map(|x| x.to_string()).collect();
            parts.join(" ")
        }
        None => String::new(),
    }
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(csv_err)?;
    String::from_utf8(bytes).map_err(csv_err)
}

/// One row per region: side, kind, extent, key and a witness pair.
pub fn regions_csv(dec: &RegionDecomposition) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "side",
        "region",
        "kind",
        "samples",
        "bbox",
        "interval",
        "value_key",
        "witness_param",
        "witness_image",
        "note",
    ])
    .map_err(csv_err)?;
    if dec.regions.is_empty() {
        let window = fmt_bbox(&dec.window.axes);
        w.write_record([dec.side.name(), "0", RegionKind::OutsideTheta.name().as_str(), "0", &window, "", "", "", "", ""])
            .map_err(csv_err)?;
        return finish(w);
    }
    for reg in &dec.regions {
        let interval = reg
            .interval
            .map(|(a, b)| format!("{}:{}", fmt_num(a), fmt_num(b)))
            .unwrap_or_default();
        let (param, image) = match reg.representative {
            Some(i) => {
                let s = &dec.samples[i];
                (fmt_vec(&s.point), s.map_point().map(fmt_vec).unwrap_or_default())
            }
            None => (String::new(), String::new()),
        };
        w.write_record([
            dec.side.name().to_string(),
            reg.id.to_string(),
            reg.kind.name(),
            reg.samples.len().to_string(),
            fmt_bbox(&reg.bbox),
            interval,
            fmt_key(&reg.key),
            param,
            image,
            reg.note.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// A one-parameter value that is either a point or an open interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Point(f64),
    Interval(f64, f64),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Point(x) => fmt_num(*x),
            Cell::Interval(a, b) => format!("({},{})", fmt_num(*a), fmt_num(*b)),
        }
    }

    /// A finite point of the cell used to evaluate witnesses.
    pub fn representative(&self) -> f64 {
        match *self {
            Cell::Point(x) => x,
            Cell::Interval(a, b) if a.is_finite() && b.is_finite() => 0.5 * (a + b),
            Cell::Interval(a, _) if a.is_finite() => a + 1.0,
            Cell::Interval(_, b) if b.is_finite() => b - 1.0,
            Cell::Interval(..) => 0.0,
        }
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        match *self {
            Cell::Point(p) => (p - x).abs() <= tol,
            Cell::Interval(a, b) => x > a - tol && x < b + tol,
        }
    }
}

/// A row pairing a point on one side with the invariancy interval it maps
/// to on the other, with optimal vectors of both cut problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingRow {
    pub v: Cell,
    pub u: Cell,
    pub xbar: Option<DVector<f64>>,
    pub ybar: Option<DVector<f64>>,
    /// Parameters at which `xbar` and `ybar` were evaluated.
    pub v_at: f64,
    pub u_at: f64,
}

fn set_interval(dec: &RegionDecomposition, reg: &Region) -> Option<Cell> {
    let s = reg.representative.map(|i| &dec.samples[i])?;
    let map = s.map.as_ref()?;
    match map.status {
        MapStatus::Point => map.point.as_ref().map(|p| Cell::Point(p[0])),
        MapStatus::Set => {
            let h = |dir: f64| {
                map.support
                    .iter()
                    .find(|p| p.direction[0] == dir)
                    .map(|p| match p.value {
                        SupportValue::Finite(v) => v,
                        SupportValue::Unbounded => f64::INFINITY,
                    })
            };
            Some(Cell::Interval(-h(-1.0)?, h(1.0)?))
        }
        MapStatus::Undefined => None,
    }
}

/// Parallel table of the two maps for one-parameter instances: every dual
/// linearity interval against its primal transition point and every dual
/// transition point against the primal interval it maps onto.
pub fn pairing_rows(
    inst: &MpcloInstance,
    dual: &RegionDecomposition,
    primal: &RegionDecomposition,
    opts: &SolverOptions,
) -> Result<Vec<PairingRow>> {
    if inst.r() != 1 || dual.side != Side::Dual || primal.side != Side::Primal {
        return Err(Error::UnsupportedDimension(inst.r()));
    }
    let mut rows = Vec::new();
    for reg in &dual.regions {
        let Some((lo, hi)) = reg.interval else { continue };
        let (u, v) = match reg.kind {
            RegionKind::Linearity => {
                let Some(img) = dual.image(reg) else { continue };
                (Cell::Interval(lo, hi), Cell::Point(img[0]))
            }
            RegionKind::TransitionFace(0) => {
                let u0 = 0.5 * (lo + hi);
                // prefer the primal interval that maps back onto u0
                let tol = 1e-4 * (1.0 + u0.abs());
                let matched = primal.regions_of(RegionKind::Linearity).find_map(|p| {
                    let img = primal.image(p)?;
                    let (a, b) = p.interval?;
                    ((img[0] - u0).abs() <= tol).then_some(Cell::Interval(a, b))
                });
                let Some(v) = matched.or_else(|| set_interval(dual, reg)) else { continue };
                (Cell::Point(u0), v)
            }
            _ => continue,
        };
        let (v_at, u_at) = (v.representative(), u.representative());
        let witness = |variant, at: f64| {
            value(inst, variant, &DVector::from_element(1, at), opts)
                .ok()
                .map(|q| q.witness.x)
        };
        rows.push(PairingRow {
            v,
            u,
            xbar: witness(ValueVariant::PBarStar, v_at),
            ybar: witness(ValueVariant::DBarStar, u_at),
            v_at,
            u_at,
        });
    }
    Ok(rows)
}

pub fn pairing_csv(rows: &[PairingRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["xbar_v", "v", "u", "ybar_u", "v_at", "u_at"]).map_err(csv_err)?;
    for row in rows {
        let vec = |z: &Option<DVector<f64>>| z.as_ref().map(fmt_vec).unwrap_or_default();
        w.write_record([
            vec(&row.xbar),
            row.v.render(),
            row.u.render(),
            vec(&row.ybar),
            fmt_num(row.v_at),
            fmt_num(row.u_at),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

fn kind_fill(kind: RegionKind) -> &'static str {
    match kind {
        RegionKind::Linearity => "#4e79a7",
        RegionKind::Nonlinearity => "#f28e2b",
        RegionKind::TransitionFace(0) => "#e15759",
        RegionKind::TransitionFace(1) => "#76b7b2",
        RegionKind::TransitionFace(_) => "#59a14f",
        RegionKind::OutsideTheta => "#e6e6e6",
        RegionKind::Unclassified => "#bab0ac",
    }
}

/// Stroke colour derived from a hash of the region's identity.
fn region_stroke(reg: &Region) -> String {
    let mut h = Sha256::new();
    h.update(reg.kind.name().as_bytes());
    h.update(reg.id.to_le_bytes());
    for &i in reg.samples.iter().take(4) {
        h.update(i.to_le_bytes());
    }
    let d = h.finalize();
    format!("#{:02x}{:02x}{:02x}", d[0] / 2, d[1] / 2, d[2] / 2)
}

fn tick_values(a: f64, b: f64) -> Vec<f64> {
    let span = (b - a).max(f64::MIN_POSITIVE);
    let mut step = 1.0;
    while span / step > 12.0 {
        step *= 2.0;
    }
    let mut out = Vec::new();
    let mut t = (a / step).ceil() * step;
    while t <= b + 1e-12 {
        out.push(t);
        t += step;
    }
    out
}

/// Grid cells coloured by region kind, with integer ticks and a legend.
pub fn regions_svg(dec: &RegionDecomposition) -> Result<String> {
    if dec.window.dim() != 2 || dec.grid.len() != 2 {
        return Err(Error::UnsupportedDimension(dec.window.dim()));
    }
    let (nx, ny) = (dec.grid[0], dec.grid[1]);
    let ((x0, x1), (y0, y1)) = (dec.window.axes[0], dec.window.axes[1]);
    let (left, top, plot) = (60.0, 20.0, 520.0);
    let legend_w = 170.0;
    let (w, h) = (left + plot + 20.0 + legend_w, top + plot + 50.0);
    let (cw, ch) = (plot / nx as f64, plot / ny as f64);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (plot - cw) + 0.5 * cw;
    let sy = |y: f64| top + plot - ((y - y0) / (y1 - y0) * (plot - ch) + 0.5 * ch);

    let mut owner: Vec<Option<&Region>> = vec![None; dec.samples.len()];
    for reg in &dec.regions {
        for &i in &reg.samples {
            owner[i] = Some(reg);
        }
    }

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w:.0}" height="{h:.0}" fill="#ffffff"/>"##);
    let _ = writeln!(s, r#"<g id="cells" stroke-width="0.4">"#);
    let n = nx * ny;
    for (i, sample) in dec.samples.iter().enumerate().take(n) {
        let Some(reg) = owner[i] else { continue };
        let (cx, cy) = (sx(sample.point[0]), sy(sample.point[1]));
        let _ = writeln!(
            s,
            r#"<rect x="{:.3}" y="{:.3}" width="{cw:.3}" height="{ch:.3}" fill="{}" stroke="{}"/>"#,
            cx - 0.5 * cw,
            cy - 0.5 * ch,
            kind_fill(reg.kind),
            region_stroke(reg)
        );
    }
    let _ = writeln!(s, "</g>");
    // samples added off the grid, such as extreme points of the set
    let _ = writeln!(s, r##"<g id="extra" stroke="#000000" stroke-width="0.8">"##);
    for (i, sample) in dec.samples.iter().enumerate().skip(n) {
        let Some(reg) = owner[i] else { continue };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.3}" cy="{:.3}" r="4" fill="{}"/>"#,
            sx(sample.point[0]),
            sy(sample.point[1]),
            kind_fill(reg.kind)
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r##"<g id="axes" stroke="#000000" fill="none" stroke-width="1">"##);
    let _ = writeln!(s, r#"<rect x="{left:.3}" y="{top:.3}" width="{plot:.3}" height="{plot:.3}"/>"#);
    let base = top + plot;
    for t in tick_values(x0, x1) {
        let x = sx(t);
        let _ = writeln!(s, r#"<line x1="{x:.3}" y1="{base:.3}" x2="{x:.3}" y2="{:.3}"/>"#, base + 5.0);
    }
    for t in tick_values(y0, y1) {
        let y = sy(t);
        let _ = writeln!(s, r#"<line x1="{:.3}" y1="{y:.3}" x2="{left:.3}" y2="{y:.3}"/>"#, left - 5.0);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r##"<g id="labels" font-family="sans-serif" font-size="12" fill="#000000">"##);
    for t in tick_values(x0, x1) {
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{t:.0}</text>"#, sx(t), base + 18.0);
    }
    for t in tick_values(y0, y1) {
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{t:.0}</text>"#, left - 8.0, sy(t) + 4.0);
    }
    let var = match dec.side {
        Side::Primal => "v",
        Side::Dual => "u",
    };
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{var}1</text>"#,
        left + 0.5 * plot,
        base + 38.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.3}" text-anchor="middle" transform="rotate(-90 16 {:.3})">{var}2</text>"#,
        top + 0.5 * plot,
        top + 0.5 * plot
    );
    let _ = writeln!(s, "</g>");

    let mut kinds: Vec<RegionKind> = dec.regions.iter().map(|r| r.kind).collect();
    kinds.sort_by_key(|k| k.name());
    kinds.dedup();
    let lx = left + plot + 20.0;
    let _ = writeln!(s, r#"<g id="legend" font-family="sans-serif" font-size="12">"#);
    for (k, kind) in kinds.iter().enumerate() {
        let y = top + 10.0 + 22.0 * k as f64;
        let _ = writeln!(
            s,
            r##"<rect x="{lx:.3}" y="{y:.3}" width="14" height="14" fill="{}" stroke="#000000" stroke-width="0.5"/>"##,
            kind_fill(*kind)
        );
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}">{}</text>"#, lx + 20.0, y + 11.0, kind.name());
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

/// Outcome of one command-line run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub command: Vec<String>,
    /// Hex SHA-256 of the canonical instance file.
    pub digest: String,
    pub outputs: Vec<String>,
    pub summary: BTreeMap<String, String>,
    pub exit_code: i32,
}

/// Exit code for an error: 2 for input problems, 3 for solver failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NumericalTrouble(_) | Error::MaxIter | Error::NotSolvable { .. } | Error::UndefinedMap => 3,
        _ => 2,
    }
}

/// Exit code when a requested verification failed.
pub const EXIT_VERIFY: i32 = 4;

/// Decomposition plus the command that produced it, as saved to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedPartition {
    pub run: RunResult,
    pub decomposition: RegionDecomposition,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::Window;

    #[test]
    fn numbers_have_nine_decimals() {
        assert_eq!(fmt_num(-1.0), "-1.000000000");
        assert_eq!(fmt_num(-1e-12), "0.000000000");
        assert_eq!(fmt_num(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn empty_decomposition_has_one_outside_row() {
        let dec = RegionDecomposition::empty(Side::Dual, &Window::interval(-2.0, -1.0), &[11]);
        let csv = regions_csv(&dec).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("dual,0,outside,"));
    }

    #[test]
    fn svg_needs_two_parameters() {
        let dec = RegionDecomposition::empty(Side::Dual, &Window::interval(-2.0, -1.0), &[11]);
        assert_eq!(regions_svg(&dec), Err(Error::UnsupportedDimension(1)));
    }

    #[test]
    fn ticks_are_integers() {
        assert_eq!(tick_values(-1.3, 1.3), vec![-1.0, 0.0, 1.0]);
        assert_eq!(tick_values(-40.0, 40.0).len(), 11);
    }
}
