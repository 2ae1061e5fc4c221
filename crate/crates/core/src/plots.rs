//! SVG figures rendered from a report bundle on disk.
//!
//! Output is plain text built by hand with fixed number formatting, so the
//! same bundle always yields the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::activeness::Verdict;
use crate::error::{Error, Result};
use crate::ingest::{PoiType, BINS_PER_DAY};
use crate::pipeline::{Report, AUDIT_DIR, PROFILES_FILE, REPORT_FILE};
use crate::profiling::{fill_gaps, read_profiles_csv, DayType};

pub const PLOTS_DIR: &str = "plots";

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const CATEGORY_FILL: [&str; 5] = ["#1a9850", "#91cf60", "#fee08b", "#fc8d59", "#d73027"];

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Svg { body: String::new(), width, height }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: Option<&str>) {
        let _ = write!(self.body, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}""#);
        if let Some(s) = stroke {
            let _ = write!(self.body, r#" stroke="{s}" stroke-width="0.5""#);
        }
        self.body.push_str("/>\n");
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str) {
        self.body.push_str(r#"<polyline fill="none" stroke-width="1" stroke=""#);
        self.body.push_str(stroke);
        self.body.push_str(r#"" points=""#);
        for (i, (x, y)) in points.iter().enumerate() {
            if i > 0 {
                self.body.push(' ');
            }
            let _ = write!(self.body, "{x:.2},{y:.2}");
        }
        self.body.push_str("\"/>\n");
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64) {
        let _ = writeln!(
            self.body,
            r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#333" stroke-width="0.5"/>"##
        );
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let escaped = content.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="{size:.1}" text-anchor="{anchor}">{escaped}</text>"#
        );
    }

    fn text_rotated(&mut self, x: f64, y: f64, size: f64, angle: f64, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="{size:.1}" text-anchor="end" transform="rotate({angle:.1} {x:.2} {y:.2})">{content}</text>"#
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n",
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}

/// Draws a 288-bin profile inside the box `(x, y, w, h)` with values on [0, 1].
fn profile_line(svg: &mut Svg, profile: &[f64], (x, y, w, h): (f64, f64, f64, f64), stroke: &str) {
    let n = profile.len().max(2) as f64 - 1.0;
    let points: Vec<(f64, f64)> = profile
        .iter()
        .enumerate()
        .map(|(i, v)| (x + w * i as f64 / n, y + h * (1.0 - v.clamp(0.0, 1.0))))
        .collect();
    svg.polyline(&points, stroke);
}

fn frame(svg: &mut Svg, (x, y, w, h): (f64, f64, f64, f64)) {
    svg.rect(x, y, w, h, "none", Some("#333"));
    for hour in [0.0, 6.0, 12.0, 18.0, 24.0] {
        let tx = x + w * hour / 24.0;
        svg.line(tx, y + h, tx, y + h + 3.0);
        svg.text(tx, y + h + 12.0, 8.0, "middle", &format!("{hour:02.0}:00"));
    }
}

fn mean_profile(members: &[String], profiles: &BTreeMap<String, Vec<f64>>) -> Vec<f64> {
    let rows: Vec<&Vec<f64>> = members.iter().filter_map(|m| profiles.get(m)).collect();
    let mut out = vec![0.0; BINS_PER_DAY];
    for r in &rows {
        for (o, v) in out.iter_mut().zip(r.iter()) {
            *o += v;
        }
    }
    if !rows.is_empty() {
        out.iter_mut().for_each(|o| *o /= rows.len() as f64);
    }
    out
}

fn average_profiles(day: DayType, report: &Report, profiles: &BTreeMap<String, Vec<f64>>) -> String {
    let dr = &report.day_types[&day];
    let area = (50.0, 40.0, 560.0, 260.0);
    let mut svg = Svg::new(760.0, 340.0);
    svg.text(330.0, 22.0, 14.0, "middle", &format!("Mean cluster profiles, {day}"));
    frame(&mut svg, area);
    for v in [0.0, 0.5, 1.0] {
        svg.text(area.0 - 6.0, area.1 + area.3 * (1.0 - v) + 3.0, 8.0, "end", &format!("{v:.1}"));
    }
    for (i, c) in dr.clusters.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        profile_line(&mut svg, &mean_profile(&c.members, profiles), area, color);
        let ly = 50.0 + 16.0 * i as f64;
        svg.rect(625.0, ly - 8.0, 10.0, 10.0, color, None);
        svg.text(640.0, ly, 9.0, "start", &format!("C{} n={} mean={:.4}", c.cluster, c.size, c.mean));
    }
    svg.finish()
}

fn diverging(v: f64) -> String {
    let t = v.clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    } else {
        (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

fn read_embedding(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?));
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let values = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse { line: 0, message: format!("{}: {e}", path.display()) }))
            .collect::<Result<Vec<f64>>>()?;
        out.insert(id, values);
    }
    Ok(out)
}

fn eigenvector_heatmap(day: DayType, report: &Report, embedding: &BTreeMap<String, Vec<f64>>) -> String {
    let dr = &report.day_types[&day];
    let order: Vec<(&String, usize)> =
        dr.clusters.iter().flat_map(|c| c.members.iter().map(move |m| (m, c.cluster))).collect();
    let cols = dr.k.min(embedding.values().map(Vec::len).max().unwrap_or(0));
    let cell_w = 40.0;
    let cell_h = 10.0;
    let (x0, y0) = (90.0, 50.0);
    let mut svg = Svg::new(x0 + cell_w * cols as f64 + 40.0, y0 + cell_h * order.len() as f64 + 30.0);
    svg.text(x0, 22.0, 14.0, "start", &format!("Leading eigenvectors, {day} (k = {})", dr.k));
    let scale: Vec<f64> = (0..cols)
        .map(|c| embedding.values().map(|r| r[c].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE))
        .collect();
    for c in 0..cols {
        svg.text(x0 + cell_w * (c as f64 + 0.5), y0 - 6.0, 9.0, "middle", &format!("u{c}"));
    }
    for (r, (id, cluster)) in order.iter().enumerate() {
        let y = y0 + cell_h * r as f64;
        svg.text(x0 - 6.0, y + cell_h - 2.0, 8.0, "end", &format!("{id} C{cluster}"));
        if let Some(row) = embedding.get(*id) {
            for c in 0..cols {
                svg.rect(x0 + cell_w * c as f64, y, cell_w, cell_h, &diverging(row[c] / scale[c]), None);
            }
        }
    }
    svg.finish()
}

fn category_grid(report: &Report, profiles: &BTreeMap<DayType, BTreeMap<String, Vec<f64>>>) -> String {
    let (cw, ch) = (170.0, 110.0);
    let (x0, y0) = (110.0, 50.0);
    let mut svg = Svg::new(x0 + cw * 5.0 + 10.0, y0 + ch * 3.0 + 20.0);
    svg.text(x0, 22.0, 14.0, "start", "Cluster profiles by activeness category");
    for cat in 1..=5u8 {
        svg.text(x0 + cw * (cat as f64 - 0.5), y0 - 8.0, 11.0, "middle", &format!("Category {cat}"));
    }
    for (r, day) in DayType::ALL.iter().enumerate() {
        let y = y0 + ch * r as f64;
        svg.text(x0 - 8.0, y + ch / 2.0, 11.0, "end", day.as_str());
        let Some(dr) = report.day_types.get(day) else { continue };
        for cat in 1..=5u8 {
            let x = x0 + cw * (cat - 1) as f64;
            svg.rect(x, y, cw, ch, "none", Some("#999"));
            // a category without clusters stays a blank cell
            let members: Vec<_> = dr.clusters.iter().filter(|c| c.category == cat).collect();
            for (i, c) in members.iter().enumerate() {
                let p = mean_profile(&c.members, &profiles[day]);
                profile_line(&mut svg, &p, (x + 6.0, y + 6.0, cw - 12.0, ch - 24.0), PALETTE[i % PALETTE.len()]);
            }
            if !members.is_empty() {
                let mean = members.iter().map(|c| c.mean * c.size as f64).sum::<f64>()
                    / members.iter().map(|c| c.size as f64).sum::<f64>();
                svg.text(x + cw / 2.0, y + ch - 6.0, 9.0, "middle", &format!("mean {mean:.4}"));
            }
        }
    }
    svg.finish()
}

fn activeness_grid(report: &Report) -> String {
    let mut rows: Vec<&crate::pipeline::VerdictRow> = report.verdicts.iter().collect();
    rows.sort_by(|a, b| a.poi_type.cmp(&b.poi_type).then(a.sensor_id.cmp(&b.sensor_id)));
    let (x0, y0, cw, ch) = (200.0, 50.0, 60.0, 12.0);
    let mut svg = Svg::new(x0 + cw * 4.0 + 20.0, y0 + ch * rows.len() as f64 + 20.0);
    svg.text(10.0, 22.0, 14.0, "start", "Activeness category per PoI");
    for (c, label) in ["WD", "WE", "SH", "verdict"].iter().enumerate() {
        svg.text(x0 + cw * (c as f64 + 0.5), y0 - 6.0, 10.0, "middle", label);
    }
    for (r, v) in rows.iter().enumerate() {
        let y = y0 + ch * r as f64;
        let kind = v.poi_type.map(PoiType::as_str).unwrap_or("unknown");
        svg.text(x0 - 6.0, y + ch - 2.0, 8.0, "end", &format!("{kind} {}", v.sensor_id));
        for (c, day) in DayType::ALL.iter().enumerate() {
            let cat = v.categories[day];
            let x = x0 + cw * c as f64;
            svg.rect(x, y, cw, ch, CATEGORY_FILL[(cat as usize).clamp(1, 5) - 1], Some("#fff"));
            svg.text(x + cw / 2.0, y + ch - 2.0, 8.0, "middle", &cat.to_string());
        }
        let (fill, label) = match v.verdict {
            Verdict::Active => ("#4575b4", "active"),
            Verdict::LessActive => ("#bababa", "less active"),
        };
        svg.rect(x0 + cw * 3.0, y, cw, ch, fill, Some("#fff"));
        svg.text(x0 + cw * 3.5, y + ch - 2.0, 8.0, "middle", label);
    }
    svg.finish()
}

fn static_bars(report: &Report) -> String {
    let cmp = &report.static_comparison;
    let n_feat = cmp.types.first().map_or(0, |t| t.features.len());
    let (x0, panel_h, bar_w) = (90.0, 150.0, 12.0);
    let group_w = bar_w * 2.0 + 10.0;
    let width = x0 + group_w * n_feat as f64 + 40.0;
    let mut svg = Svg::new(width.max(400.0), 60.0 + (panel_h + 110.0) * cmp.types.len().max(1) as f64);
    svg.text(10.0, 22.0, 14.0, "start", &format!("Static features, active vs less active (margin {})", cmp.margin));
    svg.rect(width - 200.0, 30.0, 10.0, 10.0, "#4575b4", None);
    svg.text(width - 185.0, 39.0, 9.0, "start", "active");
    svg.rect(width - 130.0, 30.0, 10.0, 10.0, "#bababa", None);
    svg.text(width - 115.0, 39.0, 9.0, "start", "less active");
    for (p, t) in cmp.types.iter().enumerate() {
        let top = 60.0 + (panel_h + 110.0) * p as f64;
        svg.text(x0, top - 4.0, 11.0, "start", &format!("{} ({} active, {} less active)", t.poi_type, t.n_active, t.n_less_active));
        svg.line(x0, top + panel_h, x0 + group_w * n_feat as f64, top + panel_h);
        for (f, feat) in t.features.iter().enumerate() {
            let x = x0 + group_w * f as f64;
            for (i, (v, fill)) in [(feat.active_mean, "#4575b4"), (feat.less_active_mean, "#bababa")].iter().enumerate() {
                let h = panel_h * v.clamp(0.0, 1.0);
                svg.rect(x + bar_w * i as f64, top + panel_h - h, bar_w, h, fill, None);
            }
            if feat.significant {
                svg.text(x + bar_w, top + panel_h - panel_h * feat.active_mean.max(feat.less_active_mean) - 3.0, 10.0, "middle", "*");
            }
            svg.text_rotated(x + bar_w, top + panel_h + 8.0, 7.0, -40.0, &feat.feature);
        }
    }
    svg.finish()
}

/// Checks that every input needed for the figures is present.
fn missing_artifacts(dir: &Path, report: Option<&Report>) -> Vec<String> {
    let mut missing = Vec::new();
    for f in [REPORT_FILE, PROFILES_FILE] {
        if !dir.join(f).is_file() {
            missing.push(f.to_string());
        }
    }
    if let Some(r) = report {
        for day in DayType::ALL {
            match r.day_types.get(&day) {
                Some(d) if !d.clusters.is_empty() => {
                    let emb = Path::new(AUDIT_DIR).join(day.as_str()).join("embedding.csv");
                    if !dir.join(&emb).is_file() {
                        missing.push(emb.display().to_string());
                    }
                }
                _ => missing.push(format!("clusters for {day}")),
            }
        }
    }
    missing
}

/// Deterministic file names of every figure, relative to the bundle.
pub fn plot_files() -> Vec<String> {
    let mut out = Vec::new();
    for day in DayType::ALL {
        out.push(format!("{PLOTS_DIR}/profiles_{day}.svg"));
        out.push(format!("{PLOTS_DIR}/eigenvectors_{day}.svg"));
    }
    out.push(format!("{PLOTS_DIR}/category_grid.svg"));
    out.push(format!("{PLOTS_DIR}/activeness.svg"));
    out.push(format!("{PLOTS_DIR}/static_features.svg"));
    out
}

/// Renders every figure for the bundle in `dir` into `dir/plots`.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let report = if dir.join(REPORT_FILE).is_file() { Some(Report::load(&dir.join(REPORT_FILE))?) } else { None };
    let missing = missing_artifacts(dir, report.as_ref());
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let report = report.expect("checked above");

    let path = dir.join(PROFILES_FILE);
    let raw = read_profiles_csv(BufReader::new(File::open(&path).map_err(|e| Error::io(&path, e))?))?;
    let mut profiles: BTreeMap<DayType, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for p in raw {
        if let Some(filled) = fill_gaps(&p.bins) {
            profiles.entry(p.label).or_default().insert(p.sensor_id, filled);
        }
    }
    for day in DayType::ALL {
        profiles.entry(day).or_default();
    }

    let out = dir.join(PLOTS_DIR);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut written = Vec::new();
    let mut save = |name: String, svg: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    let files = plot_files();
    for (i, day) in DayType::ALL.iter().enumerate() {
        save(files[2 * i].clone(), average_profiles(*day, &report, &profiles[day]))?;
        let emb = read_embedding(&dir.join(AUDIT_DIR).join(day.as_str()).join("embedding.csv"))?;
        save(files[2 * i + 1].clone(), eigenvector_heatmap(*day, &report, &emb))?;
    }
    save(files[6].clone(), category_grid(&report, &profiles))?;
    save(files[7].clone(), activeness_grid(&report))?;
    save(files[8].clone(), static_bars(&report))?;
    Ok(written)
}
