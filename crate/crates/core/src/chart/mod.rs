//! Declarative chart specs for the console and a small deterministic PNG
//! rasterizer for the same charts, so explanations can travel as images.

mod font;

use base64::Engine;
use serde::{Deserialize, Serialize};

use font::{GLYPHS, GLYPH_H, GLYPH_W};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Bar,
    RulesTable,
    DeltaTable,
    Dag,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub label: String,
    pub value: f64,
    /// Half-width of an error bar, such as one standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<f64>,
    /// Short text drawn beside the bar, such as significance stars.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
}

impl Point {
    pub fn new(label: impl Into<String>, value: f64) -> Self {
        Self { label: label.into(), value, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagEdge {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub kind: ChartKind,
    pub title: String,
    #[serde(default)]
    pub x_label: String,
    #[serde(default)]
    pub y_label: String,
    /// Bar charts: one series of labelled values, drawn in order.
    #[serde(default)]
    pub series: Vec<Series>,
    /// Tables: column headers and string cells.
    #[serde(default)]
    pub columns: Vec<String>,
    #[serde(default)]
    pub rows: Vec<Vec<String>>,
    /// DAGs: node names and directed weighted edges.
    #[serde(default)]
    pub nodes: Vec<String>,
    #[serde(default)]
    pub edges: Vec<DagEdge>,
}

impl ChartSpec {
    fn empty(kind: ChartKind, title: &str) -> Self {
        Self {
            kind,
            title: title.to_string(),
            x_label: String::new(),
            y_label: String::new(),
            series: Vec::new(),
            columns: Vec::new(),
            rows: Vec::new(),
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn bar(title: &str, x_label: &str, y_label: &str, series: Series) -> Self {
        Self::grouped_bar(title, x_label, y_label, vec![series])
    }

    /// Several series sharing the labels of the first; bars are grouped per label.
    pub fn grouped_bar(title: &str, x_label: &str, y_label: &str, series: Vec<Series>) -> Self {
        Self { x_label: x_label.into(), y_label: y_label.into(), series, ..Self::empty(ChartKind::Bar, title) }
    }

    pub fn table(kind: ChartKind, title: &str, columns: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        Self { columns, rows, ..Self::empty(kind, title) }
    }

    pub fn dag(title: &str, nodes: Vec<String>, edges: Vec<DagEdge>) -> Self {
        Self { nodes, edges, ..Self::empty(ChartKind::Dag, title) }
    }

    /// Rasterizes the chart. Identical specs give identical bytes.
    pub fn to_png(&self) -> Vec<u8> {
        let canvas = match self.kind {
            ChartKind::Bar => draw_bar(self),
            ChartKind::RulesTable | ChartKind::DeltaTable => draw_table(self),
            ChartKind::Dag => draw_dag(self),
        };
        canvas.encode()
    }

    /// Standard base64 of [`ChartSpec::to_png`].
    pub fn to_img64(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(self.to_png())
    }
}

type Rgb = [u8; 3];

const BLACK: Rgb = [20, 20, 20];
const GREY: Rgb = [190, 190, 190];
const BLUE: Rgb = [45, 110, 200];
const RED: Rgb = [205, 60, 50];
const PALE: Rgb = [232, 240, 252];
const ORANGE: Rgb = [240, 150, 70];
const GREEN: Rgb = [60, 160, 90];

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<u8>,
}

impl Canvas {
    fn new(w: usize, h: usize) -> Self {
        Self { w, h, px: vec![255; w * h * 3] }
    }

    fn set(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h {
            let i = (y as usize * self.w + x as usize) * 3;
            self.px[i..i + 3].copy_from_slice(&c);
        }
    }

    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb) {
        for y in y0.min(y1)..y0.max(y1) {
            for x in x0.min(x1)..x0.max(x1) {
                self.set(x, y, c);
            }
        }
    }

    fn line(&mut self, mut x0: i64, mut y0: i64, x1: i64, y1: i64, c: Rgb) {
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.set(x0, y0, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    fn text(&mut self, x: i64, y: i64, s: &str, c: Rgb) {
        for (k, ch) in s.chars().enumerate() {
            let code = ch as u32;
            let g = if (0x20..=0x7e).contains(&code) { &GLYPHS[(code - 0x20) as usize] } else { &GLYPHS[(b'?' - 0x20) as usize] };
            let gx = x + (k * GLYPH_W) as i64;
            for (row, bits) in g.iter().enumerate() {
                for col in 0..GLYPH_W {
                    if bits & (1 << (GLYPH_W - 1 - col)) != 0 {
                        self.set(gx + col as i64, y + row as i64, c);
                    }
                }
            }
        }
    }

    fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut buf, self.w as u32, self.h as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("png header into memory");
            writer.write_image_data(&self.px).expect("png data into memory");
        }
        buf
    }
}

fn clip(s: &str, max_chars: usize) -> String {
    if s.chars().count() <= max_chars {
        s.to_string()
    } else {
        let mut t: String = s.chars().take(max_chars.saturating_sub(1)).collect();
        t.push('~');
        t
    }
}

const ROW_H: usize = 18;
const MARGIN: usize = 10;

fn draw_bar(spec: &ChartSpec) -> Canvas {
    const PALETTE: [Rgb; 4] = [BLUE, ORANGE, GREEN, RED];
    let labels: Vec<&str> = spec.series.first().map(|s| s.points.iter().map(|p| p.label.as_str()).collect()).unwrap_or_default();
    let k = spec.series.len().max(1);
    let group_h = ROW_H * k + 4;
    let w = 640usize;
    let label_w = 26 * GLYPH_W;
    let legend_h = if k > 1 { ROW_H } else { 0 };
    let h = 2 * MARGIN + 2 * ROW_H + legend_h + labels.len().max(1) * group_h;
    let mut c = Canvas::new(w, h);
    c.text(MARGIN as i64, MARGIN as i64, &clip(&spec.title, 100), BLACK);

    let all = spec.series.iter().flat_map(|s| s.points.iter());
    let max_abs = all.clone().map(|p| p.value.abs() + p.error.unwrap_or(0.0)).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let has_neg = all.clone().any(|p| p.value < 0.0);
    let plot_x0 = (MARGIN + label_w) as i64;
    let plot_w = (w - MARGIN - label_w - 14 * GLYPH_W) as f64;
    let zero_x = if has_neg { plot_x0 + (plot_w / 2.0) as i64 } else { plot_x0 };
    let half = if has_neg { plot_w / 2.0 } else { plot_w };
    let scale = |v: f64| if max_abs > 0.0 && v.is_finite() { (v / max_abs * half).round() as i64 } else { 0 };
    let top = (MARGIN + ROW_H + legend_h) as i64;
    if k > 1 {
        let mut x = MARGIN as i64;
        for (s, series) in spec.series.iter().enumerate() {
            c.rect(x, (MARGIN + ROW_H + 4) as i64, x + 10, (MARGIN + ROW_H + 14) as i64, PALETTE[s % PALETTE.len()]);
            c.text(x + 14, (MARGIN + ROW_H + 3) as i64, &clip(&series.name, 20), BLACK);
            x += 14 + ((series.name.chars().count().min(20) + 2) * GLYPH_W) as i64;
        }
    }
    c.line(zero_x, top, zero_x, (h - MARGIN - ROW_H) as i64, GREY);

    for (i, label) in labels.iter().enumerate() {
        let gy = top + (i * group_h) as i64;
        c.text(MARGIN as i64, gy + 3, &clip(label, 25), BLACK);
        for (s, series) in spec.series.iter().enumerate() {
            let Some(p) = series.points.get(i) else { continue };
            let y = gy + (s * ROW_H) as i64;
            let len = scale(p.value.abs());
            let col = if k == 1 && p.value < 0.0 { RED } else { PALETTE[s % PALETTE.len()] };
            let (x0, x1) = if p.value < 0.0 { (zero_x - len, zero_x) } else { (zero_x, zero_x + len) };
            c.rect(x0, y + 3, x1.max(x0 + 1), y + ROW_H as i64 - 3, col);
            if let Some(e) = p.error.filter(|e| e.is_finite() && *e > 0.0) {
                let end = if p.value < 0.0 { x0 } else { x1 };
                let (lo, hi) = (end - scale(e), end + scale(e));
                let mid = y + ROW_H as i64 / 2;
                c.line(lo, mid, hi, mid, BLACK);
                c.line(lo, mid - 3, lo, mid + 3, BLACK);
                c.line(hi, mid - 3, hi, mid + 3, BLACK);
            }
            let mut text = format!("{:+.3}", p.value);
            if let Some(a) = &p.annotation {
                text.push(' ');
                text.push_str(a);
            }
            c.text(zero_x + half as i64 + 4, y + 3, &text, BLACK);
        }
    }
    let axis = format!("{} / {}", spec.x_label, spec.y_label);
    c.text(MARGIN as i64, (h - MARGIN - GLYPH_H) as i64, &clip(&axis, 100), GREY);
    c
}

fn draw_table(spec: &ChartSpec) -> Canvas {
    let w = 800usize;
    let ncols = spec.columns.len().max(1);
    let col_w = (w - 2 * MARGIN) / ncols;
    let max_chars = col_w / GLYPH_W - 1;
    let h = 2 * MARGIN + ROW_H * (2 + spec.rows.len());
    let mut c = Canvas::new(w, h);
    c.text(MARGIN as i64, MARGIN as i64, &clip(&spec.title, 120), BLACK);
    let top = MARGIN + ROW_H;
    c.rect(MARGIN as i64, top as i64, (w - MARGIN) as i64, (top + ROW_H) as i64, PALE);
    for (j, name) in spec.columns.iter().enumerate() {
        c.text((MARGIN + j * col_w + 3) as i64, (top + 3) as i64, &clip(name, max_chars), BLACK);
    }
    for (i, row) in spec.rows.iter().enumerate() {
        let y = top + ROW_H * (i + 1);
        c.line(MARGIN as i64, y as i64, (w - MARGIN) as i64, y as i64, GREY);
        for (j, cell) in row.iter().take(ncols).enumerate() {
            c.text((MARGIN + j * col_w + 3) as i64, (y + 3) as i64, &clip(cell, max_chars), BLACK);
        }
    }
    let bottom = top + ROW_H * (spec.rows.len() + 1);
    c.line(MARGIN as i64, bottom as i64, (w - MARGIN) as i64, bottom as i64, GREY);
    c
}

fn draw_dag(spec: &ChartSpec) -> Canvas {
    let (w, h) = (640usize, 480usize);
    let mut c = Canvas::new(w, h);
    c.text(MARGIN as i64, MARGIN as i64, &clip(&spec.title, 100), BLACK);
    let n = spec.nodes.len().max(1);
    let (cx, cy, r) = (w as f64 / 2.0, h as f64 / 2.0 + 10.0, 180.0);
    let pos: Vec<(i64, i64)> = (0..spec.nodes.len())
        .map(|i| {
            let a = -std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            ((cx + r * a.cos()).round() as i64, (cy + r * a.sin()).round() as i64)
        })
        .collect();
    let index = |name: &str| spec.nodes.iter().position(|n| n == name);
    for e in &spec.edges {
        let (Some(a), Some(b)) = (index(&e.from), index(&e.to)) else { continue };
        let (x0, y0) = pos[a];
        let (x1, y1) = pos[b];
        c.line(x0, y0, x1, y1, BLUE);
        // arrow head a little short of the target centre
        let (dx, dy) = ((x1 - x0) as f64, (y1 - y0) as f64);
        let len = (dx * dx + dy * dy).sqrt().max(1.0);
        let (ux, uy) = (dx / len, dy / len);
        let tip = (x1 as f64 - ux * 14.0, y1 as f64 - uy * 14.0);
        for side in [-1.0, 1.0] {
            let bx = tip.0 - ux * 8.0 - side * uy * 5.0;
            let by = tip.1 - uy * 8.0 + side * ux * 5.0;
            c.line(tip.0.round() as i64, tip.1.round() as i64, bx.round() as i64, by.round() as i64, BLUE);
        }
    }
    for (name, &(x, y)) in spec.nodes.iter().zip(&pos) {
        let label = clip(name, 18);
        let half = (label.chars().count() * GLYPH_W / 2 + 4) as i64;
        c.rect(x - half, y - 9, x + half, y + 9, PALE);
        c.text(x - half + 4, y - 5, &label, BLACK);
    }
    c
}
