//! SVG and terminal renderings of grids, demonstration pairs, environment
//! transitions and whole tasks.
//!
//! Output is a pure function of the inputs: no timestamps, no hash-ordered
//! iteration, fixed number formatting.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvState};
use crate::grid::{PaddedGrid, SelectionMask};
use crate::task::{Matrix, RawTask};

/// Outer margin of an SVG document, in pixels.
pub const MARGIN_PX: u32 = 8;
/// Horizontal and vertical gap between panels.
pub const GAP_PX: u32 = 16;
/// Height of a caption line.
pub const CAPTION_PX: u32 = 20;
/// Columns of terminal frame around a grid (one per side).
pub const FRAME_COLS: usize = 2;

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Palette {
    pub colors: [Rgb; 10],
    pub background: Rgb,
    pub grid_line: Rgb,
    pub highlight: Rgb,
    pub text: Rgb,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            colors: [
                [0x00, 0x00, 0x00],
                [0x00, 0x74, 0xD9],
                [0xFF, 0x41, 0x36],
                [0x2E, 0xCC, 0x40],
                [0xFF, 0xDC, 0x00],
                [0xAA, 0xAA, 0xAA],
                [0xF0, 0x12, 0xBE],
                [0xFF, 0x85, 0x1B],
                [0x7F, 0xDB, 0xFF],
                [0x87, 0x0C, 0x25],
            ],
            background: [0xFF, 0xFF, 0xFF],
            grid_line: [0x55, 0x55, 0x55],
            highlight: [0xFF, 0xFF, 0xFF],
            text: [0x11, 0x11, 0x11],
        }
    }
}

impl Palette {
    /// Every colour the renderer may emit, as `#RRGGBB`.
    pub fn all_hex(&self) -> Vec<String> {
        let mut v: Vec<String> = self.colors.iter().map(hex).collect();
        v.extend([self.background, self.grid_line, self.highlight, self.text].iter().map(hex));
        v
    }
}

fn hex(c: &Rgb) -> String {
    format!("#{:02X}{:02X}{:02X}", c[0], c[1], c[2])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    Pair,
    Single,
    RlStep,
    CompleteTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Svg,
    /// ANSI 256-colour background cells.
    Ansi,
    /// One digit per cell, no escape sequences.
    Ascii,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec<const R: usize = 30, const C: usize = 30> {
    pub mode: RenderMode,
    pub cell_px: u32,
    pub show_reward: bool,
    pub highlight: Option<SelectionMask<R, C>>,
    pub palette: Palette,
}

impl<const R: usize, const C: usize> RenderSpec<R, C> {
    pub fn new(mode: RenderMode) -> Self {
        Self { mode, cell_px: 20, show_reward: true, highlight: None, palette: Palette::default() }
    }

    pub fn with_cell_px(mut self, px: u32) -> Self {
        self.cell_px = px.max(1);
        self
    }
}

/// A cropped grid plus highlighted cells.
#[derive(Debug, Clone)]
struct Panel {
    h: usize,
    w: usize,
    cells: Vec<u8>,
    marked: Vec<bool>,
}

impl Panel {
    fn from_padded<const R: usize, const C: usize>(
        g: &PaddedGrid<R, C>,
        mark: Option<&SelectionMask<R, C>>,
    ) -> Self {
        let (h, w) = (g.height(), g.width());
        let mut cells = Vec::with_capacity(h * w);
        let mut marked = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                cells.push(g.get(r, c));
                marked.push(mark.is_some_and(|m| m.get(r, c)));
            }
        }
        Self { h, w, cells, marked }
    }

    fn from_matrix(m: &Matrix) -> Self {
        let h = m.len();
        let w = m.first().map_or(0, Vec::len);
        let cells: Vec<u8> = m.iter().flat_map(|row| row.iter().copied()).collect();
        Self { h, w, marked: vec![false; cells.len()], cells }
    }

    fn at(&self, r: usize, c: usize) -> (u8, bool) {
        let i = r * self.w + c;
        (self.cells[i], self.marked[i])
    }
}

/// Panels laid out in rows, with optional caption lines at the bottom.
struct Layout {
    rows: Vec<Vec<Panel>>,
    captions: Vec<String>,
}

fn svg(layout: &Layout, cell: u32, p: &Palette) -> String {
    let row_w = |row: &Vec<Panel>| -> u32 {
        let cells: u32 = row.iter().map(|pn| pn.w as u32).sum();
        cells * cell + GAP_PX * row.len().saturating_sub(1) as u32
    };
    let row_h = |row: &Vec<Panel>| -> u32 { row.iter().map(|pn| pn.h as u32).max().unwrap_or(0) * cell };
    let grid_w = layout.rows.iter().map(row_w).max().unwrap_or(0);
    let grid_h: u32 =
        layout.rows.iter().map(row_h).sum::<u32>() + GAP_PX * layout.rows.len().saturating_sub(1) as u32;
    let width = 2 * MARGIN_PX + grid_w;
    let height = 2 * MARGIN_PX + grid_h + CAPTION_PX * layout.captions.len() as u32;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="{}"/>"#, hex(&p.background));

    let mut y = MARGIN_PX;
    for (ri, row) in layout.rows.iter().enumerate() {
        if ri > 0 {
            let sy = y - GAP_PX / 2;
            let _ = writeln!(
                s,
                r#"<line x1="{MARGIN_PX}" y1="{sy}" x2="{}" y2="{sy}" stroke="{}" stroke-width="1"/>"#,
                width - MARGIN_PX,
                hex(&p.grid_line)
            );
        }
        let mut x = MARGIN_PX;
        for (pi, pn) in row.iter().enumerate() {
            if pi > 0 {
                let sx = x - GAP_PX / 2;
                let _ = writeln!(
                    s,
                    r#"<line x1="{sx}" y1="{y}" x2="{sx}" y2="{}" stroke="{}" stroke-width="1"/>"#,
                    y + row_h(row),
                    hex(&p.grid_line)
                );
            }
            let _ = writeln!(s, "<g>");
            for r in 0..pn.h {
                for c in 0..pn.w {
                    let (v, _) = pn.at(r, c);
                    let color = p.colors[usize::from(v.min(9))];
                    let _ = writeln!(
                        s,
                        r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="{}" stroke="{}" stroke-width="1"/>"#,
                        x + c as u32 * cell,
                        y + r as u32 * cell,
                        hex(&color),
                        hex(&p.grid_line)
                    );
                }
            }
            for r in 0..pn.h {
                for c in 0..pn.w {
                    if pn.at(r, c).1 {
                        let _ = writeln!(
                            s,
                            r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="none" stroke="{}" stroke-width="2"/>"#,
                            x + c as u32 * cell,
                            y + r as u32 * cell,
                            hex(&p.highlight)
                        );
                    }
                }
            }
            let _ = writeln!(s, "</g>");
            x += pn.w as u32 * cell + GAP_PX;
        }
        y += row_h(row) + GAP_PX;
    }
    let mut cy = MARGIN_PX + grid_h;
    for cap in &layout.captions {
        cy += CAPTION_PX;
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN_PX}" y="{}" font-family="monospace" font-size="12" fill="{}">{}</text>"#,
            cy - 6,
            hex(&p.text),
            xml_escape(cap)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Nearest xterm-256 index (16..=255) by squared RGB distance.
pub fn xterm_index(c: Rgb) -> u8 {
    const LEVELS: [u8; 6] = [0, 95, 135, 175, 215, 255];
    let candidate = |i: u8| -> Rgb {
        if i < 232 {
            let k = i - 16;
            [LEVELS[usize::from(k / 36)], LEVELS[usize::from(k / 6 % 6)], LEVELS[usize::from(k % 6)]]
        } else {
            let v = 8 + 10 * (i - 232);
            [v, v, v]
        }
    };
    let dist = |a: Rgb, b: Rgb| -> u32 {
        a.iter().zip(b).map(|(&x, y)| (i32::from(x) - i32::from(y)).pow(2) as u32).sum()
    };
    (16..=255u8).min_by_key(|&i| dist(c, candidate(i))).expect("non-empty range")
}

fn term_panel(pn: &Panel, format: Format, p: &Palette) -> Vec<String> {
    let border = format!("+{}+", "-".repeat(2 * pn.w));
    let mut lines = vec![border.clone()];
    for r in 0..pn.h {
        let mut line = String::from("|");
        for c in 0..pn.w {
            let (v, marked) = pn.at(r, c);
            match format {
                Format::Ansi => {
                    let bg = xterm_index(p.colors[usize::from(v.min(9))]);
                    let fg = xterm_index(p.highlight);
                    let body = if marked { "[]" } else { "  " };
                    let _ = write!(line, "\x1b[48;5;{bg}m\x1b[38;5;{fg}m{body}\x1b[0m");
                }
                _ => {
                    let _ = write!(line, "{}{v}", if marked { '*' } else { ' ' });
                }
            }
        }
        line.push('|');
        lines.push(line);
    }
    lines.push(border);
    lines
}

/// Visible columns of a terminal line, ignoring escape sequences.
pub fn visible_width(line: &str) -> usize {
    let mut n = 0;
    let mut chars = line.chars();
    while let Some(ch) = chars.next() {
        if ch == '\x1b' {
            for e in chars.by_ref() {
                if e == 'm' {
                    break;
                }
            }
        } else {
            n += 1;
        }
    }
    n
}

fn terminal(layout: &Layout, format: Format, p: &Palette) -> String {
    let mut out = String::new();
    for (ri, row) in layout.rows.iter().enumerate() {
        if ri > 0 {
            out.push('\n');
        }
        let blocks: Vec<Vec<String>> = row.iter().map(|pn| term_panel(pn, format, p)).collect();
        let height = blocks.iter().map(Vec::len).max().unwrap_or(0);
        for i in 0..height {
            let mut line = String::new();
            for (bi, (b, pn)) in blocks.iter().zip(row).enumerate() {
                if bi > 0 {
                    line.push_str("   ");
                }
                match b.get(i) {
                    Some(l) => line.push_str(l),
                    None => line.push_str(&" ".repeat(2 * pn.w + FRAME_COLS)),
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
    }
    for cap in &layout.captions {
        out.push_str(cap);
        out.push('\n');
    }
    out
}

fn emit(layout: &Layout, cell_px: u32, format: Format, p: &Palette) -> String {
    match format {
        Format::Svg => svg(layout, cell_px.max(1), p),
        Format::Ansi | Format::Ascii => terminal(layout, format, p),
    }
}

pub fn render_single<const R: usize, const C: usize>(
    grid: &PaddedGrid<R, C>,
    spec: &RenderSpec<R, C>,
    format: Format,
) -> String {
    let layout = Layout { rows: vec![vec![Panel::from_padded(grid, spec.highlight.as_ref())]], captions: vec![] };
    emit(&layout, spec.cell_px, format, &spec.palette)
}

/// Input on the left, output on the right.
pub fn render_pair<const R: usize, const C: usize>(
    input: &PaddedGrid<R, C>,
    output: &PaddedGrid<R, C>,
    spec: &RenderSpec<R, C>,
    format: Format,
) -> String {
    let layout = Layout {
        rows: vec![vec![Panel::from_padded(input, None), Panel::from_padded(output, None)]],
        captions: vec![],
    };
    emit(&layout, spec.cell_px, format, &spec.palette)
}

/// Caption text for a transition, e.g. `op 3 fill(3) | reward +0.48`.
pub fn step_caption<const R: usize, const C: usize>(
    action: &Action<R, C>,
    reward: f64,
    show_reward: bool,
) -> String {
    let mut s = format!("op {} {}", action.op, action.op.operation());
    if show_reward {
        let _ = write!(s, " | reward {reward:+.2}");
    }
    s
}

/// Working grid before and after, with the action's selection outlined in
/// both panels.
pub fn render_rl_step<const R: usize, const C: usize>(
    before: &EnvState<R, C>,
    action: &Action<R, C>,
    after: &EnvState<R, C>,
    reward: f64,
    spec: &RenderSpec<R, C>,
    format: Format,
) -> String {
    let layout = Layout {
        rows: vec![vec![
            Panel::from_padded(&before.working, Some(&action.selection)),
            Panel::from_padded(&after.working, Some(&action.selection)),
        ]],
        captions: vec![step_caption(action, reward, spec.show_reward)],
    };
    emit(&layout, spec.cell_px, format, &spec.palette)
}

/// One row per demonstration pair, then one row per test input. Test
/// outputs are never drawn.
pub fn render_complete_task<const R: usize, const C: usize>(
    task: &RawTask,
    spec: &RenderSpec<R, C>,
    format: Format,
) -> String {
    let mut rows: Vec<Vec<Panel>> = task
        .train
        .iter()
        .map(|p| vec![Panel::from_matrix(&p.input), Panel::from_matrix(&p.output)])
        .collect();
    rows.extend(task.test.iter().map(|p| vec![Panel::from_matrix(&p.input)]));
    let layout = Layout { rows, captions: vec![format!("task {}", task.id)] };
    emit(&layout, spec.cell_px, format, &spec.palette)
}
