//! Shared helpers for integration tests: a MiniARC-shaped fixture generator
//! and straightforward reference implementations of the grid operations.

#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use gridarc::prng::{PrngKey, PrngStream};

pub type Cells = Vec<Vec<u8>>;

pub const MINI_TASKS: usize = 149;

/// Task used by the throughput benchmark.
pub const BENCH_TASK: &str = "Most_Common_color_l6ab0lf3xztbyxsu3p";

pub fn random_cells(rng: &mut PrngStream, h: usize, w: usize) -> Cells {
    (0..h).map(|_| (0..w).map(|_| rng.below(10) as u8).collect()).collect()
}

/// Declared shape of one generated fixture task.
#[derive(Debug, Clone)]
pub struct FixtureTask {
    pub id: String,
    pub train: Vec<(Cells, Cells)>,
    pub test: Vec<(Cells, Cells)>,
}

impl FixtureTask {
    pub fn to_json(&self) -> String {
        let pairs = |ps: &[(Cells, Cells)]| {
            ps.iter()
                .map(|(i, o)| serde_json::json!({ "input": i, "output": o }))
                .collect::<Vec<_>>()
        };
        serde_json::json!({ "train": pairs(&self.train), "test": pairs(&self.test) }).to_string()
    }
}

/// 149 deterministic tasks with grids between 1×1 and 5×5, 1 to 5 demo
/// pairs and 1 or 2 test pairs.
pub fn mini_tasks() -> Vec<FixtureTask> {
    let mut rng = PrngKey::from_seed(0x4d49_4e49).stream();
    (0..MINI_TASKS)
        .map(|t| {
            let id = if t == 0 { BENCH_TASK.to_string() } else { format!("mini_{t:03}") };
            let pair = |rng: &mut PrngStream| {
                let (h, w) = (1 + rng.below(5), 1 + rng.below(5));
                let (oh, ow) = if rng.below(4) == 0 { (1 + rng.below(5), 1 + rng.below(5)) } else { (h, w) };
                (random_cells(rng, h, w), random_cells(rng, oh, ow))
            };
            let n_train = 1 + rng.below(5);
            let n_test = 1 + rng.below(2);
            let train = (0..n_train).map(|_| pair(&mut rng)).collect();
            let test = (0..n_test).map(|_| pair(&mut rng)).collect();
            FixtureTask { id, train, test }
        })
        .collect()
}

/// Writes `tasks` into `dir`, one `<id>.json` per task, in the given order.
pub fn write_tasks(dir: &Path, tasks: &[FixtureTask]) {
    std::fs::create_dir_all(dir).unwrap();
    for t in tasks {
        std::fs::write(dir.join(format!("{}.json", t.id)), t.to_json()).unwrap();
    }
}

/// A MiniARC-shaped dataset under `root/MiniARC`. Returns that directory.
pub fn write_mini_dataset(root: &Path) -> PathBuf {
    let dir = root.join("MiniARC");
    write_tasks(&dir, &mini_tasks());
    dir
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Reference model of the mutable grid state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefState {
    pub working: Cells,
    pub input: Cells,
    /// Cropped region and the selected cells inside it.
    pub clipboard: Option<(Cells, Vec<Vec<bool>>)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefOutcome {
    pub state: RefState,
    pub applied: bool,
    pub submitted: bool,
}

fn dims(g: &Cells) -> (usize, usize) {
    (g.len(), g.first().map_or(0, Vec::len))
}

/// Selected cells inside the working grid, as `(row, col)` pairs.
fn in_region(sel: &[Vec<bool>], g: &Cells) -> Vec<(usize, usize)> {
    let (h, w) = dims(g);
    let mut out = Vec::new();
    for (r, row) in sel.iter().enumerate().take(h) {
        for (c, &on) in row.iter().enumerate().take(w) {
            if on {
                out.push((r, c));
            }
        }
    }
    out
}

fn bbox(cells: &[(usize, usize)]) -> (usize, usize, usize, usize) {
    let r0 = cells.iter().map(|p| p.0).min().unwrap();
    let r1 = cells.iter().map(|p| p.0).max().unwrap();
    let c0 = cells.iter().map(|p| p.1).min().unwrap();
    let c1 = cells.iter().map(|p| p.1).max().unwrap();
    (r0, c0, r1, c1)
}

fn sub(g: &Cells, r0: usize, c0: usize, r1: usize, c1: usize) -> Cells {
    (r0..=r1).map(|r| g[r][c0..=c1].to_vec()).collect()
}

fn put(g: &mut Cells, r0: usize, c0: usize, block: &Cells) {
    for (i, row) in block.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            g[r0 + i][c0 + j] = v;
        }
    }
}

fn transpose(m: &Cells) -> Cells {
    let (h, w) = dims(m);
    (0..w).map(|j| (0..h).map(|i| m[i][j]).collect()).collect()
}

fn bfs(g: &Cells, start: (usize, usize), color: u8) -> Cells {
    let (h, w) = dims(g);
    let seed = g[start.0][start.1];
    let mut out = g.clone();
    let mut seen = vec![vec![false; w]; h];
    let mut queue = VecDeque::from([start]);
    seen[start.0][start.1] = true;
    while let Some((r, c)) = queue.pop_front() {
        out[r][c] = color;
        let mut next = Vec::new();
        if r > 0 {
            next.push((r - 1, c));
        }
        if r + 1 < h {
            next.push((r + 1, c));
        }
        if c > 0 {
            next.push((r, c - 1));
        }
        if c + 1 < w {
            next.push((r, c + 1));
        }
        for (nr, nc) in next {
            if !seen[nr][nc] && g[nr][nc] == seed {
                seen[nr][nc] = true;
                queue.push_back((nr, nc));
            }
        }
    }
    out
}

/// Applies operation `op` the obvious way.
pub fn reference_apply(op: u8, sel: &[Vec<bool>], s: &RefState) -> RefOutcome {
    let done = |state: RefState, applied: bool| RefOutcome { state, applied, submitted: false };
    let unchanged = || done(s.clone(), false);
    let g = &s.working;
    let (h, w) = dims(g);
    let raw = in_region(sel, g);

    if (10..20).contains(&op) {
        if raw.len() != 1 {
            return unchanged();
        }
        let working = bfs(g, raw[0], op - 10);
        return done(RefState { working, ..s.clone() }, true);
    }
    if op == 32 {
        return done(RefState { working: s.input.clone(), ..s.clone() }, true);
    }
    if op == 34 {
        return RefOutcome { state: s.clone(), applied: true, submitted: true };
    }
    if h == 0 || w == 0 {
        return unchanged();
    }
    let picked = if raw.is_empty() {
        (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).collect()
    } else {
        raw
    };
    let (r0, c0, r1, c1) = bbox(&picked);
    let block = sub(g, r0, c0, r1, c1);
    let with_block = |b: Cells| {
        let mut out = g.clone();
        put(&mut out, r0, c0, &b);
        out
    };
    let painted = |color: u8| {
        let mut out = g.clone();
        for &(r, c) in &picked {
            out[r][c] = color;
        }
        out
    };
    let copied = || {
        let mut shape = vec![vec![false; c1 - c0 + 1]; r1 - r0 + 1];
        for &(r, c) in &picked {
            shape[r - r0][c - c0] = true;
        }
        Some((block.clone(), shape))
    };

    match op {
        0..=9 => done(RefState { working: painted(op), ..s.clone() }, true),
        20..=23 => {
            let mut b = block.clone();
            match op {
                20 => b.rotate_left(1),
                21 => b.rotate_right(1),
                22 => b.iter_mut().for_each(|row| row.rotate_left(1)),
                _ => b.iter_mut().for_each(|row| row.rotate_right(1)),
            }
            done(RefState { working: with_block(b), ..s.clone() }, true)
        }
        24 | 25 => {
            if r1 - r0 != c1 - c0 {
                return unchanged();
            }
            let b = if op == 24 {
                let mut rev = block.clone();
                rev.reverse();
                transpose(&rev)
            } else {
                let mut t = transpose(&block);
                t.reverse();
                t
            };
            done(RefState { working: with_block(b), ..s.clone() }, true)
        }
        26 => {
            let mut b = block.clone();
            b.iter_mut().for_each(|row| row.reverse());
            done(RefState { working: with_block(b), ..s.clone() }, true)
        }
        27 => {
            let mut b = block.clone();
            b.reverse();
            done(RefState { working: with_block(b), ..s.clone() }, true)
        }
        28 => done(RefState { clipboard: copied(), ..s.clone() }, true),
        29 => {
            let Some((cb, shape)) = &s.clipboard else { return unchanged() };
            let mut out = g.clone();
            for (i, row) in shape.iter().enumerate() {
                for (j, &on) in row.iter().enumerate() {
                    if on && r0 + i < h && c0 + j < w {
                        out[r0 + i][c0 + j] = cb[i][j];
                    }
                }
            }
            done(RefState { working: out, ..s.clone() }, true)
        }
        30 => done(RefState { working: painted(0), input: s.input.clone(), clipboard: copied() }, true),
        31 => done(RefState { working: painted(0), ..s.clone() }, true),
        33 => done(RefState { working: block, ..s.clone() }, true),
        _ => unreachable!("op {op}"),
    }
}

/// Random selection over the full `rows × cols` capacity, biased toward the
/// shapes operations care about: empty, one cell, rectangles and noise.
pub fn random_selection(rng: &mut PrngStream, rows: usize, cols: usize) -> Vec<Vec<bool>> {
    let mut sel = vec![vec![false; cols]; rows];
    match rng.below(5) {
        0 => {}
        1 => sel[rng.below(rows)][rng.below(cols)] = true,
        2 | 3 => {
            let (a, b) = (rng.below(rows), rng.below(rows));
            let (c, d) = (rng.below(cols), rng.below(cols));
            for row in sel.iter_mut().take(a.max(b) + 1).skip(a.min(b)) {
                for cell in row.iter_mut().take(c.max(d) + 1).skip(c.min(d)) {
                    *cell = true;
                }
            }
        }
        _ => {
            let density = 1 + rng.below(4);
            for row in sel.iter_mut() {
                for cell in row.iter_mut() {
                    *cell = rng.below(5) < density;
                }
            }
        }
    }
    sel
}

/// Random working grid, input grid and clipboard at up to `rows × cols`.
pub fn random_state(rng: &mut PrngStream, rows: usize, cols: usize) -> RefState {
    let grid = |rng: &mut PrngStream| {
        let (h, w) = (1 + rng.below(rows), 1 + rng.below(cols));
        // Few colors so flood fill finds sizeable components.
        let palette = 1 + rng.below(10);
        let base = rng.below(10);
        (0..h)
            .map(|_| (0..w).map(|_| ((base + rng.below(palette)) % 10) as u8).collect())
            .collect::<Cells>()
    };
    let working = grid(rng);
    let input = grid(rng);
    let clipboard = if rng.below(4) == 0 {
        None
    } else {
        let cb = grid(rng);
        let (h, w) = dims(&cb);
        let mut shape: Vec<Vec<bool>> =
            (0..h).map(|_| (0..w).map(|_| rng.below(3) != 0).collect()).collect();
        shape[rng.below(h)][rng.below(w)] = true;
        Some((cb, shape))
    };
    RefState { working, input, clipboard }
}

pub mod bridge {
    //! Conversions between the reference model and library types at 5×5.

    use gridarc::grid::{PaddedGrid, SelectionMask};
    use gridarc::ops::Clipboard;

    use super::{Cells, RefState};

    pub type G = PaddedGrid<5, 5>;
    pub type M = SelectionMask<5, 5>;
    pub type Cb = Clipboard<5, 5>;

    pub fn grid(cells: &Cells) -> G {
        G::from_rows(cells).unwrap()
    }

    pub fn mask(sel: &[Vec<bool>]) -> M {
        M::from_fn(|r, c| sel[r][c])
    }

    pub fn clipboard(cb: &Option<(Cells, Vec<Vec<bool>>)>) -> Cb {
        match cb {
            None => Cb::empty(),
            Some((cells, shape)) => Cb {
                grid: grid(cells),
                shape: M::from_fn(|r, c| shape.get(r).and_then(|row| row.get(c)).copied().unwrap_or(false)),
                present: true,
            },
        }
    }

    pub fn parts(s: &RefState) -> (G, G, Cb) {
        (grid(&s.working), grid(&s.input), clipboard(&s.clipboard))
    }
}
