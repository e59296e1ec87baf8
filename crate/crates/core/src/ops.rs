//! The 35 grid operations.
//!
//! | ids    | operation                                   |
//! |--------|---------------------------------------------|
//! | 0–9    | fill selection with color `id`              |
//! | 10–19  | flood fill from one cell with color `id-10` |
//! | 20–23  | move up, down, left, right (wrapping)       |
//! | 24–25  | rotate clockwise, counterclockwise          |
//! | 26–27  | flip horizontal (columns), vertical (rows)  |
//! | 28–30  | copy, paste, cut                            |
//! | 31–34  | clear, reset to input, resize, submit       |
//!
//! Every operation is total. Inputs an operation cannot act on (flood fill
//! without exactly one selected cell, rotating a non-square box, pasting an
//! empty clipboard) leave the state untouched and report `applied = false`.

use std::fmt;

use thiserror::Error;

use crate::grid::{auto_select, bounding_box, BoundingBox, PaddedGrid, SelectionMask, PAD_COLOR};

pub const NUM_OPS: usize = 35;

/// Number of synchronous expansion sweeps performed by flood fill.
pub const FLOOD_FILL_SWEEPS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("operation id {0} is outside 0..=34")]
pub struct InvalidOpId(pub i64);

/// Operation id in `0..=34`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpId(u8);

impl OpId {
    pub const SUBMIT: OpId = OpId(34);

    pub fn new(id: u8) -> Result<Self, InvalidOpId> {
        if (id as usize) < NUM_OPS {
            Ok(Self(id))
        } else {
            Err(InvalidOpId(id as i64))
        }
    }

    #[inline]
    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = OpId> {
        (0..NUM_OPS as u8).map(OpId)
    }

    pub fn operation(self) -> Operation {
        Operation::decode(self)
    }

    pub fn category(self) -> Category {
        match self.0 {
            0..=9 => Category::Fill,
            10..=19 => Category::FloodFill,
            20..=23 => Category::Move,
            24..=27 => Category::Transform,
            28..=30 => Category::Edit,
            _ => Category::Special,
        }
    }
}

impl TryFrom<i64> for OpId {
    type Error = InvalidOpId;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        u8::try_from(v)
            .ok()
            .and_then(|b| OpId::new(b).ok())
            .ok_or(InvalidOpId(v))
    }
}

impl fmt::Debug for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OpId({})", self.0)
    }
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Fill,
    FloodFill,
    Move,
    Transform,
    Edit,
    Special,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rotation {
    Clockwise,
    CounterClockwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Mirror across the vertical axis: columns reversed.
    Horizontal,
    /// Mirror across the horizontal axis: rows reversed.
    Vertical,
}

/// Decoded form of an [`OpId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operation {
    Fill(u8),
    FloodFill(u8),
    Move(Direction),
    Rotate(Rotation),
    Flip(Axis),
    Copy,
    Paste,
    Cut,
    Clear,
    ResetToInput,
    ResizeToSelection,
    Submit,
}

impl Operation {
    fn decode(op: OpId) -> Self {
        match op.0 {
            c @ 0..=9 => Operation::Fill(c),
            c @ 10..=19 => Operation::FloodFill(c - 10),
            20 => Operation::Move(Direction::Up),
            21 => Operation::Move(Direction::Down),
            22 => Operation::Move(Direction::Left),
            23 => Operation::Move(Direction::Right),
            24 => Operation::Rotate(Rotation::Clockwise),
            25 => Operation::Rotate(Rotation::CounterClockwise),
            26 => Operation::Flip(Axis::Horizontal),
            27 => Operation::Flip(Axis::Vertical),
            28 => Operation::Copy,
            29 => Operation::Paste,
            30 => Operation::Cut,
            31 => Operation::Clear,
            32 => Operation::ResetToInput,
            33 => Operation::ResizeToSelection,
            _ => Operation::Submit,
        }
    }

    pub fn id(self) -> OpId {
        OpId(match self {
            Operation::Fill(c) => c,
            Operation::FloodFill(c) => 10 + c,
            Operation::Move(Direction::Up) => 20,
            Operation::Move(Direction::Down) => 21,
            Operation::Move(Direction::Left) => 22,
            Operation::Move(Direction::Right) => 23,
            Operation::Rotate(Rotation::Clockwise) => 24,
            Operation::Rotate(Rotation::CounterClockwise) => 25,
            Operation::Flip(Axis::Horizontal) => 26,
            Operation::Flip(Axis::Vertical) => 27,
            Operation::Copy => 28,
            Operation::Paste => 29,
            Operation::Cut => 30,
            Operation::Clear => 31,
            Operation::ResetToInput => 32,
            Operation::ResizeToSelection => 33,
            Operation::Submit => 34,
        })
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::Fill(c) => write!(f, "fill({c})"),
            Operation::FloodFill(c) => write!(f, "flood_fill({c})"),
            Operation::Move(d) => write!(f, "move_{}", format!("{d:?}").to_lowercase()),
            Operation::Rotate(Rotation::Clockwise) => f.write_str("rotate_cw"),
            Operation::Rotate(Rotation::CounterClockwise) => f.write_str("rotate_ccw"),
            Operation::Flip(Axis::Horizontal) => f.write_str("flip_horizontal"),
            Operation::Flip(Axis::Vertical) => f.write_str("flip_vertical"),
            Operation::Copy => f.write_str("copy"),
            Operation::Paste => f.write_str("paste"),
            Operation::Cut => f.write_str("cut"),
            Operation::Clear => f.write_str("clear"),
            Operation::ResetToInput => f.write_str("reset_to_input"),
            Operation::ResizeToSelection => f.write_str("resize_to_selection"),
            Operation::Submit => f.write_str("submit"),
        }
    }
}

/// Side buffer holding a copied region. `shape` marks, in box-local
/// coordinates, the cells that were actually selected.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Clipboard<const R: usize = 30, const C: usize = 30> {
    pub grid: PaddedGrid<R, C>,
    pub shape: SelectionMask<R, C>,
    pub present: bool,
}

impl<const R: usize, const C: usize> Clipboard<R, C> {
    pub const fn empty() -> Self {
        Self {
            grid: PaddedGrid::empty(),
            shape: SelectionMask::empty(),
            present: false,
        }
    }
}

impl<const R: usize, const C: usize> Default for Clipboard<R, C> {
    fn default() -> Self {
        Self::empty()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct OpOutcome<const R: usize = 30, const C: usize = 30> {
    pub working: PaddedGrid<R, C>,
    pub clipboard: Clipboard<R, C>,
    pub submitted: bool,
    pub applied: bool,
}

impl<const R: usize, const C: usize> OpOutcome<R, C> {
    fn changed(working: PaddedGrid<R, C>, clipboard: &Clipboard<R, C>) -> Self {
        Self { working, clipboard: *clipboard, submitted: false, applied: true }
    }

    fn noop(working: &PaddedGrid<R, C>, clipboard: &Clipboard<R, C>) -> Self {
        Self { working: *working, clipboard: *clipboard, submitted: false, applied: false }
    }
}

/// Sets every selected cell to `color`. `selection` must already be
/// auto-selected.
pub fn fill_color<const R: usize, const C: usize>(
    working: &PaddedGrid<R, C>,
    selection: &SelectionMask<R, C>,
    color: u8,
) -> PaddedGrid<R, C> {
    let mut out = *working;
    for (r, c) in selection.iter() {
        out.set(r, c, color);
    }
    out
}

/// Recolors the 4-connected same-color component around the single selected
/// cell. Returns `None` when the effective selection is not exactly one cell.
///
/// The component is grown by [`FLOOD_FILL_SWEEPS`] synchronous dilations of
/// the filled set, each restricted to cells of the seed color. Components
/// whose geodesic radius from the seed exceeds the sweep count are filled
/// only partially.
pub fn flood_fill<const R: usize, const C: usize>(
    working: &PaddedGrid<R, C>,
    selection: &SelectionMask<R, C>,
    color: u8,
) -> Option<PaddedGrid<R, C>> {
    let eff = selection.effective(working);
    if eff.count() != 1 {
        return None;
    }
    let (sr, sc) = eff.iter().next()?;
    let seed_color = working.get(sr, sc);
    let (h, w) = working.dims();

    let mut same = [0u64; R];
    for (r, bits) in same.iter_mut().enumerate().take(h) {
        for c in 0..w {
            if working.get(r, c) == seed_color {
                *bits |= 1 << c;
            }
        }
    }

    let mut filled = [0u64; R];
    filled[sr] = 1 << sc;
    for _ in 0..FLOOD_FILL_SWEEPS {
        let mut next = [0u64; R];
        let mut changed = false;
        for r in 0..h {
            let mut grow = filled[r] | (filled[r] << 1) | (filled[r] >> 1);
            if r > 0 {
                grow |= filled[r - 1];
            }
            if r + 1 < h {
                grow |= filled[r + 1];
            }
            next[r] = grow & same[r];
            changed |= next[r] != filled[r];
        }
        filled = next;
        if !changed {
            break;
        }
    }

    let mut out = *working;
    for (r, c) in SelectionMask::<R, C>::from_row_bits(filled).iter() {
        out.set(r, c, color);
    }
    Some(out)
}

/// Cyclically shifts every cell inside the box by one step.
pub fn move_region<const R: usize, const C: usize>(
    working: &PaddedGrid<R, C>,
    bb: BoundingBox,
    direction: Direction,
) -> PaddedGrid<R, C> {
    let (bh, bw) = (bb.height(), bb.width());
    remap_box(working, bb, |i, j| match direction {
        Direction::Up => ((i + 1) % bh, j),
        Direction::Down => ((i + bh - 1) % bh, j),
        Direction::Left => (i, (j + 1) % bw),
        Direction::Right => (i, (j + bw - 1) % bw),
    })
}

/// Rotates a square box by 90°. Returns `None` for a non-square box.
pub fn rotate_region<const R: usize, const C: usize>(
    working: &PaddedGrid<R, C>,
    bb: BoundingBox,
    rotation: Rotation,
) -> Option<PaddedGrid<R, C>> {
    if !bb.is_square() {
        return None;
    }
    let n = bb.height();
    Some(remap_box(working, bb, |i, j| match rotation {
        Rotation::Clockwise => (n - 1 - j, i),
        Rotation::CounterClockwise => (j, n - 1 - i),
    }))
}

pub fn flip_region<const R: usize, const C: usize>(
    working: &PaddedGrid<R, C>,
    bb: BoundingBox,
    axis: Axis,
) -> PaddedGrid<R, C> {
    let (bh, bw) = (bb.height(), bb.width());
    remap_box(working, bb, |i, j| match axis {
        Axis::Horizontal => (i, bw - 1 - j),
        Axis::Vertical => (bh - 1 - i, j),
    })
}

/// Rewrites the box so that box-local cell `(i, j)` takes the old value at
/// box-local `source(i, j)`.
fn remap_box<const R: usize, const C: usize>(
    working: &PaddedGrid<R, C>,
    bb: BoundingBox,
    source: impl Fn(usize, usize) -> (usize, usize),
) -> PaddedGrid<R, C> {
    let mut out = *working;
    for i in 0..bb.height() {
        for j in 0..bb.width() {
            let (si, sj) = source(i, j);
            out.set(bb.r0 + i, bb.c0 + j, working.get(bb.r0 + si, bb.c0 + sj));
        }
    }
    out
}

fn crop<const R: usize, const C: usize>(
    working: &PaddedGrid<R, C>,
    bb: BoundingBox,
) -> PaddedGrid<R, C> {
    PaddedGrid::from_fn(bb.height(), bb.width(), |i, j| {
        working.get(bb.r0 + i, bb.c0 + j)
    })
}

/// Crops the selection's bounding box into a clipboard. `selection` must be
/// non-empty and already restricted to the logical region.
pub fn copy_to_clipboard<const R: usize, const C: usize>(
    working: &PaddedGrid<R, C>,
    selection: &SelectionMask<R, C>,
    bb: BoundingBox,
) -> Clipboard<R, C> {
    let mut shape = SelectionMask::empty();
    for (r, c) in selection.iter() {
        shape.set(r - bb.r0, c - bb.c0, true);
    }
    Clipboard { grid: crop(working, bb), shape, present: true }
}

/// Writes the clipboard's selected cells with their top-left corner at
/// `anchor`, clipping to the logical region.
pub fn paste_from_clipboard<const R: usize, const C: usize>(
    working: &PaddedGrid<R, C>,
    clipboard: &Clipboard<R, C>,
    anchor: (usize, usize),
) -> Option<PaddedGrid<R, C>> {
    if !clipboard.present {
        return None;
    }
    let mut out = *working;
    for (i, j) in clipboard.shape.iter() {
        out.set(anchor.0 + i, anchor.1 + j, clipboard.grid.get(i, j));
    }
    Some(out)
}

pub fn clear_cells<const R: usize, const C: usize>(
    working: &PaddedGrid<R, C>,
    selection: &SelectionMask<R, C>,
) -> PaddedGrid<R, C> {
    fill_color(working, selection, PAD_COLOR)
}

pub fn resize_to_box<const R: usize, const C: usize>(
    working: &PaddedGrid<R, C>,
    bb: BoundingBox,
) -> PaddedGrid<R, C> {
    crop(working, bb)
}

/// Dispatches one operation.
///
/// Every category except flood fill first replaces an empty effective
/// selection with the whole working grid. Flood fill inspects the raw
/// effective selection, since auto-selection would make its single-cell
/// precondition unreachable.
pub fn apply_operation<const R: usize, const C: usize>(
    op: OpId,
    selection: &SelectionMask<R, C>,
    working: &PaddedGrid<R, C>,
    input: &PaddedGrid<R, C>,
    clipboard: &Clipboard<R, C>,
) -> OpOutcome<R, C> {
    let operation = op.operation();
    if let Operation::FloodFill(color) = operation {
        return match flood_fill(working, selection, color) {
            Some(g) => OpOutcome::changed(g, clipboard),
            None => OpOutcome::noop(working, clipboard),
        };
    }

    let sel = auto_select(selection, working);
    // An auto-selected mask is empty only for the 0x0 grid, which no
    // operation can produce; treat it as a no-op rather than panic.
    let Some(bb) = bounding_box(&sel, working) else {
        return match operation {
            Operation::Submit => OpOutcome {
                working: *working,
                clipboard: *clipboard,
                submitted: true,
                applied: true,
            },
            Operation::ResetToInput => OpOutcome::changed(*input, clipboard),
            _ => OpOutcome::noop(working, clipboard),
        };
    };

    match operation {
        Operation::Fill(color) => OpOutcome::changed(fill_color(working, &sel, color), clipboard),
        Operation::FloodFill(_) => unreachable!(),
        Operation::Move(d) => OpOutcome::changed(move_region(working, bb, d), clipboard),
        Operation::Rotate(rot) => match rotate_region(working, bb, rot) {
            Some(g) => OpOutcome::changed(g, clipboard),
            None => OpOutcome::noop(working, clipboard),
        },
        Operation::Flip(axis) => OpOutcome::changed(flip_region(working, bb, axis), clipboard),
        Operation::Copy => OpOutcome {
            working: *working,
            clipboard: copy_to_clipboard(working, &sel, bb),
            submitted: false,
            applied: true,
        },
        Operation::Paste => match paste_from_clipboard(working, clipboard, (bb.r0, bb.c0)) {
            Some(g) => OpOutcome::changed(g, clipboard),
            None => OpOutcome::noop(working, clipboard),
        },
        Operation::Cut => OpOutcome {
            working: clear_cells(working, &sel),
            clipboard: copy_to_clipboard(working, &sel, bb),
            submitted: false,
            applied: true,
        },
        Operation::Clear => OpOutcome::changed(clear_cells(working, &sel), clipboard),
        Operation::ResetToInput => OpOutcome::changed(*input, clipboard),
        Operation::ResizeToSelection => OpOutcome::changed(resize_to_box(working, bb), clipboard),
        Operation::Submit => OpOutcome {
            working: *working,
            clipboard: *clipboard,
            submitted: true,
            applied: true,
        },
    }
}
