//! Fixed-capacity grids, selection masks and the pixel similarity metric.
//!
//! Every grid lives in an `R × C` buffer regardless of its logical size, so
//! that states of different tasks have identical shapes and can be stacked.
//! Cells outside the logical `height × width` rectangle always hold
//! [`PAD_COLOR`]; two grids with the same logical content compare equal as
//! whole buffers.

use std::fmt;

use thiserror::Error;

/// Number of distinct colors (ids `0..=9`).
pub const NUM_COLORS: u8 = 10;

/// Value stored in buffer cells outside the logical region.
pub const PAD_COLOR: u8 = 0;

/// Full ARC capacity.
pub const FULL_ROWS: usize = 30;
pub const FULL_COLS: usize = 30;

/// MiniARC capacity.
pub const MINI_ROWS: usize = 5;
pub const MINI_COLS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("grid dimensions {rows}x{cols} outside capacity 1..={max_rows} x 1..={max_cols}")]
    DimensionOutOfRange {
        rows: usize,
        cols: usize,
        max_rows: usize,
        max_cols: usize,
    },
    #[error("color {value} at ({row}, {col}) is outside 0..=9")]
    ValueOutOfRange { row: usize, col: usize, value: u8 },
    #[error("row {row} has length {len}, expected {expected}")]
    Ragged { row: usize, len: usize, expected: usize },
}

/// A color grid stored in a fixed `R × C` buffer.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PaddedGrid<const R: usize = FULL_ROWS, const C: usize = FULL_COLS> {
    cells: [[u8; C]; R],
    height: u8,
    width: u8,
}

impl<const R: usize, const C: usize> PaddedGrid<R, C> {
    const CAPACITY_OK: () = assert!(R >= 1 && C >= 1 && R <= 64 && C <= 64 && R <= 255 && C <= 255);

    /// The canonical empty grid (0 × 0, all padding). Used for unused buffer
    /// slots and an absent clipboard; never produced by an operation.
    pub const fn empty() -> Self {
        #[allow(clippy::let_unit_value)]
        let _ = Self::CAPACITY_OK;
        Self {
            cells: [[PAD_COLOR; C]; R],
            height: 0,
            width: 0,
        }
    }

    /// A `height × width` grid filled with one color.
    pub fn filled(height: usize, width: usize, color: u8) -> Result<Self, GridError> {
        check_dims::<R, C>(height, width)?;
        if color >= NUM_COLORS {
            return Err(GridError::ValueOutOfRange { row: 0, col: 0, value: color });
        }
        let mut g = Self::empty();
        g.height = height as u8;
        g.width = width as u8;
        for row in g.cells.iter_mut().take(height) {
            row[..width].fill(color);
        }
        Ok(g)
    }

    /// Copies a raw `h × w` color matrix into a padded buffer.
    pub fn from_rows<Row: AsRef<[u8]>>(raw: &[Row]) -> Result<Self, GridError> {
        let h = raw.len();
        let w = raw.first().map_or(0, |r| r.as_ref().len());
        check_dims::<R, C>(h, w)?;
        let mut g = Self::empty();
        for (r, row) in raw.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != w {
                return Err(GridError::Ragged { row: r, len: row.len(), expected: w });
            }
            for (c, &v) in row.iter().enumerate() {
                if v >= NUM_COLORS {
                    return Err(GridError::ValueOutOfRange { row: r, col: c, value: v });
                }
                g.cells[r][c] = v;
            }
        }
        g.height = h as u8;
        g.width = w as u8;
        Ok(g)
    }

    /// Crops the logical region back out as a row-major matrix.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.cells
            .iter()
            .take(self.height())
            .map(|row| row[..self.width()].to_vec())
            .collect()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height as usize
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width as usize
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.height == 0 || self.width == 0
    }

    #[inline]
    pub fn in_region(&self, row: usize, col: usize) -> bool {
        row < self.height() && col < self.width()
    }

    /// Color at `(row, col)`; padding cells read as [`PAD_COLOR`].
    ///
    /// Panics if the coordinate is outside the buffer capacity.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row][col]
    }

    /// Raw buffer, including padding.
    #[inline]
    pub fn cells(&self) -> &[[u8; C]; R] {
        &self.cells
    }

    /// Writes a color inside the logical region. Writes outside are ignored
    /// so that padding stays canonical.
    #[inline]
    pub(crate) fn set(&mut self, row: usize, col: usize, color: u8) {
        debug_assert!(color < NUM_COLORS);
        if self.in_region(row, col) {
            self.cells[row][col] = color;
        }
    }

    /// Bitmask of the logical rectangle.
    pub fn region_mask(&self) -> SelectionMask<R, C> {
        SelectionMask::rect_dims(self.height(), self.width())
    }

    /// Checks every structural invariant: dims in range (or the empty grid),
    /// colors in range, canonical padding.
    pub fn is_canonical(&self) -> bool {
        let (h, w) = self.dims();
        if !(h == 0 && w == 0) && (h == 0 || w == 0 || h > R || w > C) {
            return false;
        }
        self.cells.iter().enumerate().all(|(r, row)| {
            row.iter().enumerate().all(|(c, &v)| {
                if r < h && c < w {
                    v < NUM_COLORS
                } else {
                    v == PAD_COLOR
                }
            })
        })
    }

    /// Builds a grid of new dimensions from a cell function evaluated only
    /// inside the new logical region.
    pub(crate) fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Self {
        debug_assert!(height <= R && width <= C);
        let mut g = Self::empty();
        g.height = height as u8;
        g.width = width as u8;
        for r in 0..height {
            for c in 0..width {
                g.cells[r][c] = f(r, c);
            }
        }
        g
    }
}

impl<const R: usize, const C: usize> fmt::Debug for PaddedGrid<R, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PaddedGrid<{R}x{C}>({}x{}) [", self.height, self.width)?;
        for (i, row) in self.to_rows().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{row:?}")?;
        }
        f.write_str("]")
    }
}

fn check_dims<const R: usize, const C: usize>(h: usize, w: usize) -> Result<(), GridError> {
    if h == 0 || w == 0 || h > R || w > C {
        return Err(GridError::DimensionOutOfRange {
            rows: h,
            cols: w,
            max_rows: R,
            max_cols: C,
        });
    }
    Ok(())
}

/// Alias for the grid-construction operation used by dataset loading.
pub fn pad_into_buffer<const R: usize, const C: usize, Row: AsRef<[u8]>>(
    raw: &[Row],
) -> Result<PaddedGrid<R, C>, GridError> {
    PaddedGrid::from_rows(raw)
}

/// Binary per-cell selection. Row `r` is bit-packed into `rows[r]`, bit `c`
/// set meaning column `c` is selected.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SelectionMask<const R: usize = FULL_ROWS, const C: usize = FULL_COLS> {
    rows: [u64; R],
}

#[inline]
fn low_bits(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl<const R: usize, const C: usize> SelectionMask<R, C> {
    pub const fn empty() -> Self {
        Self { rows: [0; R] }
    }

    /// Rectangle covering rows `0..height`, columns `0..width`.
    pub fn rect_dims(height: usize, width: usize) -> Self {
        let mut m = Self::empty();
        let bits = low_bits(width.min(C));
        for row in m.rows.iter_mut().take(height.min(R)) {
            *row = bits;
        }
        m
    }

    /// Filled rectangle between two inclusive corners, given in any order.
    /// Coordinates are clamped to the capacity.
    pub fn rect(r1: usize, c1: usize, r2: usize, c2: usize) -> Self {
        let (r0, r1) = (r1.min(r2), r1.max(r2).min(R - 1));
        let (c0, c1) = (c1.min(c2), c1.max(c2).min(C - 1));
        let mut m = Self::empty();
        if r0 > r1 || c0 > c1 {
            return m;
        }
        let bits = low_bits(c1 + 1) & !low_bits(c0);
        for row in &mut m.rows[r0..=r1] {
            *row = bits;
        }
        m
    }

    pub fn single(row: usize, col: usize) -> Self {
        let mut m = Self::empty();
        m.set(row, col, true);
        m
    }

    /// Builds a mask from an `R × C`-bounded boolean predicate.
    pub fn from_fn(mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::empty();
        for r in 0..R {
            for c in 0..C {
                if f(r, c) {
                    m.rows[r] |= 1 << c;
                }
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        row < R && col < C && (self.rows[row] >> col) & 1 == 1
    }

    /// Sets or clears a bit; coordinates outside the capacity are ignored.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        if row < R && col < C {
            if on {
                self.rows[row] |= 1 << col;
            } else {
                self.rows[row] &= !(1 << col);
            }
        }
    }

    #[inline]
    pub fn row_bits(&self, row: usize) -> u64 {
        self.rows[row]
    }

    pub(crate) fn from_row_bits(rows: [u64; R]) -> Self {
        let mut m = Self { rows };
        let keep = low_bits(C);
        for r in m.rows.iter_mut() {
            *r &= keep;
        }
        m
    }

    pub fn count(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|&r| r == 0)
    }

    /// Bits intersected with the grid's logical rectangle.
    pub fn effective(&self, grid: &PaddedGrid<R, C>) -> Self {
        let keep = low_bits(grid.width());
        let mut m = Self::empty();
        for r in 0..grid.height() {
            m.rows[r] = self.rows[r] & keep;
        }
        m
    }

    /// Iterates `(row, col)` of set bits in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().enumerate().flat_map(|(r, &bits)| {
            let mut b = bits;
            std::iter::from_fn(move || {
                if b == 0 {
                    None
                } else {
                    let c = b.trailing_zeros() as usize;
                    b &= b - 1;
                    Some((r, c))
                }
            })
        })
    }
}

impl<const R: usize, const C: usize> Default for SelectionMask<R, C> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<const R: usize, const C: usize> fmt::Debug for SelectionMask<R, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

/// Inclusive cell rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl BoundingBox {
    #[inline]
    pub fn height(&self) -> usize {
        self.r1 - self.r0 + 1
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.c1 - self.c0 + 1
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.height() == self.width()
    }

    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.r0..=self.r1).contains(&row) && (self.c0..=self.c1).contains(&col)
    }
}

/// Tightest box around the effective selection, `None` when it is empty.
pub fn bounding_box<const R: usize, const C: usize>(
    mask: &SelectionMask<R, C>,
    grid: &PaddedGrid<R, C>,
) -> Option<BoundingBox> {
    let eff = mask.effective(grid);
    let mut rows = eff.rows.iter().enumerate().filter(|(_, &b)| b != 0);
    let (r0, _) = rows.next()?;
    let r1 = rows.last().map_or(r0, |(r, _)| r);
    let union = eff.rows.iter().fold(0u64, |acc, &b| acc | b);
    let c0 = union.trailing_zeros() as usize;
    let c1 = 63 - union.leading_zeros() as usize;
    Some(BoundingBox { r0, c0, r1, c1 })
}

/// Empty effective selection means "the whole working grid".
pub fn auto_select<const R: usize, const C: usize>(
    mask: &SelectionMask<R, C>,
    grid: &PaddedGrid<R, C>,
) -> SelectionMask<R, C> {
    let eff = mask.effective(grid);
    if eff.is_empty() {
        grid.region_mask()
    } else {
        eff
    }
}

/// Matching in-region cells divided by the size of the union of both
/// logical rectangles. Exactly `1.0` iff shapes and contents agree.
pub fn similarity<const R: usize, const C: usize>(
    working: &PaddedGrid<R, C>,
    target: &PaddedGrid<R, C>,
) -> f64 {
    let (h1, w1) = working.dims();
    let (h2, w2) = target.dims();
    let (hi, wi) = (h1.min(h2), w1.min(w2));
    let union = h1 * w1 + h2 * w2 - hi * wi;
    if union == 0 {
        return 1.0;
    }
    let matches: usize = (0..hi)
        .map(|r| {
            working.cells[r][..wi]
                .iter()
                .zip(&target.cells[r][..wi])
                .filter(|(a, b)| a == b)
                .count()
        })
        .sum();
    if matches == union {
        1.0
    } else {
        matches as f64 / union as f64
    }
}
