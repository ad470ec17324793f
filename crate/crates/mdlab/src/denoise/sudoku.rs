//! Candidate-set denoiser for 9x9 Sudoku grids.
//!
//! A grid is an 81-token sequence with vocabulary 9; token 0 is an empty
//! (masked) cell. For every empty cell the denoiser returns a uniform
//! distribution over the cell's candidate set — the values not yet used in
//! its row, column, or 3x3 box — then sharpens forced cells to point masses:
//!
//! - *naked single*: the candidate set has exactly one value;
//! - *hidden single*: a value fits in exactly one empty cell of some unit.
//!
//! Assignments are detected but not cascaded inside a single call; the
//! cascade happens across sampler steps as revealed cells re-enter the input.
//! This keeps per-call marginals honest about what one propagation pass can
//! see, so that decoding *order* decides how much of the chain is recovered.
//!
//! Cells with an empty candidate set are contradictions: they get a uniform
//! row over all nine values and bump the denoiser's contradiction counter, so
//! inference can run to completion and scoring stays at the harness level.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::seq::{MarginalTable, TokenSeq};

pub const GRID_CELLS: usize = 81;
pub const GRID_VOCAB: u32 = 9;

#[inline]
pub fn row_of(cell: usize) -> usize {
    cell / 9
}

#[inline]
pub fn col_of(cell: usize) -> usize {
    cell % 9
}

#[inline]
pub fn box_of(cell: usize) -> usize {
    (cell / 27) * 3 + (cell % 9) / 3
}

/// Cells of each unit (9 rows, then 9 columns, then 9 boxes).
pub fn unit_cells(unit: usize) -> [usize; 9] {
    let mut cells = [0usize; 9];
    if unit < 9 {
        for (i, c) in cells.iter_mut().enumerate() {
            *c = unit * 9 + i;
        }
    } else if unit < 18 {
        let col = unit - 9;
        for (i, c) in cells.iter_mut().enumerate() {
            *c = i * 9 + col;
        }
    } else {
        let b = unit - 18;
        let base = (b / 3) * 27 + (b % 3) * 3;
        for (i, c) in cells.iter_mut().enumerate() {
            *c = base + (i / 3) * 9 + (i % 3);
        }
    }
    cells
}

/// Candidate bitmasks (bit v-1 = value v possible) for every cell of `grid`,
/// from direct row/column/box elimination. Filled cells get the singleton of
/// their value.
pub fn candidates(grid: &TokenSeq) -> Result<Vec<u16>> {
    check_grid(grid)?;
    let mut row_used = [0u16; 9];
    let mut col_used = [0u16; 9];
    let mut box_used = [0u16; 9];
    for cell in 0..GRID_CELLS {
        let v = grid.get(cell);
        if v != 0 {
            let bit = 1u16 << (v - 1);
            row_used[row_of(cell)] |= bit;
            col_used[col_of(cell)] |= bit;
            box_used[box_of(cell)] |= bit;
        }
    }
    let all = 0x1ffu16;
    Ok((0..GRID_CELLS)
        .map(|cell| {
            let v = grid.get(cell);
            if v != 0 {
                1u16 << (v - 1)
            } else {
                all & !(row_used[row_of(cell)] | col_used[col_of(cell)] | box_used[box_of(cell)])
            }
        })
        .collect())
}

fn check_grid(grid: &TokenSeq) -> Result<()> {
    if grid.len() != GRID_CELLS {
        return Err(Error::MalformedGrid(format!("expected 81 cells, got {}", grid.len())));
    }
    if grid.vocab() != GRID_VOCAB {
        return Err(Error::MalformedGrid(format!("expected vocab 9, got {}", grid.vocab())));
    }
    Ok(())
}

/// Forced values detected in one pass: naked singles plus hidden singles over
/// all 27 units. Returns `(forced, contradictions)` where `forced[cell]` is
/// `Some(value)` and contradictions lists cells with no consistent value.
pub fn detect_singles(grid: &TokenSeq, cands: &[u16]) -> (Vec<Option<u32>>, Vec<usize>) {
    let mut forced: Vec<Option<u32>> = vec![None; GRID_CELLS];
    let mut contradictions = Vec::new();
    for cell in 0..GRID_CELLS {
        if grid.get(cell) != 0 {
            continue;
        }
        match cands[cell].count_ones() {
            0 => contradictions.push(cell),
            1 => forced[cell] = Some(cands[cell].trailing_zeros() + 1),
            _ => {}
        }
    }
    for unit in 0..27 {
        let cells = unit_cells(unit);
        for v in 1..=9u32 {
            let bit = 1u16 << (v - 1);
            if cells.iter().any(|&c| grid.get(c) == v) {
                continue;
            }
            let mut slot = None;
            let mut count = 0;
            for &c in &cells {
                if grid.get(c) == 0 && cands[c] & bit != 0 {
                    slot = Some(c);
                    count += 1;
                }
            }
            if count == 1 {
                let c = slot.unwrap();
                match forced[c] {
                    None => forced[c] = Some(v),
                    Some(prev) if prev != v => {
                        // Two units force different values into one cell.
                        forced[c] = None;
                        contradictions.push(c);
                    }
                    _ => {}
                }
            }
        }
    }
    contradictions.sort_unstable();
    contradictions.dedup();
    (forced, contradictions)
}

/// The candidate-set denoiser. Thread-safe; the contradiction counter only
/// ever increases.
#[derive(Default)]
pub struct SudokuDenoiser {
    contradictions_seen: AtomicU64,
}

impl SudokuDenoiser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of contradiction cells encountered across all predictions.
    pub fn contradictions_seen(&self) -> u64 {
        self.contradictions_seen.load(Ordering::Relaxed)
    }
}

impl Denoiser for SudokuDenoiser {
    fn predict(&self, x: &TokenSeq) -> Result<MarginalTable> {
        let cands = candidates(x)?;
        let (forced, contradictions) = detect_singles(x, &cands);
        if !contradictions.is_empty() {
            self.contradictions_seen
                .fetch_add(contradictions.len() as u64, Ordering::Relaxed);
        }
        let mut table = MarginalTable::zeros(GRID_CELLS, GRID_VOCAB);
        let mut row = [0.0f64; 9];
        for cell in 0..GRID_CELLS {
            if x.get(cell) != 0 {
                continue;
            }
            row.fill(0.0);
            if let Some(v) = forced[cell] {
                row[(v - 1) as usize] = 1.0;
            } else if cands[cell] == 0 {
                row.fill(1.0 / 9.0);
            } else {
                let k = cands[cell].count_ones() as f64;
                for v in 0..9 {
                    if cands[cell] & (1u16 << v) != 0 {
                        row[v] = 1.0 / k;
                    }
                }
            }
            table.set_row(cell, &row);
        }
        Ok(table)
    }

    fn descriptor(&self) -> String {
        let seen = self.contradictions_seen();
        if seen == 0 {
            "sudoku-candidates".into()
        } else {
            format!("sudoku-candidates(contradictions={seen})")
        }
    }
}
