//! Sudoku as a sequence task with a sequence-dependent solving order.
//!
//! Grids are 81-token sequences over vocabulary 9 (0 = empty cell). The
//! generator produces puzzles with verified-unique solutions by digging clues
//! out of random full grids; the `SinglesOnly` ceiling additionally requires
//! the puzzle to fall to iterated naked/hidden singles, the same propagation
//! the candidate-set denoiser performs, so that single-reveal margin decoding
//! provably walks the forced-cell chain. `Any` keeps digging regardless,
//! which leaves a mix of singles-solvable and search-requiring puzzles.
//!
//! Puzzle files: one puzzle per line, 81 characters (digits, `.` for empty),
//! optionally followed by a tab and the 81-digit solution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::denoise::sudoku::{box_of, candidates, col_of, detect_singles, row_of, GRID_CELLS, GRID_VOCAB};
use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::infer::{adaptive_sample_from, vanilla_sample_from, ReverseTrace, UnmaskOracle};
use crate::rng::RngHandle;
use crate::seq::{NoiseSchedule, TokenSeq};

/// A puzzle with its (unique) solution when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuzzleRecord {
    pub puzzle: TokenSeq,
    pub solution: Option<TokenSeq>,
    pub difficulty_tag: String,
}

/// How hard generated puzzles are allowed to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyCeiling {
    /// Every emitted puzzle is solvable by iterated naked + hidden singles.
    SinglesOnly,
    /// Clues are dug out as long as the solution stays unique; backtracking
    /// may be required.
    Any,
}

/// True iff no row, column, or box holds a duplicate non-zero value.
pub fn validate(grid: &TokenSeq) -> Result<bool> {
    if grid.len() != GRID_CELLS {
        return Err(Error::MalformedGrid(format!("expected 81 cells, got {}", grid.len())));
    }
    if grid.vocab() != GRID_VOCAB {
        return Err(Error::MalformedGrid(format!("expected vocab 9, got {}", grid.vocab())));
    }
    let mut rows = [0u16; 9];
    let mut cols = [0u16; 9];
    let mut boxes = [0u16; 9];
    for cell in 0..GRID_CELLS {
        let v = grid.get(cell);
        if v == 0 {
            continue;
        }
        let bit = 1u16 << (v - 1);
        let (r, c, b) = (row_of(cell), col_of(cell), box_of(cell));
        if rows[r] & bit != 0 || cols[c] & bit != 0 || boxes[b] & bit != 0 {
            return Ok(false);
        }
        rows[r] |= bit;
        cols[c] |= bit;
        boxes[b] |= bit;
    }
    Ok(true)
}

/// Backtracking solution counter, capped at `limit`. The branching cell is
/// always one with the fewest candidates.
pub fn count_solutions(grid: &TokenSeq, limit: usize) -> Result<usize> {
    if !validate(grid)? {
        return Ok(0);
    }
    let mut cells: Vec<u32> = grid.tokens().to_vec();
    let mut rows = [0u16; 9];
    let mut cols = [0u16; 9];
    let mut boxes = [0u16; 9];
    for cell in 0..GRID_CELLS {
        let v = cells[cell];
        if v != 0 {
            let bit = 1u16 << (v - 1);
            rows[row_of(cell)] |= bit;
            cols[col_of(cell)] |= bit;
            boxes[box_of(cell)] |= bit;
        }
    }
    let mut count = 0usize;
    search(&mut cells, &mut rows, &mut cols, &mut boxes, limit, &mut count, None);
    Ok(count)
}

/// First solution of the grid if it has exactly one.
pub fn solve_unique(grid: &TokenSeq) -> Result<Option<TokenSeq>> {
    if !validate(grid)? {
        return Ok(None);
    }
    let mut cells: Vec<u32> = grid.tokens().to_vec();
    let mut rows = [0u16; 9];
    let mut cols = [0u16; 9];
    let mut boxes = [0u16; 9];
    for cell in 0..GRID_CELLS {
        let v = cells[cell];
        if v != 0 {
            let bit = 1u16 << (v - 1);
            rows[row_of(cell)] |= bit;
            cols[col_of(cell)] |= bit;
            boxes[box_of(cell)] |= bit;
        }
    }
    let mut count = 0usize;
    let mut solution = None;
    search(&mut cells, &mut rows, &mut cols, &mut boxes, 2, &mut count, Some(&mut solution));
    if count == 1 {
        Ok(solution.map(|cells| TokenSeq::new(cells, GRID_VOCAB).expect("valid tokens")))
    } else {
        Ok(None)
    }
}

fn search(
    cells: &mut Vec<u32>,
    rows: &mut [u16; 9],
    cols: &mut [u16; 9],
    boxes: &mut [u16; 9],
    limit: usize,
    count: &mut usize,
    mut capture: Option<&mut Option<Vec<u32>>>,
) {
    if *count >= limit {
        return;
    }
    // Most-constrained empty cell.
    let mut best: Option<(usize, u16, u32)> = None;
    for cell in 0..GRID_CELLS {
        if cells[cell] != 0 {
            continue;
        }
        let used = rows[row_of(cell)] | cols[col_of(cell)] | boxes[box_of(cell)];
        let cand = 0x1ff & !used;
        let n = cand.count_ones();
        if n == 0 {
            return;
        }
        if best.map_or(true, |(_, _, bn)| n < bn) {
            best = Some((cell, cand, n));
            if n == 1 {
                break;
            }
        }
    }
    let Some((cell, cand, _)) = best else {
        *count += 1;
        if let Some(slot) = capture.as_deref_mut() {
            if slot.is_none() {
                *slot = Some(cells.clone());
            }
        }
        return;
    };
    let (r, c, b) = (row_of(cell), col_of(cell), box_of(cell));
    for v in 0..9u32 {
        let bit = 1u16 << v;
        if cand & bit == 0 {
            continue;
        }
        cells[cell] = v + 1;
        rows[r] |= bit;
        cols[c] |= bit;
        boxes[b] |= bit;
        search(cells, rows, cols, boxes, limit, count, capture.as_deref_mut());
        cells[cell] = 0;
        rows[r] &= !bit;
        cols[c] &= !bit;
        boxes[b] &= !bit;
        if *count >= limit {
            return;
        }
    }
}

/// Whether iterated naked/hidden singles alone complete the puzzle.
pub fn singles_solvable(grid: &TokenSeq) -> Result<bool> {
    let mut g = grid.clone();
    loop {
        if !g.has_mask() {
            return Ok(true);
        }
        let cands = candidates(&g)?;
        let (forced, contradictions) = detect_singles(&g, &cands);
        if !contradictions.is_empty() {
            return Ok(false);
        }
        let mut progressed = false;
        for cell in 0..GRID_CELLS {
            if let Some(v) = forced[cell] {
                g.set(cell, v);
                progressed = true;
            }
        }
        if !progressed {
            return Ok(false);
        }
    }
}

/// A random complete grid via randomized backtracking.
pub fn generate_full_grid(rng: &mut impl Rng) -> TokenSeq {
    loop {
        let mut cells = vec![0u32; GRID_CELLS];
        let mut rows = [0u16; 9];
        let mut cols = [0u16; 9];
        let mut boxes = [0u16; 9];
        if fill_random(&mut cells, &mut rows, &mut cols, &mut boxes, 0, rng) {
            return TokenSeq::new(cells, GRID_VOCAB).expect("valid tokens");
        }
    }
}

fn fill_random(
    cells: &mut [u32],
    rows: &mut [u16; 9],
    cols: &mut [u16; 9],
    boxes: &mut [u16; 9],
    cell: usize,
    rng: &mut impl Rng,
) -> bool {
    if cell == GRID_CELLS {
        return true;
    }
    let (r, c, b) = (row_of(cell), col_of(cell), box_of(cell));
    let used = rows[r] | cols[c] | boxes[b];
    let mut values: Vec<u32> = (0..9).filter(|v| used & (1 << v) == 0).collect();
    // Shuffle candidate order.
    for i in (1..values.len()).rev() {
        values.swap(i, rng.gen_range(0..=i));
    }
    for v in values {
        let bit = 1u16 << v;
        cells[cell] = v + 1;
        rows[r] |= bit;
        cols[c] |= bit;
        boxes[b] |= bit;
        if fill_random(cells, rows, cols, boxes, cell + 1, rng) {
            return true;
        }
        cells[cell] = 0;
        rows[r] &= !bit;
        cols[c] &= !bit;
        boxes[b] &= !bit;
    }
    false
}

/// Generates `n` puzzles by clue removal from random full grids. Uniqueness
/// is enforced by the exhaustive solver; under `SinglesOnly` a removal must
/// also keep the puzzle singles-solvable. Tags record which regime a puzzle
/// landed in ("singles" or "search").
pub fn generate_puzzles(
    n: usize,
    ceiling: StrategyCeiling,
    rng: &RngHandle,
) -> Result<Vec<PuzzleRecord>> {
    crate::par::try_map_indexed(n, |i| {
        let mut r = rng.substream(i as u64).rng();
        let (solution, puzzle) = dig_puzzle(ceiling, &mut r)?;
        let tag = if singles_solvable(&puzzle)? { "singles" } else { "search" };
        Ok(PuzzleRecord { puzzle, solution: Some(solution), difficulty_tag: tag.to_string() })
    })
}

/// Digs one puzzle out of a fresh full grid. Under `Any`, shallow-search
/// digs (solvable with one or two lucky guesses plus singles) are redug from
/// a new grid a few times: those puzzles measure guessing luck rather than
/// ordering, so the corpus aims for singles-solvable or deep-search puzzles.
fn dig_puzzle(ceiling: StrategyCeiling, r: &mut impl Rng) -> Result<(TokenSeq, TokenSeq)> {
    const MIN_GUESS_DEPTH: usize = 4;
    const REDIG_ATTEMPTS: usize = 12;
    let mut fallback = None;
    for attempt in 0..REDIG_ATTEMPTS {
        let solution = generate_full_grid(r);
        let mut puzzle = solution.clone();
        let mut order: Vec<usize> = (0..GRID_CELLS).collect();
        for j in (1..order.len()).rev() {
            order.swap(j, r.gen_range(0..=j));
        }
        for &cell in &order {
            let saved = puzzle.get(cell);
            puzzle.set(cell, 0);
            let ok = match ceiling {
                StrategyCeiling::SinglesOnly => {
                    singles_solvable(&puzzle)? && count_solutions(&puzzle, 2)? == 1
                }
                StrategyCeiling::Any => count_solutions(&puzzle, 2)? == 1,
            };
            if !ok {
                puzzle.set(cell, saved);
            }
        }
        match ceiling {
            StrategyCeiling::SinglesOnly => return Ok((solution, puzzle)),
            StrategyCeiling::Any => {
                let depth = guess_depth(&puzzle, &solution)?;
                if depth == 0 || depth >= MIN_GUESS_DEPTH {
                    return Ok((solution, puzzle));
                }
                if attempt == 0 {
                    fallback = Some((solution, puzzle));
                }
            }
        }
    }
    Ok(fallback.expect("first attempt recorded"))
}

/// Number of guess points on the singles-assisted solve path: repeatedly
/// apply singles; when stuck, count one guess and fill the solution value at
/// the most-constrained cell. Zero means singles alone finish the puzzle.
fn guess_depth(grid: &TokenSeq, solution: &TokenSeq) -> Result<usize> {
    let mut g = grid.clone();
    let mut guesses = 0usize;
    loop {
        if !g.has_mask() {
            return Ok(guesses);
        }
        let cands = candidates(&g)?;
        let (forced, contradictions) = detect_singles(&g, &cands);
        if !contradictions.is_empty() {
            return Ok(guesses + g.masked_count());
        }
        let mut progressed = false;
        for cell in 0..GRID_CELLS {
            if let Some(v) = forced[cell] {
                g.set(cell, v);
                progressed = true;
            }
        }
        if !progressed {
            let cell = (0..GRID_CELLS)
                .filter(|&c| g.get(c) == 0)
                .min_by_key(|&c| cands[c].count_ones())
                .expect("some cell is empty");
            g.set(cell, solution.get(cell));
            guesses += 1;
        }
    }
}

/// Inference strategy evaluated by [`solve_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Schedule-driven random-order unmasking.
    Vanilla,
    /// Oracle-driven adaptive unmasking.
    Adaptive(UnmaskOracle),
}

/// Runs one decoding of `puzzle` under the strategy.
pub fn decode_puzzle(
    puzzle: &TokenSeq,
    denoiser: &dyn Denoiser,
    strategy: Strategy,
    n_steps: usize,
    rng: &RngHandle,
) -> Result<ReverseTrace> {
    let sched = NoiseSchedule::Linear;
    match strategy {
        Strategy::Vanilla => vanilla_sample_from(puzzle, &sched, denoiser, n_steps, rng),
        Strategy::Adaptive(oracle) => {
            adaptive_sample_from(puzzle, &sched, denoiser, &oracle, n_steps, rng)
        }
    }
}

/// Fraction of puzzles whose decode exactly matches the stored solution.
/// Puzzles without a stored solution are scored against the solver.
pub fn solve_rate(
    puzzles: &[PuzzleRecord],
    denoiser: &(dyn Denoiser + Sync),
    strategy: Strategy,
    n_steps: usize,
    rng: &RngHandle,
) -> Result<f64> {
    let solved: Vec<bool> = crate::par::try_map_indexed(puzzles.len(), |i| {
        let rec = &puzzles[i];
        let solution = match &rec.solution {
            Some(s) => s.clone(),
            None => solve_unique(&rec.puzzle)?
                .ok_or_else(|| Error::InvalidSpec(format!("puzzle {i} has no unique solution")))?,
        };
        let trace =
            decode_puzzle(&rec.puzzle, denoiser, strategy, n_steps, &rng.substream(i as u64))?;
        trace.validate(&rec.puzzle)?;
        Ok(trace.final_seq == solution)
    })?;
    Ok(solved.iter().filter(|&&s| s).count() as f64 / puzzles.len().max(1) as f64)
}

impl PuzzleRecord {
    pub fn to_line(&self) -> Result<String> {
        let mut line = self.puzzle.to_compact()?;
        if let Some(sol) = &self.solution {
            line.push('\t');
            line.push_str(&sol.to_compact()?);
        }
        Ok(line)
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let mut fields = line.trim().split('\t');
        let puzzle_text = fields
            .next()
            .ok_or_else(|| Error::Parse("empty puzzle line".into()))?;
        let puzzle = TokenSeq::from_compact(puzzle_text, GRID_VOCAB)?;
        if puzzle.len() != GRID_CELLS {
            return Err(Error::MalformedGrid(format!("expected 81 cells, got {}", puzzle.len())));
        }
        let solution = match fields.next() {
            Some(text) => {
                let sol = TokenSeq::from_compact(text, GRID_VOCAB)?;
                if sol.len() != GRID_CELLS || sol.has_mask() {
                    return Err(Error::MalformedGrid("solution must be 81 filled cells".into()));
                }
                Some(sol)
            }
            None => None,
        };
        Ok(Self { puzzle, solution, difficulty_tag: String::new() })
    }
}

/// Writes one record per line.
pub fn write_puzzle_file(path: &std::path::Path, puzzles: &[PuzzleRecord]) -> Result<()> {
    let mut out = String::new();
    for rec in puzzles {
        out.push_str(&rec.to_line()?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_puzzle_file(path: &std::path::Path) -> Result<Vec<PuzzleRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(PuzzleRecord::from_line)
        .collect()
}
