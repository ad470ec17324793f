/* tslint:disable */
/* eslint-disable */

/**
 * Belief propagation on a planted ternary NAE instance: overlap with the
 * hidden assignment after every sweep, from a random or planted start.
 */
export function bp_overlap_curve(seed: number, degree_over_k: number, planted_init: boolean, n_vars: number): string;

/**
 * Final-sample histogram of a decoding strategy against the exact law of
 * the demo spec.
 */
export function lo_histogram(seed: number, oracle: string, n_samples: number): string;

/**
 * One decoding run on a small binary NAE spec (4 latents, 6 observations),
 * showing which positions the oracle chooses first.
 */
export function lo_trace(seed: number, oracle: string): string;

/**
 * Generates one Sudoku puzzle with its unique solution.
 */
export function sudoku_new(seed: number, any_difficulty: boolean): string;

/**
 * Decodes a puzzle cell by cell with the chosen ordering oracle, reporting
 * every reveal with its score and correctness.
 */
export function sudoku_trace(puzzle: string, oracle: string, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly bp_overlap_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly lo_histogram: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly lo_trace: (a: number, b: number, c: number) => [number, number, number, number];
    readonly sudoku_new: (a: number, b: number) => [number, number, number, number];
    readonly sudoku_trace: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
