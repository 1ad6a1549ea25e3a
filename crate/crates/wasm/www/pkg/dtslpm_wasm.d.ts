/* tslint:disable */
/* eslint-disable */

/**
 * Static MAP fit of a count panel given series-major (`n_series` rows of
 * `counts.len() / n_series` time points).
 */
export function fit_static(counts: Uint32Array, n_series: number, seed: bigint): string;

/**
 * Simulates one of the three reference designs (`"1"`, `"2"` or `"3"`).
 *
 * Returns `{positions: [t][i][x, y], pairs: [[i, j]], gamma: [pair][t],
 * radius: [t], counts: [i][t]}`.
 */
export function simulate_experiment(design: string, n_times: number, seed: bigint): string;

/**
 * Stability report for nodes at `positions` (row-major `n x 2`) with
 * self-excitation `beta`.
 */
export function stability(positions: Float64Array, beta: Float64Array): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly fit_static: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly simulate_experiment: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly stability: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
