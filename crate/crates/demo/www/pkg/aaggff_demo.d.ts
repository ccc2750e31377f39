/* tslint:disable */
/* eslint-disable */

/**
 * `n` evenly spaced samples of the CDF on `[0, x_max]`.
 */
export function cdf_curve(name: string, scale: number, shape: number, x_max: number, n: number): Float64Array;

/**
 * A small federated run. Returns `[worst10 per round..., final client
 * accuracies...]`; the first `rounds` entries are the per-round series.
 */
export function fairness_run(method: string, clients: number, rounds: number, sampling: number, alpha: number, seed: bigint): Float64Array;

/**
 * Decisions of both rules on a 3-client sequence: per round
 * `[ons_0, ons_1, ons_2, ftrl_0, ftrl_1, ftrl_2]`, followed by the final
 * `[ons_regret, ons_bound, ftrl_regret, ftrl_bound]`.
 */
export function simplex_race(pattern_name: string, rounds: number, seed: bigint): Float64Array;

/**
 * Responses for `losses` in `[0, 1]`.
 */
export function transform(name: string, scale: number, shape: number, losses: Float64Array): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly cdf_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly fairness_run: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
    readonly simplex_race: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly transform: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
