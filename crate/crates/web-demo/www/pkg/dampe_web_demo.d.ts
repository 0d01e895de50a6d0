/* tslint:disable */
/* eslint-disable */

/**
 * Relation counts before and after noising a random clean graph to step `t`.
 *
 * The clean graph draws relations from `clean`; noise resamples toward
 * `marginal`. Returns eight counts: clean ppi/go/anno/noedge, then noisy.
 */
export function forward_noise_counts(nodes: number, t: number, steps: number, shift: number, clean: Float64Array, marginal: Float64Array, seed: bigint): Uint32Array;

/**
 * `ᾱ_t` for `t = 0..=steps`.
 */
export function schedule_curve(steps: number, shift: number): Float64Array;

/**
 * Transport plan between a sequence embedding and a column-permuted noisy
 * copy of it, flattened row-major as `d × d`.
 */
export function sinkhorn_plan(proteins: number, dim: number, noise: number, epsilon: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly forward_noise_counts: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
    readonly schedule_curve: (a: number, b: number) => [number, number, number, number];
    readonly sinkhorn_plan: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
