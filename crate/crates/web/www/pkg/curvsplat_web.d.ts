/* tslint:disable */
/* eslint-disable */

/**
 * A sampled surface with estimated and analytic curvature.
 */
export class CurvatureDemo {
    free(): void;
    [Symbol.dispose](): void;
    is_empty(): boolean;
    len(): number;
    /**
     * Estimated mean absolute curvature; empty for frame-only methods.
     */
    mac(): Float64Array;
    /**
     * Estimated mean curvature; empty for frame-only methods.
     */
    mean_curvature(): Float64Array;
    /**
     * `surface` as in `sphere:1`, `torus:2,0.5`; `method` manifold, varifold or pca.
     */
    constructor(surface: string, n: number, sigma: number, method: string, seed: bigint);
    /**
     * Angle between estimated and analytic normal lines, in degrees.
     */
    normal_errors(): Float64Array;
    /**
     * Estimated unit normal per point.
     */
    normals(): Float64Array;
    /**
     * `x y z` per point.
     */
    positions(): Float64Array;
    /**
     * Median normal error, median estimated MAC (NaN without curvature)
     * and flagged point count.
     */
    summary(): Float64Array;
    truth_mac(): Float64Array;
}

/**
 * `count` split offsets around the origin, as `(along w1, along w2, along n)`
 * triples, for principal curvatures `tau1, tau2`.
 */
export function split_offsets(tau1: number, tau2: number, xi_min: number, count: number, seed: bigint): Float64Array;

/**
 * Warm-up scales `(s1, s2, s3)` for neighbor scale `s_nbr` and curvatures
 * `tau1, tau2` clamped to `[xi_min, xi_max]`.
 */
export function warmup_scales(s_nbr: number, tau1: number, tau2: number, xi_min: number, xi_max: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_curvaturedemo_free: (a: number, b: number) => void;
    readonly curvaturedemo_is_empty: (a: number) => number;
    readonly curvaturedemo_len: (a: number) => number;
    readonly curvaturedemo_mac: (a: number) => [number, number];
    readonly curvaturedemo_mean_curvature: (a: number) => [number, number];
    readonly curvaturedemo_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number];
    readonly curvaturedemo_normal_errors: (a: number) => [number, number];
    readonly curvaturedemo_normals: (a: number) => [number, number];
    readonly curvaturedemo_positions: (a: number) => [number, number];
    readonly curvaturedemo_summary: (a: number) => [number, number];
    readonly curvaturedemo_truth_mac: (a: number) => [number, number];
    readonly split_offsets: (a: number, b: number, c: number, d: number, e: bigint) => [number, number];
    readonly warmup_scales: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
