/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_curvaturedemo_free: (a: number, b: number) => void;
export const curvaturedemo_is_empty: (a: number) => number;
export const curvaturedemo_len: (a: number) => number;
export const curvaturedemo_mac: (a: number) => [number, number];
export const curvaturedemo_mean_curvature: (a: number) => [number, number];
export const curvaturedemo_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number];
export const curvaturedemo_normal_errors: (a: number) => [number, number];
export const curvaturedemo_normals: (a: number) => [number, number];
export const curvaturedemo_positions: (a: number) => [number, number];
export const curvaturedemo_summary: (a: number) => [number, number];
export const curvaturedemo_truth_mac: (a: number) => [number, number];
export const split_offsets: (a: number, b: number, c: number, d: number, e: bigint) => [number, number];
export const warmup_scales: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
