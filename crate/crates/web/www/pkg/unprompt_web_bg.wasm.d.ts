/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_mixturedemo_free: (a: number, b: number) => void;
export const lambda_curve: (a: number, b: number) => [number, number];
export const mixturedemo_data: (a: number) => [number, number];
export const mixturedemo_mode_fraction: (a: number, b: number, c: number, d: number) => number;
export const mixturedemo_modes: (a: number) => number;
export const mixturedemo_new: (a: number) => [number, number, number];
export const mixturedemo_sample: (a: number, b: number) => [number, number, number, number];
export const mixturedemo_train: (a: number, b: number, c: number) => [number, number, number];
export const mixturedemo_trained_steps: (a: number) => number;
export const mixturedemo_unlearn: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const ridge_sweep: (a: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
