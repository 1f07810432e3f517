/* tslint:disable */
/* eslint-disable */

/**
 * Ring mixture, a small denoiser, and the unlearning of one mode.
 */
export class MixtureDemo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Training points as `[x, y, mode]` rows.
     */
    data(): Float64Array;
    /**
     * Fraction of `[x, y]` rows whose nearest mode is `mode`.
     */
    mode_fraction(xy: Float64Array, mode: number): number;
    modes(): number;
    constructor(seed: number);
    /**
     * `count` DDIM samples as `[x, y]` rows; the same `count` gives the same
     * starting noise, so samples before and after unlearning pair up.
     */
    sample(count: number): Float64Array;
    /**
     * Runs `steps` Adam steps; returns the mean loss.
     */
    train(steps: number, lr: number): number;
    trained_steps(): number;
    /**
     * Unlearns the centre of `mode`, using its shift to the neighbouring mode
     * as surrogate and every point of the other modes as the remember set.
     */
    unlearn(mode: number, iters: number, lr: number, beta: number): void;
}

/**
 * `λ(t)` for `t = 1..=steps`.
 */
export function lambda_curve(beta: number, steps: number): Float64Array;

/**
 * Ridge label sweep on the demo instance: rows of
 * `[y_new, exact_shift, surrogate_shift, surrogate/exact]`.
 */
export function ridge_sweep(points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_mixturedemo_free: (a: number, b: number) => void;
    readonly lambda_curve: (a: number, b: number) => [number, number];
    readonly mixturedemo_data: (a: number) => [number, number];
    readonly mixturedemo_mode_fraction: (a: number, b: number, c: number, d: number) => number;
    readonly mixturedemo_modes: (a: number) => number;
    readonly mixturedemo_new: (a: number) => [number, number, number];
    readonly mixturedemo_sample: (a: number, b: number) => [number, number, number, number];
    readonly mixturedemo_train: (a: number, b: number, c: number) => [number, number, number];
    readonly mixturedemo_trained_steps: (a: number) => number;
    readonly mixturedemo_unlearn: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly ridge_sweep: (a: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
