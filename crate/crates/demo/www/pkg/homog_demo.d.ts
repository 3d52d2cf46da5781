/* tslint:disable */
/* eslint-disable */

/**
 * Gaussian density blob transported by Darcy flow `u = ρAf − A∇p` on the
 * unit torus.
 */
export class DarcyBlob {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * CFL number of the last step.
     */
    cfl(): number;
    /**
     * Relative change of the total mass since the start.
     */
    mass_drift(): number;
    max(): number;
    min(): number;
    constructor(n: number, amplitude: number, width: number, fx: number, fy: number, k: number);
    size(): number;
    /**
     * Density on the mid plane `z = 1/2`, row-major in `y` then `x`.
     */
    slice(): Float64Array;
    /**
     * Advances `steps` time steps of size `dt`.
     */
    step(steps: number, dt: number): void;
    time(): number;
}

/**
 * `[λ_min, 4πr]` for a ball of radius `r` in the unit cell.
 */
export function ballEigenvalue(radius: number, half_cells: number): Float64Array;

export function rateFit(eps: Float64Array, values: Float64Array): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_darcyblob_free: (a: number, b: number) => void;
    readonly ballEigenvalue: (a: number, b: number) => [number, number, number, number];
    readonly darcyblob_cfl: (a: number) => number;
    readonly darcyblob_mass_drift: (a: number) => number;
    readonly darcyblob_max: (a: number) => number;
    readonly darcyblob_min: (a: number) => number;
    readonly darcyblob_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly darcyblob_size: (a: number) => number;
    readonly darcyblob_slice: (a: number) => [number, number];
    readonly darcyblob_step: (a: number, b: number, c: number) => [number, number];
    readonly darcyblob_time: (a: number) => number;
    readonly rateFit: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
