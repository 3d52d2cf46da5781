/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_darcyblob_free: (a: number, b: number) => void;
export const ballEigenvalue: (a: number, b: number) => [number, number, number, number];
export const darcyblob_cfl: (a: number) => number;
export const darcyblob_mass_drift: (a: number) => number;
export const darcyblob_max: (a: number) => number;
export const darcyblob_min: (a: number) => number;
export const darcyblob_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const darcyblob_size: (a: number) => number;
export const darcyblob_slice: (a: number) => [number, number];
export const darcyblob_step: (a: number, b: number, c: number) => [number, number];
export const darcyblob_time: (a: number) => number;
export const rateFit: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
