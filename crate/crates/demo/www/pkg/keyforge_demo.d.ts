/* tslint:disable */
/* eslint-disable */

export function commitTemplate(values: Uint32Array, d: number, l: Uint32Array, seed: number): string;

export function decodeGrid(d: number, l0: number, l1: number): Uint32Array;

export function listCodewords(d: number, l0: number, l1: number): Uint32Array;

export function openCommitment(commitment: string, values: Uint32Array, z: string): string | undefined;

export function rateSweep(users: number, minutes: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly commitTemplate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly decodeGrid: (a: number, b: number, c: number) => [number, number, number, number];
    readonly listCodewords: (a: number, b: number, c: number) => [number, number, number, number];
    readonly openCommitment: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly rateSweep: (a: number, b: number, c: number) => [number, number, number, number];
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
