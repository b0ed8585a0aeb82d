/* tslint:disable */
/* eslint-disable */

/**
 * ACC with a sinusoidal disturbance `offset + amplitude·sin(omega·t)`, run
 * under the observer-based filter and the plain integral filter.
 */
export function accCompare(offset: number, amplitude: number, omega: number, t_end: number): string;

/**
 * Bicycle around the obstacle with the high-order filter and unfiltered.
 */
export function bicycleRun(tracking_gain: number, t_end: number): string;

/**
 * Grid validity check of a built-in scenario; the report as JSON.
 */
export function checkScenario(name: string, resolution?: number | null): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly accCompare: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly bicycleRun: (a: number, b: number) => [number, number, number, number];
    readonly checkScenario: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
