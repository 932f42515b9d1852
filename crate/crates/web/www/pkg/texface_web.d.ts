/* tslint:disable */
/* eslint-disable */

export class FaceViewer {
    free(): void;
    [Symbol.dispose](): void;
    constructor(size: number);
    render(): Uint8Array;
    set_light(ambient: number, strength: number, x: number, y: number): void;
    /**
     * Head rotation in radians about the vertical and horizontal axes.
     */
    set_pose(yaw: number, pitch: number): void;
    size(): number;
}

/**
 * Gram statistics from a sharp detail texture, content from its blurred
 * copy; each `step` continues L-BFGS from the current image.
 */
export class SynthesisDemo {
    free(): void;
    [Symbol.dispose](): void;
    image(): Uint8Array;
    losses(): Float64Array;
    constructor(seed: number, size: number, blur: number);
    size(): number;
    /**
     * Runs up to `iterations` more iterations and returns the loss.
     */
    step(iterations: number): number;
    target(): Uint8Array;
}

/**
 * Euclidean projection onto `{w >= 0, sum w = 1}`; empty for empty or
 * non-finite input.
 */
export function project_simplex(values: Float64Array): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_faceviewer_free: (a: number, b: number) => void;
    readonly __wbg_synthesisdemo_free: (a: number, b: number) => void;
    readonly faceviewer_new: (a: number) => number;
    readonly faceviewer_render: (a: number) => [number, number];
    readonly faceviewer_set_light: (a: number, b: number, c: number, d: number, e: number) => void;
    readonly faceviewer_set_pose: (a: number, b: number, c: number) => void;
    readonly faceviewer_size: (a: number) => number;
    readonly project_simplex: (a: number, b: number) => [number, number];
    readonly synthesisdemo_image: (a: number) => [number, number];
    readonly synthesisdemo_losses: (a: number) => [number, number];
    readonly synthesisdemo_new: (a: number, b: number, c: number) => number;
    readonly synthesisdemo_size: (a: number) => number;
    readonly synthesisdemo_step: (a: number, b: number) => number;
    readonly synthesisdemo_target: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
