/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_faceviewer_free: (a: number, b: number) => void;
export const __wbg_synthesisdemo_free: (a: number, b: number) => void;
export const faceviewer_new: (a: number) => number;
export const faceviewer_render: (a: number) => [number, number];
export const faceviewer_set_light: (a: number, b: number, c: number, d: number, e: number) => void;
export const faceviewer_set_pose: (a: number, b: number, c: number) => void;
export const faceviewer_size: (a: number) => number;
export const project_simplex: (a: number, b: number) => [number, number];
export const synthesisdemo_image: (a: number) => [number, number];
export const synthesisdemo_losses: (a: number) => [number, number];
export const synthesisdemo_new: (a: number, b: number, c: number) => number;
export const synthesisdemo_size: (a: number) => number;
export const synthesisdemo_step: (a: number, b: number) => number;
export const synthesisdemo_target: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
