/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_get_pose_jaw: (a: number) => number;
export const __wbg_get_pose_pitch: (a: number) => number;
export const __wbg_get_pose_roll: (a: number) => number;
export const __wbg_get_pose_smile: (a: number) => number;
export const __wbg_get_pose_yaw: (a: number) => number;
export const __wbg_head_free: (a: number, b: number) => void;
export const __wbg_pose_free: (a: number, b: number) => void;
export const __wbg_set_pose_jaw: (a: number, b: number) => void;
export const __wbg_set_pose_pitch: (a: number, b: number) => void;
export const __wbg_set_pose_roll: (a: number, b: number) => void;
export const __wbg_set_pose_smile: (a: number, b: number) => void;
export const __wbg_set_pose_yaw: (a: number, b: number) => void;
export const head_displacement: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const head_max_displacement: (a: number, b: number, c: number, d: number) => [number, number, number];
export const head_new: (a: bigint) => number;
export const head_nmfc: (a: number, b: number, c: number) => [number, number, number, number];
export const head_render: (a: number, b: number, c: number) => [number, number, number, number];
export const pose_new: (a: number, b: number, c: number, d: number, e: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
