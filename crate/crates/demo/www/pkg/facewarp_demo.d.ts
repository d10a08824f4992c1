/* tslint:disable */
/* eslint-disable */

/**
 * One random identity of the procedural head.
 */
export class Head {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Where each driving-frame pixel finds its content in the source frame,
     * as a colour wheel: hue is direction, saturation is length.
     */
    displacement(source: Pose, driving: Pose, size: number): Uint8Array;
    /**
     * Longest displacement in pixels over the face, for the legend.
     */
    max_displacement(source: Pose, driving: Pose, size: number): number;
    constructor(seed: bigint);
    /**
     * Normalized mean-face coordinates of the posed head.
     */
    nmfc(pose: Pose, size: number): Uint8Array;
    /**
     * Shaded head over the background.
     */
    render(pose: Pose, size: number): Uint8Array;
}

/**
 * Head pose and expression controls, angles in radians.
 */
export class Pose {
    free(): void;
    [Symbol.dispose](): void;
    constructor(yaw: number, pitch: number, roll: number, jaw: number, smile: number);
    jaw: number;
    pitch: number;
    roll: number;
    /**
     * First expression coefficient.
     */
    smile: number;
    yaw: number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_get_pose_jaw: (a: number) => number;
    readonly __wbg_get_pose_pitch: (a: number) => number;
    readonly __wbg_get_pose_roll: (a: number) => number;
    readonly __wbg_get_pose_smile: (a: number) => number;
    readonly __wbg_get_pose_yaw: (a: number) => number;
    readonly __wbg_head_free: (a: number, b: number) => void;
    readonly __wbg_pose_free: (a: number, b: number) => void;
    readonly __wbg_set_pose_jaw: (a: number, b: number) => void;
    readonly __wbg_set_pose_pitch: (a: number, b: number) => void;
    readonly __wbg_set_pose_roll: (a: number, b: number) => void;
    readonly __wbg_set_pose_smile: (a: number, b: number) => void;
    readonly __wbg_set_pose_yaw: (a: number, b: number) => void;
    readonly head_displacement: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly head_max_displacement: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly head_new: (a: bigint) => number;
    readonly head_nmfc: (a: number, b: number, c: number) => [number, number, number, number];
    readonly head_render: (a: number, b: number, c: number) => [number, number, number, number];
    readonly pose_new: (a: number, b: number, c: number, d: number, e: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
