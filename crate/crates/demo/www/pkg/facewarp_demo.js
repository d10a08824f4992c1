/* @ts-self-types="./facewarp_demo.d.ts" */

/**
 * One random identity of the procedural head.
 */
export class Head {
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        HeadFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_head_free(ptr, 0);
    }
    /**
     * Where each driving-frame pixel finds its content in the source frame,
     * as a colour wheel: hue is direction, saturation is length.
     * @param {Pose} source
     * @param {Pose} driving
     * @param {number} size
     * @returns {Uint8Array}
     */
    displacement(source, driving, size) {
        _assertClass(source, Pose);
        _assertClass(driving, Pose);
        const ret = wasm.head_displacement(this.__wbg_ptr, source.__wbg_ptr, driving.__wbg_ptr, size);
        if (ret[3]) {
            throw takeFromExternrefTable0(ret[2]);
        }
        var v1 = getArrayU8FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 1, 1);
        return v1;
    }
    /**
     * Longest displacement in pixels over the face, for the legend.
     * @param {Pose} source
     * @param {Pose} driving
     * @param {number} size
     * @returns {number}
     */
    max_displacement(source, driving, size) {
        _assertClass(source, Pose);
        _assertClass(driving, Pose);
        const ret = wasm.head_max_displacement(this.__wbg_ptr, source.__wbg_ptr, driving.__wbg_ptr, size);
        if (ret[2]) {
            throw takeFromExternrefTable0(ret[1]);
        }
        return ret[0];
    }
    /**
     * @param {bigint} seed
     */
    constructor(seed) {
        const ret = wasm.head_new(seed);
        this.__wbg_ptr = ret;
        HeadFinalization.register(this, this.__wbg_ptr, this);
        return this;
    }
    /**
     * Normalized mean-face coordinates of the posed head.
     * @param {Pose} pose
     * @param {number} size
     * @returns {Uint8Array}
     */
    nmfc(pose, size) {
        _assertClass(pose, Pose);
        const ret = wasm.head_nmfc(this.__wbg_ptr, pose.__wbg_ptr, size);
        if (ret[3]) {
            throw takeFromExternrefTable0(ret[2]);
        }
        var v1 = getArrayU8FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 1, 1);
        return v1;
    }
    /**
     * Shaded head over the background.
     * @param {Pose} pose
     * @param {number} size
     * @returns {Uint8Array}
     */
    render(pose, size) {
        _assertClass(pose, Pose);
        const ret = wasm.head_render(this.__wbg_ptr, pose.__wbg_ptr, size);
        if (ret[3]) {
            throw takeFromExternrefTable0(ret[2]);
        }
        var v1 = getArrayU8FromWasm0(ret[0], ret[1]).slice();
        wasm.__wbindgen_free(ret[0], ret[1] * 1, 1);
        return v1;
    }
}
if (Symbol.dispose) Head.prototype[Symbol.dispose] = Head.prototype.free;

/**
 * Head pose and expression controls, angles in radians.
 */
export class Pose {
    __destroy_into_raw() {
        const ptr = this.__wbg_ptr;
        this.__wbg_ptr = 0;
        PoseFinalization.unregister(this);
        return ptr;
    }
    free() {
        const ptr = this.__destroy_into_raw();
        wasm.__wbg_pose_free(ptr, 0);
    }
    /**
     * @returns {number}
     */
    get jaw() {
        const ret = wasm.__wbg_get_pose_jaw(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {number}
     */
    get pitch() {
        const ret = wasm.__wbg_get_pose_pitch(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {number}
     */
    get roll() {
        const ret = wasm.__wbg_get_pose_roll(this.__wbg_ptr);
        return ret;
    }
    /**
     * First expression coefficient.
     * @returns {number}
     */
    get smile() {
        const ret = wasm.__wbg_get_pose_smile(this.__wbg_ptr);
        return ret;
    }
    /**
     * @returns {number}
     */
    get yaw() {
        const ret = wasm.__wbg_get_pose_yaw(this.__wbg_ptr);
        return ret;
    }
    /**
     * @param {number} yaw
     * @param {number} pitch
     * @param {number} roll
     * @param {number} jaw
     * @param {number} smile
     */
    constructor(yaw, pitch, roll, jaw, smile) {
        const ret = wasm.pose_new(yaw, pitch, roll, jaw, smile);
        this.__wbg_ptr = ret;
        PoseFinalization.register(this, this.__wbg_ptr, this);
        return this;
    }
    /**
     * @param {number} arg0
     */
    set jaw(arg0) {
        wasm.__wbg_set_pose_jaw(this.__wbg_ptr, arg0);
    }
    /**
     * @param {number} arg0
     */
    set pitch(arg0) {
        wasm.__wbg_set_pose_pitch(this.__wbg_ptr, arg0);
    }
    /**
     * @param {number} arg0
     */
    set roll(arg0) {
        wasm.__wbg_set_pose_roll(this.__wbg_ptr, arg0);
    }
    /**
     * First expression coefficient.
     * @param {number} arg0
     */
    set smile(arg0) {
        wasm.__wbg_set_pose_smile(this.__wbg_ptr, arg0);
    }
    /**
     * @param {number} arg0
     */
    set yaw(arg0) {
        wasm.__wbg_set_pose_yaw(this.__wbg_ptr, arg0);
    }
}
if (Symbol.dispose) Pose.prototype[Symbol.dispose] = Pose.prototype.free;
function __wbg_get_imports() {
    const import0 = {
        __proto__: null,
        __wbg_Error_30c8987f7c2ed4e2: function(arg0, arg1) {
            const ret = Error(getStringFromWasm0(arg0, arg1));
            return ret;
        },
        __wbg___wbindgen_throw_41e9ee4f547fc59a: function(arg0, arg1) {
            throw new Error(getStringFromWasm0(arg0, arg1));
        },
        __wbindgen_init_externref_table: function() {
            const table = wasm.__wbindgen_externrefs;
            const offset = table.grow(4);
            table.set(0, undefined);
            table.set(offset + 0, undefined);
            table.set(offset + 1, null);
            table.set(offset + 2, true);
            table.set(offset + 3, false);
        },
    };
    return {
        __proto__: null,
        "./facewarp_demo_bg.js": import0,
    };
}

const HeadFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_head_free(ptr, 1));
const PoseFinalization = (typeof FinalizationRegistry === 'undefined')
    ? { register: () => {}, unregister: () => {} }
    : new FinalizationRegistry(ptr => wasm.__wbg_pose_free(ptr, 1));

function _assertClass(instance, klass) {
    if (!(instance instanceof klass)) {
        throw new Error(`expected instance of ${klass.name}`);
    }
}

function getArrayU8FromWasm0(ptr, len) {
    ptr = ptr >>> 0;
    return getUint8ArrayMemory0().subarray(ptr / 1, ptr / 1 + len);
}

function getStringFromWasm0(ptr, len) {
    return decodeText(ptr >>> 0, len);
}

let cachedUint8ArrayMemory0 = null;
function getUint8ArrayMemory0() {
    if (cachedUint8ArrayMemory0 === null || cachedUint8ArrayMemory0.byteLength === 0) {
        cachedUint8ArrayMemory0 = new Uint8Array(wasm.memory.buffer);
    }
    return cachedUint8ArrayMemory0;
}

function takeFromExternrefTable0(idx) {
    const value = wasm.__wbindgen_externrefs.get(idx);
    wasm.__externref_table_dealloc(idx);
    return value;
}

let cachedTextDecoder = new TextDecoder('utf-8', { ignoreBOM: true, fatal: true });
cachedTextDecoder.decode();
const MAX_SAFARI_DECODE_BYTES = 2146435072;
let numBytesDecoded = 0;
function decodeText(ptr, len) {
    numBytesDecoded += len;
    if (numBytesDecoded >= MAX_SAFARI_DECODE_BYTES) {
        cachedTextDecoder = new TextDecoder('utf-8', { ignoreBOM: true, fatal: true });
        cachedTextDecoder.decode();
        numBytesDecoded = len;
    }
    return cachedTextDecoder.decode(getUint8ArrayMemory0().subarray(ptr, ptr + len));
}

let wasmModule, wasmInstance, wasm;
function __wbg_finalize_init(instance, module) {
    wasmInstance = instance;
    wasm = instance.exports;
    wasmModule = module;
    cachedUint8ArrayMemory0 = null;
    wasm.__wbindgen_start();
    return wasm;
}

async function __wbg_load(module, imports) {
    if (typeof Response === 'function' && module instanceof Response) {
        if (!module.ok) {
            throw new Error(`failed to fetch Wasm: ${module.status} ${module.statusText} fetching '${module.url}'`);
        }

        if (typeof WebAssembly.instantiateStreaming === 'function') {
            try {
                return await WebAssembly.instantiateStreaming(module, imports);
            } catch (e) {
                const validResponse = expectedResponseType(module.type);

                if (validResponse && module.headers.get('Content-Type') !== 'application/wasm') {
                    console.warn("`WebAssembly.instantiateStreaming` failed because your server does not serve Wasm with `application/wasm` MIME type. Falling back to `WebAssembly.instantiate` which is slower. Original error:\n", e);

                } else { throw e; }
            }
        }

        const bytes = await module.arrayBuffer();
        return await WebAssembly.instantiate(bytes, imports);
    } else {
        const instance = await WebAssembly.instantiate(module, imports);

        if (instance instanceof WebAssembly.Instance) {
            return { instance, module };
        } else {
            return instance;
        }
    }

    function expectedResponseType(type) {
        switch (type) {
            case 'basic': case 'cors': case 'default': return true;
        }
        return false;
    }
}

function initSync(module) {
    if (wasm !== undefined) return wasm;


    if (module !== undefined) {
        if (Object.getPrototypeOf(module) === Object.prototype) {
            ({module} = module)
        } else {
            console.warn('using deprecated parameters for `initSync()`; pass a single object instead')
        }
    }

    const imports = __wbg_get_imports();
    if (!(module instanceof WebAssembly.Module)) {
        module = new WebAssembly.Module(module);
    }
    const instance = new WebAssembly.Instance(module, imports);
    return __wbg_finalize_init(instance, module);
}

async function __wbg_init(module_or_path) {
    if (wasm !== undefined) return wasm;


    if (module_or_path !== undefined) {
        if (Object.getPrototypeOf(module_or_path) === Object.prototype) {
            ({module_or_path} = module_or_path)
        } else {
            console.warn('using deprecated parameters for the initialization function; pass a single object instead')
        }
    }

    if (module_or_path === undefined) {
        module_or_path = new URL('facewarp_demo_bg.wasm', import.meta.url);
    }
    const imports = __wbg_get_imports();

    if (typeof module_or_path === 'string' || (typeof Request === 'function' && module_or_path instanceof Request) || (typeof URL === 'function' && module_or_path instanceof URL)) {
        module_or_path = fetch(module_or_path);
    }

    const { instance, module } = await __wbg_load(await module_or_path, imports);

    return __wbg_finalize_init(instance, module);
}

export { initSync, __wbg_init as default };
