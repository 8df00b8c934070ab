/** Wire types for the render service.
 *
 * The service owns the scene document; the client holds a mirror kept in
 * sync by echoing the same JSON merge patches (RFC 7386) it sends.
 */

export type Json =
  | null
  | boolean
  | number
  | string
  | Json[]
  | { [key: string]: Json };

export type JsonObject = { [key: string]: Json };

/** Scene document as served by GET /scene. Loosely typed on purpose:
 * the client edits only the parts it understands and round-trips the
 * rest untouched. */
export type SceneDoc = JsonObject;

export type LightEntry = {
  kind: "directional" | "point" | "area_rect";
  direction?: [number, number, number];
  position?: [number, number, number];
  extent?: [number, number];
  intensity?: Json;
  group?: number;
};

export type LiveFrame = {
  revision: number;
  t: number;
  format: "png";
  data_base64: string;
};

export type PatchAccepted = { ok: true; revision: number };
export type PatchRejected = {
  ok: false;
  status: number; // 400 invalid, 409 stale
  issues: string[];
};
export type PatchResult = PatchAccepted | PatchRejected;

/** A merge patch is any JSON value; objects recurse, null deletes,
 * everything else (arrays included) replaces wholesale. */
export type MergePatch = Json;

function isObject(v: Json | undefined): v is JsonObject {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

function deepCopy<T extends Json>(v: T): T {
  return v === null ? v : (JSON.parse(JSON.stringify(v)) as T);
}

/** Apply an RFC 7386 merge patch. Returns a new value; never mutates. */
export function applyMergePatch(target: Json, patch: MergePatch): Json {
  if (!isObject(patch)) {
    return deepCopy(patch);
  }
  const base: JsonObject = isObject(target) ? target : {};
  const out: JsonObject = {};
  for (const key of Object.keys(base)) {
    if (!(key in patch)) {
      out[key] = deepCopy(base[key] as Json);
    }
  }
  for (const key of Object.keys(patch)) {
    const pv = patch[key] as Json;
    if (pv === null) {
      continue; // delete
    }
    out[key] = applyMergePatch(base[key] ?? null, pv);
  }
  return out;
}

/** Compose two merge patches so that apply(t, compose(a, b)) equals
 * apply(apply(t, a), b). Used to coalesce edits inside the debounce
 * window into a single PATCH.
 *
 * One corner is inexpressible in merge-patch: a deletes a key, then b
 * recreates it as an object (no "replace" operator exists). UI edits
 * never do that; the composition falls back to b's object there. */
export function composeMergePatch(a: MergePatch, b: MergePatch): MergePatch {
  if (!isObject(b)) {
    return deepCopy(b);
  }
  if (!isObject(a)) {
    // b's nulls are deletions and must survive composition, so b is
    // taken as-is rather than applied onto a
    return deepCopy(b);
  }
  const out: JsonObject = deepCopy(a);
  for (const key of Object.keys(b)) {
    const bv = b[key] as Json;
    const av = out[key];
    if (isObject(av) && isObject(bv)) {
      out[key] = composeMergePatch(av, bv) as Json;
    } else {
      out[key] = deepCopy(bv);
    }
  }
  return out;
}

/** PNG bytes of a live frame. */
export function decodeFrame(frame: LiveFrame): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(frame.data_base64);
    const bytes = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) {
      bytes[i] = bin.charCodeAt(i);
    }
    return bytes;
  }
  return new Uint8Array(Buffer.from(frame.data_base64, "base64"));
}
