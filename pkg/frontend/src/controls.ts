/** Pure interaction math: screen gestures to scene patches.
 *
 * Lights live in the scene's unit square with y up, while screen y grows
 * downward; every dy flips sign on the way in. Arrays in merge patches
 * replace wholesale, so a one-light edit rebuilds the full lights array
 * from the document mirror.
 */

import type { Json, LightEntry, MergePatch, SceneDoc } from "./protocol.js";

export type ViewState = { zoom: number; panX: number; panY: number };

export const DEFAULT_VIEW: ViewState = { zoom: 1, panX: 0, panY: 0 };

export function clampZoom(zoom: number): number {
  return Math.min(8, Math.max(0.25, zoom));
}

export function panBy(view: ViewState, dx: number, dy: number): ViewState {
  return { ...view, panX: view.panX + dx, panY: view.panY + dy };
}

function lightsOf(doc: SceneDoc): LightEntry[] {
  const lights = doc["lights"];
  return Array.isArray(lights) ? (lights as LightEntry[]) : [];
}

function norm3(v: [number, number, number]): [number, number, number] {
  const len = Math.hypot(v[0], v[1], v[2]);
  return [v[0] / len, v[1] / len, v[2] / len];
}

/** Patch moving one light by a screen-pixel delta.
 *
 * Positioned lights (point, area_rect) translate in the image plane.
 * Directional lights tilt: the direction's horizontal components move
 * with the drag and the vector is renormalized, so dragging across the
 * zenith flips the shadow side. Returns null for a zero delta or an
 * unknown light index, so idle mouse events never issue a PATCH.
 */
export function dragLightPatch(
  doc: SceneDoc,
  lightIndex: number,
  dxPx: number,
  dyPx: number,
  canvas: { width: number; height: number },
): MergePatch | null {
  if (dxPx === 0 && dyPx === 0) {
    return null;
  }
  const lights = lightsOf(doc);
  const light = lights[lightIndex];
  if (!light) {
    return null;
  }
  const du = dxPx / canvas.width;
  const dv = dyPx / canvas.height;
  const updated: LightEntry = { ...light };
  if (light.kind === "directional") {
    const d = light.direction ?? [0, 0, 1];
    // 2 units of direction per canvas width: a half-canvas drag takes a
    // 45-degree light through vertical to the other side
    updated.direction = norm3([d[0] + 2 * du, d[1] - 2 * dv, d[2]]);
  } else {
    const p = light.position ?? [0.5, 0.5, 1];
    updated.position = [p[0] + du, p[1] - dv, p[2]];
  }
  const next = lights.slice();
  next[lightIndex] = updated;
  return { lights: next as unknown as Json };
}

/** Patch placing a directional light at an exact direction. Used by
 * scripted sessions and double-click-to-set. */
export function setLightDirectionPatch(
  doc: SceneDoc,
  lightIndex: number,
  direction: [number, number, number],
): MergePatch | null {
  const lights = lightsOf(doc);
  const light = lights[lightIndex];
  if (!light) {
    return null;
  }
  const next = lights.slice();
  next[lightIndex] = { ...light, direction: norm3(direction) };
  return { lights: next as unknown as Json };
}

export type BasisChoice =
  | { kind: "linear" }
  | { kind: "bezier"; degree: number }
  | { kind: "bspline0"; knots: number[] };

/** Patch swapping the scene's weight basis. Textures are left to the
 * server default unless provided. */
export function shadingBasisPatch(
  basis: BasisChoice,
  textures?: Json[],
): MergePatch {
  const shading: { [key: string]: Json } = { basis: { ...basis } };
  if (textures) {
    shading["textures"] = textures;
  }
  return { shading };
}

/** Patch replacing one control texture of one layer. */
export function swapLayerTexturePatch(
  doc: SceneDoc,
  layerIndex: number,
  textureIndex: number,
  texture: Json,
): MergePatch | null {
  const layers = doc["layers"];
  if (!Array.isArray(layers)) {
    return null;
  }
  const layer = layers[layerIndex];
  if (typeof layer !== "object" || layer === null || Array.isArray(layer)) {
    return null;
  }
  const textures = (layer as SceneDoc)["textures"];
  if (!Array.isArray(textures) || textureIndex >= textures.length) {
    return null;
  }
  const nextTextures = textures.slice();
  nextTextures[textureIndex] = texture;
  const nextLayers = layers.slice();
  nextLayers[layerIndex] = { ...(layer as SceneDoc), textures: nextTextures };
  return { layers: nextLayers };
}

/** Slider position in [0, 1] to scene time. Identity today, but the
 * mapping is the one place a nonlinear scrub would live. */
export function sliderToTime(position: number): number {
  return Math.min(1, Math.max(0, position));
}
