// 3D placement adjustment: dragging pans in the anchor plane, scrolling
// zooms multiplicatively, right-dragging applies incremental rotation.
// All functions return a new placement (callers commit on gesture end).

import { quatFromAxisAngle, quatMultiply, quatNormalize } from "./math.js";
import type { PlacementDTO } from "./types.js";

export const SCROLL_ZOOM_RATE = 0.001; // scale *= exp(rate * delta)
export const ROTATE_RADIANS_PER_PX = Math.PI / 360; // half a degree per pixel
export const MIN_SCALE = 1e-4;
export const MAX_SCALE = 1e4;

export interface GizmoState {
  active: "pan" | "zoom" | "rotate" | null;
  metersPerPixel: number; // anchor-plane meters per viewport pixel at current depth
}

export function applyDrag(p: PlacementDTO, dxPx: number, dyPx: number, metersPerPixel: number): PlacementDTO {
  if (dxPx === 0 && dyPx === 0) return p;
  return {
    ...p,
    offset: [
      p.offset[0] + dxPx * metersPerPixel,
      p.offset[1] + dyPx * metersPerPixel,
      p.offset[2],
    ],
  };
}

export function applyScroll(p: PlacementDTO, delta: number, rate: number = SCROLL_ZOOM_RATE): PlacementDTO {
  if (delta === 0) return p;
  const scale = Math.min(MAX_SCALE, Math.max(MIN_SCALE, p.scale * Math.exp(rate * delta)));
  return { ...p, scale };
}

export function applyRightDrag(
  p: PlacementDTO,
  dxPx: number,
  dyPx: number,
  radiansPerPixel: number = ROTATE_RADIANS_PER_PX,
): PlacementDTO {
  if (dxPx === 0 && dyPx === 0) return p;
  // horizontal motion spins about the chart normal (z), vertical tilts about x
  const spin = quatFromAxisAngle([0, 0, 1], dxPx * radiansPerPixel);
  const tilt = quatFromAxisAngle([1, 0, 0], dyPx * radiansPerPixel);
  const rotation = quatNormalize(quatMultiply(quatMultiply(spin, tilt), p.rotation_quat));
  return { ...p, rotation_quat: rotation };
}
