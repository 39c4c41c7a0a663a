// One-click tracking anchor: convert a viewport click into the exact frame
// pixel and the anchor mutation payload the service expects.

import type { AnchorDTO, AnchorMode } from "./types.js";
import { viewportToPixel, type DisplayRect, type FrameSize, type Point } from "./viewport.js";

export interface AnchorClick {
  point: Point;
  rect: DisplayRect;
  frame: FrameSize;
  frameIndex: number;
  mode: AnchorMode;
}

/** null when the click falls outside the displayed video (no request). */
export function buildAnchorRequest(click: AnchorClick): AnchorDTO | null {
  const pixel = viewportToPixel(click.point, click.rect, click.frame);
  if (pixel === null) return null;
  return {
    pixel: [pixel.x, pixel.y],
    frame: click.frameIndex,
    mode: click.mode,
  };
}
