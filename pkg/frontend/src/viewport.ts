// Viewport <-> frame-pixel mapping for the aspect-fit video display.
// The frame is letterboxed inside the display rect; the mapping must be the
// exact inverse of the display scaling so anchor clicks land on the pixel
// the user pointed at.

export interface DisplayRect {
  left: number;
  top: number;
  width: number;
  height: number;
}

export interface FrameSize {
  width: number;
  height: number;
}

export interface Point {
  x: number;
  y: number;
}

export interface FitTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export function fitTransform(rect: DisplayRect, frame: FrameSize): FitTransform {
  const scale = Math.min(rect.width / frame.width, rect.height / frame.height);
  return {
    scale,
    offsetX: rect.left + (rect.width - frame.width * scale) / 2,
    offsetY: rect.top + (rect.height - frame.height * scale) / 2,
  };
}

/** Viewport point to frame pixel; null when outside the displayed video. */
export function viewportToPixel(
  point: Point,
  rect: DisplayRect,
  frame: FrameSize,
): Point | null {
  const fit = fitTransform(rect, frame);
  if (fit.scale <= 0) return null;
  const u = (point.x - fit.offsetX) / fit.scale;
  const v = (point.y - fit.offsetY) / fit.scale;
  if (u < 0 || v < 0 || u >= frame.width || v >= frame.height) return null;
  return { x: u, y: v };
}

export function pixelToViewport(pixel: Point, rect: DisplayRect, frame: FrameSize): Point {
  const fit = fitTransform(rect, frame);
  return { x: pixel.x * fit.scale + fit.offsetX, y: pixel.y * fit.scale + fit.offsetY };
}
