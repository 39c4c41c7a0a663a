import { describe, expect, it } from "vitest";

import { fitTransform, pixelToViewport, viewportToPixel } from "../src/viewport.js";

// deterministic LCG so failures reproduce
function makeRng(seed: number) {
  let state = seed >>> 0;
  return () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
}

describe("viewport/pixel mapping", () => {
  it("maps the displayed center of a half-size 1920x1080 frame to (960, 540)", () => {
    const rect = { left: 0, top: 0, width: 960, height: 540 };
    const frame = { width: 1920, height: 1080 };
    const pixel = viewportToPixel({ x: 480, y: 270 }, rect, frame);
    expect(pixel).not.toBeNull();
    expect(pixel!.x).toBeCloseTo(960, 9);
    expect(pixel!.y).toBeCloseTo(540, 9);
  });

  it("letterboxes a wide frame in a tall rect", () => {
    const rect = { left: 0, top: 0, width: 400, height: 400 };
    const frame = { width: 200, height: 100 };
    const fit = fitTransform(rect, frame);
    expect(fit.scale).toBe(2);
    expect(fit.offsetY).toBe(100); // bars above and below
    expect(viewportToPixel({ x: 200, y: 50 }, rect, frame)).toBeNull();
    const pixel = viewportToPixel({ x: 200, y: 200 }, rect, frame);
    expect(pixel!.x).toBeCloseTo(100, 9);
    expect(pixel!.y).toBeCloseTo(50, 9);
  });

  it("is the exact inverse of the display transform over random window sizes", () => {
    const rng = makeRng(42);
    for (let i = 0; i < 500; i++) {
      const frame = {
        width: 16 + Math.floor(rng() * 3800),
        height: 16 + Math.floor(rng() * 2100),
      };
      const rect = {
        left: Math.floor(rng() * 500) - 250,
        top: Math.floor(rng() * 300) - 150,
        width: 50 + rng() * 2500,
        height: 50 + rng() * 1500,
      };
      const pixel = { x: rng() * (frame.width - 1), y: rng() * (frame.height - 1) };
      const viewport = pixelToViewport(pixel, rect, frame);
      const back = viewportToPixel(viewport, rect, frame);
      expect(back).not.toBeNull();
      expect(Math.abs(back!.x - pixel.x)).toBeLessThan(1e-9 * Math.max(1, pixel.x));
      expect(Math.abs(back!.y - pixel.y)).toBeLessThan(1e-9 * Math.max(1, pixel.y));
    }
  });

  it("returns null outside the video area", () => {
    const rect = { left: 10, top: 10, width: 100, height: 100 };
    const frame = { width: 100, height: 100 };
    expect(viewportToPixel({ x: 5, y: 50 }, rect, frame)).toBeNull();
    expect(viewportToPixel({ x: 111, y: 50 }, rect, frame)).toBeNull();
    expect(viewportToPixel({ x: 50, y: 200 }, rect, frame)).toBeNull();
  });
});
