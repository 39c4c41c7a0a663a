import { describe, expect, it } from "vitest";

import { SessionState } from "../src/state.js";
import { defaultBehavior, identityPlacement, type ProjectDTO } from "../src/types.js";

function project(frameCount = 30): ProjectDTO {
  return {
    version: 1,
    video: { frames_dir: "frames", fps: 30, width: 320, height: 240, frame_count: frameCount },
    anchors: { a1: { pixel: [10, 10], frame: 0, mode: "camera" } },
    charts: { c1: { id: "c1", spec: { kind: "bar", mapping: {}, style: {}, size: [1, 0.75] }, dataset: "d.csv" } },
    segments: [
      {
        id: "s1", chart_id: "c1", anchor_id: "a1", track_index: 0,
        start_frame: 0, end_frame: 29,
        behavior: defaultBehavior(), placement: identityPlacement(),
      },
    ],
    time_map: { t0: 0, f0: 0, rate: 1 },
  };
}

describe("session state", () => {
  it("clamps the frame cursor to the video range", () => {
    const state = new SessionState("p1", project());
    state.setFrame(1000);
    expect(state.currentFrame).toBe(29);
    state.setFrame(-5);
    expect(state.currentFrame).toBe(0);
  });

  it("rejects selections that do not exist in the project", () => {
    const state = new SessionState("p1", project());
    expect(() => state.selectChart("nope")).toThrow();
    expect(() => state.selectSegment("nope")).toThrow();
  });

  it("selecting a segment focuses its chart", () => {
    const state = new SessionState("p1", project());
    state.selectSegment("s1");
    expect(state.selectedChartId).toBe("c1");
  });

  it("drops stale selection and pending edits when the project is replaced", () => {
    const state = new SessionState("p1", project());
    state.selectSegment("s1");
    state.stagePlacement("s1", identityPlacement());
    const replacement = project(10);
    replacement.segments = [];
    state.replaceProject(replacement);
    expect(state.selectedSegmentId).toBeNull();
    expect(state.pendingPlacements.size).toBe(0);
    expect(state.currentFrame).toBeLessThan(10);
  });

  it("pending placement wins over the committed one until taken", () => {
    const state = new SessionState("p1", project());
    const staged = { ...identityPlacement(), scale: 2 };
    state.stagePlacement("s1", staged);
    expect(state.effectivePlacement("s1")).toEqual(staged);
    expect(state.takePendingPlacement("s1")).toEqual(staged);
    expect(state.effectivePlacement("s1")!.scale).toBe(1);
  });
});
