// Multi-track timeline editing. Every edit clamps to the video range,
// preserves start <= end, and never produces overlapping segments on a
// track, so committed edits always pass server-side validation.

import type { SegmentDTO } from "./types.js";

export type Handle = "start" | "end" | "body";

export function validateSegments(segments: SegmentDTO[], frameCount: number): string | null {
  const byTrack = new Map<number, SegmentDTO[]>();
  for (const seg of segments) {
    if (seg.start_frame > seg.end_frame) return `${seg.id}: start after end`;
    if (seg.start_frame < 0 || seg.end_frame >= frameCount) return `${seg.id}: outside video`;
    const list = byTrack.get(seg.track_index) ?? [];
    list.push(seg);
    byTrack.set(seg.track_index, list);
  }
  for (const [track, list] of byTrack) {
    const sorted = [...list].sort((a, b) => a.start_frame - b.start_frame);
    for (let i = 1; i < sorted.length; i++) {
      if (sorted[i]!.start_frame <= sorted[i - 1]!.end_frame) {
        return `track ${track}: ${sorted[i - 1]!.id} overlaps ${sorted[i]!.id}`;
      }
    }
  }
  return null;
}

function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, value));
}

function trackNeighbors(segments: SegmentDTO[], seg: SegmentDTO) {
  const others = segments.filter(
    (s) => s.id !== seg.id && s.track_index === seg.track_index,
  );
  let prevEnd = -1;
  let nextStart = Number.POSITIVE_INFINITY;
  for (const other of others) {
    if (other.end_frame < seg.start_frame) prevEnd = Math.max(prevEnd, other.end_frame);
    if (other.start_frame > seg.end_frame) nextStart = Math.min(nextStart, other.start_frame);
  }
  return { prevEnd, nextStart };
}

/**
 * Drag a segment handle to a target frame. Start/end handles clamp to the
 * video, to each other, and to the track neighbors; a body drag translates
 * the whole range and is rejected (null) when it would overlap another or
 * when the segment is locked.
 */
export function dragSegment(
  segments: SegmentDTO[],
  segmentId: string,
  handle: Handle,
  targetFrame: number,
  frameCount: number,
): SegmentDTO[] | null {
  const seg = segments.find((s) => s.id === segmentId);
  if (!seg) return null;
  if (seg.locked) return null;
  const { prevEnd, nextStart } = trackNeighbors(segments, seg);
  let start = seg.start_frame;
  let end = seg.end_frame;

  if (handle === "start") {
    start = clamp(Math.round(targetFrame), 0, frameCount - 1);
    start = clamp(start, prevEnd + 1, end); // past end clamps to end
  } else if (handle === "end") {
    end = clamp(Math.round(targetFrame), 0, frameCount - 1);
    end = clamp(end, start, Math.min(nextStart - 1, frameCount - 1));
  } else {
    const length = end - start;
    let shift = Math.round(targetFrame) - start;
    shift = clamp(shift, -start, frameCount - 1 - end);
    const candidateStart = start + shift;
    const candidateEnd = candidateStart + length;
    const overlaps = segments.some(
      (s) =>
        s.id !== seg.id &&
        s.track_index === seg.track_index &&
        candidateStart <= s.end_frame &&
        s.start_frame <= candidateEnd,
    );
    if (overlaps) return null; // rejected: caller shows visual feedback
    start = candidateStart;
    end = candidateEnd;
  }
  return segments.map((s) => (s.id === segmentId ? { ...s, start_frame: start, end_frame: end } : s));
}
