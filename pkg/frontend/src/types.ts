// JSON shapes exchanged with the authoring service.

export type AnchorMode = "camera" | "object";

export interface AnchorDTO {
  pixel: [number, number];
  frame: number;
  mode: AnchorMode;
}

export interface PlacementDTO {
  offset: [number, number, number];
  rotation_quat: [number, number, number, number]; // w-first unit quaternion
  scale: number;
}

export interface BehaviorDTO {
  enter: "fade" | "unveil" | "none";
  exit: "fade" | "none";
  enter_frames: number;
  exit_frames: number;
}

export interface SegmentDTO {
  id: string;
  chart_id: string;
  anchor_id: string;
  track_index: number;
  start_frame: number;
  end_frame: number;
  behavior: BehaviorDTO;
  placement: PlacementDTO;
  locked?: boolean; // client-side layer lock: edits are rejected
}

export interface ChartSpecDTO {
  kind: "bar" | "line" | "area" | "text" | "data";
  mapping: Record<string, string>;
  style: Record<string, unknown>;
  size: [number, number];
}

export interface ChartDTO {
  id: string;
  spec: ChartSpecDTO;
  dataset: string;
}

export interface VideoDTO {
  frames_dir: string;
  fps: number;
  width: number;
  height: number;
  frame_count: number;
}

export interface ProjectDTO {
  version: number;
  video: VideoDTO;
  anchors: Record<string, AnchorDTO>;
  charts: Record<string, ChartDTO>;
  segments: SegmentDTO[];
  time_map: { t0: number; f0: number; rate: number };
  [key: string]: unknown;
}

export interface RenderJobStatus {
  job: string;
  status: "queued" | "running" | "done" | "failed";
  progress: { done: number; total: number };
  error: string | null;
}

export function identityPlacement(): PlacementDTO {
  return { offset: [0, 0, 0], rotation_quat: [1, 0, 0, 0], scale: 1 };
}

export function defaultBehavior(): BehaviorDTO {
  return { enter: "fade", exit: "fade", enter_frames: 0, exit_frames: 0 };
}
