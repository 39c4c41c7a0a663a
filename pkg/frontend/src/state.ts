// Authoring session state: current selection, frame cursor, pending
// placement edits, and the active render job handle. Selection invariants
// are enforced against the loaded project.

import type { PlacementDTO, ProjectDTO } from "./types.js";

export class SessionState {
  projectId: string;
  project: ProjectDTO;
  selectedChartId: string | null = null;
  selectedSegmentId: string | null = null;
  currentFrame = 0;
  pendingPlacements = new Map<string, PlacementDTO>();
  renderJob: string | null = null;
  lastRenderKey = "";

  constructor(projectId: string, project: ProjectDTO) {
    this.projectId = projectId;
    this.project = project;
  }

  get frameCount(): number {
    return this.project.video.frame_count;
  }

  replaceProject(project: ProjectDTO): void {
    this.project = project;
    if (this.selectedChartId !== null && !(this.selectedChartId in project.charts)) {
      this.selectedChartId = null;
    }
    if (
      this.selectedSegmentId !== null &&
      !project.segments.some((s) => s.id === this.selectedSegmentId)
    ) {
      this.selectedSegmentId = null;
      this.pendingPlacements.clear();
    }
    this.currentFrame = Math.min(this.currentFrame, this.frameCount - 1);
  }

  selectChart(chartId: string): void {
    if (!(chartId in this.project.charts)) {
      throw new Error(`unknown chart ${chartId}`);
    }
    this.selectedChartId = chartId;
  }

  selectSegment(segmentId: string): void {
    const segment = this.project.segments.find((s) => s.id === segmentId);
    if (!segment) throw new Error(`unknown segment ${segmentId}`);
    this.selectedSegmentId = segmentId;
    this.selectedChartId = segment.chart_id;
  }

  setFrame(n: number): void {
    this.currentFrame = Math.min(Math.max(Math.round(n), 0), this.frameCount - 1);
  }

  stagePlacement(segmentId: string, placement: PlacementDTO): void {
    this.pendingPlacements.set(segmentId, placement);
  }

  takePendingPlacement(segmentId: string): PlacementDTO | undefined {
    const placement = this.pendingPlacements.get(segmentId);
    this.pendingPlacements.delete(segmentId);
    return placement;
  }

  effectivePlacement(segmentId: string): PlacementDTO | undefined {
    const pending = this.pendingPlacements.get(segmentId);
    if (pending) return pending;
    return this.project.segments.find((s) => s.id === segmentId)?.placement;
  }
}
