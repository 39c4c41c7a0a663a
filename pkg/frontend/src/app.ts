// Three-view authoring shell: Chart View (data mapping + style), Video View
// (anchor picking, 3D adjustment, preview), Timeline View (multi-track
// segment editing). All mutations go through the service; previews are
// optimistic and the server re-render is authoritative.

import { ApiClient } from "./api.js";
import { buildAnchorRequest } from "./anchor.js";
import { applyDrag, applyRightDrag, applyScroll } from "./gizmo.js";
import { SessionState } from "./state.js";
import { dragSegment, validateSegments } from "./timeline.js";
import type { AnchorMode, SegmentDTO } from "./types.js";
import { identityPlacement, defaultBehavior } from "./types.js";

const POLL_INTERVAL_MS = 500;
const TIMELINE_PX_PER_FRAME = 6;

export class AuthoringApp {
  private state: SessionState;
  private mode: AnchorMode = "camera";
  private videoImg!: HTMLImageElement;
  private statusEl!: HTMLElement;
  private timelineEl!: HTMLElement;
  private chartListEl!: HTMLElement;
  private scrubber!: HTMLInputElement;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    state: SessionState,
  ) {
    this.state = state;
  }

  static async boot(root: HTMLElement, api: ApiClient, projectId: string): Promise<AuthoringApp> {
    const project = await api.getProject(projectId);
    const app = new AuthoringApp(root, api, new SessionState(projectId, project));
    app.render();
    return app;
  }

  private setStatus(text: string): void {
    this.statusEl.textContent = text;
  }

  private async refreshProject(): Promise<void> {
    this.state.replaceProject(await this.api.getProject(this.state.projectId));
    this.renderTimeline();
    this.renderChartList();
  }

  private frameSize() {
    return { width: this.state.project.video.width, height: this.state.project.video.height };
  }

  private showFrame(): void {
    this.videoImg.src = this.api.frameUrl(
      this.state.projectId,
      this.state.currentFrame,
      this.state.lastRenderKey,
    );
  }

  render(): void {
    this.root.innerHTML = "";
    this.root.className = "cb-app";

    const chartView = document.createElement("section");
    chartView.className = "cb-chart-view";
    chartView.innerHTML = "<h2>Charts</h2>";
    this.chartListEl = document.createElement("div");
    chartView.appendChild(this.chartListEl);

    const videoView = document.createElement("section");
    videoView.className = "cb-video-view";
    const toolbar = document.createElement("div");
    toolbar.className = "cb-toolbar";
    const modeButton = document.createElement("button");
    modeButton.textContent = "mode: camera";
    modeButton.onclick = () => {
      this.mode = this.mode === "camera" ? "object" : "camera";
      modeButton.textContent = `mode: ${this.mode}`;
    };
    const trackButton = document.createElement("button");
    trackButton.textContent = "Track";
    trackButton.onclick = () => void this.runTracking();
    const renderButton = document.createElement("button");
    renderButton.textContent = "Render";
    renderButton.onclick = () => void this.runRender();
    const exportButton = document.createElement("button");
    exportButton.textContent = "Export";
    exportButton.onclick = () => void this.runExport();
    toolbar.append(modeButton, trackButton, renderButton, exportButton);

    this.videoImg = document.createElement("img");
    this.videoImg.className = "cb-video-frame";
    this.videoImg.draggable = false;
    this.installVideoHandlers();

    this.statusEl = document.createElement("div");
    this.statusEl.className = "cb-status";
    videoView.append(toolbar, this.videoImg, this.statusEl);

    const timelineView = document.createElement("section");
    timelineView.className = "cb-timeline-view";
    this.scrubber = document.createElement("input");
    this.scrubber.type = "range";
    this.scrubber.min = "0";
    this.scrubber.max = String(this.state.frameCount - 1);
    this.scrubber.value = "0";
    this.scrubber.oninput = () => {
      this.state.setFrame(Number(this.scrubber.value));
      this.showFrame();
    };
    this.timelineEl = document.createElement("div");
    this.timelineEl.className = "cb-tracks";
    timelineView.append(this.scrubber, this.timelineEl);

    this.root.append(chartView, videoView, timelineView);
    this.renderChartList();
    this.renderTimeline();
    this.showFrame();
  }

  private installVideoHandlers(): void {
    this.videoImg.addEventListener("click", (event) => void this.onVideoClick(event));
    this.videoImg.addEventListener("wheel", (event) => {
      event.preventDefault();
      void this.onGizmo("scroll", -event.deltaY, 0);
    });
    let dragging: { button: number; lastX: number; lastY: number } | null = null;
    this.videoImg.addEventListener("contextmenu", (event) => event.preventDefault());
    this.videoImg.addEventListener("pointerdown", (event) => {
      if (event.button === 0 && !event.shiftKey) return; // plain click = anchor pick
      event.preventDefault();
      dragging = { button: event.button, lastX: event.clientX, lastY: event.clientY };
      this.videoImg.setPointerCapture(event.pointerId);
    });
    this.videoImg.addEventListener("pointermove", (event) => {
      if (!dragging) return;
      const dx = event.clientX - dragging.lastX;
      const dy = event.clientY - dragging.lastY;
      dragging.lastX = event.clientX;
      dragging.lastY = event.clientY;
      void this.onGizmo(dragging.button === 2 ? "rotate" : "pan", dx, dy);
    });
    this.videoImg.addEventListener("pointerup", (event) => {
      if (!dragging) return;
      dragging = null;
      this.videoImg.releasePointerCapture(event.pointerId);
      void this.commitPlacement();
    });
  }

  private async onVideoClick(event: MouseEvent): Promise<void> {
    const rect = this.videoImg.getBoundingClientRect();
    const request = buildAnchorRequest({
      point: { x: event.clientX, y: event.clientY },
      rect: { left: rect.left, top: rect.top, width: rect.width, height: rect.height },
      frame: this.frameSize(),
      frameIndex: this.state.currentFrame,
      mode: this.mode,
    });
    if (request === null) {
      this.setStatus("click inside the video to place an anchor");
      return;
    }
    const { id } = await this.api.putAnchor(this.state.projectId, request);
    this.setStatus(`anchor ${id} at (${request.pixel[0].toFixed(1)}, ${request.pixel[1].toFixed(1)})`);
    await this.refreshProject();
  }

  private async onGizmo(kind: "pan" | "scroll" | "rotate", a: number, b: number): Promise<void> {
    const segmentId = this.state.selectedSegmentId;
    if (!segmentId) {
      this.setStatus("select a segment before adjusting placement");
      return;
    }
    const placement = this.state.effectivePlacement(segmentId);
    if (!placement) return;
    // meters per displayed pixel at a nominal 2 m working distance
    const rect = this.videoImg.getBoundingClientRect();
    const scale = rect.width > 0 ? this.frameSize().width / rect.width : 1;
    const metersPerPixel = (2.0 / (0.9 * this.frameSize().width)) * scale;
    const next =
      kind === "pan"
        ? applyDrag(placement, a, b, metersPerPixel)
        : kind === "scroll"
          ? applyScroll(placement, a)
          : applyRightDrag(placement, a, b);
    this.state.stagePlacement(segmentId, next);
    this.setStatus(`placement staged for ${segmentId} (release to commit)`);
  }

  private async commitPlacement(): Promise<void> {
    const segmentId = this.state.selectedSegmentId;
    if (!segmentId) return;
    const placement = this.state.takePendingPlacement(segmentId);
    if (!placement) return;
    const segment = this.state.project.segments.find((s) => s.id === segmentId);
    if (!segment) return;
    await this.api.putSegment(this.state.projectId, { ...segment, placement });
    await this.refreshProject();
    this.setStatus(`placement committed for ${segmentId}`);
  }

  private renderChartList(): void {
    this.chartListEl.innerHTML = "";
    for (const [chartId, chart] of Object.entries(this.state.project.charts)) {
      const row = document.createElement("div");
      row.className = "cb-chart-row" + (chartId === this.state.selectedChartId ? " selected" : "");
      row.textContent = `${chartId}: ${chart.spec.kind} (${chart.dataset})`;
      row.onclick = () => {
        this.state.selectChart(chartId);
        this.renderChartList();
      };
      this.chartListEl.appendChild(row);
    }
  }

  private renderTimeline(): void {
    this.timelineEl.innerHTML = "";
    const tracks = new Map<number, SegmentDTO[]>();
    for (const segment of this.state.project.segments) {
      const list = tracks.get(segment.track_index) ?? [];
      list.push(segment);
      tracks.set(segment.track_index, list);
    }
    const maxTrack = Math.max(0, ...tracks.keys());
    for (let track = 0; track <= maxTrack; track++) {
      const lane = document.createElement("div");
      lane.className = "cb-lane";
      for (const segment of tracks.get(track) ?? []) {
        lane.appendChild(this.segmentElement(segment));
      }
      this.timelineEl.appendChild(lane);
    }
  }

  private segmentElement(segment: SegmentDTO): HTMLElement {
    const el = document.createElement("div");
    el.className = "cb-segment" + (segment.id === this.state.selectedSegmentId ? " selected" : "");
    el.style.left = `${segment.start_frame * TIMELINE_PX_PER_FRAME}px`;
    el.style.width = `${(segment.end_frame - segment.start_frame + 1) * TIMELINE_PX_PER_FRAME}px`;
    el.textContent = segment.id;
    el.onclick = () => {
      this.state.selectSegment(segment.id);
      this.renderTimeline();
      this.renderChartList();
    };
    let gesture: { handle: "start" | "end" | "body"; startX: number } | null = null;
    el.addEventListener("pointerdown", (event) => {
      event.stopPropagation();
      const bounds = el.getBoundingClientRect();
      const nearLeft = event.clientX - bounds.left < 8;
      const nearRight = bounds.right - event.clientX < 8;
      gesture = {
        handle: nearLeft ? "start" : nearRight ? "end" : "body",
        startX: event.clientX,
      };
      el.setPointerCapture(event.pointerId);
    });
    el.addEventListener("pointerup", (event) => {
      if (!gesture) return;
      const deltaFrames = Math.round((event.clientX - gesture.startX) / TIMELINE_PX_PER_FRAME);
      const target =
        gesture.handle === "end"
          ? segment.end_frame + deltaFrames
          : segment.start_frame + deltaFrames;
      const handle = gesture.handle;
      gesture = null;
      if (deltaFrames !== 0) void this.commitSegmentDrag(segment.id, handle, target);
    });
    return el;
  }

  private async commitSegmentDrag(
    segmentId: string,
    handle: "start" | "end" | "body",
    targetFrame: number,
  ): Promise<void> {
    const segments = this.state.project.segments;
    const segment = segments.find((s) => s.id === segmentId);
    if (!segment) return;
    const updated = dragSegment(segments, segmentId, handle, targetFrame, this.state.frameCount);
    if (updated === null || validateSegments(updated, this.state.frameCount) !== null) {
      this.setStatus(`edit rejected for ${segmentId}`);
      this.renderTimeline();
      return;
    }
    const changed = updated.find((s) => s.id === segmentId)!;
    await this.api.putSegment(this.state.projectId, changed);
    await this.refreshProject();
  }

  async addSegment(chartId: string, anchorId: string): Promise<void> {
    const id = `seg-${Date.now().toString(36)}`;
    const segment: SegmentDTO = {
      id,
      chart_id: chartId,
      anchor_id: anchorId,
      track_index: 0,
      start_frame: 0,
      end_frame: this.state.frameCount - 1,
      behavior: defaultBehavior(),
      placement: identityPlacement(),
    };
    await this.api.putSegment(this.state.projectId, segment);
    await this.refreshProject();
  }

  private async runTracking(): Promise<void> {
    this.setStatus(`tracking (${this.mode})...`);
    try {
      await this.api.track(this.state.projectId, this.mode);
      this.setStatus("tracking complete");
    } catch (error) {
      this.setStatus(String(error));
    }
  }

  private async runRender(): Promise<void> {
    const { job } = await this.api.startRender(this.state.projectId);
    this.state.renderJob = job;
    this.setStatus(`render ${job} started`);
    const poll = async (): Promise<void> => {
      const status = await this.api.renderStatus(this.state.projectId, job);
      if (status.status === "done") {
        this.state.lastRenderKey = job;
        this.setStatus(`render ${job} done`);
        this.showFrame();
      } else if (status.status === "failed") {
        this.setStatus(`render failed: ${status.error ?? "unknown"}`);
      } else {
        this.setStatus(`rendering ${status.progress.done}/${status.progress.total}`);
        setTimeout(() => void poll(), POLL_INTERVAL_MS);
      }
    };
    await poll();
  }

  private async runExport(): Promise<void> {
    try {
      const result = await this.api.exportProject(this.state.projectId);
      this.setStatus(`exported to ${result.frames_dir}; encode: ${result.encoder_hint}`);
    } catch (error) {
      this.setStatus(String(error));
    }
  }
}
