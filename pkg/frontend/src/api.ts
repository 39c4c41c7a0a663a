// HTTP client for the authoring service. Every UI mutation round-trips
// through these endpoints; there is no client-only state that affects
// rendering.

import type { AnchorDTO, ProjectDTO, RenderJobStatus, SegmentDTO } from "./types.js";

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      const text = await response.text();
      throw new ApiError(response.status, `${method} ${path}: ${response.status} ${text}`);
    }
    return (await response.json()) as T;
  }

  getProject(id: string): Promise<ProjectDTO> {
    return this.request("GET", `/projects/${id}`);
  }

  putProject(id: string, project: ProjectDTO): Promise<ProjectDTO> {
    return this.request("PUT", `/projects/${id}`, project);
  }

  putAnchor(id: string, anchor: AnchorDTO & { id?: string }): Promise<{ id: string }> {
    return this.request("PUT", `/projects/${id}/anchor`, anchor);
  }

  putSegment(id: string, segment: SegmentDTO): Promise<{ id: string }> {
    const { id: segmentId, locked: _locked, ...body } = segment;
    return this.request("PUT", `/projects/${id}/segments/${segmentId}`, body);
  }

  putChart(id: string, chartId: string, spec: unknown, dataset: string): Promise<{ id: string }> {
    return this.request("PUT", `/projects/${id}/charts/${chartId}`, { spec, dataset });
  }

  track(id: string, mode: "camera" | "object", anchorId?: string): Promise<unknown> {
    return this.request("POST", `/projects/${id}/track`, {
      mode,
      ...(anchorId ? { anchor_id: anchorId } : {}),
    });
  }

  startRender(id: string): Promise<{ job: string }> {
    return this.request("POST", `/projects/${id}/render`);
  }

  renderStatus(id: string, job: string): Promise<RenderJobStatus> {
    return this.request("GET", `/projects/${id}/render/${job}/status`);
  }

  exportProject(id: string): Promise<{ frames_dir: string; encoder_hint: string }> {
    return this.request("POST", `/projects/${id}/export`);
  }

  /** cacheKey busts the browser cache after a render completes. */
  frameUrl(id: string, n: number, cacheKey = ""): string {
    const suffix = cacheKey ? `?r=${encodeURIComponent(cacheKey)}` : "";
    return `${this.baseUrl}/projects/${id}/frames/${n}${suffix}`;
  }
}
