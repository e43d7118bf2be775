/** Typed client for the task service JSON API. */

import { SubmissionPayload } from "./editor.js";
import { TrackDoc } from "./model.js";

export interface VideoMetaDoc {
  id: string;
  url: string;
  frame_count: number;
  fps: number;
  width: number;
  height: number;
}

export interface TicketDoc {
  task_id: string;
  worker_id: string;
  slot: number;
  issued_at: number;
  expires_at: number;
}

export interface TaskPayload {
  ticket: TicketDoc;
  task: {
    id: string;
    kind: "singseg" | "singobj";
    video: VideoMetaDoc;
    redundancy: number;
    segment?: [number, number];
    round?: number;
    prior?: { video_id: string; tracks: TrackDoc[]; read_only: boolean };
    instructions: string;
  };
}

export class ApiError extends Error {
  constructor(readonly status: number, readonly body: unknown) {
    super(`service returned ${status}: ${JSON.stringify(body)}`);
  }
}

export class ServiceClient {
  constructor(readonly baseUrl: string, private readonly fetchFn: typeof fetch = fetch) {}

  /** Claim the next open task; null when nothing is available (204). */
  async nextTask(worker: string): Promise<TaskPayload | null> {
    const res = await this.fetchFn(
      `${this.baseUrl}/api/tasks/next?worker=${encodeURIComponent(worker)}`,
    );
    if (res.status === 204) return null;
    if (!res.ok) throw new ApiError(res.status, await res.json());
    return (await res.json()) as TaskPayload;
  }

  async submit(taskId: string, payload: SubmissionPayload): Promise<{ slot: number; state: string }> {
    const res = await this.fetchFn(`${this.baseUrl}/api/tasks/${encodeURIComponent(taskId)}/submissions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (res.status !== 201) throw new ApiError(res.status, await res.json());
    return (await res.json()) as { slot: number; state: string };
  }
}
