/**
 * Annotation editor state machine, independent of the DOM so the gating
 * rules are testable headlessly.
 *
 * Mirrors the server's contract: a box must be created AND moved (two
 * keyframes per root) before submission, a full-video preview is required
 * after the last edit, single-object tasks allow exactly one root track,
 * and a track splits at most once, into children labelled parent-1 and
 * parent-2. Prior tracks from earlier workers render read-only and are
 * never touched by any interaction.
 */

import {
  BoundingBox,
  Track,
  TrackDoc,
  childLabel,
  interpolateBox,
  lifetime,
  trackToDoc,
  upsertKeyFrame,
  validBox,
} from "./model.js";

export type EditorMode = "singseg" | "singobj";

export type Handle = "nw" | "n" | "ne" | "e" | "se" | "s" | "sw" | "w";

export const HANDLES: Handle[] = ["nw", "n", "ne", "e", "se", "s", "sw", "w"];

export type SubmitBlocker =
  | { gate: "no-tracks" }
  | { gate: "keyframes"; track: string }
  | { gate: "single-object"; roots: number }
  | { gate: "preview" };

export interface SubmissionPayload {
  worker_id: string;
  tracks: TrackDoc[];
  elapsed_ms: number;
  feedback?: string;
  preview_completed: boolean;
}

const MIN_SIZE = 2; // px; resizing clamps rather than inverting the box

export class Editor {
  readonly mode: EditorMode;
  readonly prior: readonly Track[];
  readonly drafts: Track[] = [];
  selectedId: string | null = null;
  previewCompleted = false;
  dirtySincePreview = true;
  feedback = "";
  /** Fired on any edit; the shell hooks this to reset preview coverage. */
  onEdit: (() => void) | null = null;

  private readonly startedAt: number;
  private readonly now: () => number;
  private nextId = 1;

  constructor(mode: EditorMode, prior: Track[] = [], now: () => number = Date.now) {
    this.mode = mode;
    this.prior = prior.map((t) => Object.freeze(structuredClone(t)));
    this.now = now;
    this.startedAt = now();
  }

  rootCount(): number {
    return this.drafts.filter((t) => t.parentId === null).length;
  }

  /** Single-object tasks disable the new-box control after the first box. */
  canDrawNewBox(): boolean {
    return this.mode !== "singobj" || this.rootCount() === 0;
  }

  drawBox(frame: number, box: BoundingBox): Track | null {
    if (!this.canDrawNewBox() || !validBox(box)) return null;
    const track: Track = {
      id: `d${this.nextId++}`,
      label: String(this.nextRootNumber()),
      parentId: null,
      keyFrames: [{ frame: Math.round(frame), box: { ...box } }],
      split: null,
    };
    this.drafts.push(track);
    this.selectedId = track.id;
    this.markEdited();
    return track;
  }

  draft(trackId: string): Track | undefined {
    return this.drafts.find((t) => t.id === trackId);
  }

  selected(): Track | undefined {
    return this.selectedId === null ? undefined : this.draft(this.selectedId);
  }

  /** Box shown at a frame; live interpolation between keyframes.
   *
   * An unsplit draft keeps following the playhead past its last keyframe
   * (holding that box) so the worker can play on and keep adjusting it;
   * the recorded lifetime still ends at the last keyframe. Prior tracks
   * render strictly within their lifetimes.
   */
  boxAt(trackId: string, frame: number): BoundingBox | null {
    const draft = this.draft(trackId);
    const t = draft ?? this.prior.find((p) => p.id === trackId);
    if (!t) return null;
    const [lo, hi] = lifetime(t);
    if (frame < lo) return null;
    if (frame > hi) {
      if (draft && t.split === null) return { ...t.keyFrames[t.keyFrames.length - 1].box };
      return null;
    }
    return interpolateBox(t, frame);
  }

  /** Record the box for `trackId` at `frame` (move or retime). */
  setKeyFrame(trackId: string, frame: number, box: BoundingBox): boolean {
    const t = this.draft(trackId);
    frame = Math.round(frame);
    if (!t || !validBox(box) || frame < 0) return false;
    if (t.split !== null && frame >= t.split.frame) return false; // parent ended there
    if (t.parentId !== null && frame < t.keyFrames[0].frame) return false; // child birth is pinned
    t.keyFrames = upsertKeyFrame(t.keyFrames, frame, box);
    this.markEdited();
    return true;
  }

  moveBy(trackId: string, frame: number, dx: number, dy: number): boolean {
    const base = this.boxAt(trackId, frame) ?? this.draft(trackId)?.keyFrames[0]?.box;
    if (!base) return false;
    return this.setKeyFrame(trackId, frame, { ...base, x: base.x + dx, y: base.y + dy });
  }

  /** Resize from one of the eight handles, clamped to a minimum size. */
  resizeWithHandle(trackId: string, frame: number, handle: Handle, dx: number, dy: number): boolean {
    const base = this.boxAt(trackId, frame);
    if (!base) return false;
    let { x, y, w, h } = base;
    if (handle.includes("w")) {
      const move = Math.min(dx, w - MIN_SIZE);
      x += move;
      w -= move;
    }
    if (handle.includes("e")) w = Math.max(MIN_SIZE, w + dx);
    if (handle.includes("n")) {
      const move = Math.min(dy, h - MIN_SIZE);
      y += move;
      h -= move;
    }
    if (handle.includes("s")) h = Math.max(MIN_SIZE, h + dy);
    return this.setKeyFrame(trackId, frame, { x, y, w, h });
  }

  canSplit(trackId: string, frame: number): boolean {
    const t = this.draft(trackId);
    if (!t || t.split !== null) return false;
    return Math.round(frame) > t.keyFrames[0].frame;
  }

  /**
   * End the selected track here and seed two adjustable child boxes,
   * labelled parent-1 / parent-2.
   */
  markSplit(trackId: string, frame: number, boxA?: BoundingBox, boxB?: BoundingBox): [Track, Track] | null {
    if (!this.canSplit(trackId, frame)) return null;
    const t = this.draft(trackId)!;
    frame = Math.round(frame);
    const last = interpolateBox(t, Math.min(frame - 1, lifetime(t)[1]));
    const a = boxA ?? { x: last.x, y: last.y, w: last.w / 2, h: last.h };
    const b = boxB ?? { x: last.x + last.w / 2, y: last.y, w: last.w / 2, h: last.h };
    if (!validBox(a) || !validBox(b)) return null;
    const children: [Track, Track] = [
      {
        id: `d${this.nextId++}`,
        label: childLabel(t.label, 1),
        parentId: t.id,
        keyFrames: [{ frame, box: { ...a } }],
        split: null,
      },
      {
        id: `d${this.nextId++}`,
        label: childLabel(t.label, 2),
        parentId: t.id,
        keyFrames: [{ frame, box: { ...b } }],
        split: null,
      },
    ];
    t.keyFrames = t.keyFrames.filter((kf) => kf.frame < frame);
    t.split = { frame, children: [children[0].id, children[1].id] };
    this.drafts.push(...children);
    this.markEdited();
    return children;
  }

  /** Player calls this once review coverage reaches every frame. */
  completePreview(): void {
    this.previewCompleted = true;
    this.dirtySincePreview = false;
  }

  private markEdited(): void {
    this.previewCompleted = false;
    this.dirtySincePreview = true;
    this.onEdit?.();
  }

  /** Unmet submit gates, in display order; empty means submittable. */
  submitBlockers(): SubmitBlocker[] {
    const blockers: SubmitBlocker[] = [];
    const roots = this.drafts.filter((t) => t.parentId === null);
    if (roots.length === 0) blockers.push({ gate: "no-tracks" });
    for (const t of roots) {
      if (t.keyFrames.length < 2) blockers.push({ gate: "keyframes", track: t.id });
    }
    if (this.mode === "singobj" && roots.length !== 1) {
      blockers.push({ gate: "single-object", roots: roots.length });
    }
    if (!this.previewCompleted) blockers.push({ gate: "preview" });
    return blockers;
  }

  canSubmit(): boolean {
    return this.submitBlockers().length === 0;
  }

  submissionPayload(workerId: string): SubmissionPayload {
    const payload: SubmissionPayload = {
      worker_id: workerId,
      tracks: this.drafts.map(trackToDoc),
      elapsed_ms: Math.max(0, Math.round(this.now() - this.startedAt)),
      preview_completed: this.previewCompleted,
    };
    if (this.feedback.trim() !== "") payload.feedback = this.feedback.trim();
    return payload;
  }

  private nextRootNumber(): number {
    let max = 0;
    for (const t of [...this.prior, ...this.drafts]) {
      const root = parseInt(t.label.split("-")[0], 10);
      if (Number.isFinite(root)) max = Math.max(max, root);
    }
    return max + 1;
  }
}
