/**
 * Browser shell: a <video> with a canvas overlay and the control strip.
 *
 * The integer frame counter (FramePlayer) is the authority; the video
 * element is slaved to it. Pointer gestures on the overlay create, move,
 * and resize boxes (eight handles); gate indicators and the submit button
 * track the editor's blockers live. Prior tracks render muted and dashed
 * and accept no pointer interaction.
 */

import { ServiceClient, TaskPayload } from "./api.js";
import { Editor, EditorMode, HANDLES, Handle, SubmitBlocker } from "./editor.js";
import { BoundingBox, Track, trackFromDoc } from "./model.js";
import { FramePlayer, PLAYBACK_SPEEDS, PlaybackSpeed } from "./player.js";

const HANDLE_SIZE = 8;

type Drag =
  | { kind: "draw"; startX: number; startY: number }
  | { kind: "move"; trackId: string; lastX: number; lastY: number }
  | { kind: "resize"; trackId: string; handle: Handle; lastX: number; lastY: number };

function handlePositions(b: BoundingBox): Record<Handle, [number, number]> {
  const midX = b.x + b.w / 2;
  const midY = b.y + b.h / 2;
  return {
    nw: [b.x, b.y], n: [midX, b.y], ne: [b.x + b.w, b.y],
    e: [b.x + b.w, midY], se: [b.x + b.w, b.y + b.h], s: [midX, b.y + b.h],
    sw: [b.x, b.y + b.h], w: [b.x, midY],
  };
}

export function hitHandle(b: BoundingBox, px: number, py: number): Handle | null {
  const positions = handlePositions(b);
  for (const h of HANDLES) {
    const [hx, hy] = positions[h];
    if (Math.abs(px - hx) <= HANDLE_SIZE && Math.abs(py - hy) <= HANDLE_SIZE) return h;
  }
  return null;
}

export function insideBox(b: BoundingBox, px: number, py: number): boolean {
  return px >= b.x && px <= b.x + b.w && py >= b.y && py <= b.y + b.h;
}

export function describeBlocker(b: SubmitBlocker): string {
  switch (b.gate) {
    case "no-tracks":
      return "draw a bounding box around an object";
    case "keyframes":
      return `move the box for object ${b.track} at least once`;
    case "single-object":
      return "this task covers exactly one object";
    case "preview":
      return "replay the whole video to review your annotation";
  }
}

export class AnnotatorApp {
  readonly editor: Editor;
  readonly player: FramePlayer;
  readonly canvas: HTMLCanvasElement;
  readonly video: HTMLVideoElement;
  readonly newBoxButton: HTMLButtonElement;
  readonly splitButton: HTMLButtonElement;
  readonly submitButton: HTMLButtonElement;
  readonly playButton: HTMLButtonElement;
  readonly stepBackButton: HTMLButtonElement;
  readonly stepForwardButton: HTMLButtonElement;
  readonly speedSelect: HTMLSelectElement;
  readonly frameLabel: HTMLSpanElement;
  readonly gateList: HTMLUListElement;
  readonly feedbackInput: HTMLTextAreaElement;
  private drag: Drag | null = null;
  private drawArmed = false;
  onSubmitted: ((result: { slot: number; state: string }) => void) | null = null;

  constructor(
    readonly container: HTMLElement,
    mode: EditorMode,
    readonly meta: { frameCount: number; fps: number; width: number; height: number; url: string },
    prior: Track[],
    private readonly workerId: string,
    private readonly taskId: string,
    private readonly client: ServiceClient | null,
  ) {
    this.editor = new Editor(mode, prior);
    this.player = new FramePlayer(meta.frameCount, meta.fps);
    this.editor.onEdit = () => {
      this.player.resetCoverage();
      this.refresh();
    };

    const doc = container.ownerDocument;
    this.video = doc.createElement("video");
    this.video.src = meta.url;
    this.video.muted = true;
    this.canvas = doc.createElement("canvas");
    this.canvas.width = meta.width;
    this.canvas.height = meta.height;
    this.newBoxButton = doc.createElement("button");
    this.newBoxButton.textContent = "New box";
    this.splitButton = doc.createElement("button");
    this.splitButton.textContent = "Mark split";
    this.submitButton = doc.createElement("button");
    this.submitButton.textContent = "Submit";
    this.playButton = doc.createElement("button");
    this.playButton.textContent = "Play";
    this.stepBackButton = doc.createElement("button");
    this.stepBackButton.textContent = "<";
    this.stepForwardButton = doc.createElement("button");
    this.stepForwardButton.textContent = ">";
    this.speedSelect = doc.createElement("select");
    for (const s of PLAYBACK_SPEEDS) {
      const opt = doc.createElement("option");
      opt.value = String(s);
      opt.textContent = `${s}x`;
      this.speedSelect.appendChild(opt);
    }
    this.speedSelect.value = "1";
    this.frameLabel = doc.createElement("span");
    this.gateList = doc.createElement("ul");
    this.gateList.className = "gates";
    this.feedbackInput = doc.createElement("textarea");
    this.feedbackInput.placeholder = "Feedback or suggestions (optional)";

    for (const el of [
      this.video, this.canvas, this.playButton, this.stepBackButton,
      this.stepForwardButton, this.speedSelect, this.frameLabel,
      this.newBoxButton, this.splitButton, this.feedbackInput,
      this.gateList, this.submitButton,
    ]) {
      container.appendChild(el);
    }

    this.newBoxButton.addEventListener("click", () => {
      this.drawArmed = this.editor.canDrawNewBox();
      this.refresh();
    });
    this.splitButton.addEventListener("click", () => this.split());
    this.submitButton.addEventListener("click", () => void this.submit());
    this.playButton.addEventListener("click", () => this.togglePlay());
    this.stepBackButton.addEventListener("click", () => {
      this.player.stepBack();
      this.afterFrameChange();
    });
    this.stepForwardButton.addEventListener("click", () => {
      this.player.stepForward();
      this.afterFrameChange();
    });
    this.speedSelect.addEventListener("change", () => {
      this.player.setSpeed(Number(this.speedSelect.value) as PlaybackSpeed);
    });
    this.feedbackInput.addEventListener("input", () => {
      this.editor.feedback = this.feedbackInput.value;
    });
    this.canvas.addEventListener("pointerdown", (e) =>
      this.pointerDown(e.offsetX, e.offsetY),
    );
    this.canvas.addEventListener("pointermove", (e) =>
      this.pointerMove(e.offsetX, e.offsetY),
    );
    this.canvas.addEventListener("pointerup", () => this.pointerUp());
    this.refresh();
  }

  // -- playback ---------------------------------------------------------------

  togglePlay(): void {
    if (this.player.playing) this.player.pause();
    else this.player.play();
    this.refresh();
  }

  /** rAF driver: advance the logical clock, slave the video element to it. */
  tick(dtSeconds: number): void {
    const before = this.player.currentFrame;
    this.player.tick(dtSeconds);
    if (this.player.currentFrame !== before) this.afterFrameChange();
  }

  private afterFrameChange(): void {
    this.video.currentTime = this.player.timeForFrame(this.player.currentFrame);
    if (this.player.coverageComplete() && this.editor.dirtySincePreview) {
      this.editor.completePreview();
    }
    this.refresh();
  }

  // -- pointer gestures ---------------------------------------------------------

  pointerDown(x: number, y: number): void {
    const frame = this.player.currentFrame;
    const selected = this.editor.selected();
    if (this.drawArmed) {
      this.drag = { kind: "draw", startX: x, startY: y };
      return;
    }
    if (selected) {
      const box = this.editor.boxAt(selected.id, frame);
      if (box) {
        const handle = hitHandle(box, x, y);
        if (handle) {
          this.drag = { kind: "resize", trackId: selected.id, handle, lastX: x, lastY: y };
          return;
        }
      }
    }
    for (const t of this.editor.drafts) {
      const box = this.editor.boxAt(t.id, frame);
      if (box && insideBox(box, x, y)) {
        this.editor.selectedId = t.id;
        this.drag = { kind: "move", trackId: t.id, lastX: x, lastY: y };
        this.refresh();
        return;
      }
    }
  }

  pointerMove(x: number, y: number): void {
    if (!this.drag) return;
    const frame = this.player.currentFrame;
    if (this.drag.kind === "move") {
      this.editor.moveBy(this.drag.trackId, frame, x - this.drag.lastX, y - this.drag.lastY);
      this.drag.lastX = x;
      this.drag.lastY = y;
    } else if (this.drag.kind === "resize") {
      this.editor.resizeWithHandle(
        this.drag.trackId, frame, this.drag.handle,
        x - this.drag.lastX, y - this.drag.lastY,
      );
      this.drag.lastX = x;
      this.drag.lastY = y;
    }
    this.refresh();
  }

  pointerUp(x?: number, y?: number): void {
    if (this.drag?.kind === "draw") {
      const endX = x ?? this.drag.startX;
      const endY = y ?? this.drag.startY;
      const box: BoundingBox = {
        x: Math.min(this.drag.startX, endX),
        y: Math.min(this.drag.startY, endY),
        w: Math.abs(endX - this.drag.startX),
        h: Math.abs(endY - this.drag.startY),
      };
      if (box.w >= 2 && box.h >= 2) {
        this.editor.drawBox(this.player.currentFrame, box);
        this.drawArmed = false;
      }
    }
    this.drag = null;
    this.refresh();
  }

  // -- actions -------------------------------------------------------------------

  split(): void {
    const selected = this.editor.selected();
    if (!selected) return;
    this.editor.markSplit(selected.id, this.player.currentFrame);
    this.refresh();
  }

  async submit(): Promise<void> {
    if (!this.editor.canSubmit() || this.client === null) return;
    const result = await this.client.submit(
      this.taskId, this.editor.submissionPayload(this.workerId),
    );
    this.onSubmitted?.(result);
  }

  // -- view sync -------------------------------------------------------------------

  refresh(): void {
    const selected = this.editor.selected();
    this.newBoxButton.disabled = !this.editor.canDrawNewBox();
    this.splitButton.disabled =
      !selected || !this.editor.canSplit(selected.id, this.player.currentFrame);
    this.submitButton.disabled = !this.editor.canSubmit();
    this.playButton.textContent = this.player.playing ? "Pause" : "Play";
    this.frameLabel.textContent = `frame ${this.player.currentFrame + 1} / ${this.meta.frameCount}`;
    this.gateList.textContent = "";
    for (const blocker of this.editor.submitBlockers()) {
      const li = this.container.ownerDocument.createElement("li");
      li.textContent = describeBlocker(blocker);
      this.gateList.appendChild(li);
    }
    this.renderOverlay();
  }

  renderOverlay(): void {
    const ctx = this.canvas.getContext?.("2d");
    if (!ctx) return; // headless test environments have no 2D context
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    const frame = this.player.currentFrame;
    for (const t of this.editor.prior) {
      this.drawTrack(ctx, t, frame, { muted: true, selected: false });
    }
    for (const t of this.editor.drafts) {
      this.drawTrack(ctx, t, frame, { muted: false, selected: t.id === this.editor.selectedId });
    }
  }

  private drawTrack(
    ctx: CanvasRenderingContext2D,
    t: Track,
    frame: number,
    style: { muted: boolean; selected: boolean },
  ): void {
    const box = this.editor.boxAt(t.id, frame);
    if (!box) return;
    ctx.save();
    ctx.lineWidth = style.selected ? 3 : 2;
    ctx.strokeStyle = style.muted ? "rgba(160,160,160,0.8)" : colorFor(t.label);
    if (style.muted) ctx.setLineDash([6, 4]);
    ctx.strokeRect(box.x, box.y, box.w, box.h);
    ctx.font = "12px sans-serif";
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(t.label, box.x + box.w - 8 * t.label.length, box.y - 4); // label top-right
    if (style.selected && !style.muted) {
      ctx.fillStyle = "#ffffff";
      for (const [hx, hy] of Object.values(handlePositions(box))) {
        ctx.fillRect(hx - HANDLE_SIZE / 2, hy - HANDLE_SIZE / 2, HANDLE_SIZE, HANDLE_SIZE);
        ctx.strokeRect(hx - HANDLE_SIZE / 2, hy - HANDLE_SIZE / 2, HANDLE_SIZE, HANDLE_SIZE);
      }
    }
    ctx.restore();
  }
}

function colorFor(label: string): string {
  const hues = [15, 95, 140, 200, 260, 320];
  const root = parseInt(label.split("-")[0], 10) || 0;
  return `hsl(${hues[root % hues.length]}, 85%, 55%)`;
}

export function appFromTask(
  container: HTMLElement,
  payload: TaskPayload,
  workerId: string,
  client: ServiceClient | null,
): AnnotatorApp {
  const prior = (payload.task.prior?.tracks ?? []).map(trackFromDoc);
  return new AnnotatorApp(
    container,
    payload.task.kind,
    {
      frameCount: payload.task.video.frame_count,
      fps: payload.task.video.fps,
      width: payload.task.video.width,
      height: payload.task.video.height,
      url: payload.task.video.url,
    },
    prior,
    workerId,
    payload.task.id,
    client,
  );
}
