/**
 * Frame-accurate playback state. The integer frame counter is the single
 * source of truth: annotations render against frame index, never wall
 * time. Playback advances through frames (marking them reviewed), while a
 * scrub jump only marks its landing frame, so "previewed the whole video"
 * means every frame was actually visited.
 */

export const PLAYBACK_SPEEDS = [0.25, 0.5, 1, 1.5, 2] as const;
export type PlaybackSpeed = (typeof PLAYBACK_SPEEDS)[number];

export class FramePlayer {
  readonly frameCount: number;
  readonly fps: number;
  speed: PlaybackSpeed = 1;
  playing = false;
  private frame = 0;
  private fractional = 0; // sub-frame accumulator between ticks
  private covered: Uint8Array;

  constructor(frameCount: number, fps: number) {
    if (frameCount <= 0 || fps <= 0) throw new RangeError("frameCount and fps must be positive");
    this.frameCount = frameCount;
    this.fps = fps;
    this.covered = new Uint8Array(frameCount);
    this.covered[0] = 1;
  }

  get currentFrame(): number {
    return this.frame;
  }

  setSpeed(speed: PlaybackSpeed): void {
    if (!PLAYBACK_SPEEDS.includes(speed)) throw new RangeError(`unsupported speed ${speed}`);
    this.speed = speed;
  }

  play(): void {
    this.playing = true;
  }

  pause(): void {
    this.playing = false;
    this.fractional = 0;
  }

  /** Advance by wall-clock dt; passes through (and covers) skipped frames. */
  tick(dtSeconds: number): void {
    if (!this.playing || dtSeconds <= 0) return;
    this.fractional += dtSeconds * this.fps * this.speed;
    const steps = Math.floor(this.fractional);
    if (steps <= 0) return;
    this.fractional -= steps;
    const target = Math.min(this.frame + steps, this.frameCount - 1);
    for (let f = this.frame + 1; f <= target; f++) this.covered[f] = 1;
    this.frame = target;
    if (this.frame === this.frameCount - 1) this.playing = false; // clamp at the end
  }

  stepForward(): void {
    this.seek(this.frame + 1);
  }

  stepBack(): void {
    this.seek(this.frame - 1);
  }

  seek(frame: number): void {
    this.frame = Math.min(Math.max(Math.round(frame), 0), this.frameCount - 1);
    this.covered[this.frame] = 1;
  }

  /** Frame for a media time, rounded and clamped: keyframes snap to ints. */
  frameForTime(tSeconds: number): number {
    return Math.min(Math.max(Math.round(tSeconds * this.fps), 0), this.frameCount - 1);
  }

  timeForFrame(frame: number): number {
    return frame / this.fps;
  }

  /** Forget review coverage (an edit invalidates the preview). */
  resetCoverage(): void {
    this.covered = new Uint8Array(this.frameCount);
    this.covered[this.frame] = 1;
  }

  coverageComplete(): boolean {
    return this.covered.every((v) => v === 1);
  }

  coveredCount(): number {
    let n = 0;
    for (const v of this.covered) n += v;
    return n;
  }
}
