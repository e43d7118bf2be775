/**
 * Client-side mirror of the annotation model: boxes pinned to keyframes,
 * linear interpolation in between, binary splits with lineage labels.
 * The interpolation here must agree with the backend engine (golden
 * fixtures hold it to 1e-6 per coordinate).
 */

export interface BoundingBox {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface KeyFrame {
  frame: number;
  box: BoundingBox;
}

export interface SplitEvent {
  frame: number;
  children: [string, string];
}

export interface Track {
  id: string;
  label: string;
  parentId: string | null;
  keyFrames: KeyFrame[]; // strictly increasing by frame
  split: SplitEvent | null;
}

export function validBox(b: BoundingBox): boolean {
  return (
    Number.isFinite(b.x) && Number.isFinite(b.y) &&
    Number.isFinite(b.w) && Number.isFinite(b.h) &&
    b.w > 0 && b.h > 0
  );
}

/** Inclusive [start, end] lifetime; a split ends the track one frame early. */
export function lifetime(t: Track): [number, number] {
  const start = t.keyFrames[0].frame;
  if (t.split !== null) return [start, t.split.frame - 1];
  return [start, t.keyFrames[t.keyFrames.length - 1].frame];
}

/**
 * Box at `frame`: exact at keyframes, linear in between, and the last
 * keyframe's box is held up to a pending split. Same b0 + a*(b1-b0) form
 * as the engine so both sides round identically.
 */
export function interpolateBox(t: Track, frame: number): BoundingBox {
  const [start, end] = lifetime(t);
  if (frame < start || frame > end) {
    throw new RangeError(`frame ${frame} outside track ${t.id} lifetime [${start}, ${end}]`);
  }
  const kfs = t.keyFrames;
  let hi = kfs.length;
  let lo = 0;
  while (lo < hi) { // first keyframe strictly after `frame`
    const mid = (lo + hi) >> 1;
    if (kfs[mid].frame <= frame) lo = mid + 1;
    else hi = mid;
  }
  if (lo === kfs.length) return { ...kfs[kfs.length - 1].box };
  const prev = kfs[lo - 1];
  if (prev.frame === frame) return { ...prev.box };
  const next = kfs[lo];
  const a = (frame - prev.frame) / (next.frame - prev.frame);
  return {
    x: prev.box.x + a * (next.box.x - prev.box.x),
    y: prev.box.y + a * (next.box.y - prev.box.y),
    w: prev.box.w + a * (next.box.w - prev.box.w),
    h: prev.box.h + a * (next.box.h - prev.box.h),
  };
}

export function densify(t: Track): Map<number, BoundingBox> {
  const [start, end] = lifetime(t);
  const out = new Map<number, BoundingBox>();
  for (let f = start; f <= end; f++) out.set(f, interpolateBox(t, f));
  return out;
}

const LABEL_RE = /^[1-9][0-9]*(-[12])*$/;

export function validLabel(text: string): boolean {
  return LABEL_RE.test(text);
}

export function childLabel(parent: string, which: 1 | 2): string {
  return `${parent}-${which}`;
}

/** Insert or replace the keyframe at `frame`, keeping the list sorted. */
export function upsertKeyFrame(kfs: KeyFrame[], frame: number, box: BoundingBox): KeyFrame[] {
  const out = kfs.filter((kf) => kf.frame !== frame);
  out.push({ frame, box: { ...box } });
  out.sort((a, b) => a.frame - b.frame);
  return out;
}

/** Wire shape of one track in the service/native document. */
export interface TrackDoc {
  id: string;
  label: string;
  parent_id?: string;
  split?: { frame: number; children: [string, string] };
  key_frames: { frame: number; x: number; y: number; w: number; h: number }[];
}

export function trackToDoc(t: Track): TrackDoc {
  const doc: TrackDoc = {
    id: t.id,
    label: t.label,
    key_frames: t.keyFrames.map((kf) => ({
      frame: kf.frame, x: kf.box.x, y: kf.box.y, w: kf.box.w, h: kf.box.h,
    })),
  };
  if (t.parentId !== null) doc.parent_id = t.parentId;
  if (t.split !== null) doc.split = { frame: t.split.frame, children: t.split.children };
  return doc;
}

export function trackFromDoc(doc: TrackDoc): Track {
  return {
    id: doc.id,
    label: doc.label,
    parentId: doc.parent_id ?? null,
    keyFrames: doc.key_frames
      .map((kf) => ({ frame: kf.frame, box: { x: kf.x, y: kf.y, w: kf.w, h: kf.h } }))
      .sort((a, b) => a.frame - b.frame),
    split: doc.split ? { frame: doc.split.frame, children: doc.split.children } : null,
  };
}
