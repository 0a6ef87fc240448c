/** Pure box geometry in raw image coordinates.
 *
 * Everything the canvas does is expressed through these functions so the
 * stored coordinates can be proven independent of any display transform:
 * `toImageRect` and `toCanvasRect` are exact inverses at any scale.
 */

import type { BoxRecord } from './api.js';

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export type Handle = 'nw' | 'n' | 'ne' | 'e' | 'se' | 's' | 'sw' | 'w' | 'move';

export const MIN_BOX_SIZE = 1;

/** Drag corners in any direction; the result has positive extent. */
export function normalizeRect(x0: number, y0: number, x1: number, y1: number): Rect {
  return {
    x: Math.min(x0, x1),
    y: Math.min(y0, y1),
    w: Math.abs(x1 - x0),
    h: Math.abs(y1 - y0),
  };
}

/** Shrink/shift a rect until it lies inside a width x height image. */
export function clampRect(rect: Rect, width: number, height: number): Rect {
  const w = Math.min(rect.w, width);
  const h = Math.min(rect.h, height);
  const x = Math.min(Math.max(rect.x, 0), width - w);
  const y = Math.min(Math.max(rect.y, 0), height - h);
  return { x, y, w, h };
}

export function toCanvasRect(rect: Rect, scale: number): Rect {
  return { x: rect.x * scale, y: rect.y * scale, w: rect.w * scale, h: rect.h * scale };
}

export function toImageRect(rect: Rect, scale: number): Rect {
  return { x: rect.x / scale, y: rect.y / scale, w: rect.w / scale, h: rect.h / scale };
}

export function rectOf(box: BoxRecord): Rect {
  return { x: box.x, y: box.y, w: box.w, h: box.h };
}

export function withRect(box: BoxRecord, rect: Rect): BoxRecord {
  return { ...box, x: rect.x, y: rect.y, w: rect.w, h: rect.h };
}

export function containsPoint(rect: Rect, px: number, py: number): boolean {
  return px >= rect.x && px <= rect.x + rect.w && py >= rect.y && py <= rect.y + rect.h;
}

const HANDLE_ANCHORS: ReadonlyArray<[Handle, number, number]> = [
  ['nw', 0, 0],
  ['n', 0.5, 0],
  ['ne', 1, 0],
  ['e', 1, 0.5],
  ['se', 1, 1],
  ['s', 0.5, 1],
  ['sw', 0, 1],
  ['w', 0, 0.5],
];

/** Which resize handle (or the body, for moving) sits under a pointer. */
export function hitHandle(rect: Rect, px: number, py: number, tolerance: number): Handle | null {
  for (const [handle, fx, fy] of HANDLE_ANCHORS) {
    const hx = rect.x + fx * rect.w;
    const hy = rect.y + fy * rect.h;
    if (Math.abs(px - hx) <= tolerance && Math.abs(py - hy) <= tolerance) {
      return handle;
    }
  }
  return containsPoint(rect, px, py) ? 'move' : null;
}

/** Apply a pointer drag to one handle, keeping the rect inside the image. */
export function dragHandle(
  rect: Rect,
  handle: Handle,
  dx: number,
  dy: number,
  width: number,
  height: number,
): Rect {
  if (handle === 'move') {
    return clampRect({ ...rect, x: rect.x + dx, y: rect.y + dy }, width, height);
  }
  let x0 = rect.x;
  let y0 = rect.y;
  let x1 = rect.x + rect.w;
  let y1 = rect.y + rect.h;
  if (handle.includes('w')) x0 += dx;
  if (handle.includes('e')) x1 += dx;
  if (handle.includes('n')) y0 += dy;
  if (handle.includes('s')) y1 += dy;
  const next = normalizeRect(x0, y0, x1, y1);
  next.w = Math.max(next.w, MIN_BOX_SIZE);
  next.h = Math.max(next.h, MIN_BOX_SIZE);
  return clampRect(next, width, height);
}

/** Round a rect to whole pixels (the annotation store works in pixel units). */
export function snapRect(rect: Rect): Rect {
  const x = Math.round(rect.x);
  const y = Math.round(rect.y);
  return {
    x,
    y,
    w: Math.max(Math.round(rect.x + rect.w) - x, MIN_BOX_SIZE),
    h: Math.max(Math.round(rect.y + rect.h) - y, MIN_BOX_SIZE),
  };
}
