/** Canvas rendering and pointer interaction for one band's boxes.
 *
 * The canvas works in display coordinates (image * scale); every mutation
 * converts back to raw image pixels through the pure geometry helpers
 * before it reaches session state, so saved boxes never depend on zoom.
 */

import type { BoxRecord } from './api.js';
import {
  Handle,
  Rect,
  clampRect,
  dragHandle,
  hitHandle,
  normalizeRect,
  rectOf,
  snapRect,
  toCanvasRect,
  toImageRect,
  withRect,
} from './geometry.js';

const HANDLE_TOLERANCE_PX = 6;
const PALETTE = ['#ff5252', '#40c4ff', '#ffd740', '#69f0ae', '#e040fb', '#ffab40'];

interface DragState {
  kind: 'create' | 'adjust';
  startX: number;
  startY: number;
  boxIndex: number;
  handle: Handle;
  original: Rect;
}

export class CanvasView {
  private ctx: CanvasRenderingContext2D;
  private image: HTMLImageElement | null = null;
  private boxes: BoxRecord[] = [];
  private drag: DragState | null = null;
  private imageWidth = 0;
  private imageHeight = 0;

  selectedIndex: number | null = null;
  scale = 4;
  classId = 1;

  /** Fires after any user edit with boxes in raw image coordinates. */
  onChange: (boxes: BoxRecord[]) => void = () => {};

  constructor(private readonly canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext('2d');
    if (!ctx) throw new Error('2d canvas context unavailable');
    this.ctx = ctx;
    canvas.addEventListener('pointerdown', (e) => this.onPointerDown(e));
    canvas.addEventListener('pointermove', (e) => this.onPointerMove(e));
    canvas.addEventListener('pointerup', (e) => this.onPointerUp(e));
  }

  /** Swap in a band image (display-stretched or not) without touching boxes. */
  setImage(url: string, width: number, height: number): Promise<void> {
    this.imageWidth = width;
    this.imageHeight = height;
    this.canvas.width = width * this.scale;
    this.canvas.height = height * this.scale;
    return new Promise((resolve) => {
      const image = new Image();
      image.onload = () => {
        this.image = image;
        this.render();
        resolve();
      };
      image.onerror = () => {
        this.image = null;
        this.render();
        resolve();
      };
      image.src = url;
    });
  }

  setBoxes(boxes: BoxRecord[]): void {
    this.boxes = boxes.map((b) => ({ ...b }));
    if (this.selectedIndex !== null && this.selectedIndex >= this.boxes.length) {
      this.selectedIndex = null;
    }
    this.render();
  }

  deleteSelected(): void {
    if (this.selectedIndex === null) return;
    this.boxes.splice(this.selectedIndex, 1);
    this.selectedIndex = null;
    this.emit();
    this.render();
  }

  private emit(): void {
    this.onChange(this.boxes.map((b) => ({ ...b })));
  }

  private pointer(event: PointerEvent): { x: number; y: number } {
    const bounds = this.canvas.getBoundingClientRect();
    return { x: event.clientX - bounds.left, y: event.clientY - bounds.top };
  }

  private onPointerDown(event: PointerEvent): void {
    const { x, y } = this.pointer(event);
    this.canvas.setPointerCapture(event.pointerId);
    for (let i = this.boxes.length - 1; i >= 0; i--) {
      const rect = toCanvasRect(rectOf(this.boxes[i]), this.scale);
      const handle = hitHandle(rect, x, y, HANDLE_TOLERANCE_PX);
      if (handle) {
        this.selectedIndex = i;
        this.drag = { kind: 'adjust', startX: x, startY: y, boxIndex: i, handle, original: rectOf(this.boxes[i]) };
        this.render();
        return;
      }
    }
    this.selectedIndex = null;
    this.drag = {
      kind: 'create',
      startX: x,
      startY: y,
      boxIndex: -1,
      handle: 'se',
      original: { x: 0, y: 0, w: 0, h: 0 },
    };
    this.render();
  }

  private onPointerMove(event: PointerEvent): void {
    if (!this.drag) return;
    const { x, y } = this.pointer(event);
    if (this.drag.kind === 'create') {
      this.render();
      const rubber = normalizeRect(this.drag.startX, this.drag.startY, x, y);
      this.strokeRect(rubber, '#ffffff', true);
      return;
    }
    const dx = (x - this.drag.startX) / this.scale;
    const dy = (y - this.drag.startY) / this.scale;
    const moved = dragHandle(
      this.drag.original,
      this.drag.handle,
      dx,
      dy,
      this.imageWidth,
      this.imageHeight,
    );
    this.boxes[this.drag.boxIndex] = withRect(this.boxes[this.drag.boxIndex], moved);
    this.render();
  }

  private onPointerUp(event: PointerEvent): void {
    if (!this.drag) return;
    const { x, y } = this.pointer(event);
    const drag = this.drag;
    this.drag = null;
    if (drag.kind === 'create') {
      const rubber = normalizeRect(drag.startX, drag.startY, x, y);
      const rect = snapRect(
        clampRect(toImageRect(rubber, this.scale), this.imageWidth, this.imageHeight),
      );
      if (rubber.w >= HANDLE_TOLERANCE_PX && rubber.h >= HANDLE_TOLERANCE_PX) {
        this.boxes.push({ ...rect, class_id: this.classId });
        this.selectedIndex = this.boxes.length - 1;
        this.emit();
      }
    } else {
      this.boxes[drag.boxIndex] = withRect(
        this.boxes[drag.boxIndex],
        snapRect(rectOf(this.boxes[drag.boxIndex])),
      );
      this.emit();
    }
    this.render();
  }

  render(): void {
    const { width, height } = this.canvas;
    this.ctx.clearRect(0, 0, width, height);
    this.ctx.imageSmoothingEnabled = false;
    if (this.image) {
      this.ctx.drawImage(this.image, 0, 0, width, height);
    } else {
      this.ctx.fillStyle = '#222';
      this.ctx.fillRect(0, 0, width, height);
    }
    this.boxes.forEach((box, i) => {
      const rect = toCanvasRect(rectOf(box), this.scale);
      const color = PALETTE[(box.class_id - 1) % PALETTE.length];
      this.strokeRect(rect, color, false);
      if (i === this.selectedIndex) {
        this.drawHandles(rect, color);
      }
    });
  }

  private strokeRect(rect: Rect, color: string, dashed: boolean): void {
    this.ctx.save();
    this.ctx.strokeStyle = color;
    this.ctx.lineWidth = 2;
    if (dashed) this.ctx.setLineDash([6, 4]);
    this.ctx.strokeRect(rect.x, rect.y, rect.w, rect.h);
    this.ctx.restore();
  }

  private drawHandles(rect: Rect, color: string): void {
    const points: Array<[number, number]> = [
      [rect.x, rect.y],
      [rect.x + rect.w / 2, rect.y],
      [rect.x + rect.w, rect.y],
      [rect.x + rect.w, rect.y + rect.h / 2],
      [rect.x + rect.w, rect.y + rect.h],
      [rect.x + rect.w / 2, rect.y + rect.h],
      [rect.x, rect.y + rect.h],
      [rect.x, rect.y + rect.h / 2],
    ];
    this.ctx.save();
    this.ctx.fillStyle = color;
    for (const [px, py] of points) {
      this.ctx.fillRect(px - 3, py - 3, 6, 6);
    }
    this.ctx.restore();
  }
}
