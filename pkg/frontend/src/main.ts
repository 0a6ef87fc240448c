/** Application bootstrap: wires the annotation session to the DOM. */

import { ApiClient, ConflictDetail } from './api.js';
import { CanvasView } from './canvas.js';
import { AnnotationSession } from './state.js';

const IMAGE_SCALE = 6;
const DEFAULT_STRETCH: [number, number] = [1, 99];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class App {
  private readonly api = new ApiClient();
  private readonly session = new AnnotationSession(this.api, 'annotator');
  private readonly view: CanvasView;
  private stretch: [number, number] | null = DEFAULT_STRETCH;
  private pendingConflict: ConflictDetail | null = null;
  private imageWidth = 64;
  private imageHeight = 64;

  private readonly sampleList = el<HTMLUListElement>('sample-list');
  private readonly bandTabs = el<HTMLDivElement>('band-tabs');
  private readonly contextStrip = el<HTMLDivElement>('context-strip');
  private readonly classSelect = el<HTMLSelectElement>('class-select');
  private readonly classField = el<HTMLLabelElement>('class-field');
  private readonly saveButton = el<HTMLButtonElement>('save-button');
  private readonly stretchToggle = el<HTMLInputElement>('stretch-toggle');
  private readonly statusLine = el<HTMLSpanElement>('status-line');
  private readonly linkBadge = el<HTMLSpanElement>('link-badge');
  private readonly conflictDialog = el<HTMLDialogElement>('conflict-dialog');
  private readonly conflictText = el<HTMLParagraphElement>('conflict-text');

  constructor() {
    this.view = new CanvasView(el<HTMLCanvasElement>('annotation-canvas'));
    this.view.scale = IMAGE_SCALE;
    this.view.onChange = (boxes) => {
      const { sampleId, band } = this.cursor();
      this.session.setBoxes(sampleId, band, boxes);
      this.refreshChrome();
    };
  }

  /** Current (sample, band); only valid once open() has loaded the manifest. */
  private cursor(): { sampleId: string; band: string } {
    const sampleId = this.session.currentSampleId;
    const band = this.session.currentBand;
    if (sampleId === null || band === null) throw new Error('no samples loaded');
    return { sampleId, band };
  }

  async start(): Promise<void> {
    await this.session.open();
    await this.probeImageSize();
    this.buildSampleList();
    this.buildBandTabs();
    this.buildClassSelect();
    this.bindControls();
    await this.showCurrent();
  }

  /** The manifest does not carry pixel dimensions; read them off one image. */
  private async probeImageSize(): Promise<void> {
    const { sampleId, band } = this.cursor();
    const url = this.api.imageUrl(sampleId, band);
    await new Promise<void>((resolve) => {
      const probe = new Image();
      probe.onload = () => {
        this.imageWidth = probe.naturalWidth;
        this.imageHeight = probe.naturalHeight;
        resolve();
      };
      probe.onerror = () => resolve();
      probe.src = url;
    });
  }

  private buildSampleList(): void {
    this.sampleList.replaceChildren();
    for (const id of this.session.sampleIds) {
      const item = document.createElement('li');
      const button = document.createElement('button');
      button.textContent = id;
      button.dataset.sampleId = id;
      button.addEventListener('click', () => {
        void this.selectSample(id);
      });
      item.appendChild(button);
      this.sampleList.appendChild(item);
    }
  }

  private buildBandTabs(): void {
    this.bandTabs.replaceChildren();
    for (const band of this.session.bands) {
      const button = document.createElement('button');
      button.textContent = band;
      button.dataset.band = band;
      button.addEventListener('click', () => {
        void this.selectBand(band);
      });
      this.bandTabs.appendChild(button);
    }
  }

  private buildClassSelect(): void {
    const options = this.session.assignableClasses;
    this.classSelect.replaceChildren();
    for (const option of options) {
      const node = document.createElement('option');
      node.value = String(option.id);
      node.textContent = option.name;
      this.classSelect.appendChild(node);
    }
    // With a single foreground class there is nothing to choose.
    this.classField.hidden = options.length <= 1;
    this.view.classId = options.length > 0 ? options[0].id : 1;
    this.classSelect.addEventListener('change', () => {
      this.view.classId = Number(this.classSelect.value);
    });
  }

  private bindControls(): void {
    this.saveButton.addEventListener('click', () => {
      void this.save();
    });
    this.stretchToggle.checked = true;
    this.stretchToggle.addEventListener('change', () => {
      this.stretch = this.stretchToggle.checked ? DEFAULT_STRETCH : null;
      void this.showCurrent();
    });
    document.addEventListener('keydown', (event) => {
      if (event.key === 'Delete' || event.key === 'Backspace') {
        if (document.activeElement instanceof HTMLInputElement) return;
        this.view.deleteSelected();
      }
    });
    el<HTMLButtonElement>('conflict-reload').addEventListener('click', () => {
      void this.resolveConflict('reload');
    });
    el<HTMLButtonElement>('conflict-overwrite').addEventListener('click', () => {
      void this.resolveConflict('overwrite');
    });
  }

  private async selectSample(sampleId: string): Promise<void> {
    await this.session.focus(sampleId);
    await this.showCurrent();
  }

  private async selectBand(band: string): Promise<void> {
    this.session.currentBand = band;
    await this.showCurrent();
  }

  private async showCurrent(): Promise<void> {
    const { sampleId, band } = this.cursor();
    const state = this.session.bandState(sampleId, band);
    const url = this.api.imageUrl(sampleId, band, this.stretch ?? undefined);
    await this.view.setImage(url, this.imageWidth, this.imageHeight);
    this.view.setBoxes(state.boxes);
    this.renderContextStrip();
    this.refreshChrome();
  }

  private renderContextStrip(): void {
    this.contextStrip.replaceChildren();
    const { sampleId: currentId, band } = this.cursor();
    const ids = this.session.sampleIds;
    const center = ids.indexOf(currentId);
    const lo = Math.max(0, center - 3);
    const hi = Math.min(ids.length - 1, center + 3);
    for (let i = lo; i <= hi; i++) {
      const id = ids[i];
      const thumb = document.createElement('img');
      thumb.src = this.api.imageUrl(id, band, this.stretch ?? undefined);
      thumb.width = this.imageWidth;
      thumb.height = this.imageHeight;
      thumb.title = id;
      thumb.className = i === center ? 'thumb current' : 'thumb';
      thumb.addEventListener('click', () => {
        void this.selectSample(id);
      });
      this.contextStrip.appendChild(thumb);
    }
  }

  private refreshChrome(): void {
    const { sampleId, band } = this.cursor();
    const state = this.session.bandState(sampleId, band);
    for (const button of this.sampleList.querySelectorAll('button')) {
      button.classList.toggle('active', button.dataset.sampleId === sampleId);
    }
    for (const button of this.bandTabs.querySelectorAll('button')) {
      button.classList.toggle('active', button.dataset.band === band);
    }
    this.saveButton.disabled = !state.dirty;
    this.statusLine.textContent = state.dirty
      ? `${sampleId} / ${band} — unsaved changes (v${state.version})`
      : `${sampleId} / ${band} — v${state.version}`;
    if (state.linkedBands.length > 0) {
      this.linkBadge.hidden = false;
      this.linkBadge.textContent = `saves propagate to ${state.linkedBands.join(', ')}`;
    } else {
      this.linkBadge.hidden = true;
    }
  }

  private async save(): Promise<void> {
    const { sampleId, band } = this.cursor();
    const outcome = await this.session.save(sampleId, band);
    if (outcome.kind === 'saved') {
      this.refreshChrome();
      return;
    }
    this.presentConflict(sampleId, band, outcome.detail);
  }

  private presentConflict(sampleId: string, band: string, detail: ConflictDetail): void {
    this.pendingConflict = detail;
    this.conflictText.textContent =
      `Someone else saved ${band} of ${sampleId} first ` +
      `(server has v${detail.current_version}, you edited v${detail.expected_version}). ` +
      'Reload to take their version, or overwrite to keep yours.';
    this.conflictDialog.showModal();
  }

  private async resolveConflict(choice: 'reload' | 'overwrite'): Promise<void> {
    const detail = this.pendingConflict;
    this.pendingConflict = null;
    this.conflictDialog.close();
    if (!detail) return;
    const { sampleId, band } = this.cursor();
    if (choice === 'reload') {
      await this.session.reloadFromServer(sampleId, band);
    } else {
      const retried = await this.session.overwrite(sampleId, band, detail);
      if (retried.kind === 'conflict') {
        // lost another race while resolving; surface it again
        await this.showCurrent();
        this.presentConflict(sampleId, band, retried.detail);
        return;
      }
    }
    await this.showCurrent();
  }
}

window.addEventListener('DOMContentLoaded', () => {
  const app = new App();
  void app.start().catch((err) => {
    const status = document.getElementById('status-line');
    if (status) status.textContent = `failed to load: ${String(err)}`;
  });
});
