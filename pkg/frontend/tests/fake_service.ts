/** In-memory stand-in for the annotation service, speaking the same JSON
 * wire contract: versioned band documents, 409 on stale writes, and
 * propagation of saved boxes to linked bands.
 */

import type { BoxRecord, SamplePayload } from '../src/api.js';

interface BandDoc {
  version: number;
  boxes: BoxRecord[];
  author: string | null;
  updated: string | null;
}

const keyOf = (sampleId: string, band: string): string => `${sampleId} ${band}`;

export class FakeService {
  storeVersion = 0;
  /** When set, the next successful save reports this version instead of
   * doc.version + 1 — used to prove the client echoes server-issued
   * versions rather than counting locally. */
  nextIssuedVersion: number | null = null;
  readonly requests: Array<{ method: string; url: string; body?: unknown }> = [];

  private docs = new Map<string, BandDoc>();
  private links = new Map<string, string[]>();

  constructor(
    readonly sampleIds: string[],
    readonly bands: string[],
    readonly classes: string[],
    linkedPairs: Array<[string, string]> = [],
  ) {
    for (const id of sampleIds) {
      for (const band of bands) {
        this.docs.set(keyOf(id, band), { version: 0, boxes: [], author: null, updated: null });
      }
    }
    for (const band of bands) this.links.set(band, []);
    for (const [a, b] of linkedPairs) {
      this.links.get(a)?.push(b);
      this.links.get(b)?.push(a);
    }
  }

  doc(sampleId: string, band: string): BandDoc {
    const doc = this.docs.get(keyOf(sampleId, band));
    if (!doc) throw new Error(`no doc for ${sampleId}/${band}`);
    return doc;
  }

  /** Simulate another writer saving directly on the server. */
  serverSideWrite(sampleId: string, band: string, boxes: BoxRecord[]): void {
    const doc = this.doc(sampleId, band);
    doc.version += 1;
    doc.boxes = boxes.map((b) => ({ ...b }));
    doc.author = 'someone-else';
    this.storeVersion += 1;
  }

  private samplePayload(id: string): SamplePayload {
    const bands: SamplePayload['bands'] = {};
    for (const band of this.bands) {
      const doc = this.doc(id, band);
      bands[band] = {
        version: doc.version,
        boxes: doc.boxes.map((b) => ({ ...b })),
        author: doc.author,
        updated: doc.updated,
        image_url: `/api/images/${id}/${band}.png`,
        linked_bands: [...(this.links.get(band) ?? [])],
      };
    }
    return { id, timestamp: 0, bands };
  }

  private json(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { 'Content-Type': 'application/json' },
    });
  }

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? 'GET';
    const url = new URL(input, 'http://fake');
    const body = init?.body ? (JSON.parse(String(init.body)) as unknown) : undefined;
    this.requests.push({ method, url: url.pathname + url.search, body });

    if (method === 'GET' && url.pathname === '/api/samples') {
      return this.json({
        samples: this.sampleIds.map((id) => this.samplePayload(id)),
        bands: this.bands,
        classes: this.classes,
        store_version: this.storeVersion,
      });
    }

    const contextMatch = url.pathname.match(/^\/api\/samples\/([^/]+)\/context$/);
    if (method === 'GET' && contextMatch) {
      const target = decodeURIComponent(contextMatch[1]);
      const center = this.sampleIds.indexOf(target);
      if (center < 0) return this.json({ detail: 'unknown sample' }, 404);
      const before = Number(url.searchParams.get('before') ?? 3);
      const after = Number(url.searchParams.get('after') ?? 3);
      const lo = Math.max(0, center - before);
      const hi = Math.min(this.sampleIds.length - 1, center + after);
      return this.json({
        target,
        samples: this.sampleIds.slice(lo, hi + 1).map((id) => this.samplePayload(id)),
        store_version: this.storeVersion,
      });
    }

    const putMatch = url.pathname.match(/^\/api\/annotations\/([^/]+)\/([^/]+)$/);
    if (method === 'PUT' && putMatch) {
      const sampleId = decodeURIComponent(putMatch[1]);
      const band = decodeURIComponent(putMatch[2]);
      if (!this.docs.has(keyOf(sampleId, band))) {
        return this.json({ detail: 'unknown sample or band' }, 404);
      }
      const payload = body as { boxes: BoxRecord[]; expected_version: number; author: string };
      const doc = this.doc(sampleId, band);
      if (payload.expected_version !== doc.version) {
        return this.json(
          {
            detail: {
              error: 'version_conflict',
              expected_version: payload.expected_version,
              current_version: doc.version,
              band,
            },
          },
          409,
        );
      }
      doc.version = this.nextIssuedVersion ?? doc.version + 1;
      this.nextIssuedVersion = null;
      doc.boxes = payload.boxes.map((b) => ({ ...b }));
      doc.author = payload.author;
      doc.updated = new Date().toISOString();
      const propagated: Record<string, number> = {};
      for (const linked of this.links.get(band) ?? []) {
        const sibling = this.doc(sampleId, linked);
        sibling.version += 1;
        sibling.boxes = payload.boxes.map((b) => ({ ...b }));
        sibling.author = payload.author;
        propagated[linked] = sibling.version;
      }
      this.storeVersion += 1;
      return this.json({
        version: doc.version,
        propagated,
        store_version: this.storeVersion,
        record: this.samplePayload(sampleId).bands[band],
      });
    }

    return this.json({ detail: `no route for ${method} ${url.pathname}` }, 404);
  };
}
