/** Typed client for the annotation service HTTP/JSON API.
 *
 * The UI talks to the server exclusively through this module; it never
 * touches dataset files. Box coordinates cross this boundary untouched, in
 * raw image pixels.
 */

export interface BoxRecord {
  x: number;
  y: number;
  w: number;
  h: number;
  class_id: number;
  score?: number | null;
}

export interface BandPayload {
  version: number;
  boxes: BoxRecord[];
  author: string | null;
  updated: string | null;
  image_url: string;
  linked_bands: string[];
}

export interface SamplePayload {
  id: string;
  timestamp: string | number;
  bands: Record<string, BandPayload>;
}

export interface SampleListing {
  samples: SamplePayload[];
  bands: string[];
  classes: string[];
  store_version: number;
}

export interface ContextPayload {
  target: string;
  samples: SamplePayload[];
  store_version: number;
}

export interface SaveResponse {
  version: number;
  propagated: Record<string, number>;
  store_version: number;
}

export interface ConflictDetail {
  error: 'version_conflict';
  expected_version: number;
  current_version: number;
  band: string;
}

/** A write was rejected because someone else saved first. */
export class ConflictError extends Error {
  constructor(public readonly detail: ConflictDetail) {
    super(
      `version conflict on ${detail.band}: expected ${detail.expected_version}, ` +
        `server has ${detail.current_version}`,
    );
    this.name = 'ConflictError';
  }
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (response.status === 409) {
      const body = (await response.json()) as { detail: ConflictDetail };
      throw new ConflictError(body.detail);
    }
    if (!response.ok) {
      throw new ApiError(response.status, `${init?.method ?? 'GET'} ${path} -> ${response.status}`);
    }
    return (await response.json()) as T;
  }

  listSamples(): Promise<SampleListing> {
    return this.request<SampleListing>('/api/samples');
  }

  getContext(sampleId: string, before = 3, after = 3): Promise<ContextPayload> {
    const id = encodeURIComponent(sampleId);
    return this.request<ContextPayload>(`/api/samples/${id}/context?before=${before}&after=${after}`);
  }

  /** Write one band's boxes; `expectedVersion` must echo a server-issued value. */
  saveAnnotations(
    sampleId: string,
    band: string,
    boxes: BoxRecord[],
    expectedVersion: number,
    author: string,
  ): Promise<SaveResponse> {
    const id = encodeURIComponent(sampleId);
    return this.request<SaveResponse>(`/api/annotations/${id}/${encodeURIComponent(band)}`, {
      method: 'PUT',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ boxes, expected_version: expectedVersion, author }),
    });
  }

  /** Display image URL; the stretch is presentation-only and never touches geometry. */
  imageUrl(sampleId: string, band: string, stretch?: [number, number]): string {
    const id = encodeURIComponent(sampleId);
    const base = `${this.baseUrl}/api/images/${id}/${encodeURIComponent(band)}.png`;
    return stretch ? `${base}?stretch=${stretch[0]},${stretch[1]}` : base;
  }
}
