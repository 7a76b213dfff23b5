/** Typed client for the annotation service HTTP API. */

export interface SessionInfo {
  token: string;
  target: number;
}

export interface TestItem {
  sample_id: string;
  thumb_url: string;
}

export interface NextTest {
  complete: boolean;
  test_id?: string;
  items?: TestItem[];
}

export interface SubmitResult {
  status: string;
  duplicate: boolean;
}

export interface Progress {
  answered: number;
  target: number;
}

export interface ApiError {
  code: string;
  message: string;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function asJson<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let err: ApiError = { code: "http_error", message: `HTTP ${res.status}` };
    try {
      err = (await res.json()) as ApiError;
    } catch {
      // non-JSON error body; keep the generic code
    }
    throw new ServiceError(res.status, err.code, err.message);
  }
  return (await res.json()) as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async createSession(): Promise<SessionInfo> {
    return asJson(await fetch(this.url("/api/session")));
  }

  async nextTest(token: string): Promise<NextTest> {
    return asJson(await fetch(this.url(`/api/session/${token}/next`)));
  }

  async submitAnswer(token: string, testId: string, chosen: number): Promise<SubmitResult> {
    return asJson(
      await fetch(this.url(`/api/session/${token}/answer`), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ test_id: testId, chosen }),
      }),
    );
  }

  async progress(token: string): Promise<Progress> {
    return asJson(await fetch(this.url(`/api/session/${token}/progress`)));
  }
}
