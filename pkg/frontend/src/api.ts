/** Thin client over the versioned JSON protocol and its event stream. */

import {
  AppEvent,
  EmbeddingDoc,
  FitnessDoc,
  RegionCommand,
  SessionSummary,
  StateDoc,
  TemplateDoc,
} from "./types.js";

const API = "/api/v1";

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      detail = body.error ?? detail;
      if (body.field) detail += ` (field: ${body.field})`;
    } catch {
      /* non-JSON error body */
    }
    throw new Error(`${response.status}: ${detail}`);
  }
  return response.json() as Promise<T>;
}

export class Client {
  constructor(private base: string = "") {}

  private url(path: string): string {
    return this.base + API + path;
  }

  private post<T>(path: string, body?: unknown): Promise<T> {
    return fetch(this.url(path), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body ?? {}),
    }).then((r) => asJson<T>(r));
  }

  private get<T>(path: string): Promise<T> {
    return fetch(this.url(path)).then((r) => asJson<T>(r));
  }

  createSession(payload: unknown): Promise<SessionSummary> {
    return this.post("/sessions", payload);
  }

  session(id: string): Promise<SessionSummary> {
    return this.get(`/sessions/${id}`);
  }

  template(id: string): Promise<TemplateDoc> {
    return this.get(`/sessions/${id}/template`);
  }

  editTemplate(id: string, edit: unknown): Promise<unknown> {
    return this.post(`/sessions/${id}/template/edits`, edit);
  }

  putTemplate(id: string, templateJson: string): Promise<unknown> {
    return fetch(this.url(`/sessions/${id}/template`), {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ template: templateJson }),
    }).then((r) => asJson(r));
  }

  startTraining(id: string, epochs: number): Promise<unknown> {
    return this.post(`/sessions/${id}/training/start`, { epochs });
  }

  stopTraining(id: string): Promise<unknown> {
    return this.post(`/sessions/${id}/training/stop`);
  }

  startSearch(id: string, iterations: number): Promise<unknown> {
    return this.post(`/sessions/${id}/search/start`, { iterations });
  }

  stepSearch(id: string): Promise<unknown> {
    return this.post(`/sessions/${id}/search/step`, { iterations: 1 });
  }

  pauseSearch(id: string): Promise<unknown> {
    return this.post(`/sessions/${id}/search/pause`);
  }

  state(id: string): Promise<StateDoc> {
    return this.get(`/sessions/${id}/state`);
  }

  fitness(id: string): Promise<FitnessDoc> {
    return this.get(`/sessions/${id}/fitness`);
  }

  recomputeEmbedding(id: string, count: number): Promise<unknown> {
    return this.post(`/sessions/${id}/embedding/recompute`, { count });
  }

  embedding(id: string): Promise<EmbeddingDoc> {
    return this.get(`/sessions/${id}/embedding`);
  }

  setRegion(id: string, command: RegionCommand): Promise<{ member_ids: number[] }> {
    return fetch(this.url(`/sessions/${id}/region`), {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(command),
    }).then((r) => asJson(r));
  }

  clearRegion(id: string): Promise<unknown> {
    return fetch(this.url(`/sessions/${id}/region`), { method: "DELETE" }).then((r) =>
      asJson(r)
    );
  }

  setOperation(id: string, op: string, shape: unknown): Promise<{ op: string; path_ids: number[] }> {
    return this.post(`/sessions/${id}/set-operation`, { op, shape });
  }

  prunePaths(id: string, pathIds: number[]): Promise<unknown> {
    return this.post(`/sessions/${id}/paths/prune`, { path_ids: pathIds });
  }

  fixPaths(id: string, pathIds: number[]): Promise<unknown> {
    return this.post(`/sessions/${id}/paths/fix`, { path_ids: pathIds });
  }

  finalize(id: string, budgetEpochs = 10): Promise<unknown> {
    return this.post(`/sessions/${id}/finalize`, { budget_epochs: budgetEpochs });
  }

  exportBest(id: string): Promise<unknown> {
    return this.get(`/sessions/${id}/export`);
  }

  /** Event backlog after `since`; the stream is newline-delimited JSON. */
  async events(id: string, since: number): Promise<AppEvent[]> {
    const response = await fetch(this.url(`/sessions/${id}/events?since=${since}`));
    if (!response.ok) throw new Error(`${response.status}: event stream unavailable`);
    const text = await response.text();
    return text
      .split("\n")
      .filter((line) => line.trim().length > 0)
      .map((line) => JSON.parse(line) as AppEvent);
  }
}
