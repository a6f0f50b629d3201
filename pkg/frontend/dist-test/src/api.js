"use strict";
/** Thin client over the versioned JSON protocol and its event stream. */
Object.defineProperty(exports, "__esModule", { value: true });
exports.Client = void 0;
const API = "/api/v1";
async function asJson(response) {
    if (!response.ok) {
        let detail = response.statusText;
        try {
            const body = await response.json();
            detail = body.error ?? detail;
            if (body.field)
                detail += ` (field: ${body.field})`;
        }
        catch {
            /* non-JSON error body */
        }
        throw new Error(`${response.status}: ${detail}`);
    }
    return response.json();
}
class Client {
    constructor(base = "") {
        this.base = base;
    }
    url(path) {
        return this.base + API + path;
    }
    post(path, body) {
        return fetch(this.url(path), {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body ?? {}),
        }).then((r) => asJson(r));
    }
    get(path) {
        return fetch(this.url(path)).then((r) => asJson(r));
    }
    createSession(payload) {
        return this.post("/sessions", payload);
    }
    session(id) {
        return this.get(`/sessions/${id}`);
    }
    template(id) {
        return this.get(`/sessions/${id}/template`);
    }
    editTemplate(id, edit) {
        return this.post(`/sessions/${id}/template/edits`, edit);
    }
    putTemplate(id, templateJson) {
        return fetch(this.url(`/sessions/${id}/template`), {
            method: "PUT",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ template: templateJson }),
        }).then((r) => asJson(r));
    }
    startTraining(id, epochs) {
        return this.post(`/sessions/${id}/training/start`, { epochs });
    }
    stopTraining(id) {
        return this.post(`/sessions/${id}/training/stop`);
    }
    startSearch(id, iterations) {
        return this.post(`/sessions/${id}/search/start`, { iterations });
    }
    stepSearch(id) {
        return this.post(`/sessions/${id}/search/step`, { iterations: 1 });
    }
    pauseSearch(id) {
        return this.post(`/sessions/${id}/search/pause`);
    }
    state(id) {
        return this.get(`/sessions/${id}/state`);
    }
    fitness(id) {
        return this.get(`/sessions/${id}/fitness`);
    }
    recomputeEmbedding(id, count) {
        return this.post(`/sessions/${id}/embedding/recompute`, { count });
    }
    embedding(id) {
        return this.get(`/sessions/${id}/embedding`);
    }
    setRegion(id, command) {
        return fetch(this.url(`/sessions/${id}/region`), {
            method: "PUT",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(command),
        }).then((r) => asJson(r));
    }
    clearRegion(id) {
        return fetch(this.url(`/sessions/${id}/region`), { method: "DELETE" }).then((r) => asJson(r));
    }
    setOperation(id, op, shape) {
        return this.post(`/sessions/${id}/set-operation`, { op, shape });
    }
    prunePaths(id, pathIds) {
        return this.post(`/sessions/${id}/paths/prune`, { path_ids: pathIds });
    }
    fixPaths(id, pathIds) {
        return this.post(`/sessions/${id}/paths/fix`, { path_ids: pathIds });
    }
    finalize(id, budgetEpochs = 10) {
        return this.post(`/sessions/${id}/finalize`, { budget_epochs: budgetEpochs });
    }
    exportBest(id) {
        return this.get(`/sessions/${id}/export`);
    }
    /** Event backlog after `since`; the stream is newline-delimited JSON. */
    async events(id, since) {
        const response = await fetch(this.url(`/sessions/${id}/events?since=${since}`));
        if (!response.ok)
            throw new Error(`${response.status}: event stream unavailable`);
        const text = await response.text();
        return text
            .split("\n")
            .filter((line) => line.trim().length > 0)
            .map((line) => JSON.parse(line));
    }
}
exports.Client = Client;
