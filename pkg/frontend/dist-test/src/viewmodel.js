"use strict";
/** Pure event-folding state: the screen is a function of (event history,
 * local selection). Replaying a recorded event log reproduces the view
 * exactly, which is also how reconnects resume. No search logic lives here;
 * the model only links server-provided facts together. */
Object.defineProperty(exports, "__esModule", { value: true });
exports.initialViewState = initialViewState;
exports.applyEvent = applyEvent;
exports.foldEvents = foldEvents;
exports.pointColors = pointColors;
exports.buildRegionCommand = buildRegionCommand;
exports.membersInRect = membersInRect;
exports.masksOfMembers = masksOfMembers;
exports.activePaths = activePaths;
exports.buildRemoveOpEdit = buildRemoveOpEdit;
function initialViewState() {
    return {
        phase: "configuring",
        iteration: 0,
        population: [],
        lossHistory: [],
        trainingCurve: [],
        accuracyByMask: new Map(),
        newMembersByIteration: new Map(),
        pruned: [],
        fixed: [],
        regionMemberIds: null,
        fitnessDigest: null,
        embeddingDigest: null,
        lastError: null,
        lastSeq: 0,
    };
}
const byId = (population) => {
    const index = new Map();
    for (const m of population)
        index.set(m.id, m);
    return index;
};
function applyEvent(state, event) {
    if (event.seq <= state.lastSeq)
        return state; // resume without duplicates
    const next = { ...state, lastSeq: event.seq };
    const payload = event.payload;
    switch (event.kind) {
        case "phase_changed": {
            next.phase = payload.phase;
            if (payload.invalidated) {
                const fresh = initialViewState();
                fresh.phase = payload.phase;
                fresh.lastSeq = event.seq;
                return fresh;
            }
            return next;
        }
        case "iteration_done": {
            const members = payload.members.map((m) => ({
                ...m,
                iteration_evaluated: payload.iteration,
            }));
            const index = byId(state.population);
            const survivors = payload.survivors
                .map((id) => index.get(id))
                .filter((m) => m !== undefined);
            next.iteration = payload.iteration;
            next.population = [...survivors, ...members];
            next.lossHistory = [...state.lossHistory, [payload.iteration, ...payload.loss]];
            next.fitnessDigest = payload.fitness_digest;
            next.accuracyByMask = new Map(state.accuracyByMask);
            for (const m of members) {
                if (m.accuracy !== null)
                    next.accuracyByMask.set(m.mask, m.accuracy);
            }
            next.newMembersByIteration = new Map(state.newMembersByIteration);
            next.newMembersByIteration.set(payload.iteration, members);
            return next;
        }
        case "loss_tick": {
            next.trainingCurve = [
                ...state.trainingCurve,
                [payload.epoch, payload.train_loss, payload.val_loss],
            ];
            return next;
        }
        case "constraint_changed": {
            next.pruned = payload.pruned;
            next.fixed = payload.fixed;
            next.regionMemberIds = payload.region_member_ids;
            next.fitnessDigest = payload.fitness_digest;
            return next;
        }
        case "embedding_ready": {
            next.embeddingDigest = payload.digest;
            return next;
        }
        case "fitness_updated": {
            next.fitnessDigest = payload.digest;
            return next;
        }
        case "error": {
            next.lastError = payload.message;
            return next;
        }
        default:
            return next;
    }
}
function foldEvents(events, start) {
    let state = start ?? initialViewState();
    for (const event of events)
        state = applyEvent(state, event);
    return state;
}
/** Accuracy color per embedding point, resolved through the event history. */
function pointColors(embedding, state) {
    return embedding.masks.map((mask) => {
        const accuracy = state.accuracyByMask.get(mask);
        return accuracy === undefined ? null : accuracy;
    });
}
/** Brushed rectangle in embedding coordinates -> the documented region command. */
function buildRegionCommand(rect, embedding) {
    const shape = [
        "rect",
        Math.min(rect.x0, rect.x1),
        Math.min(rect.y0, rect.y1),
        Math.max(rect.x0, rect.x1),
        Math.max(rect.y0, rect.y1),
    ];
    return { shape, embedding_digest: embedding.digest };
}
/** Which embedding points fall inside a brushed rectangle (display only;
 * the server resolves the authoritative member set). */
function membersInRect(embedding, rect) {
    const xLo = Math.min(rect.x0, rect.x1);
    const xHi = Math.max(rect.x0, rect.x1);
    const yLo = Math.min(rect.y0, rect.y1);
    const yHi = Math.max(rect.y0, rect.y1);
    const ids = [];
    embedding.coords.forEach(([x, y], i) => {
        if (x >= xLo && x <= xHi && y >= yLo && y <= yHi)
            ids.push(embedding.ids[i]);
    });
    return ids;
}
/** Masks of the given embedding members, for region-membership checks. */
function masksOfMembers(embedding, memberIds) {
    const masks = new Set();
    for (const id of memberIds) {
        const index = embedding.ids.indexOf(id);
        if (index >= 0)
            masks.add(embedding.masks[index]);
    }
    return masks;
}
/** Active path ids of a hex-encoded mask (MSB-first packing). */
function activePaths(maskHex, length) {
    const active = [];
    for (let i = 0; i < length; i++) {
        const byte = parseInt(maskHex.substr(Math.floor(i / 8) * 2, 2), 16);
        if ((byte >> (7 - (i % 8))) & 1)
            active.push(i);
    }
    return active;
}
/** Edit payload removing one operation block from its exact slot. */
function buildRemoveOpEdit(block) {
    return {
        kind: "remove_op",
        op_tag: block.op.tag,
        op_name: block.op.name ?? "",
        cell_id: block.cellId,
        dst_node: block.dstNode,
        source: block.source,
    };
}
