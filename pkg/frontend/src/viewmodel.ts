/** Pure event-folding state: the screen is a function of (event history,
 * local selection). Replaying a recorded event log reproduces the view
 * exactly, which is also how reconnects resume. No search logic lives here;
 * the model only links server-provided facts together. */

import { AppEvent, EmbeddingDoc, MemberDoc, RectShape, RegionCommand } from "./types.js";

export interface ViewState {
  phase: string;
  iteration: number;
  population: MemberDoc[];
  lossHistory: number[][]; // [iteration, max, mean, min]
  trainingCurve: number[][]; // [epoch, train, val]
  accuracyByMask: Map<string, number>;
  newMembersByIteration: Map<number, MemberDoc[]>;
  pruned: number[];
  fixed: number[];
  regionMemberIds: number[] | null;
  fitnessDigest: string | null;
  embeddingDigest: string | null;
  lastError: string | null;
  lastSeq: number;
}

export function initialViewState(): ViewState {
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

const byId = (population: MemberDoc[]) => {
  const index = new Map<number, MemberDoc>();
  for (const m of population) index.set(m.id, m);
  return index;
};

export function applyEvent(state: ViewState, event: AppEvent): ViewState {
  if (event.seq <= state.lastSeq) return state; // resume without duplicates
  const next: ViewState = { ...state, lastSeq: event.seq };
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
      const members: MemberDoc[] = payload.members.map((m: MemberDoc) => ({
        ...m,
        iteration_evaluated: payload.iteration,
      }));
      const index = byId(state.population);
      const survivors = (payload.survivors as number[])
        .map((id) => index.get(id))
        .filter((m): m is MemberDoc => m !== undefined);
      next.iteration = payload.iteration;
      next.population = [...survivors, ...members];
      next.lossHistory = [...state.lossHistory, [payload.iteration, ...payload.loss]];
      next.fitnessDigest = payload.fitness_digest;
      next.accuracyByMask = new Map(state.accuracyByMask);
      for (const m of members) {
        if (m.accuracy !== null) next.accuracyByMask.set(m.mask, m.accuracy);
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

export function foldEvents(events: AppEvent[], start?: ViewState): ViewState {
  let state = start ?? initialViewState();
  for (const event of events) state = applyEvent(state, event);
  return state;
}

/** Accuracy color per embedding point, resolved through the event history. */
export function pointColors(embedding: EmbeddingDoc, state: ViewState): (number | null)[] {
  return embedding.masks.map((mask) => {
    const accuracy = state.accuracyByMask.get(mask);
    return accuracy === undefined ? null : accuracy;
  });
}

/** Brushed rectangle in embedding coordinates -> the documented region command. */
export function buildRegionCommand(
  rect: { x0: number; y0: number; x1: number; y1: number },
  embedding: EmbeddingDoc
): RegionCommand {
  const shape: RectShape = [
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
export function membersInRect(
  embedding: EmbeddingDoc,
  rect: { x0: number; y0: number; x1: number; y1: number }
): number[] {
  const xLo = Math.min(rect.x0, rect.x1);
  const xHi = Math.max(rect.x0, rect.x1);
  const yLo = Math.min(rect.y0, rect.y1);
  const yHi = Math.max(rect.y0, rect.y1);
  const ids: number[] = [];
  embedding.coords.forEach(([x, y], i) => {
    if (x >= xLo && x <= xHi && y >= yLo && y <= yHi) ids.push(embedding.ids[i]);
  });
  return ids;
}

/** Masks of the given embedding members, for region-membership checks. */
export function masksOfMembers(embedding: EmbeddingDoc, memberIds: number[]): Set<string> {
  const masks = new Set<string>();
  for (const id of memberIds) {
    const index = embedding.ids.indexOf(id);
    if (index >= 0) masks.add(embedding.masks[index]);
  }
  return masks;
}

/** Active path ids of a hex-encoded mask (MSB-first packing). */
export function activePaths(maskHex: string, length: number): number[] {
  const active: number[] = [];
  for (let i = 0; i < length; i++) {
    const byte = parseInt(maskHex.substr(Math.floor(i / 8) * 2, 2), 16);
    if ((byte >> (7 - (i % 8))) & 1) active.push(i);
  }
  return active;
}

/** Edit payload removing one operation block from its exact slot. */
export function buildRemoveOpEdit(block: {
  cellId: number;
  dstNode: number;
  source: number;
  op: { tag: string; name?: string };
}): Record<string, unknown> {
  return {
    kind: "remove_op",
    op_tag: block.op.tag,
    op_name: block.op.name ?? "",
    cell_id: block.cellId,
    dst_node: block.dstNode,
    source: block.source,
  };
}
