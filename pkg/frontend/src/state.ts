// Conversation view-model: pure state transitions, no DOM and no network.
// Every displayed number originates from a service payload; overriding a
// candidate only changes which already-received row is shown.

import { Candidate, MessageResponse } from "./api.js";

export interface AgentEntry {
  kind: "agent";
  candidates: Candidate[];
  serviceIndex: number; // the index the service selected
  shownIndex: number; // may differ after a local override
  overridden: boolean;
}

export interface UserEntry {
  kind: "user";
  text: string;
}

export type Entry = UserEntry | AgentEntry;

export interface Conversation {
  entries: Entry[];
  pending: boolean; // one in-flight message at a time
  error: string | null;
}

export function emptyConversation(): Conversation {
  return { entries: [], pending: false, error: null };
}

export function beginSend(conv: Conversation, text: string): Conversation {
  if (conv.pending || text.trim() === "") return conv;
  return {
    entries: [...conv.entries, { kind: "user", text }],
    pending: true,
    error: null,
  };
}

export function applyReply(
  conv: Conversation,
  reply: MessageResponse,
): Conversation {
  const entry: AgentEntry = {
    kind: "agent",
    candidates: reply.candidates,
    serviceIndex: reply.selected_index,
    shownIndex: reply.selected_index,
    overridden: false,
  };
  return { entries: [...conv.entries, entry], pending: false, error: null };
}

export function applyError(conv: Conversation, message: string): Conversation {
  return { ...conv, pending: false, error: message };
}

/** Show a different already-received candidate; purely local. */
export function overrideCandidate(
  conv: Conversation,
  entryIndex: number,
  candidateIndex: number,
): Conversation {
  const entry = conv.entries[entryIndex];
  if (!entry || entry.kind !== "agent") return conv;
  if (candidateIndex < 0 || candidateIndex >= entry.candidates.length)
    return conv;
  const updated: AgentEntry = {
    ...entry,
    shownIndex: candidateIndex,
    overridden: candidateIndex !== entry.serviceIndex,
  };
  const entries = conv.entries.slice();
  entries[entryIndex] = updated;
  return { ...conv, entries };
}

export function shownReply(entry: AgentEntry): string {
  return entry.candidates[entry.shownIndex].text;
}

/** Transcript in service /history order (shown replies, not overrides,
 * since the service recorded its own selection). */
export function transcriptTexts(conv: Conversation): string[] {
  return conv.entries.map((e) =>
    e.kind === "user" ? e.text : e.candidates[e.serviceIndex].text,
  );
}
