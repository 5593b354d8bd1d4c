import { describe, expect, it } from "vitest";

import { MessageResponse } from "../src/api.js";
import {
  AgentEntry,
  applyError,
  applyReply,
  beginSend,
  emptyConversation,
  overrideCandidate,
  shownReply,
  transcriptTexts,
} from "../src/state.js";

const reply: MessageResponse = {
  candidates: [
    { text: "i love pizza", mtld: 3.0, mattr: 1.0, combined: 1.3 },
    { text: "i love pizza pizza", mtld: 2.0, mattr: 0.8, combined: 1.0 },
    { text: "my favorite food is pizza", mtld: 5.0, mattr: 1.0, combined: 1.5 },
  ],
  selected_index: 2,
  reply: "my favorite food is pizza",
};

describe("conversation state", () => {
  it("starts empty and not pending", () => {
    const conv = emptyConversation();
    expect(conv.entries).toHaveLength(0);
    expect(conv.pending).toBe(false);
    expect(conv.error).toBeNull();
  });

  it("ignores empty input on send", () => {
    const conv = emptyConversation();
    expect(beginSend(conv, "   ")).toBe(conv);
  });

  it("allows only one in-flight message", () => {
    let conv = beginSend(emptyConversation(), "hi");
    expect(conv.pending).toBe(true);
    expect(beginSend(conv, "again")).toBe(conv);
  });

  it("one exchange yields two entries with the service selection shown", () => {
    let conv = beginSend(emptyConversation(), "hi");
    conv = applyReply(conv, reply);
    expect(conv.entries).toHaveLength(2);
    expect(conv.pending).toBe(false);
    const agent = conv.entries[1] as AgentEntry;
    expect(agent.candidates).toHaveLength(3);
    expect(agent.shownIndex).toBe(2);
    expect(agent.overridden).toBe(false);
    expect(shownReply(agent)).toBe("my favorite food is pizza");
  });

  it("override swaps the shown reply locally and marks it", () => {
    let conv = applyReply(beginSend(emptyConversation(), "hi"), reply);
    conv = overrideCandidate(conv, 1, 0);
    const agent = conv.entries[1] as AgentEntry;
    expect(agent.shownIndex).toBe(0);
    expect(agent.overridden).toBe(true);
    expect(shownReply(agent)).toBe("i love pizza");
    // scores are untouched: still exactly the payload values
    expect(agent.candidates).toEqual(reply.candidates);
  });

  it("re-selecting the service pick clears the override flag", () => {
    let conv = applyReply(beginSend(emptyConversation(), "hi"), reply);
    conv = overrideCandidate(conv, 1, 0);
    conv = overrideCandidate(conv, 1, 2);
    expect((conv.entries[1] as AgentEntry).overridden).toBe(false);
  });

  it("override out of range is a no-op", () => {
    const conv = applyReply(beginSend(emptyConversation(), "hi"), reply);
    expect(overrideCandidate(conv, 1, 7)).toBe(conv);
    expect(overrideCandidate(conv, 0, 0)).toBe(conv); // user entry
  });

  it("transcript order matches /history regardless of overrides", () => {
    let conv = applyReply(beginSend(emptyConversation(), "hi"), reply);
    conv = overrideCandidate(conv, 1, 0);
    expect(transcriptTexts(conv)).toEqual(["hi", "my favorite food is pizza"]);
  });

  it("errors clear pending and keep the transcript", () => {
    let conv = beginSend(emptyConversation(), "hi");
    conv = applyError(conv, "service unreachable");
    expect(conv.pending).toBe(false);
    expect(conv.error).toBe("service unreachable");
    expect(conv.entries).toHaveLength(1);
  });
});
