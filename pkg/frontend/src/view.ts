// HTML templates for the transcript. Pure string builders so the
// rendering contract is testable without a browser.

import { AgentEntry, Conversation } from "./state.js";

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Scores are displayed to 3 decimals, straight from the payload. */
export function formatScore(x: number): string {
  return x.toFixed(3);
}

export function candidateTableHtml(entry: AgentEntry, entryIndex: number): string {
  const rows = entry.candidates
    .map((c, i) => {
      const classes = [
        i === entry.serviceIndex ? "service-pick" : "",
        i === entry.shownIndex ? "shown" : "",
      ]
        .filter(Boolean)
        .join(" ");
      return (
        `<tr class="${classes}">` +
        `<td>${formatScore(c.mtld)}</td>` +
        `<td>${formatScore(c.mattr)}</td>` +
        `<td>${formatScore(c.combined)}</td>` +
        `<td>${escapeHtml(c.text)}</td>` +
        `<td><button class="use-instead" data-entry="${entryIndex}" data-candidate="${i}">use this instead</button></td>` +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="candidates"><thead><tr>` +
    `<th>mtld</th><th>mattr</th><th>combined</th><th>text</th><th></th>` +
    `</tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function transcriptHtml(conv: Conversation): string {
  const bubbles = conv.entries
    .map((e, i) => {
      if (e.kind === "user") {
        return `<div class="bubble user">${escapeHtml(e.text)}</div>`;
      }
      const text = escapeHtml(e.candidates[e.shownIndex].text);
      const badge = e.overridden
        ? `<span class="override-badge">user-overridden</span>`
        : "";
      return (
        `<details class="bubble agent"><summary>${text}${badge}</summary>` +
        candidateTableHtml(e, i) +
        `</details>`
      );
    })
    .join("");
  const banner = conv.error
    ? `<div class="error-banner">${escapeHtml(conv.error)}</div>`
    : "";
  return banner + bubbles;
}
