// DOM shell: wires the API client and the pure view-model to index.html.

import { ChatApi, SelectStrategy, ServiceError } from "./api.js";
import {
  applyError,
  applyReply,
  beginSend,
  Conversation,
  emptyConversation,
  overrideCandidate,
} from "./state.js";
import { transcriptHtml } from "./view.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const params = new URLSearchParams(window.location.search);
const defaultUrl =
  params.get("service") ??
  localStorage.getItem("latentchat-service-url") ??
  "http://127.0.0.1:8077";

const serviceInput = el<HTMLInputElement>("service-url");
const transcript = el<HTMLDivElement>("transcript");
const input = el<HTMLInputElement>("message-input");
const sendBtn = el<HTMLButtonElement>("send");
const nSelect = el<HTMLSelectElement>("n-candidates");
const strategySelect = el<HTMLSelectElement>("select-strategy");

serviceInput.value = defaultUrl;

let api = new ChatApi(defaultUrl);
let sessionId: string | null = null;
let conv: Conversation = emptyConversation();

function render() {
  transcript.innerHTML = transcriptHtml(conv);
  input.disabled = conv.pending || sessionId === null;
  sendBtn.disabled = conv.pending || sessionId === null;
  for (const btn of transcript.querySelectorAll<HTMLButtonElement>(".use-instead")) {
    btn.addEventListener("click", () => {
      conv = overrideCandidate(
        conv,
        Number(btn.dataset.entry),
        Number(btn.dataset.candidate),
      );
      render();
    });
  }
  transcript.scrollTop = transcript.scrollHeight;
}

async function connect() {
  const url = serviceInput.value.trim();
  localStorage.setItem("latentchat-service-url", url);
  api = new ChatApi(url);
  conv = emptyConversation();
  sessionId = null;
  try {
    await api.health();
    sessionId = await api.createSession();
  } catch (e) {
    conv = applyError(conv, e instanceof Error ? e.message : String(e));
  }
  render();
  input.focus();
}

async function send() {
  const text = input.value;
  if (text.trim() === "" || conv.pending || sessionId === null) return;
  conv = beginSend(conv, text);
  input.value = "";
  render();
  try {
    const reply = await api.sendMessage(sessionId, text, {
      n: Number(nSelect.value),
      select: strategySelect.value as SelectStrategy,
    });
    conv = applyReply(conv, reply);
  } catch (e) {
    if (e instanceof ServiceError && e.status === 404) {
      conv = applyError(conv, "session expired; reconnect to start a new one");
      sessionId = null;
    } else {
      conv = applyError(conv, e instanceof Error ? e.message : String(e));
    }
  }
  render();
  input.focus();
}

el<HTMLButtonElement>("connect").addEventListener("click", () => void connect());
sendBtn.addEventListener("click", () => void send());
input.addEventListener("keydown", (e) => {
  if (e.key === "Enter") void send();
});

void connect();
