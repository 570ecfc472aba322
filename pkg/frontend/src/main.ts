import { ApiClient } from "./api.js";
import { LiveConnection } from "./connection.js";
import { ConsoleModel, sendMessage } from "./model.js";
import { collectRefs, renderAll } from "./view.js";

// ?api=http://host:port overrides; default is the page's own origin
const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? window.location.origin;

const api = new ApiClient(baseUrl);
const model = new ConsoleModel();
const refs = collectRefs(document);

let renderQueued = false;
function scheduleRender(): void {
  if (renderQueued) return;
  renderQueued = true;
  requestAnimationFrame(() => {
    renderQueued = false;
    renderAll(model, refs);
  });
}

// refresh the workspace panel whenever a new tick lands
let lastStateTick = -1;
function maybeRefreshState(): void {
  const tick = model.highestCommittedTick();
  if (tick === lastStateTick) return;
  lastStateTick = tick;
  api
    .fetchState()
    .then((s) => {
      model.noteState(s);
      scheduleRender();
    })
    .catch(() => {});
}

const connection = new LiveConnection(api, model, {
  onChange: () => {
    maybeRefreshState();
    scheduleRender();
  },
});
void connection.start();

const composeForm = document.getElementById("compose") as HTMLFormElement;
const composeBox = document.getElementById("compose-text") as HTMLInputElement;
const sendButton = document.getElementById("compose-send") as HTMLButtonElement;

function syncSendEnabled(): void {
  sendButton.disabled = composeBox.value.trim() === "";
}
composeBox.addEventListener("input", syncSendEnabled);
syncSendEnabled();

composeForm.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const text = composeBox.value;
  void sendMessage(model, api, text).then((accepted) => {
    if (accepted) {
      composeBox.value = ""; // kept on failure so the user can retry
      syncSendEnabled();
    }
    scheduleRender();
  });
  scheduleRender();
});

scheduleRender();
