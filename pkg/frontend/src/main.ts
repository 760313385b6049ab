// Browser entry point: wires the state store, stream client, and DOM.

import { StreamClient } from "./client.js";
import {
  handleStreamFrame,
  initialState,
  setConnection,
  setSelectedModel,
  type UiSessionState,
} from "./state.js";
import { applyView, renderKeyboard, type KeyboardDom } from "./view.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function main(): void {
  const dom: KeyboardDom = {
    keys: el("keys"),
    rest: el("rest"),
    bars: el("bars"),
    text: el("typed"),
    status: el("status"),
    attention: el("attention"),
    playBtn: el<HTMLButtonElement>("play"),
    pauseBtn: el<HTMLButtonElement>("pause"),
    stepBtn: el<HTMLButtonElement>("step"),
    reconnect: el("reconnect"),
  };
  const baseUrlInput = el<HTMLInputElement>("base-url");
  const modelSelect = el<HTMLSelectElement>("model");
  const windowsInput = el<HTMLInputElement>("windows");
  const speedInput = el<HTMLInputElement>("speed");
  const speedLabel = el("speed-label");
  const connectBtn = el<HTMLButtonElement>("connect");
  const logNode = el("log");

  let state: UiSessionState = initialState();
  let client = new StreamClient(baseUrlInput.value);

  const render = () => {
    applyView(renderKeyboard(state), dom);
    logNode.textContent = state.log
      .slice(-12)
      .map((entry) => `[${entry.kind}] ${entry.text}`)
      .join("\n");
  };
  const update = (next: UiSessionState) => {
    state = next;
    render();
  };

  // periodic repaint so the 300 ms key flash decays without new frames
  window.setInterval(render, 100);

  connectBtn.addEventListener("click", async () => {
    try {
      client.disconnect();
      client = new StreamClient(baseUrlInput.value);
      update(setConnection(state, "connecting"));
      const models = await client.listModels();
      modelSelect.innerHTML = models
        .map((m) => `<option value="${m.id}">${m.id} (${m.kind})</option>`)
        .join("");
      const chosen = modelSelect.value;
      update(setSelectedModel(state, chosen));
      const token = await client.startReplay(
        chosen,
        windowsInput.value,
        Number(speedInput.value),
        true,
      );
      client.connectStream(token, {
        onFrame: (raw) => update(handleStreamFrame(state, raw)),
        onOpen: () => update(setConnection(state, "connected")),
        onClose: () => update(setConnection(state, "disconnected")),
      });
    } catch (err) {
      update(setConnection(state, "disconnected"));
      logNode.textContent = `connection failed: ${err}`;
    }
  });

  dom.playBtn.addEventListener("click", () => client.sendControl("play"));
  dom.pauseBtn.addEventListener("click", () => client.sendControl("pause"));
  dom.stepBtn.addEventListener("click", () => {
    if (renderKeyboard(state).canStep) client.sendControl("step");
  });
  speedInput.addEventListener("change", () => {
    const value = Number(speedInput.value);
    speedLabel.textContent = `${value.toFixed(1)} win/s`;
    client.sendControl("speed", value);
  });
  modelSelect.addEventListener("change", () => {
    update(setSelectedModel(state, modelSelect.value));
    client.sendSelectModel(modelSelect.value);
  });

  render();
}

main();
