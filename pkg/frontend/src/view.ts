// Pure view-model derivation plus a small DOM applier.
//
// All rendering policy (which key is highlighted, bar heights, which
// controls are enabled) is computed here from UiSessionState so it can be
// tested without a browser.

import type { UiSessionState } from "./state.js";

export const FLASH_MS = 300; // highlight duration after an event lands

// Full home row for visual context; only 'd', 'l' and the rest indicator
// are live — the decoder has exactly three classes.
export const KEY_ROW = ["a", "s", "d", "f", "g", "h", "j", "k", "l", ";"] as const;
export const ACTIVE_KEYS = new Set(["d", "l"]);

export interface KeyView {
  label: string;
  active: boolean;
  highlighted: boolean;
}

export interface BarView {
  label: string;
  fraction: number; // 0..1, proportional bar height
}

export interface KeyboardView {
  keys: KeyView[];
  restHighlighted: boolean;
  bars: BarView[];
  typedText: string;
  replay: string;
  connection: string;
  attention: number[] | null;
  canPlay: boolean;
  canPause: boolean;
  canStep: boolean;
  showReconnectPrompt: boolean;
  warningCount: number;
}

const BAR_LABELS = ["rest", "'d'", "'l'"];

/** Derive everything the keyboard needs to paint from the session state. */
export function renderKeyboard(state: UiSessionState, now: number = Date.now()): KeyboardView {
  const flashing =
    state.lastEvent !== null &&
    state.lastEventAt !== null &&
    now - state.lastEventAt <= FLASH_MS;
  const flashKey = flashing && state.lastEvent ? state.lastEvent.key : null;

  const probs = state.lastEvent ? state.lastEvent.probs : [0, 0, 0];
  const connected = state.connection === "connected";
  const finished = state.replay === "finished";

  return {
    keys: KEY_ROW.map((label) => ({
      label,
      active: ACTIVE_KEYS.has(label),
      highlighted: flashKey === label,
    })),
    restHighlighted: flashing && flashKey === null,
    bars: BAR_LABELS.map((label, i) => ({ label, fraction: probs[i] ?? 0 })),
    typedText: state.typedText,
    replay: state.replay,
    connection: state.connection,
    attention: state.lastEvent?.attention ?? null,
    canPlay: connected && state.replay === "paused",
    canPause: connected && state.replay === "playing",
    canStep: connected && !finished,
    showReconnectPrompt: state.connection === "disconnected",
    warningCount: state.warningCount,
  };
}

// ---------------------------------------------------------------------------
// DOM applier (browser only)
// ---------------------------------------------------------------------------

export interface KeyboardDom {
  keys: HTMLElement;
  rest: HTMLElement;
  bars: HTMLElement;
  text: HTMLElement;
  status: HTMLElement;
  attention: HTMLElement;
  playBtn: HTMLButtonElement;
  pauseBtn: HTMLButtonElement;
  stepBtn: HTMLButtonElement;
  reconnect: HTMLElement;
}

export function applyView(view: KeyboardView, dom: KeyboardDom): void {
  dom.keys.innerHTML = view.keys
    .map(
      (k) =>
        `<div class="key${k.active ? " active" : ""}${k.highlighted ? " flash" : ""}">${k.label}</div>`,
    )
    .join("");
  dom.rest.classList.toggle("flash", view.restHighlighted);
  dom.bars.innerHTML = view.bars
    .map(
      (b) => `
      <div class="bar-row">
        <span class="bar-label">${b.label}</span>
        <div class="bar-track"><div class="bar-fill" style="width:${(b.fraction * 100).toFixed(1)}%"></div></div>
        <span class="bar-value">${(b.fraction * 100).toFixed(0)}%</span>
      </div>`,
    )
    .join("");
  dom.text.textContent = view.typedText;
  dom.status.textContent =
    `${view.connection} | replay ${view.replay}` +
    (view.warningCount ? ` | ${view.warningCount} warning(s)` : "");
  dom.playBtn.disabled = !view.canPlay;
  dom.pauseBtn.disabled = !view.canPause;
  dom.stepBtn.disabled = !view.canStep;
  dom.reconnect.style.display = view.showReconnectPrompt ? "block" : "none";
  dom.attention.innerHTML = view.attention ? sparkline(view.attention) : "";
}

/** Inline SVG sparkline of attention weights; absent weights degrade to nothing. */
export function sparkline(values: number[], width = 220, height = 28): string {
  if (!values.length) return "";
  const max = Math.max(...values, 1e-12);
  const step = width / values.length;
  const points = values
    .map((v, i) => `${(i * step).toFixed(1)},${(height - (v / max) * height).toFixed(1)}`)
    .join(" ");
  return `<svg width="${width}" height="${height}" viewBox="0 0 ${width} ${height}"><polyline fill="none" stroke="currentColor" stroke-width="1" points="${points}"/></svg>`;
}
