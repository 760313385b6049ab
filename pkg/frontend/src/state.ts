// Session state and the pure stream-frame reducer.
//
// The typed text buffer is a fold over received prediction frames: class 0
// (rest) appends nothing, classes 1 and 2 append their keys. Replaying the
// same frame log through handleStreamFrame always reproduces the same text.

import {
  parseServerFrame,
  type PredictionFrame,
  type ReplayState,
  type ServerFrame,
} from "./protocol.js";

export type ConnectionStatus = "disconnected" | "connecting" | "connected";

export interface LogEntry {
  kind: "prediction" | "state" | "warning";
  at: number; // ms timestamp supplied by the caller
  text: string;
}

export interface UiSessionState {
  connection: ConnectionStatus;
  replay: ReplayState;
  selectedModel: string | null;
  typedText: string;
  lastEvent: PredictionFrame | null;
  lastEventAt: number | null;
  log: LogEntry[];
  warningCount: number;
  predictionCount: number;
}

export function initialState(): UiSessionState {
  return {
    connection: "disconnected",
    replay: "paused",
    selectedModel: null,
    typedText: "",
    lastEvent: null,
    lastEventAt: null,
    log: [],
    warningCount: 0,
    predictionCount: 0,
  };
}

const LOG_LIMIT = 500;

function pushLog(log: LogEntry[], entry: LogEntry): LogEntry[] {
  const next = log.length >= LOG_LIMIT ? log.slice(log.length - LOG_LIMIT + 1) : log.slice();
  next.push(entry);
  return next;
}

/**
 * Fold one raw stream frame into the state. Malformed frames add a warning
 * entry and leave everything else untouched; the UI never crashes on them.
 */
export function handleStreamFrame(
  state: UiSessionState,
  raw: string,
  at: number = Date.now(),
): UiSessionState {
  const frame = parseServerFrame(raw);
  if (frame === null) {
    return {
      ...state,
      warningCount: state.warningCount + 1,
      log: pushLog(state.log, {
        kind: "warning",
        at,
        text: `malformed frame skipped: ${raw.slice(0, 80)}`,
      }),
    };
  }
  return applyServerFrame(state, frame, at);
}

export function applyServerFrame(
  state: UiSessionState,
  frame: ServerFrame,
  at: number,
): UiSessionState {
  if (frame.type === "state") {
    return {
      ...state,
      replay: frame.value,
      log: pushLog(state.log, { kind: "state", at, text: `replay ${frame.value}` }),
    };
  }
  const typed = frame.key === null ? state.typedText : state.typedText + frame.key;
  return {
    ...state,
    typedText: typed,
    lastEvent: frame,
    lastEventAt: at,
    predictionCount: state.predictionCount + 1,
    log: pushLog(state.log, {
      kind: "prediction",
      at,
      text: `#${frame.ordinal} class ${frame.class} ${frame.key === null ? "(rest)" : `'${frame.key}'`}`,
    }),
  };
}

export function setConnection(state: UiSessionState, connection: ConnectionStatus): UiSessionState {
  return { ...state, connection };
}

export function setSelectedModel(state: UiSessionState, id: string): UiSessionState {
  return { ...state, selectedModel: id };
}
