import { describe, expect, it } from "vitest";

import {
  clientFrameSchema,
  controlFrame,
  parseServerFrame,
  selectModelFrame,
} from "../src/protocol.js";

describe("control frames", () => {
  it("builds schema-valid play/pause/step frames without values", () => {
    for (const action of ["play", "pause", "step"] as const) {
      const frame = controlFrame(action);
      expect(frame).toEqual({ type: "control", action });
      expect(clientFrameSchema.safeParse(frame).success).toBe(true);
    }
  });

  it("builds seek/speed frames carrying their numeric value", () => {
    expect(controlFrame("speed", 2.0)).toEqual({ type: "control", action: "speed", value: 2.0 });
    expect(controlFrame("seek", 7)).toEqual({ type: "control", action: "seek", value: 7 });
  });

  it("rejects seek/speed without a value and play with one", () => {
    expect(() => controlFrame("speed")).toThrow();
    expect(() => controlFrame("seek")).toThrow();
    expect(() => controlFrame("play", 1)).toThrow();
  });

  it("rejects unknown actions at the schema boundary", () => {
    const parsed = clientFrameSchema.safeParse({ type: "control", action: "rewind" });
    expect(parsed.success).toBe(false);
  });

  it("select_model requires a non-empty id", () => {
    expect(selectModelFrame("bigru_attn")).toEqual({ type: "select_model", id: "bigru_attn" });
    expect(() => selectModelFrame("")).toThrow();
  });
});

describe("server frames", () => {
  it("accepts a well-formed prediction frame", () => {
    const frame = parseServerFrame(
      JSON.stringify({
        type: "prediction",
        ordinal: 3,
        class: 2,
        key: "l",
        probs: [0.1, 0.2, 0.7],
        latency_ms: 1.25,
      }),
    );
    expect(frame?.type).toBe("prediction");
  });

  it("accepts state frames for each replay state", () => {
    for (const value of ["playing", "paused", "finished"]) {
      expect(parseServerFrame(JSON.stringify({ type: "state", value }))?.type).toBe("state");
    }
  });

  it("returns null for malformed JSON and unknown frame types", () => {
    expect(parseServerFrame("{oops")).toBeNull();
    expect(parseServerFrame(JSON.stringify({ type: "mystery" }))).toBeNull();
    expect(
      parseServerFrame(JSON.stringify({ type: "prediction", ordinal: -1, class: 0, key: null, probs: [1, 0, 0], latency_ms: 0 })),
    ).toBeNull();
  });

  it("rejects probability vectors of the wrong arity", () => {
    expect(
      parseServerFrame(
        JSON.stringify({ type: "prediction", ordinal: 0, class: 0, key: null, probs: [1, 0], latency_ms: 0 }),
      ),
    ).toBeNull();
  });
});
