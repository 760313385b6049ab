// Wire schemas for the prediction service's streaming protocol.
//
// Every outgoing frame is validated against these schemas before it is
// handed to the socket; malformed incoming frames are reported to the
// caller instead of throwing.

import { z } from "zod";

// ---------------------------------------------------------------------------
// Server -> client
// ---------------------------------------------------------------------------

export const predictionFrameSchema = z.object({
  type: z.literal("prediction"),
  ordinal: z.number().int().nonnegative(),
  class: z.union([z.literal(0), z.literal(1), z.literal(2)]),
  key: z.union([z.literal("d"), z.literal("l"), z.null()]),
  probs: z.array(z.number()).length(3),
  latency_ms: z.number(),
  attention: z.array(z.number()).optional(),
});

export const stateFrameSchema = z.object({
  type: z.literal("state"),
  value: z.enum(["playing", "paused", "finished"]),
});

export const serverFrameSchema = z.discriminatedUnion("type", [
  predictionFrameSchema,
  stateFrameSchema,
]);

export type PredictionFrame = z.infer<typeof predictionFrameSchema>;
export type StateFrame = z.infer<typeof stateFrameSchema>;
export type ServerFrame = z.infer<typeof serverFrameSchema>;
export type ReplayState = StateFrame["value"];

// ---------------------------------------------------------------------------
// Client -> server
// ---------------------------------------------------------------------------

export const controlActionSchema = z.enum(["play", "pause", "step", "seek", "speed"]);
export type ControlAction = z.infer<typeof controlActionSchema>;

export const controlFrameSchema = z
  .object({
    type: z.literal("control"),
    action: controlActionSchema,
    value: z.number().finite().optional(),
  })
  .refine((f) => (f.action === "seek" || f.action === "speed") === (f.value !== undefined), {
    message: "seek/speed require a numeric value; other actions take none",
  });

export const selectModelFrameSchema = z.object({
  type: z.literal("select_model"),
  id: z.string().min(1),
});

export const clientFrameSchema = z.union([controlFrameSchema, selectModelFrameSchema]);

export type ControlFrame = z.infer<typeof controlFrameSchema>;
export type SelectModelFrame = z.infer<typeof selectModelFrameSchema>;
export type ClientFrame = z.infer<typeof clientFrameSchema>;

/** Build a control frame, throwing if it would violate the wire schema. */
export function controlFrame(action: ControlAction, value?: number): ControlFrame {
  return controlFrameSchema.parse({ type: "control", action, value });
}

/** Build a select_model frame, throwing if the id is empty. */
export function selectModelFrame(id: string): SelectModelFrame {
  return selectModelFrameSchema.parse({ type: "select_model", id });
}

/** Parse one incoming text frame; returns null for malformed input. */
export function parseServerFrame(raw: string): ServerFrame | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  const result = serverFrameSchema.safeParse(data);
  return result.success ? result.data : null;
}
