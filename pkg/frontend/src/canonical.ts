/**
 * Canonical JSON encoding, byte-compatible with the CLI.
 *
 * The CLI encodes request bodies as JSON with lexicographically sorted keys,
 * "," and ":" separators, and non-ASCII left as UTF-8. Submitting the exact
 * same bytes from the browser is what makes form/CLI parity testable, so
 * this module reimplements that encoding rather than trusting
 * JSON.stringify's defaults (which never sort keys).
 */

/**
 * A number that must serialize as a float even when integral.
 *
 * The server builds these fields as floats, so its encoder prints `8.0`
 * where JSON.stringify prints `8`. Wrapping keeps the distinction that
 * JavaScript's single number type erases. Exact parity holds for values in
 * (-1e16, -1e-4] U {0} U [1e-4, 1e16), where both runtimes print plain
 * shortest-round-trip decimals; the dashboard's float fields (memory in GB,
 * dollars per hour) live comfortably inside that range.
 */
export class FloatValue {
  constructor(readonly value: number) {
    if (!Number.isFinite(value)) {
      throw new Error(`non-finite float ${value} is not JSON-encodable`);
    }
  }
}

export function encodeFloat(n: number): string {
  if (Number.isInteger(n) && Math.abs(n) < 1e16) {
    // -0.0 still prints with its sign, matching the server
    return Object.is(n, -0) ? "-0.0" : `${n}.0`;
  }
  return String(n);
}

function encodeString(s: string): string {
  // JSON.stringify escapes exactly the JSON-mandated set and leaves other
  // code points raw, which matches an encoder with ASCII escaping disabled
  return JSON.stringify(s);
}

export function stableStringify(value: unknown): string {
  if (value === null || value === undefined) {
    return "null";
  }
  if (value instanceof FloatValue) {
    return encodeFloat(value.value);
  }
  switch (typeof value) {
    case "boolean":
      return value ? "true" : "false";
    case "number":
      if (!Number.isFinite(value)) {
        throw new Error(`non-finite number ${value} is not JSON-encodable`);
      }
      return String(value);
    case "string":
      return encodeString(value);
    case "object":
      break;
    default:
      throw new Error(`cannot canonicalize a ${typeof value}`);
  }
  if (Array.isArray(value)) {
    return `[${value.map(stableStringify).join(",")}]`;
  }
  const record = value as Record<string, unknown>;
  const keys = Object.keys(record).sort();
  const parts = keys.map((k) => `${encodeString(k)}:${stableStringify(record[k])}`);
  return `{${parts.join(",")}}`;
}
