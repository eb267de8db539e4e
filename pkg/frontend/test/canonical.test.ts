import { describe, expect, it } from "vitest";

import { FloatValue, encodeFloat, stableStringify } from "../src/canonical.js";

describe("stableStringify", () => {
  it("sorts object keys recursively", () => {
    expect(stableStringify({ b: 1, a: { d: 2, c: 3 } }))
      .toBe('{"a":{"c":3,"d":2},"b":1}');
  });

  it("keeps array order", () => {
    expect(stableStringify([3, 1, 2])).toBe("[3,1,2]");
  });

  it("uses no whitespace around separators", () => {
    expect(stableStringify({ a: [1, 2], b: "x" })).toBe('{"a":[1,2],"b":"x"}');
  });

  it("renders null and undefined as null", () => {
    expect(stableStringify(null)).toBe("null");
    expect(stableStringify({ a: undefined })).toBe('{"a":null}');
  });

  it("leaves non-ascii text unescaped", () => {
    expect(stableStringify({ s: "héllo 模型 ∑" })).toBe('{"s":"héllo 模型 ∑"}');
  });

  it("escapes quotes, backslashes and control characters", () => {
    expect(stableStringify({ s: 'a"b\\c\nd\te' }))
      .toBe('{"s":"a\\"b\\\\c\\nd\\te"}');
  });

  it("renders booleans and integers plainly", () => {
    expect(stableStringify({ t: true, f: false, n: 7 }))
      .toBe('{"f":false,"n":7,"t":true}');
  });

  it("renders empty containers", () => {
    expect(stableStringify({})).toBe("{}");
    expect(stableStringify([])).toBe("[]");
  });
});

describe("FloatValue", () => {
  it("keeps a trailing .0 on integral values", () => {
    expect(encodeFloat(8)).toBe("8.0");
    expect(encodeFloat(0)).toBe("0.0");
    expect(encodeFloat(-3)).toBe("-3.0");
    expect(encodeFloat(16)).toBe("16.0");
  });

  it("renders fractional values shortest-round-trip", () => {
    expect(encodeFloat(2.5)).toBe("2.5");
    expect(encodeFloat(0.1)).toBe("0.1");
    expect(encodeFloat(3.6)).toBe("3.6");
  });

  it("keeps the sign of negative zero", () => {
    expect(encodeFloat(-0)).toBe("-0.0");
  });

  it("embeds through stableStringify", () => {
    expect(stableStringify({ m: new FloatValue(8), p: new FloatValue(0.25) }))
      .toBe('{"m":8.0,"p":0.25}');
  });

  it("rejects non-finite values", () => {
    expect(() => new FloatValue(Number.NaN)).toThrow();
    expect(() => new FloatValue(Number.POSITIVE_INFINITY)).toThrow();
  });
});
