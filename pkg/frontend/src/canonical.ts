/**
 * Canonical JSON, byte-compatible with the engine's serializer: UTF-8,
 * object keys sorted, no insignificant whitespace, floats rendered exactly
 * the way Python's repr renders doubles (shortest round-trip decimal, fixed
 * notation for exponents in [-4, 16), trailing ".0" on integral floats,
 * two-digit signed exponents otherwise).
 *
 * Whether a number is an int or a float is schema information; callers mark
 * float positions explicitly via the helpers below.
 */

/** Shortest-round-trip decimal digits and exponent, from toExponential(). */
function shortestParts(x: number): { digits: string; exp: number } {
  const s = Math.abs(x).toExponential(); // e.g. "1.25e-7"
  const m = /^(\d)(?:\.(\d+))?e([+-]\d+)$/.exec(s);
  if (!m) throw new Error(`unexpected exponential form: ${s}`);
  return { digits: m[1] + (m[2] ?? ""), exp: parseInt(m[3], 10) };
}

export function pyFloatRepr(x: number): string {
  if (!isFinite(x)) throw new Error("non-finite floats are not serializable");
  if (x === 0) return Object.is(x, -0) ? "-0.0" : "0.0";
  const neg = x < 0 ? "-" : "";
  const { digits, exp } = shortestParts(x);
  if (exp >= -4 && exp < 16) {
    if (exp >= digits.length - 1) {
      // integral: pad with zeros and mark as float
      return neg + digits + "0".repeat(exp - (digits.length - 1)) + ".0";
    }
    if (exp >= 0) {
      return neg + digits.slice(0, exp + 1) + "." + digits.slice(exp + 1);
    }
    return neg + "0." + "0".repeat(-exp - 1) + digits;
  }
  const mantissa = digits.length > 1 ? digits[0] + "." + digits.slice(1) : digits;
  const expAbs = Math.abs(exp).toString().padStart(2, "0");
  return neg + mantissa + "e" + (exp < 0 ? "-" : "+") + expAbs;
}

export function pyIntRepr(x: number): string {
  if (!Number.isSafeInteger(x)) throw new Error(`not a safe integer: ${x}`);
  return x.toString();
}

/**
 * Values pass through a tiny tagged tree so int vs float is explicit where
 * it matters; plain numbers are treated as ints.
 */
export type CanonicalValue =
  | { kind: "float"; value: number }
  | { kind: "int"; value: number }
  | string
  | boolean
  | null
  | CanonicalValue[]
  | { [key: string]: CanonicalValue };

export const f = (value: number): CanonicalValue => ({ kind: "float", value });
export const i = (value: number): CanonicalValue => ({ kind: "int", value });

function isTagged(v: CanonicalValue): v is { kind: "float" | "int"; value: number } {
  return (
    typeof v === "object" && v !== null && !Array.isArray(v) &&
    "kind" in v && "value" in v &&
    ((v as any).kind === "float" || (v as any).kind === "int") &&
    typeof (v as any).value === "number"
  );
}

export function canonicalStringify(v: CanonicalValue): string {
  if (v === null) return "null";
  if (typeof v === "boolean") return v ? "true" : "false";
  // JSON.stringify escapes the same minimal set as the engine (quote,
  // backslash, control characters); non-ASCII stays raw in both.
  if (typeof v === "string") return JSON.stringify(v);
  if (isTagged(v)) {
    return v.kind === "float" ? pyFloatRepr(v.value) : pyIntRepr(v.value);
  }
  if (Array.isArray(v)) {
    return "[" + v.map(canonicalStringify).join(",") + "]";
  }
  const keys = Object.keys(v).sort();
  const parts = keys.map((k) => JSON.stringify(k) + ":" + canonicalStringify((v as any)[k]));
  return "{" + parts.join(",") + "}";
}

export async function sha256Hex(text: string): Promise<string> {
  const data = new TextEncoder().encode(text);
  const digest = await crypto.subtle.digest("SHA-256", data);
  return Array.from(new Uint8Array(digest))
    .map((b) => b.toString(16).padStart(2, "0"))
    .join("");
}
