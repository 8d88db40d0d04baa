// Minimal JSON-Schema checker for the shared channel-message contract.
// Supports exactly the constructs schema/messages.json uses: type, enum,
// const, required, properties, additionalProperties, minimum, minLength,
// allOf and if/then. The schema document itself is fetched from the server
// (or read from disk in tests), so both components enforce the same file.

export type Schema = Record<string, unknown>;

function typeOf(value: unknown): string {
  if (value === null) return "null";
  if (Array.isArray(value)) return "array";
  if (typeof value === "number") return Number.isInteger(value) ? "integer" : "number";
  return typeof value;
}

function matchesType(expected: string, value: unknown): boolean {
  const actual = typeOf(value);
  if (expected === "number") return actual === "number" || actual === "integer";
  return actual === expected;
}

export function validate(schema: Schema, value: unknown, path = "$"): string[] {
  const errors: string[] = [];

  if (typeof schema.type === "string" && !matchesType(schema.type, value)) {
    errors.push(`${path}: expected ${schema.type}, got ${typeOf(value)}`);
    return errors;
  }
  if (Array.isArray(schema.enum) && !schema.enum.some((v) => deepEqual(v, value))) {
    errors.push(`${path}: value ${JSON.stringify(value)} not in enum`);
  }
  if ("const" in schema && !deepEqual(schema.const, value)) {
    errors.push(`${path}: expected const ${JSON.stringify(schema.const)}`);
  }
  if (typeof schema.minimum === "number" && typeof value === "number" && value < schema.minimum) {
    errors.push(`${path}: ${value} below minimum ${schema.minimum}`);
  }
  if (typeof schema.minLength === "number" && typeof value === "string"
      && value.length < schema.minLength) {
    errors.push(`${path}: shorter than minLength ${schema.minLength}`);
  }

  if (value !== null && typeof value === "object" && !Array.isArray(value)) {
    const obj = value as Record<string, unknown>;
    const props = (schema.properties ?? {}) as Record<string, Schema>;
    for (const key of (schema.required as string[] | undefined) ?? []) {
      if (!(key in obj)) errors.push(`${path}: missing required property '${key}'`);
    }
    for (const [key, sub] of Object.entries(props)) {
      if (key in obj) errors.push(...validate(sub, obj[key], `${path}.${key}`));
    }
    if (schema.additionalProperties === false) {
      for (const key of Object.keys(obj)) {
        if (!(key in props)) errors.push(`${path}: unexpected property '${key}'`);
      }
    }
  }

  for (const clause of (schema.allOf as Schema[] | undefined) ?? []) {
    if (clause.if !== undefined) {
      const condition = validate(clause.if as Schema, value, path);
      if (condition.length === 0 && clause.then !== undefined) {
        errors.push(...validate(clause.then as Schema, value, path));
      }
    } else {
      errors.push(...validate(clause, value, path));
    }
  }
  return errors;
}

function deepEqual(a: unknown, b: unknown): boolean {
  return JSON.stringify(a) === JSON.stringify(b);
}
