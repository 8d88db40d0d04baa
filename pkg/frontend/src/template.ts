// Slot-template parsing, mirroring the server's rules: {name} slots with
// names of [A-Za-z0-9_]+, and doubled braces as escapes. The wizard console
// uses this to open the inline binding mini-form when an utterance has slots.

const SLOT_NAME = /^[A-Za-z0-9_]+$/;

export function templateSlots(template: string): string[] {
  const names: string[] = [];
  let i = 0;
  while (i < template.length) {
    const ch = template[i];
    if (ch === "{") {
      if (template[i + 1] === "{") {
        i += 2;
        continue;
      }
      const end = template.indexOf("}", i + 1);
      if (end === -1) return names; // malformed: surface what we have
      const name = template.slice(i + 1, end);
      if (SLOT_NAME.test(name) && !names.includes(name)) names.push(name);
      i = end + 1;
    } else if (ch === "}" && template[i + 1] === "}") {
      i += 2;
    } else {
      i += 1;
    }
  }
  return names;
}

export function previewTemplate(template: string, bindings: Record<string, string>): string {
  let out = "";
  let i = 0;
  while (i < template.length) {
    const ch = template[i];
    if (ch === "{") {
      if (template[i + 1] === "{") {
        out += "{";
        i += 2;
        continue;
      }
      const end = template.indexOf("}", i + 1);
      if (end === -1) {
        out += template.slice(i);
        break;
      }
      const name = template.slice(i + 1, end);
      out += bindings[name] ?? `{${name}}`;
      i = end + 1;
    } else if (ch === "}" && template[i + 1] === "}") {
      out += "}";
      i += 2;
    } else {
      out += ch;
      i += 1;
    }
  }
  return out;
}
