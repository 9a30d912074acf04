// Plain-text export: title line, one line per block, "- " bullets and
// "N. " numbering that restarts on every break in a numbered run.
// Marks, annotations, and emojis do not survive into txt.

import type { DocView } from "./replica.js";

export function exportTxt(doc: DocView): string {
  const lines = [doc.title];
  let run = 0;
  for (const block of doc.blocks) {
    if (block.kind === "numbered") {
      run += 1;
      lines.push(`${run}. ${block.text}`);
    } else {
      run = 0;
      lines.push(block.kind === "bullet" ? `- ${block.text}` : block.text);
    }
  }
  return lines.join("\n") + "\n";
}

export function downloadTxt(doc: DocView, filename: string): void {
  const blob = new Blob([exportTxt(doc)], { type: "text/plain;charset=utf-8" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = filename;
  a.click();
  URL.revokeObjectURL(a.href);
}
