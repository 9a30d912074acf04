// Chit-chat toasts: bottom right, gone 5 seconds after the send time.

import { emojiByCode } from "./protocol.js";
import { Toast, liveToasts, makeToast } from "./uistate.js";

let container: HTMLDivElement | null = null;
let toasts: Toast[] = [];

function ensureContainer(): HTMLDivElement {
  if (!container) {
    container = document.createElement("div");
    container.className = "toast-stack";
    document.body.appendChild(container);
  }
  return container;
}

function render(): void {
  const host = ensureContainer();
  host.textContent = "";
  for (const toast of toasts) {
    const emoji = emojiByCode(toast.emoji);
    const el = document.createElement("div");
    el.className = "toast";
    el.textContent = `${emoji?.glyph ?? "✨"} ${emoji?.label ?? toast.emoji}`;
    const who = document.createElement("span");
    who.className = "toast-sender";
    who.textContent = toast.sender;
    el.appendChild(who);
    host.appendChild(el);
  }
}

export function showChitchat(emojiCode: string, sender: string,
                             sentAt: number): void {
  const toast = makeToast(emojiCode, sender, sentAt);
  toasts.push(toast);
  render();
  const wait = Math.max(0, toast.expiresAt - Date.now());
  setTimeout(() => {
    toasts = liveToasts(toasts, Date.now());
    render();
  }, wait + 20);
}
