// Floating emoji windows: toggleable, closeable, draggable anywhere on
// the page (position remembered per user in this browser).

import type { Emoji } from "./protocol.js";
import { WindowPos, loadWindowPos, saveWindowPos } from "./uistate.js";

export interface EmojiWindow {
  el: HTMLDivElement;
  toggle(): void;
  isOpen(): boolean;
}

export function createEmojiWindow(
  user: string,
  name: string,
  title: string,
  emojis: Emoji[],
  fallback: WindowPos,
  onPick: (emoji: Emoji) => void,
): EmojiWindow {
  const pos = loadWindowPos(localStorage, user, name, fallback);
  const el = document.createElement("div");
  el.className = "emoji-window";
  el.style.left = `${pos.x}px`;
  el.style.top = `${pos.y}px`;
  el.style.display = pos.open ? "block" : "none";

  const header = document.createElement("div");
  header.className = "emoji-window-header";
  header.textContent = title;
  const closeBtn = document.createElement("button");
  closeBtn.className = "emoji-window-close";
  closeBtn.textContent = "×";
  header.appendChild(closeBtn);
  el.appendChild(header);

  const grid = document.createElement("div");
  grid.className = "emoji-grid";
  for (const emoji of emojis) {
    const btn = document.createElement("button");
    btn.className = "emoji-btn";
    btn.title = emoji.label;
    btn.innerHTML = `<span class="emoji-glyph">${emoji.glyph}</span>` +
      `<span class="emoji-label">${emoji.label}</span>`;
    btn.addEventListener("click", () => onPick(emoji));
    grid.appendChild(btn);
  }
  el.appendChild(grid);

  const save = () => {
    saveWindowPos(localStorage, user, name, {
      x: el.offsetLeft, y: el.offsetTop,
      open: el.style.display !== "none",
    });
  };

  closeBtn.addEventListener("click", () => {
    el.style.display = "none";
    save();
  });

  header.addEventListener("pointerdown", (down) => {
    if (down.target === closeBtn) return;
    down.preventDefault();
    const startX = down.clientX - el.offsetLeft;
    const startY = down.clientY - el.offsetTop;
    const move = (ev: PointerEvent) => {
      el.style.left = `${Math.max(0, ev.clientX - startX)}px`;
      el.style.top = `${Math.max(0, ev.clientY - startY)}px`;
    };
    const up = () => {
      window.removeEventListener("pointermove", move);
      window.removeEventListener("pointerup", up);
      save();
    };
    window.addEventListener("pointermove", move);
    window.addEventListener("pointerup", up);
  });

  document.body.appendChild(el);
  return {
    el,
    toggle() {
      el.style.display = el.style.display === "none" ? "block" : "none";
      save();
    },
    isOpen() {
      return el.style.display !== "none";
    },
  };
}
