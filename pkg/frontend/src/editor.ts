// The note editor screen: title field, block list with format menu,
// gray highlights with click-to-resolve emoji chips, partner cursors,
// draggable emoji windows, chit-chat toasts, txt download.

import { Identity } from "./api.js";
import { DocConnection } from "./connection.js";
import { downloadTxt } from "./export.js";
import type { BlockKind, CursorEntry, MarkType } from "./protocol.js";
import { chitChatEmojis, emojiByCode, noteTakingEmojis } from "./protocol.js";
import { showChitchat } from "./toast.js";
import { BlockSelection } from "./uistate.js";
import { createEmojiWindow } from "./windows.js";
import type { BlockView } from "./replica.js";

const KINDS: Array<[BlockKind, string]> = [
  ["p", "Paragraph"], ["h1", "Heading 1"], ["h2", "Heading 2"],
  ["h3", "Heading 3"], ["bullet", "Bullet list"], ["numbered", "Numbered list"],
];

export class Editor {
  private host: HTMLElement;
  private conn: DocConnection;
  private me: Identity;
  private selection = new BlockSelection();
  private remoteCursors: CursorEntry[] = [];
  private focusedBlock: string | null = null;
  private titleEl!: HTMLInputElement;
  private blocksEl!: HTMLDivElement;
  private statusEl!: HTMLSpanElement;
  private cursorTimer: number | undefined;

  constructor(host: HTMLElement, conn: DocConnection, me: Identity,
              onLogout: () => void) {
    this.host = host;
    this.conn = conn;
    this.me = me;
    this.buildChrome(onLogout);
    conn.connect();
  }

  private buildChrome(onLogout: () => void): void {
    this.host.textContent = "";
    const bar = document.createElement("div");
    bar.className = "topbar";

    const ntToggle = document.createElement("button");
    ntToggle.textContent = "📝 emoji";
    ntToggle.title = "Toggle the note-taking emoji window";
    const ccToggle = document.createElement("button");
    ccToggle.textContent = "💬 emoji";
    ccToggle.title = "Toggle the chit-chat emoji window";

    this.titleEl = document.createElement("input");
    this.titleEl.className = "title-field";
    this.titleEl.placeholder = "Note title";
    this.titleEl.addEventListener("change", () => {
      const rep = this.conn.replica;
      if (rep && this.titleEl.value !== rep.title) {
        this.conn.sendOps(rep.setTitle(this.titleEl.value));
      }
    });

    const save = document.createElement("button");
    save.textContent = "Save txt";
    save.addEventListener("click", () => {
      const rep = this.conn.replica;
      if (rep) {
        const doc = rep.materialize();
        downloadTxt(doc, `${doc.title || "note"}.txt`);
      }
    });

    const logout = document.createElement("button");
    logout.textContent = "Log out";
    logout.addEventListener("click", onLogout);

    this.statusEl = document.createElement("span");
    this.statusEl.className = "status";

    const kindSelect = document.createElement("select");
    for (const [value, label] of KINDS) {
      const opt = document.createElement("option");
      opt.value = value;
      opt.textContent = label;
      kindSelect.appendChild(opt);
    }
    kindSelect.addEventListener("change", () => {
      const rep = this.conn.replica;
      if (rep && this.focusedBlock) {
        this.conn.sendOps(rep.setKind(this.focusedBlock,
                                      kindSelect.value as BlockKind));
      }
    });

    const markBtn = (label: string, mark: MarkType) => {
      const btn = document.createElement("button");
      btn.textContent = label;
      btn.className = `mark-${mark}`;
      btn.addEventListener("mousedown", (ev) => ev.preventDefault());
      btn.addEventListener("click", () => this.applyMark(mark));
      return btn;
    };

    bar.append(ntToggle, kindSelect, markBtn("B", "bold"),
               markBtn("I", "italic"), markBtn("U", "underline"),
               this.titleEl, save, ccToggle, this.statusEl, logout);
    this.host.appendChild(bar);

    this.blocksEl = document.createElement("div");
    this.blocksEl.className = "blocks";
    this.host.appendChild(this.blocksEl);

    const addBlock = document.createElement("button");
    addBlock.className = "add-block";
    addBlock.textContent = "+ block";
    addBlock.addEventListener("click", () => {
      const rep = this.conn.replica;
      if (!rep) return;
      const live = rep.liveBlocks();
      const batch = rep.insertBlock(live.length ? live[live.length - 1] : null);
      this.conn.sendOps(batch);
      this.focusedBlock = (batch[0] as { b: string }).b;
      this.render();
    });
    this.host.appendChild(addBlock);

    const ntWindow = createEmojiWindow(
      this.me.user_id, "nt", "Note-taking emoji", noteTakingEmojis(),
      { x: 40, y: 80, open: false },
      (emoji) => {
        const rep = this.conn.replica;
        const target = this.selection.current;
        if (rep && target) {
          this.conn.sendOps(rep.annotate(target, emoji.code, this.me.user_id,
                                         Date.now()));
        }
      });
    const ccWindow = createEmojiWindow(
      this.me.user_id, "cc", "Chit-chat emoji", chitChatEmojis(),
      { x: 40, y: 340, open: false },
      (emoji) => this.conn.sendChitchat(emoji.code));
    ntToggle.addEventListener("click", () => ntWindow.toggle());
    ccToggle.addEventListener("click", () => ccWindow.toggle());
  }

  onStatus(status: string): void {
    this.statusEl.textContent = status === "online" ? "" : `(${status}…)`;
  }

  onPresence(cursors: CursorEntry[]): void {
    this.remoteCursors = cursors;
    this.render();
  }

  onChitchat(emoji: string, sender: string, sentAt: number): void {
    showChitchat(emoji, sender, sentAt);
  }

  render(): void {
    const rep = this.conn.replica;
    if (!rep) return;
    const doc = rep.materialize();
    if (document.activeElement !== this.titleEl) {
      this.titleEl.value = doc.title;
    }
    this.selection.clearIfMissing(new Set(doc.blocks.map((b) => b.id)));

    const annsByBlock = new Map<string, typeof doc.annotations>();
    for (const ann of doc.annotations) {
      if (ann.orphaned) continue;
      let list = annsByBlock.get(ann.block);
      if (!list) annsByBlock.set(ann.block, (list = []));
      list.push(ann);
    }

    this.blocksEl.textContent = "";
    let num = 0;
    for (const block of doc.blocks) {
      num = block.kind === "numbered" ? num + 1 : 0;
      this.blocksEl.appendChild(
        this.renderBlock(block, annsByBlock.get(block.id) ?? [], num));
    }
  }

  private renderBlock(block: BlockView, anns: { id: string; emoji: string;
                                                resolved: boolean }[],
                      num: number): HTMLElement {
    const row = document.createElement("div");
    row.className = `block kind-${block.kind}`;
    row.dataset.blockId = block.id;
    if (block.highlighted) row.classList.add("highlighted");
    if (this.selection.current === block.id) row.classList.add("selected");

    const gutter = document.createElement("div");
    gutter.className = "gutter";
    gutter.title = "Select this line for a note-taking emoji";
    gutter.textContent = block.kind === "bullet" ? "•"
      : block.kind === "numbered" ? `${num}.` : "";
    gutter.addEventListener("click", () => {
      this.selection.toggle(block.id);
      this.render();
    });
    row.appendChild(gutter);

    const content = document.createElement("div");
    content.className = "content";
    content.contentEditable = "true";
    if (this.focusedBlock === block.id) {
      content.textContent = block.text;
    } else {
      this.renderMarked(content, block);
    }
    this.wireEditing(content, block);
    row.appendChild(content);

    for (const cursor of this.remoteCursors) {
      if (cursor.user !== this.me.user_id && cursor.block === block.id) {
        const caret = document.createElement("span");
        caret.className = "remote-caret";
        caret.textContent = `▏${cursor.user}`;
        caret.title = `offset ${cursor.offset}`;
        row.appendChild(caret);
      }
    }

    for (const ann of anns) {
      const emoji = emojiByCode(ann.emoji);
      const chip = document.createElement("button");
      chip.className = ann.resolved ? "ann-chip resolved" : "ann-chip";
      chip.textContent = `${emoji?.glyph ?? ""} ${emoji?.label ?? ann.emoji}`;
      chip.title = ann.resolved ? "Resolved"
        : "Click to mark this as resolved";
      if (!ann.resolved) {
        chip.addEventListener("click", () => {
          const rep = this.conn.replica!;
          this.conn.sendOps(rep.resolve(ann.id));
          this.render();
        });
      }
      row.appendChild(chip);
    }
    return row;
  }

  private renderMarked(host: HTMLElement, block: BlockView): void {
    // split text into runs at mark boundaries
    const cuts = new Set<number>([0, block.text.length]);
    for (const [start, end] of block.marks) {
      cuts.add(start);
      cuts.add(end);
    }
    const edges = [...cuts].sort((a, b) => a - b);
    for (let i = 0; i + 1 < edges.length; i++) {
      const [a, b] = [edges[i], edges[i + 1]];
      const span = document.createElement("span");
      span.textContent = block.text.slice(a, b);
      for (const [ms, me, mark] of block.marks) {
        if (ms <= a && b <= me) span.classList.add(`mark-${mark}`);
      }
      host.appendChild(span);
    }
  }

  private wireEditing(content: HTMLElement, block: BlockView): void {
    content.addEventListener("focus", () => {
      this.focusedBlock = block.id;
      content.textContent = this.conn.replica?.blockText(block.id) ?? "";
    });
    content.addEventListener("input", () => {
      const rep = this.conn.replica;
      if (!rep) return;
      const oldText = rep.blockText(block.id);
      const newText = content.textContent ?? "";
      const ops = this.diffToOps(block.id, oldText, newText);
      if (ops.length) this.conn.sendOps(ops);
      this.reportCursor(block.id, content);
    });
    content.addEventListener("keyup", () => this.reportCursor(block.id, content));
    content.addEventListener("click", () => this.reportCursor(block.id, content));
    content.addEventListener("keydown", (ev) => {
      const rep = this.conn.replica;
      if (!rep) return;
      if (ev.key === "Enter") {
        ev.preventDefault();
        const batch = rep.insertBlock(block.id);
        this.conn.sendOps(batch);
        this.focusedBlock = (batch[0] as { b: string }).b;
        this.render();
        this.focusBlock(this.focusedBlock);
      } else if (ev.key === "Backspace"
                 && (content.textContent ?? "") === ""
                 && rep.liveBlocks().length > 1) {
        ev.preventDefault();
        this.conn.sendOps(rep.deleteBlock(block.id));
        this.focusedBlock = null;
        this.render();
      }
    });
    content.addEventListener("blur", () => {
      if (this.focusedBlock === block.id) this.focusedBlock = null;
      this.render();
    });
  }

  private diffToOps(blockId: string, oldText: string, newText: string) {
    const rep = this.conn.replica!;
    if (oldText === newText) return [];
    let prefix = 0;
    const maxPrefix = Math.min(oldText.length, newText.length);
    while (prefix < maxPrefix && oldText[prefix] === newText[prefix]) prefix++;
    let suffix = 0;
    while (suffix < maxPrefix - prefix
           && oldText[oldText.length - 1 - suffix]
             === newText[newText.length - 1 - suffix]) suffix++;
    const ops = [];
    const delLen = oldText.length - prefix - suffix;
    if (delLen > 0) ops.push(...rep.deleteRange(blockId, prefix, delLen));
    const insert = newText.slice(prefix, newText.length - suffix);
    if (insert) ops.push(...rep.insertText(blockId, prefix, insert));
    return ops;
  }

  private focusBlock(blockId: string): void {
    const row = this.blocksEl.querySelector(`[data-block-id="${blockId}"]`);
    (row?.querySelector(".content") as HTMLElement | null)?.focus();
  }

  private reportCursor(blockId: string, content: HTMLElement): void {
    if (this.cursorTimer !== undefined) return;
    this.cursorTimer = window.setTimeout(() => {
      this.cursorTimer = undefined;
      const sel = window.getSelection();
      let offset = 0;
      if (sel && sel.rangeCount && content.contains(sel.anchorNode)) {
        offset = sel.anchorOffset;
      }
      this.conn.sendCursor(blockId, offset);
    }, 200);
  }

  private applyMark(mark: MarkType): void {
    const rep = this.conn.replica;
    const blockId = this.focusedBlock;
    const sel = window.getSelection();
    if (!rep || !blockId || !sel || sel.rangeCount === 0) return;
    const start = Math.min(sel.anchorOffset, sel.focusOffset);
    const end = Math.max(sel.anchorOffset, sel.focusOffset);
    if (end > start) {
      this.conn.sendOps(rep.setMark(blockId, start, end, mark));
    }
  }
}

export function openEditor(host: HTMLElement, token: string, docId: string,
                           me: Identity, onLogout: () => void): DocConnection {
  const scheme = location.protocol === "https:" ? "wss" : "ws";
  let editor: Editor | null = null;
  const conn = new DocConnection({
    url: `${scheme}://${location.host}/ws`,
    token,
    docId,
    events: {
      onChange: () => editor?.render(),
      onStatus: (s) => editor?.onStatus(s),
      onPresence: (c) => editor?.onPresence(c),
      onChitchat: (e, sender, at) => editor?.onChitchat(e, sender, at),
      onError: (code, msg) => console.warn("server:", code, msg),
    },
  });
  editor = new Editor(host, conn, me, onLogout);
  return conn;
}
