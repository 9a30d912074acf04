// Pure UI state helpers kept out of the DOM layer so they can be tested.

export interface Toast {
  emoji: string;
  sender: string;
  sentAt: number;
  expiresAt: number; // sentAt + 5000 ms
}

export const TOAST_TTL_MS = 5000;

export function makeToast(emoji: string, sender: string, sentAt: number): Toast {
  return { emoji, sender, sentAt, expiresAt: sentAt + TOAST_TTL_MS };
}

/** A toast is rendered iff now < expiresAt; expired ones are dropped. */
export function liveToasts(toasts: Toast[], now: number): Toast[] {
  return toasts.filter((t) => now < t.expiresAt);
}

/** At most one block is selected for note-taking emoji insertion. */
export class BlockSelection {
  private selected: string | null = null;

  toggle(blockId: string): string | null {
    this.selected = this.selected === blockId ? null : blockId;
    return this.selected;
  }

  clearIfMissing(liveIds: Set<string>): void {
    if (this.selected !== null && !liveIds.has(this.selected)) {
      this.selected = null;
    }
  }

  get current(): string | null {
    return this.selected;
  }
}

export interface WindowPos {
  x: number;
  y: number;
  open: boolean;
}

export interface PosStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

/** Drag positions persist per user per browser only (a local preference). */
export function loadWindowPos(store: PosStore, user: string, name: string,
                              fallback: WindowPos): WindowPos {
  const raw = store.getItem(`notebridge.${user}.${name}`);
  if (!raw) return fallback;
  try {
    return { ...fallback, ...JSON.parse(raw) };
  } catch {
    return fallback;
  }
}

export function saveWindowPos(store: PosStore, user: string, name: string,
                              pos: WindowPos): void {
  store.setItem(`notebridge.${user}.${name}`, JSON.stringify(pos));
}
