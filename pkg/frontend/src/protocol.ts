// Wire protocol types: ops, frames, and the emoji catalog.
// Field shapes mirror docs/formats.md exactly.

export type Stamp = [number, number]; // [time, replica]

export type BlockKind = "p" | "h1" | "h2" | "h3" | "bullet" | "numbered";
export type MarkType = "bold" | "italic" | "underline";

export type Op =
  | { k: "ins_t"; o: number; s: number; id: string; b: string; a: string | null; ch: string }
  | { k: "del_t"; o: number; s: number; tg: string[] }
  | { k: "ins_b"; o: number; s: number; b: string; a: string | null }
  | { k: "del_b"; o: number; s: number; b: string }
  | { k: "kind"; o: number; s: number; b: string; kind: BlockKind; ts: Stamp }
  | { k: "mark"; o: number; s: number; b: string; from: string; to: string;
      mark: MarkType; on: boolean; ts: Stamp }
  | { k: "title"; o: number; s: number; text: string; ts: Stamp }
  | { k: "ann"; o: number; s: number; id: string; emoji: string; b: string;
      author: string; at: number }
  | { k: "res"; o: number; s: number; id: string };

export interface CursorEntry {
  user: string;
  block: string | null;
  offset: number | null;
}

export type ServerFrame =
  | { t: "welcome"; snapshot: string | null; seq: number; replica: number;
      participants: string[] }
  | { t: "ops"; ops: Op[]; seq: number }
  | { t: "presence_fanout"; cursors: CursorEntry[] }
  | { t: "chitchat_fanout"; emoji: string; sender: string; sent_at: number }
  | { t: "error"; code: string; msg: string };

export type ClientFrame =
  | { t: "hello"; token: string; doc: string; have_seq: number }
  | { t: "ops"; ops: Op[] }
  | { t: "presence"; cursor: { block: string; offset: number } | null }
  | { t: "chitchat"; emoji: string };

export type EmojiCategory = "nt" | "cc";

export interface Emoji {
  code: string;
  label: string;
  category: EmojiCategory;
  glyph: string;
}

export const EMOJI_CATALOG: readonly Emoji[] = [
  { code: "nt.important", label: "Important", category: "nt", glyph: "⭐" },
  { code: "nt.detail_plz", label: "Detail PLZ", category: "nt", glyph: "🔍" },
  { code: "nt.is_sufficient", label: "Is Sufficient", category: "nt", glyph: "👌" },
  { code: "nt.plz_as_the_slide", label: "PLZ As the Slide", category: "nt", glyph: "🖥️" },
  { code: "nt.plz_add_the_photo", label: "PLZ Add the Photo", category: "nt", glyph: "📷" },
  { code: "nt.plz_fix_it", label: "PLZ Fix It", category: "nt", glyph: "🔧" },
  { code: "nt.too_difficult", label: "Too Difficult", category: "nt", glyph: "🤯" },
  { code: "nt.did_i_write_correctly", label: "Did I Write Correctly?", category: "nt", glyph: "✏️" },
  { code: "nt.brb", label: "BRB", category: "nt", glyph: "🚪" },
  { code: "cc.thank_you", label: "Thank You", category: "cc", glyph: "🙏" },
  { code: "cc.great", label: "Great", category: "cc", glyph: "👍" },
  { code: "cc.you_got_this", label: "You Got This", category: "cc", glyph: "💪" },
  { code: "cc.funny", label: "Funny", category: "cc", glyph: "😂" },
  { code: "cc.focus_here_plz", label: "Focus Here PLZ", category: "cc", glyph: "👀" },
  { code: "cc.what_about_short_break", label: "What about Short Break", category: "cc", glyph: "☕" },
  { code: "cc.dont_doze_off", label: "Don't Doze Off", category: "cc", glyph: "⏰" },
  { code: "cc.plz_help", label: "PLZ Help", category: "cc", glyph: "🆘" },
  { code: "cc.wanna_go_to_the_bathroom", label: "Wanna Go To the Bathroom", category: "cc", glyph: "🚻" },
];

export function emojiByCode(code: string): Emoji | undefined {
  return EMOJI_CATALOG.find((e) => e.code === code);
}

export function noteTakingEmojis(): Emoji[] {
  return EMOJI_CATALOG.filter((e) => e.category === "nt");
}

export function chitChatEmojis(): Emoji[] {
  return EMOJI_CATALOG.filter((e) => e.category === "cc");
}
