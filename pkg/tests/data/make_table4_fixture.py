"""Regenerate the synthetic per-pair usage fixture (run from repo root).

Seven pairs with counts (notes, nt emojis, cc emojis):
G1 (4, 21, 8), G2 (5, 4, 4), G3 (5, 25, 8), G4 (5, 24, 12),
G5 (28, 20, 5), G6 (6, 2, 2), G7 (7, 1, 2).
"""

import json
import random
from pathlib import Path

PAIRS = {
    "G1": (4, 21, 8),
    "G2": (5, 4, 4),
    "G3": (5, 25, 8),
    "G4": (5, 24, 12),
    "G5": (28, 20, 5),
    "G6": (6, 2, 2),
    "G7": (7, 1, 2),
}
NT = ["nt.important", "nt.detail_plz", "nt.plz_fix_it", "nt.too_difficult",
      "nt.did_i_write_correctly", "nt.is_sufficient"]
CC = ["cc.thank_you", "cc.great", "cc.you_got_this", "cc.funny",
      "cc.dont_doze_off"]


def main():
    rng = random.Random(2023)
    here = Path(__file__).parent
    events = []
    pair_map = {}
    ts = 1_696_000_000_000  # fall term, ms
    for i, (pair, (notes, nt, cc)) in enumerate(PAIRS.items(), start=1):
        swd, pnt = f"swd{i}", f"pnt{i}"
        pair_map[swd] = pair
        pair_map[pnt] = pair
        doc_ids = []
        for d in range(notes):
            ts += rng.randint(1000, 500_000)
            doc_id = f"d{i:02d}{d:02d}"
            doc_ids.append(doc_id)
            events.append({"ts": ts, "class": f"c{i:02d}", "doc": doc_id,
                           "user": pnt, "kind": "note_created"})
        for _ in range(nt):
            ts += rng.randint(1000, 100_000)
            events.append({"ts": ts, "class": f"c{i:02d}",
                           "doc": rng.choice(doc_ids), "user": swd,
                           "kind": "nt_emoji_inserted",
                           "emoji": rng.choice(NT)})
        for j in range(cc):
            ts += rng.randint(1000, 100_000)
            events.append({"ts": ts, "class": f"c{i:02d}",
                           "doc": rng.choice(doc_ids),
                           "user": swd if j % 2 else pnt,
                           "kind": "cc_emoji_sent", "emoji": rng.choice(CC)})
    events.sort(key=lambda e: e["ts"])
    with (here / "table4_usage.jsonl").open("w") as f:
        for ev in events:
            f.write(json.dumps(ev, separators=(",", ":")) + "\n")
    (here / "table4_pairs.json").write_text(
        json.dumps(pair_map, indent=1, sort_keys=True))
    print(f"wrote {len(events)} events for {len(PAIRS)} pairs")


if __name__ == "__main__":
    main()
