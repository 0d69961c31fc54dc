#!/usr/bin/env python3
"""Regenerates tests/fixtures. Output is deterministic for a given seed."""

import argparse
import json
import random
from pathlib import Path

PLACES = ["Lisbon", "Kyoto", "Banff", "Oaxaca", "Tromso", "Hoi An", "Cappadocia", "Valparaiso", "Hobart", "Bergen"]
PETS = ["Oscar", "Luna", "Biscuit", "Pepper", "Mochi", "Juniper", "Waffles", "Ziggy"]
HOBBIES = ["pottery", "bouldering", "watercolor painting", "salsa dancing", "birdwatching", "sourdough baking",
           "rowing", "chess", "gardening", "woodworking"]
BOOKS = ["Becoming", "Circe", "Educated", "Piranesi", "The Overstory", "Pachinko", "Klara and the Sun"]
FOODS = ["ramen", "tamales", "pho", "paella", "dumplings", "shakshuka", "pierogi"]

MONTHS = ["January", "February", "March", "April", "May", "June", "July", "August", "September", "October",
          "November", "December"]


def locomo(rng):
    a, b = "Caroline", "Melanie"
    # 12 sessions of 12 turns and 7 of 10: 214 turns, 107 consecutive pairs.
    sizes = [12] * 12 + [10] * 7
    rng.shuffle(sizes)
    conv = {"speaker_a": a, "speaker_b": b}
    facts = []
    day, month, year = 8, 5, 2023
    for s, size in enumerate(sizes, start=1):
        hour = rng.randint(1, 11)
        minute = rng.randint(0, 59)
        conv[f"session_{s}_date_time"] = f"{hour}:{minute:02d} {'am' if s % 2 else 'pm'} on {day} {MONTHS[month - 1]}, {year}"
        turns = []
        if s == 1:
            turns += [(b, "Are you seeing anyone?"), (a, "No, I'm single right now.")]
            facts.append(("single-hop", "What is Caroline's relationship status?", "single", f"D{s}:2"))
        while len(turns) < size:
            kind = rng.randrange(5)
            speaker, other = (a, b) if rng.random() < 0.5 else (b, a)
            if kind == 0:
                place = rng.choice(PLACES)
                turns += [(other, "Did you travel anywhere lately?"), (speaker, f"Yes, I spent a week in {place} and loved it.")]
                facts.append(("single-hop", f"Where did {speaker} spend a week?", place, f"D{s}:{len(turns)}"))
            elif kind == 1:
                pet = rng.choice(PETS)
                turns += [(other, "How is the new puppy?"), (speaker, f"{pet} is settling in, he chewed my shoes already.")]
                facts.append(("single-hop", f"What is the name of {speaker}'s puppy?", pet, f"D{s}:{len(turns)}"))
            elif kind == 2:
                hobby = rng.choice(HOBBIES)
                turns += [(other, "Picked up anything new?"), (speaker, f"I started {hobby} classes on Tuesdays.")]
                facts.append(("multi-hop", f"Which hobby did {speaker} start?", hobby, f"D{s}:{len(turns)}"))
            elif kind == 3:
                book = rng.choice(BOOKS)
                turns += [(other, "Reading anything good?"), (speaker, f"I just finished {book}, it stayed with me.")]
                facts.append(("open-domain", f"What book did {speaker} recently finish?", book, f"D{s}:{len(turns)}"))
            else:
                food = rng.choice(FOODS)
                turns += [(other, "What did you cook this week?"), (speaker, f"I made {food} from my grandmother's recipe.")]
                facts.append(("temporal", f"When did {speaker} cook {food}?", f"{day} {MONTHS[month - 1]} {year}", f"D{s}:{len(turns)}"))
        conv[f"session_{s}"] = [{"speaker": sp, "dia_id": f"D{s}:{i + 1}", "text": t} for i, (sp, t) in enumerate(turns)]
        day += rng.randint(3, 12)
        if day > 28:
            day -= 28
            month += 1
            if month > 12:
                month, year = 1, year + 1

    want = {"single-hop": 70, "multi-hop": 40, "open-domain": 12, "temporal": 30}
    code = {"multi-hop": 1, "temporal": 2, "open-domain": 3, "single-hop": 4}
    by_cat = {c: [f for f in facts if f[0] == c] for c in want}
    qa = []
    for cat, n in want.items():
        pool = by_cat[cat]
        assert pool, cat
        for i in range(n):
            _, q, ans, ev = pool[i % len(pool)]
            if i >= len(pool):
                q = q.replace("?", f" (asked again, {i // len(pool) + 1})?")
            qa.append({"question": q, "answer": ans, "evidence": [ev], "category": code[cat]})
    for i in range(47):
        _, q, ans, ev = rng.choice(facts)
        qa.append({"question": q.replace("spend", "never spend").replace("start", "quit"),
                   "adversarial_answer": ans, "evidence": [ev], "category": 5})
    rng.shuffle(qa)
    return {"sample_id": "conv-26", "conversation": conv, "qa": qa}


LME_TYPES = {"single-session-user": 70, "single-session-assistant": 56, "single-session-preference": 30,
             "multi-session": 133, "temporal-reasoning": 133, "knowledge-update": 78}


def longmemeval(rng):
    items = []
    seen = set()
    for qtype, count in LME_TYPES.items():
        for i in range(count):
            qid = f"{rng.getrandbits(32):08x}"
            while qid in seen:
                qid = f"{rng.getrandbits(32):08x}"
            seen.add(qid)
            place = rng.choice(PLACES)
            hobby = rng.choice(HOBBIES)
            sessions, ids, dates = [], [], []
            answer_idx = rng.randrange(3)
            for s in range(3):
                day = rng.randint(1, 28)
                month = rng.randint(1, 12)
                dates.append(f"2023/{month:02d}/{day:02d} ({['Mon', 'Tue', 'Wed', 'Thu', 'Fri', 'Sat', 'Sun'][s]}) {rng.randint(0, 23):02d}:{rng.randint(0, 59):02d}")
                ids.append(f"{qid}_s{s}")
                if s == answer_idx:
                    turns = [{"role": "user", "content": f"I'm planning a trip to {place} and want to try {hobby} there."},
                             {"role": "assistant", "content": f"{place} is a good choice; I can suggest {hobby} spots."}]
                else:
                    other = rng.choice(FOODS)
                    turns = [{"role": "user", "content": f"Can you give me a recipe for {other}?"},
                             {"role": "assistant", "content": f"Sure, here is a simple {other} recipe."}]
                turns += [{"role": "user", "content": "Thanks, that helps."},
                          {"role": "assistant", "content": "Happy to help."}]
                sessions.append(turns)
            items.append({
                "question_id": qid,
                "question_type": qtype,
                "question": f"Where am I planning to try {hobby}?",
                "answer": place,
                "question_date": "2023/12/30 (Sat) 10:00",
                "haystack_session_ids": ids,
                "haystack_dates": dates,
                "haystack_sessions": sessions,
                "answer_session_ids": [ids[answer_idx]],
            })
    rng.shuffle(items)
    return items


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "fixtures"))
    ap.add_argument("--seed", type=int, default=26)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)

    conv = locomo(rng)
    (out / "locomo_conv26.json").write_text(json.dumps([conv], indent=1) + "\n")
    lme = longmemeval(rng)
    (out / "longmemeval_500.json").write_text(json.dumps(lme) + "\n")

    broken = json.loads(json.dumps(conv))
    kept = [q for q in broken["qa"] if q["category"] != 5]
    del kept[3]["question"]
    broken["qa"] = kept
    (out / "corrupt_locomo_missing_question.json").write_text(json.dumps([broken]) + "\n")
    text = json.dumps([conv])
    (out / "corrupt_locomo_truncated.json").write_text(text[: len(text) // 2])
    bad = json.loads(json.dumps(lme[:3]))
    del bad[1]["haystack_sessions"][0][2]["content"]
    (out / "corrupt_longmemeval_turn.json").write_text(json.dumps(bad) + "\n")
    bad = json.loads(json.dumps(lme[:3]))
    del bad[2]["question_type"]
    (out / "corrupt_longmemeval_type.json").write_text(json.dumps(bad) + "\n")


if __name__ == "__main__":
    main()
