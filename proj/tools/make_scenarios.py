#!/usr/bin/env python3
"""Regenerates the scripted mock scenarios and datasets under data/.

Every scenario is hand-designed; this script only expands the designs into the
JSON the mock backend reads. Run from the repository root:

    python3 tools/make_scenarios.py
"""
import json
import math
import os

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")
DATA = os.path.join(ROOT, "data")

LABELS = ["A", "B", "C", "D"]
COT_IDS = [f"cot-{i}" for i in range(7)]


def ln(p):
    return math.log(p)


def logprobs(winner, p, others=None):
    """Answer-position log-probabilities with `p` on `winner`."""
    rest = [l for l in LABELS if l != winner]
    share = (1.0 - p) / len(rest)
    out = {l: ln(share) for l in rest}
    out[winner] = ln(p)
    if others:
        out.update({k: ln(v) for k, v in others.items()})
    return out


def reply(text, lp=None, attention=None, tokens=None):
    return {
        "text": text,
        "answer_logprobs": lp or {},
        "attention": attention,
        "token_count": tokens if tokens is not None else len(text.split()),
    }


def entry(task, strategy, rep, round_="plain", covers=None):
    e = {"task_id": task, "strategy_id": strategy, "round": round_, "reply": rep}
    if covers is not None:
        e["when"] = {"covers": list(covers)}
    return e


def write_json(path, obj):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=1)
        f.write("\n")


def write_jsonl(path, rows):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")


def repetitive(phrase, times=3, lead="Thinking Process:"):
    return (lead + " " + " ".join([phrase] * times)).strip()


# Correction scenario ---------------------------------------------------------
#
# 16 sampled frames of a 480-frame clip at 30 fps (stride 30), so segment 12 is
# native frame 360. Two heads, three subtitle segments.

K1 = 16


def flat_row(value, peak=None, extra=None):
    row = [value] * K1
    if peak:
        for j, v in peak.items():
            row[j] = v
    if extra:
        for j, v in extra.items():
            row[j] = v
    return row


CORR_BASE_ATT = {
    "heads": 2,
    "video": [flat_row(0.02, {12: 0.40}), flat_row(0.02, {12: 0.30})],
    "sub": [[0.05, 0.10, 0.05], [0.05, 0.15, 0.05]],
}
# Anchor CoT: attention leaves segment 12 (and subtitle 1) for segment 3.
CORR_DRIFT_ATT = {
    "heads": 2,
    "video": [flat_row(0.02, {12: 0.05, 3: 0.10}), flat_row(0.02, {12: 0.05, 3: 0.08})],
    "sub": [[0.05, 0.02, 0.05], [0.05, 0.03, 0.05]],
}
# Remaining CoTs: diffuse, low-mass attention.
CORR_DIFFUSE_ATT = {
    "heads": 2,
    "video": [flat_row(0.015), flat_row(0.015)],
    "sub": [[0.02, 0.02, 0.02], [0.02, 0.02, 0.02]],
}

LOOP_PHRASE = "the curve keeps rising after the midpoint so the value must be B and"


def correction_task(task_id, truth="A", wrong="B", round2=None):
    """Base right with focused attention; CoTs drift away and answer `wrong`."""
    cot_conf = [0.40, 0.25, 0.25, 0.20, 0.20, 0.15, 0.15]
    entries = [
        entry(task_id, "base",
              reply(f"Answer: {truth}", logprobs(truth, 0.55), CORR_BASE_ATT, 3)),
    ]
    for i, cid in enumerate(COT_IDS):
        att = CORR_DRIFT_ATT if i == 0 else CORR_DIFFUSE_ATT
        if i >= 3:
            text = repetitive(LOOP_PHRASE.replace(" B ", f" {wrong} ")) + f" so the answer is {wrong}."
        else:
            text = (f"Thinking Process: the narrator compares the two curves and the later one "
                    f"dominates. Therefore, the answer is {wrong}.")
        entries.append(entry(task_id, cid, reply(text, logprobs(wrong, cot_conf[i]), att)))
    final = round2 or truth
    entries.append(entry(task_id, "cot-kf", reply(
        "Thinking Process: the re-inserted frame at 12 seconds shows the peak value on the first "
        f"curve, which settles the comparison. Answer: {final}",
        logprobs(final, 0.80)), round_="keyframes"))
    return entries


def correction_record(task_id, truth="A"):
    return {
        "id": task_id,
        "question": "Which curve reaches the higher peak in the lecture's final chart?",
        "choices": {"A": "the blue curve", "B": "the red curve", "C": "both peak equally",
                    "D": "neither curve is shown"},
        "answer": truth,
        "duration_s": 16.0,
        "fps": 30.0,
        "total_frames": 480,
        "sampled_frames": K1,
        "subtitles": [
            {"start": 0.0, "end": 4.0, "text": "Here are the two measurements."},
            {"start": 4.0, "end": 10.0, "text": "Watch the blue curve near the end."},
            {"start": 10.0, "end": 16.0, "text": "Compare their maxima."},
        ],
        "media_ref": f"videos/{task_id}",
    }


# Evaluation set -----------------------------------------------------------------

PLAIN_ATT = {"heads": 1, "video": [flat_row(0.04)], "sub": []}


def eval_record(task_id, truth):
    return {
        "id": task_id,
        "question": f"Scripted question {task_id}.",
        "choices": {"A": "first option", "B": "second option", "C": "third option",
                    "D": "fourth option"},
        "answer": truth,
        "duration_s": 16.0,
        "fps": 30.0,
        "total_frames": 480,
        "sampled_frames": K1,
        "subtitles": [],
        "media_ref": f"videos/{task_id}",
    }


def unanimous(task_id, label, conf=0.9):
    out = [entry(task_id, "base", reply(f"Answer: {label}", logprobs(label, conf), PLAIN_ATT))]
    for cid in COT_IDS:
        out.append(entry(task_id, cid, reply(
            f"Thinking Process: the key scene settles it. The answer is {label}.",
            logprobs(label, conf - 0.05), PLAIN_ATT)))
    return out


def split(task_id, round2):
    """4 x A and 4 x B, weak and repetitive: both option sums stay under 2.4."""
    base_att = {"heads": 1, "video": [flat_row(0.04, {5: 0.20})], "sub": []}
    drift_att = {"heads": 1, "video": [flat_row(0.01, {5: 0.0})], "sub": []}
    out = [entry(task_id, "base", reply("Answer: A", logprobs("A", 0.30), base_att))]
    for i, cid in enumerate(COT_IDS):
        label = "A" if i < 3 else "B"
        out.append(entry(task_id, cid, reply(
            repetitive("it is hard to tell which scene matters from these few frames")
            + f" The answer is {label}.",
            logprobs(label, 0.28 - 0.01 * i), drift_att)))
    out.append(entry(task_id, "cot-kf", reply(
        f"Thinking Process: the added frame resolves it. Answer: {round2}",
        logprobs(round2, 0.7)), round_="keyframes"))
    return out


def forest_vs_majority(task_id):
    """3 confident A (base included) against 5 weak, repetitive B."""
    out = [entry(task_id, "base", reply("Answer: A", logprobs("A", 0.95), PLAIN_ATT))]
    for i, cid in enumerate(COT_IDS):
        if i < 2:
            out.append(entry(task_id, cid, reply(
                "Thinking Process: the caption names the first option. The answer is A.",
                logprobs("A", 0.90), PLAIN_ATT)))
        else:
            out.append(entry(task_id, cid, reply(
                repetitive("the picture might show the second option but it is hard to say")
                + " so the answer is B.",
                logprobs("B", 0.10), {"heads": 1, "video": [flat_row(0.01)], "sub": []})))
    return out


def unparsed(task_id):
    out = [entry(task_id, "base", reply("I cannot tell from the video.", {}, PLAIN_ATT))]
    for cid in COT_IDS:
        out.append(entry(task_id, cid, reply(
            "Thinking Process: the frames are too dark to see anything useful.", {}, PLAIN_ATT)))
    out.append(entry(task_id, "cot-kf", reply("Still unclear.", {}), round_="plain"))
    out.append(entry(task_id, "cot-kf", reply("Still unclear.", {}), round_="keyframes"))
    return out


def eval_set():
    # (id, truth, entries); e06, e07 and e08 are scripted to end incorrect.
    designs = [
        ("e01", "A", unanimous("e01", "A")),
        ("e02", "C", unanimous("e02", "C")),
        ("e03", "A", correction_task("e03", "A", "B")),
        ("e04", "B", split("e04", "B")),
        ("e05", "A", forest_vs_majority("e05")),
        ("e06", "D", unanimous("e06", "B")),
        ("e07", "A", correction_task("e07", "A", "B", round2="C")),
        ("e08", "B", unparsed("e08")),
        ("e09", "D", unanimous("e09", "D", conf=0.7)),
        ("e10", "B", unanimous("e10", "B")),
    ]
    records, entries = [], []
    for tid, truth, es in designs:
        rec = correction_record(tid, truth) if tid in ("e03", "e07") else eval_record(tid, truth)
        records.append(rec)
        entries.extend(es)
    return records, {"name": "eval10", "entries": entries}


# Stability family ---------------------------------------------------------------
#
# 900 frames at 30 fps, 16 sampled (stride 56.25). Each task hides its evidence
# in a 7-frame window; a response is right only if its frame set touches it.

ST_TOTAL = 900
ST_FRAMES = 16
ST_STRIDE = ST_TOTAL / ST_FRAMES


def uniform(i):
    return (2 * i * ST_TOTAL + ST_FRAMES) // (2 * ST_FRAMES)


def stability_family():
    # (segment, offset from the uniform position): offset 0 is covered at d = 0.
    designs = [(2, 0), (3, 25), (5, -22), (7, 0), (9, 18), (11, -26), (13, 0), (14, 24)]
    records, entries = [], []
    for n, (seg, offset) in enumerate(designs):
        tid = f"s{n + 1:02d}"
        truth = LABELS[n % 4]
        wrong1 = LABELS[(n + 1) % 4]
        wrong2 = LABELS[(n + 2) % 4]
        center = uniform(seg) + offset
        window = (center - 3, center + 3)
        focus = {"heads": 1, "video": [flat_row(0.03, {seg: 0.40})], "sub": []}
        drifted = {"heads": 1, "video": [flat_row(0.03, {seg: 0.02})], "sub": []}
        entries += [
            entry(tid, "base", reply(f"Answer: {truth}", logprobs(truth, 0.9), focus), covers=window),
            entry(tid, "base", reply(f"Answer: {wrong1}", logprobs(wrong1, 0.4), focus)),
            entry(tid, "cot-0", reply(
                f"Thinking Process: the frame shows it clearly. Answer: {truth}",
                logprobs(truth, 0.8), focus), covers=window),
            entry(tid, "cot-0", reply(
                f"Thinking Process: reasoning from the narration alone. Answer: {wrong2}",
                logprobs(wrong2, 0.3), drifted)),
            entry(tid, "cot-kf", reply(
                f"Thinking Process: the densely sampled frames show it. Answer: {truth}",
                logprobs(truth, 0.85)), round_="keyframes", covers=window),
            entry(tid, "cot-kf", reply(
                f"Thinking Process: still no clear view. Answer: {wrong1}",
                logprobs(wrong1, 0.5)), round_="keyframes"),
            entry(tid, "cot-kf", reply(
                f"Thinking Process: no new evidence. Answer: {wrong1}",
                logprobs(wrong1, 0.5)), round_="plain"),
        ]
        records.append({
            "id": tid,
            "question": f"What does the demonstrator hold up in scene {seg}?",
            "choices": {"A": "a wrench", "B": "a ruler", "C": "a flask", "D": "a magnet"},
            "answer": truth,
            "duration_s": ST_TOTAL / 30.0,
            "fps": 30.0,
            "total_frames": ST_TOTAL,
            "sampled_frames": ST_FRAMES,
            "subtitles": [],
            "media_ref": f"videos/{tid}",
        })
    config = {
        "rounds": [{"n": 2, "tau": 0.5, "dense_sampling": True}, {"n": 1, "tau": 0.0}],
        "dense_radius": 60,
        "parallelism": 2,
    }
    return records, {"name": "stability", "entries": entries}, config


def main():
    corr_entries = correction_task("t1")
    write_jsonl(os.path.join(DATA, "correction", "dataset.jsonl"), [correction_record("t1")])
    write_json(os.path.join(DATA, "correction", "scenario.json"),
               {"name": "correction", "entries": corr_entries})

    records, scenario = eval_set()
    write_jsonl(os.path.join(DATA, "eval10", "dataset.jsonl"), records)
    write_json(os.path.join(DATA, "eval10", "scenario.json"), scenario)

    records, scenario, config = stability_family()
    write_jsonl(os.path.join(DATA, "stability", "dataset.jsonl"), records)
    write_json(os.path.join(DATA, "stability", "scenario.json"), scenario)
    write_json(os.path.join(DATA, "stability", "config.json"), config)

    write_json(os.path.join(DATA, "configs", "default.json"), {})
    write_json(os.path.join(DATA, "configs", "majority.json"),
               {"rounds": [{"n": 8, "tau": 0.0}], "scoring": "majority"})
    write_json(os.path.join(DATA, "configs", "forest_single_round.json"),
               {"rounds": [{"n": 8, "tau": 0.0}]})
    write_json(os.path.join(DATA, "configs", "two_path.json"),
               {"rounds": [{"n": 2, "tau": 0.5}, {"n": 1, "tau": 0.0}]})


if __name__ == "__main__":
    main()
