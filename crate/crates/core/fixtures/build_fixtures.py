#!/usr/bin/env python3
"""Writes chains.jsonl and the golden `analyze` outputs under golden/.

The goldens come from the plain-Python reference computations below, not
from the crate. Regenerate only when the fixture itself changes:

    python3 build_fixtures.py

Golden command:

    textcycle analyze --in fixtures/chains.jsonl --out <dir> --matrix \
        --tau 2 --tau 3 --lag --similarity --vendi --ppl --backend mock
"""

import json
import math
import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
GOLDEN = os.path.join(HERE, "golden")
RUN = "fixture"
PROMPT = "Please paraphrase the following text: "
LN_OFF = math.log(0.1)
LN_CANON = math.log(0.9)

ALPHA = [
    "The old bridge was closed for repairs last winter.",
    "Last winter, the old bridge was shut for repairs.",
    "The old bridge was closed for repairs last winter.",
    "Last winter, the old bridge was shut for repair work.",
    "The old bridge was closed for repairs last winter.",
    "Last winter, the old bridge was shut for repairs.",
    "The old bridge was closed for repair last winter.",
    "Last winter, the old bridge was shut for repairs.",
]
BETA = [
    "Our neighbors planted tomatoes in the spring.",
    "In spring, our neighbors put in tomato plants.",
    "Our neighbours planted tomatoes during spring.",
    "During the spring, tomato plants were put in by our neighbours.",
    "Our neighbours planted tomatoes in springtime.",
    "In springtime, tomato plants were set out by our neighbours.",
    "Our neighbours planted tomatoes in springtime.",
    "In springtime, tomato plants were set out by our neighbours.",
]
STEP_LP = [-0.5, -0.25, -0.125, -1.0, -0.75, -0.375, -1.5, -0.0625]


def emb(seed, dim=4):
    # small dyadic entries so JSON floats are short and exact
    vals = [float(((seed * 7 + k * 3) % 9) - 4) / 2.0 for k in range(dim)]
    if all(v == 0.0 for v in vals):
        vals[0] = 1.0
    return vals


def candidates(texts, step, width, selected, salt):
    out = []
    for j in range(width):
        text = texts[step] if j == selected else f"{texts[step]} (alt {j})"
        n = len(text.split())
        lps = [STEP_LP[(step + j + k) % len(STEP_LP)] for k in range(n)]
        total = 0.0
        for v in lps:
            total += v
        e = emb(salt + step * 5 + (0 if j == selected else j * 11))
        if j != selected and step % 3 == 0:
            e = emb(salt + step * 5)  # duplicate of the selected vector
        out.append({"text": text, "sum_logprob": total, "token_logprobs": lps, "embedding": e})
    return out


def chain_lines(chain_id, texts, width, selections, salt):
    lines = []
    for step, text in enumerate(texts):
        rec = {"run_id": RUN, "chain_id": chain_id, "task": "paraphrase", "language": "en", "step": step, "text": text}
        if step > 0:
            rec["prompt_id"] = "paraphrase-a"
            rec["model_id"] = "fixture-model"
            rec["temperature"] = 0.6
            rec["candidates"] = candidates(texts, step, width, selections[step], salt)
            rec["selected_index"] = selections[step]
        rec["embedding"] = emb(salt + 100 + (step % 2) * 3 + (step // 4))
        lines.append(rec)
    return lines


def dumps_line(obj):
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def lev(a, b):
    n, m = len(a), len(b)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[n][m]


def ned(a, b):
    if a == b:
        return 0.0
    a, b = list(a), list(b)
    return lev(a, b) / max(len(a), len(b))


def norm(v):
    s = 0.0
    for x in v:
        s += x * x
    return math.sqrt(s)


def cosine(u, v):
    dot = 0.0
    for a, b in zip(u, v):
        dot += a * b
    return min(1.0, max(-1.0, dot / (norm(u) * norm(v))))


def vendi(vecs):
    n = len(vecs)
    if n == 1:
        return 1.0
    k = np.array([[1.0 if i == j else cosine(vecs[i], vecs[j]) for j in range(n)] for i in range(n)]) / n
    ent = 0.0
    for lam in np.linalg.eigvalsh(k):
        if lam >= 1e-10:
            ent += -lam * math.log(lam)
    return min(float(n), max(1.0, math.exp(ent)))


def mock_ppl(context_source, target):
    # the fixture texts are outside the mock table: canonical output is an echo
    canonical = context_source + " [mock-echo]"
    per = LN_CANON if target == canonical else LN_OFF
    lps = [per] * max(1, len(target.split()))
    s = 0.0
    for v in lps:
        s += v
    return math.exp(-(s / len(lps)))


def series_csv(rows):
    return "step,value\n" + "".join(f"{i},{v:.6f}\n" for i, v in rows)


def write(name, text):
    with open(os.path.join(GOLDEN, name), "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def main():
    os.makedirs(GOLDEN, exist_ok=True)
    chains = [
        ("chain-0000", ALPHA, 2, [None, 0, 0, 1, 0, 0, 1, 0], 1),
        ("chain-0001", BETA, 3, [None, 0, 1, 2, 0, 1, 2, 0], 40),
    ]
    with open(os.path.join(HERE, "chains.jsonl"), "w", encoding="utf-8", newline="\n") as f:
        for cid, texts, width, sel, salt in chains:
            for rec in chain_lines(cid, texts, width, sel, salt):
                f.write(dumps_line(rec) + "\n")

    tau_rows, ppl_rows = [], []
    for cid, texts, width, sel, salt in chains:
        lines = chain_lines(cid, texts, width, sel, salt)
        stem = f"{RUN}-{cid}"
        n = len(texts)
        m = n - 1
        header = "step," + ",".join(str(j) for j in range(n)) + "\n"
        body = "".join(f"{i}," + ",".join(f"{ned(texts[i], texts[j]):.6f}" for j in range(n)) + "\n" for i in range(n))
        write(f"{stem}.matrix.csv", header + body)
        for k in (2, 3):
            pairs = [(i, ned(texts[i], texts[i - k])) for i in range(k + 1, m + 1)]
            s = 0.0
            for _, d in pairs:
                s += d
            tau_rows.append({"run_id": RUN, "chain_id": cid, "k": k, "tau": 1.0 - s / len(pairs),
                             "granularity": "char", "per_pair": [[i, d] for i, d in pairs]})
            write(f"{stem}.lag{k}.csv", series_csv(pairs))
        origin = lines[0]["embedding"]
        write(f"{stem}.similarity.csv",
              series_csv([(i, cosine(lines[i]["embedding"], origin)) for i in range(1, n)]))
        write(f"{stem}.vendi.csv",
              series_csv([(i, vendi([c["embedding"] for c in lines[i]["candidates"]])) for i in range(1, n)]))
        fwd = [(i, mock_ppl(texts[i - 1], texts[i])) for i in range(1, m + 1)]
        rev = [(i, mock_ppl(texts[i + 1], texts[i])) for i in range(1, m)]
        write(f"{stem}.forward_ppl.csv", series_csv(fwd))
        write(f"{stem}.reverse_ppl.csv", series_csv(rev))
        tail = fwd[-3:]
        s = 0.0
        for _, v in tail:
            s += v
        ppl_rows.append({"run_id": RUN, "chain_id": cid, "alpha_estimate": s / len(tail)})

    write("tau.json", json.dumps(tau_rows, indent=2, sort_keys=True) + "\n")
    write("ppl.json", json.dumps(ppl_rows, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
