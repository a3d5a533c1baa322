#!/usr/bin/env python3
"""Convert public medical QA benchmarks to the searchrag dataset format.

Output is JSONL, one object per line:
    {"id": ..., "question": ..., "options": {"A": ..., ...}, "answer": "A"}

Sources:
    mirage   benchmark.json from the MIRAGE suite (holds medqa, medmcqa, mmlu)
    medqa    MedQA-USMLE 4-option JSONL (question, options, answer_idx)
    medmcqa  MedMCQA JSONL (id, question, opa..opd, cop)
    mmlu     MMLU CSV files without a header row (question, A, B, C, D, answer)

Examples:
    convert_datasets.py mirage benchmark.json --subset medmcqa -o medmcqa.jsonl
    convert_datasets.py medqa test.jsonl -o medqa.jsonl
    convert_datasets.py medmcqa dev.json -o medmcqa.jsonl
    convert_datasets.py mmlu anatomy_test.csv clinical_knowledge_test.csv -o mmlu_med.jsonl
"""

import argparse
import csv
import json
import sys
from pathlib import Path

LABELS = "ABCD"


def record(qid, question, options, answer):
    options = {k: str(v).strip() for k, v in options.items() if str(v).strip()}
    if answer not in options:
        raise ValueError(f"{qid}: answer {answer!r} not among options {sorted(options)}")
    return {"id": str(qid), "question": question.strip(), "options": options, "answer": answer}


def read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if line.strip():
                yield n, json.loads(line)


def from_mirage(paths, subset):
    data = json.loads(Path(paths[0]).read_text(encoding="utf-8"))
    if subset not in data:
        raise SystemExit(f"subset {subset!r} not found; available: {', '.join(sorted(data))}")
    for qid, item in data[subset].items():
        yield record(f"{subset}-{qid}", item["question"], item["options"], item["answer"])


def from_medqa(paths, _subset):
    for path in paths:
        for n, item in read_jsonl(path):
            yield record(f"medqa-{Path(path).stem}-{n:05d}", item["question"], item["options"], item["answer_idx"])


def from_medmcqa(paths, _subset):
    for path in paths:
        for n, item in read_jsonl(path):
            options = dict(zip(LABELS, (item["opa"], item["opb"], item["opc"], item["opd"])))
            # The released JSON files number the correct option from 1.
            cop = int(item["cop"])
            yield record(item.get("id", f"medmcqa-{n:05d}"), item["question"], options, LABELS[cop - 1])


def from_mmlu(paths, _subset):
    for path in paths:
        stem = Path(path).stem
        with open(path, encoding="utf-8", newline="") as f:
            for n, row in enumerate(csv.reader(f), 1):
                question, *opts, answer = row
                yield record(f"mmlu-{stem}-{n:04d}", question, dict(zip(LABELS, opts)), answer.strip())


CONVERTERS = {"mirage": from_mirage, "medqa": from_medqa, "medmcqa": from_medmcqa, "mmlu": from_mmlu}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("source", choices=sorted(CONVERTERS))
    ap.add_argument("inputs", nargs="+", type=Path)
    ap.add_argument("--subset", default="medmcqa", help="MIRAGE subset: medqa, medmcqa or mmlu (default: medmcqa)")
    ap.add_argument("--limit", type=int, help="keep only the first N questions")
    ap.add_argument("-o", "--output", type=Path, help="output JSONL (default: stdout)")
    args = ap.parse_args(argv)

    seen = set()
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    count = 0
    try:
        for rec in CONVERTERS[args.source](args.inputs, args.subset):
            if rec["id"] in seen:
                raise SystemExit(f"duplicate id {rec['id']}")
            seen.add(rec["id"])
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
            count += 1
            if args.limit is not None and count >= args.limit:
                break
    finally:
        if args.output:
            out.close()
    print(f"wrote {count} questions", file=sys.stderr)


if __name__ == "__main__":
    main()
