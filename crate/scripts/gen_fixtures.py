#!/usr/bin/env python3
"""Regenerates the committed test fixtures under crates/core/tests/fixtures.

Everything here is deterministic; re-running produces identical files.
Golden snippet strings are rendered by the small Python renderer below,
which is written independently of the Rust implementation so the two can
check each other.

Usage: python3 scripts/gen_fixtures.py
"""

import hashlib
import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "fixtures"

PROBE_SYSTEM = "pick the most likely option"
FINAL_SYSTEM = "helpful medical expert"
QUERY_SYSTEM = "Generate focused search queries"
MAX_SNIPPET_CHARS = 1500


def write_json(path, value):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(value, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows), encoding="utf-8")


# --------------------------------------------------------------------------
# Snippet oracle


def text_of(v):
    if isinstance(v, str):
        v = v.strip()
        return v or None
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return str(v)
    return None


def render_snippet(payload, max_chars=MAX_SNIPPET_CHARS):
    lines = []
    kg = payload.get("knowledgeGraph")
    if isinstance(kg, dict) and text_of(kg.get("title")):
        title = text_of(kg["title"])
        desc = text_of(kg.get("description"))
        lines.append(f"{title} — {desc}" if desc else title)
        attrs = kg.get("attributes") or {}
        for key in sorted(k.strip() for k in attrs if k.strip()):
            raw = next(v for k, v in attrs.items() if k.strip() == key)
            if text_of(raw):
                lines.append(f"{key}: {text_of(raw)}")
    ab = payload.get("answerBox")
    if isinstance(ab, dict):
        box = text_of(ab.get("answer")) or text_of(ab.get("snippet"))
        if box:
            lines.append(box)
    kept = [r for r in payload.get("organic", []) if text_of(r.get("title")) and text_of(r.get("snippet"))]
    for r in kept[:3]:
        lines.append(f"{text_of(r['title'])} — {text_of(r['snippet'])}")
    body = "\n".join(lines)
    if len(body) <= max_chars:
        return body
    cut = body[:max_chars]
    if not body[max_chars].isspace():
        ws = max((i for i, c in enumerate(cut) if c.isspace()), default=-1)
        if ws > 0:
            cut = cut[:ws]
    return cut.rstrip()


# --------------------------------------------------------------------------
# Search-engine payloads


def serper_fixtures():
    d = ROOT / "serper"
    apple = {
        "searchParameters": {"q": "apple", "type": "search", "engine": "google"},
        "knowledgeGraph": {
            "title": "Apple",
            "type": "Technology company",
            "description": "American multinational technology company...",
            "imageUrl": "https://example.invalid/apple.png",
            "attributes": {"Headquarters": "Cupertino, CA", "CEO": "Tim Cook"},
        },
        "organic": [
            {
                "title": "Apple Official Site",
                "link": "https://www.apple.com/",
                "snippet": "Discover the innovative world of Apple and shop everything iPhone, iPad...",
                "position": 1,
            },
            {
                "title": "Apple Wikipedia",
                "link": "https://en.wikipedia.org/wiki/Apple_Inc.",
                "snippet": "Apple Inc. is an American multinational technology company specializing in...",
                "position": 2,
            },
        ],
        "images": [{"title": "Apple logo", "imageUrl": "https://example.invalid/logo.png"}],
        "peopleAlsoAsk": [{"question": "Who owns Apple?", "snippet": "Shareholders."}],
    }
    many = {
        "searchParameters": {"q": "hypertension first line treatment"},
        "organic": [
            {"title": f"Result {i}", "snippet": f"Organic snippet number {i} about blood pressure.", "position": i}
            for i in range(1, 11)
        ],
        "ads": [{"title": "Buy now", "snippet": "Sponsored"}],
    }
    # Position 2 has no snippet and is skipped, so ranks 1, 3, 4 render.
    del many["organic"][1]["snippet"]
    answer_box = {
        "searchParameters": {"q": "normal adult resting heart rate"},
        "answerBox": {"title": "Heart rate", "answer": "60 to 100 beats per minute", "snippet": "ignored"},
        "aiOverview": {"snippet": "This generated overview must never appear."},
        "organic": [
            {"title": "Heart Rate Basics", "snippet": "A normal resting heart rate for adults ranges from 60 to 100 bpm.",
             "position": 1},
        ],
    }
    cisplatin = {
        "searchParameters": {"q": "mechanisms cisplatin hearing loss"},
        "organic": [
            {
                "title": "Cisplatin-induced ototoxicity",
                "snippet": "...cisplatin is retained for months to years. It can cause DNA damage, inhibit protein "
                "synthesis...",
                "position": 1,
            },
            {
                "title": "Platinum drugs and the cochlea",
                "snippet": "Cisplatin forms intrastrand cross-links of DNA in outer hair cells.",
                "position": 2,
            },
            {"title": "Hearing loss overview", "snippet": "Sensorineural loss from ototoxic drugs is often permanent.",
             "position": 3},
            {"title": "Fourth result", "snippet": "Never rendered.", "position": 4},
        ],
    }
    for name, payload in [("apple", apple), ("many_organic", many), ("answer_box", answer_box),
                          ("cisplatin", cisplatin)]:
        write_json(d / f"{name}.json", payload)
        (d / f"{name}.snippet.txt").write_text(render_snippet(payload), encoding="utf-8")


def openai_fixtures():
    d = ROOT / "openai"
    top = [(" B", -0.105), (" A", -2.40), (" C", -5.0), (" D", -6.5), ("B", -7.5)]
    with_lp = {
        "id": "chatcmpl-fixture",
        "object": "chat.completion",
        "model": "llama-3.1-8b-instruct",
        "choices": [
            {
                "index": 0,
                "message": {"role": "assistant", "content": " B"},
                "logprobs": {
                    "content": [
                        {
                            "token": " B",
                            "logprob": -0.105,
                            "top_logprobs": [{"token": t, "logprob": lp, "bytes": None} for t, lp in top],
                        }
                    ]
                },
                "finish_reason": "length",
            }
        ],
        "usage": {"prompt_tokens": 120, "completion_tokens": 1, "total_tokens": 121},
    }
    without = json.loads(json.dumps(with_lp))
    without["choices"][0]["logprobs"] = None
    write_json(d / "chat_logprobs.json", with_lp)
    write_json(d / "chat_no_logprobs.json", without)


# --------------------------------------------------------------------------
# Planted-fact fixture
#
# Ten questions. For each one the corpus holds one document with the deciding
# fact and three distractor documents. The fact document shares no term with
# the question stem, so only the decisive synthetic query reaches it. The
# distractor documents share the disease name with the stem.

DISEASES = ["harlanosis", "brevitosis", "quelmania", "dorvathy", "plinexia",
            "tasmuria", "corvelitis", "zanthemia", "morquellia", "vestrigoma"]
FACT_WORDS = [
    ("velnor", "quassite", "binding"), ("tirrek", "ombrase", "cleavage"), ("saphel", "durnite", "uptake"),
    ("gorvim", "lestrine", "transport"), ("kaltor", "fimbrase", "folding"), ("wenlis", "pradite", "efflux"),
    ("jurran", "mosphate", "coupling"), ("yeltic", "banzine", "signaling"), ("rondil", "crestase", "shuttling"),
    ("nuvrak", "helmite", "anchoring"),
]
GOLD = "BCADBCADBC"
LABELS = "ABCD"
# Unfiltered final answers: the mixed context misleads questions 1-7.
UNFILTERED_CORRECT = {8, 9, 10}
BASE_DIST = [["A", 0.4], ["B", 0.3], ["C", 0.2], ["D", 0.1]]
UNIFORM = [["A", 0.25], ["B", 0.25], ["C", 0.25], ["D", 0.25]]


def wrong(label):
    return LABELS[(LABELS.index(label) + 1) % 4]


def planted():
    d = ROOT / "planted"
    dataset, corpus = [], []
    for i in range(1, 11):
        qid = f"q{i:02d}"
        tag = f"Q{i:02d}"
        disease = DISEASES[i - 1]
        w1, w2, w3 = FACT_WORDS[i - 1]
        dataset.append({
            "id": qid,
            "question": f"A patient with {disease} (case k{i:02d}) is referred. Which mechanism is responsible?",
            "options": {l: f"mechanism {l.lower()}{i:02d}" for l in LABELS},
            "answer": GOLD[i - 1],
        })
        corpus.append({"id": f"{qid}-fact", "title": f"FACT{tag} {w1} {w2}",
                       "text": f"{w1} {w2} {w3} observations settle this decisively."})
        for j in range(1, 4):
            corpus.append({"id": f"{qid}-distractor{j}", "title": f"DISTRACT{tag} {disease} note {j}",
                           "text": f"{disease} cohort remark {j}, unrelated detail."})
    write_jsonl(d / "dataset.jsonl", dataset)
    write_jsonl(d / "corpus.jsonl", corpus)

    def queries(i):
        w1, w2, w3 = FACT_WORDS[i - 1]
        return f"Search_query: {w1} {w2} {w3}", f"Search_query: {DISEASES[i - 1]} remark"

    shared = []
    for i in range(1, 11):
        tag = f"Q{i:02d}"
        gold = GOLD[i - 1]
        confident = [[l, 0.97 if l == gold else 0.01] for l in LABELS]
        shared.append({"name": f"probe-fact-{tag}", "system": PROBE_SYSTEM, "match": f"FACT{tag}",
                       "text": gold, "dist": confident})
    shared.append({"name": "probe-distractor", "system": PROBE_SYSTEM, "match": "DISTRACT", "text": "A",
                   "dist": UNIFORM})
    shared.append({"name": "probe-base", "system": PROBE_SYSTEM, "text": "A", "dist": BASE_DIST})
    for i in range(1, 11):
        tag = f"Q{i:02d}"
        gold = GOLD[i - 1]
        mixed = gold if i in UNFILTERED_CORRECT else wrong(gold)
        shared.append({"name": f"final-mixed-{tag}", "system": FINAL_SYSTEM, "match": [f"FACT{tag}", "DISTRACT"],
                       "text": f"The excerpts conflict. answer_choice: {mixed}"})
        shared.append({"name": f"final-fact-{tag}", "system": FINAL_SYSTEM, "match": f"FACT{tag}",
                       "text": f"The excerpt settles it. answer_choice: {gold}"})
        shared.append({"name": f"final-none-{tag}", "system": FINAL_SYSTEM, "match": f"(case k{i:02d})",
                       "text": f"Best guess. answer_choice: {wrong(gold)}"})
    shared.append({"name": "fallthrough", "text": "answer_choice: A"})

    cycle = []
    seeded = []
    for i in range(1, 11):
        decisive, distractor = queries(i)
        match = f"(case k{i:02d})"
        cycle.append({"name": f"querygen-q{i:02d}", "system": QUERY_SYSTEM, "match": match, "rotation": [
            {"text": f"Thinking step by step about the mechanism.\n{decisive}"},
            {"text": distractor},
            {"text": "Search_query: zzqx unmatched phrase"},
            {"text": "I cannot think of a useful search."},
        ]})
        seeded.append({"name": f"querygen-q{i:02d}", "system": QUERY_SYSTEM, "match": match,
                       "rotation_mode": "seeded", "rotation": [
                           {"text": decisive, "weight": 0.15},
                           {"text": distractor, "weight": 0.85},
                       ]})
    write_json(d / "script.json", cycle + shared)
    write_json(d / "sweep_script.json", seeded + shared)


# --------------------------------------------------------------------------
# Case Study 1: oral contraceptives and ovarian cancer, replayed from cache.

CASE1_STEM = (
    "A 17-year-old girl comes to the physician because of an 8-month history of severe acne vulgaris over her "
    "face, upper back, arms, and buttocks. Treatment with oral antibiotics and topical combination therapy with "
    "benzoyl peroxide and retinoid has not completely resolved her symptoms. Examination shows oily skin with "
    "numerous comedones, pustules, and scarring over the face and upper back. Long-term therapy is started with "
    "combined oral contraceptive pills. This medication decreases the patient's risk developing of which of the "
    "following conditions?"
)
CASE1_QUERIES = [
    "oral contraception use reducing ovarian cancer risk",
    "risk of hormonal cancers contraceptive pills",
    "Oral contraceptive pill preventive effects on cancer",
    "Carcinogenic effects of estrogen therapy",
    "oral contraceptive linked conditions breast cancer",
    "combined oral contraceptive risk breast cancer",
    "Oral contraceptive pills cancer prevention effects on patients",
    "Effect of combined oral contraceptives on cancer risk",
]
CASE1_FACTS = {
    0: ("Ovarian cancer", "Women who have ever used oral contraceptives have a 30% to 50% lower risk of ovarian "
                          "cancer than women who have never used oral contraceptives."),
    1: ("Cervical cancer", "The longer a woman uses oral contraceptives, the greater the increase in her risk of "
                           "cervical cancer. One study found a 10% increased risk ...."),
    6: ("Oral contraceptives and cancer risk", "Combined oral contraceptives (OCs) have been associated with a "
                                               "reduced risk of ovarian and endometrial cancers, an increased risk "
                                               "of cervical cancer and liver cancers, and an increased risk of "
                                               "breast cancer among recent users."),
}


def cache_key(q):
    return " ".join(q.lower().split())


def case_study():
    d = ROOT / "case1"
    write_jsonl(d / "dataset.jsonl", [{
        "id": "case1",
        "question": CASE1_STEM,
        "options": {"A": "Hypertension", "B": "Ovarian cancer", "C": "Cervical cancer", "D": "Breast cancer"},
        "answer": "B",
    }])
    for i, q in enumerate(CASE1_QUERIES):
        if i in CASE1_FACTS:
            title, snippet = CASE1_FACTS[i]
        else:
            title, snippet = f"General overview {i + 1}", "Hormonal medication has many effects; consult a clinician."
        entry = {"key": cache_key(q), "stored_at": 1700000000,
                 "response": {"organic": [{"rank": 1, "title": title, "snippet": snippet}]}}
        name = hashlib.sha256(cache_key(q).encode()).hexdigest()
        write_json(d / "cache" / f"{name}.json", entry)

    script = [
        {"name": "querygen", "system": QUERY_SYSTEM, "match": "acne vulgaris",
         "rotation": [{"text": f"Search_query: '{q}'"} for q in CASE1_QUERIES]},
        {"name": "probe-ovarian", "system": PROBE_SYSTEM, "match": "lower risk of ovarian cancer", "text": "B",
         "dist": [["B", 0.9], ["C", 0.05], ["D", 0.03], ["A", 0.02]]},
        {"name": "probe-reduced", "system": PROBE_SYSTEM, "match": "reduced risk of ovarian", "text": "B",
         "dist": [["B", 0.8], ["C", 0.1], ["D", 0.05], ["A", 0.05]]},
        {"name": "probe-cervical", "system": PROBE_SYSTEM, "match": "increase in her risk of cervical", "text": "B",
         "dist": [["B", 0.6], ["C", 0.3], ["D", 0.05], ["A", 0.05]]},
        {"name": "probe-generic", "system": PROBE_SYSTEM, "match": "Information:", "text": "C",
         "dist": [["A", 0.25], ["B", 0.25], ["C", 0.25], ["D", 0.25]]},
        {"name": "probe-base", "system": PROBE_SYSTEM, "text": "C",
         "dist": [["C", 0.5], ["B", 0.2], ["D", 0.2], ["A", 0.1]]},
        {"name": "final-with-facts", "system": FINAL_SYSTEM, "match": "lower risk of ovarian cancer",
         "text": "According to the documents, combined oral contraceptives have been associated with a reduced risk "
                 "of ovarian cancer. Therefore, the correct answer is related to ovarian cancer.\nanswer_choice: B"},
        {"name": "final-without", "text": "Among the options provided, cervical cancer is a well-known risk that can "
                                          "be reduced.\nanswer_choice: C"},
    ]
    write_json(d / "script.json", script)


if __name__ == "__main__":
    serper_fixtures()
    openai_fixtures()
    planted()
    case_study()
