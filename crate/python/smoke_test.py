"""Smoke test for the protoforge extension module.

Build and install first:

    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/protoforge-*.whl

then run `python python/smoke_test.py` from the repository root.
"""

import json
import pathlib
import tempfile

import protoforge

ROOT = pathlib.Path(__file__).resolve().parent.parent
CORPUS = ROOT / "crates" / "core" / "data" / "corpus"


def check_front_end():
    blanchet = (CORPUS / "blanchet.scm").read_text()
    a = protoforge.analyze(blanchet)
    assert a.protocols == ["blanchet"], a
    assert a.skeleton_count == 2
    assert a.error_count == 0
    assert protoforge.analyze(a.format()).format() == a.format()

    broken = (CORPUS / "mutual_auth.scm").read_text()
    codes = [d.code for d in protoforge.parse_diagnostics(broken)]
    assert codes == ["E-UNBALANCED-OPEN"], codes
    try:
        protoforge.format(broken)
    except ValueError as e:
        assert "E-UNBALANCED-OPEN" in str(e)
    else:
        raise AssertionError("format accepted an unbalanced text")

    repaired = protoforge.analyze(broken.rstrip() + ")")
    assert any(
        d.code == "L-SHADOWS-BUILTIN" and "pubk" in d.message for d in repaired.diagnostics
    ), repaired.diagnostics
    assert len(protoforge.diagnostic_codes()) > 10


def check_scoring():
    for q in protoforge.shipped_suite():
        assert protoforge.score(q.reference, q.checklist) == (1.0, 1.0, 1.0), q.query_id
        assert protoforge.score("no definition here", q.checklist)[0] == 0.0
    gold = json.loads(protoforge.shipped_suite()[0].checklist.to_json())
    assert protoforge.Checklist.from_json(json.dumps(gold)).query_id == gold["query_id"]


def check_translate():
    query = (CORPUS / "mutual_auth_query.txt").read_text()
    once = protoforge.translate(query, "builtin:translate", attempts=1)
    assert once.status == "failed" and len(once.attempt_errors) == 1
    again = protoforge.translate(query, "builtin:translate", attempts=1)
    assert once.final_text == again.final_text

    repaired = protoforge.translate(query, "builtin:translate", attempts=3)
    assert repaired.status == "clean", repaired
    assert repaired.attempt_errors[-1] == 0

    calls = []

    def backend(messages):
        calls.append(messages)
        return (CORPUS / "blanchet.scm").read_text()

    r = protoforge.translate(query, backend, attempts=3)
    assert r.status == "clean" and len(calls) == 1
    assert calls[0][-1]["role"] == "user"


def check_dataset():
    pairs = protoforge.synthesize("builtin:dataset", per_seed=2)
    assert len(pairs) == 20
    pairs = protoforge.augment(pairs, "builtin:dataset", variants=16)
    assert len(pairs) == 340
    train, test = protoforge.split(pairs, 0.7, 7)
    assert (len(train), len(test)) == (238, 102)
    assert not {p.seed_id for p in train} & {p.seed_id for p in test}
    with tempfile.TemporaryDirectory() as d:
        report = protoforge.export_jsonl(train + test, pathlib.Path(d) / "train.jsonl", epochs=3)
    assert report["pair_count"] == 340
    assert abs(report["estimated_training_tokens"] - 568_200) <= 0.2 * 568_200, report

    renamed = protoforge.augment(pairs[:2], None, variants=2)
    assert len(renamed) == 6


def check_eval():
    ids = [f"builtin:{m}" for m in
           ["general-small", "general-medium", "general-large", "forge-base", "forge-tuned"]]
    csv = protoforge.eval_run(ids)
    assert len(csv.splitlines()) == 16
    assert csv == protoforge.eval_run(ids)


if __name__ == "__main__":
    for check in [check_front_end, check_scoring, check_translate, check_dataset, check_eval]:
        check()
        print(f"ok {check.__name__}")
