"""Smoke test for the `spc` Python extension.

Build the extension and put it on the path first, e.g.

    cargo build --release -p spc-py --features extension-module
    cp target/release/libspc.so python/spc.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.environ.get("SPC_MODULE_DIR", HERE))

import spc  # noqa: E402

FIXTURES = os.path.join(HERE, "..", "crates", "core", "fixtures")
CORPUS = os.path.join(FIXTURES, "spice_fixture.jsonl")


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL: {what}")
    print(f"ok   {what}")


def main():
    corpus = spc.Corpus.load(CORPUS)
    check(len(corpus) == 20, "fixture has 20 dialogues")
    stats = corpus.stats()
    check(stats["splits"]["train"]["utterances"] == 89, "train utterance count")
    check(corpus.validate() == [], "fixture validates")

    alpha = spc.krippendorff_alpha(os.path.join(FIXTURES, "annotations.jsonl"))
    check(abs(alpha - 8 / 15) < 1e-9, "alpha of the annotation fixture is 8/15")

    check(spc.rouge_n("aerobics teacher", "teaches aerobics", 1) == 0.5, "rouge-1")
    check(abs(spc.bleu("teaches aerobics", "teaches aerobics", 2) - 1.0) < 1e-12, "bleu-2 of identical strings")
    p, r, f1 = spc.prf1([True, True, False], [True, False, True])
    check((p, r, f1) == (0.5, 0.5, 0.5), "prf1")
    check(spc.weighted_f1(["a", "b"], ["a", "b"]) == 1.0, "weighted f1")

    centroids = [[0.0, 0.0]] * 5
    raw = [0.0] * 5
    loss = spc.boundary_loss([[3.0, 4.0]], [0], centroids, raw)
    check(abs(loss - (5.0 - math.log(2.0))) < 1e-12, "boundary loss")

    pts = [[float(i), 0.0] for i in range(10)]
    labels = [1, 1, 1] + [0] * 7
    out_pts, out_labels = spc.smote(pts, labels, k=2, ratio=1.0, seed=3)
    check(out_labels.count(1) == 7 and len(out_pts) == 14, "smote balances classes")

    with tempfile.TemporaryDirectory() as out:
        config = os.path.join(FIXTURES, "tiny.toml")
        for cmd in ("train-discovery", "train-typeid", "train-valueex"):
            code, _, err = spc.cli([cmd, "--config", config, "--corpus", CORPUS, "--output-dir", out])
            check(code == 0, f"{cmd} ({err.strip()})" if code else cmd)
        disc = spc.DiscoveryModel.load(os.path.join(out, "discovery.json"))
        dialogue = corpus.dialogue_ids("test")[0]
        probs = disc.probabilities(corpus, dialogue)
        check(all(0.0 <= x <= 1.0 for x in probs), "discovery probabilities in [0, 1]")
        check(len(disc.predict(corpus, dialogue)) == len(probs), "one decision per utterance")
        typ = spc.TypeIdModel.load(os.path.join(out, "typeid.json"))
        check(typ.classify(corpus, dialogue, 1) in {"trait", "likes", "relation", "occupation", "misc"}, "typeid label")
        val = spc.ValueExModel.load(os.path.join(out, "valueex.json"))
        check(isinstance(val.generate(corpus, dialogue, 1, "likes"), str), "value generation")
        code, text, _ = spc.cli(["evaluate", "--config", config, "--corpus", CORPUS, "--output-dir", out, "--mode", "pipeline"])
        check(code == 0 and "persona discovery" in text, "evaluate through the CLI")

    code, _, _ = spc.cli(["validate", "--corpus", os.path.join(FIXTURES, "bad_corpus.jsonl")])
    check(code == 2, "bad corpus exits with the data-error code")
    print("smoke test passed")


if __name__ == "__main__":
    main()
