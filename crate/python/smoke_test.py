#!/usr/bin/env python3
"""End-to-end smoke test of the mgan_py bindings.

Prefers an installed module (e.g. via `maturin develop`); otherwise loads the
cdylib straight out of the cargo target directory.
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_mgan_py():
    try:
        import mgan_py  # noqa: F401
        return mgan_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        built = REPO / "target" / profile / "libmgan_py.so"
        if built.exists():
            staging = Path(tempfile.mkdtemp(prefix="mgan_py_"))
            shutil.copy2(built, staging / "mgan_py.so")
            sys.path.insert(0, str(staging))
            import mgan_py
            return mgan_py
    sys.exit(
        "mgan_py not found: run `maturin develop -m crates/python/Cargo.toml` "
        "or `cargo build --release -p mgan-python` first"
    )


def approx(a, b, tol=1e-9):
    assert abs(a - b) < tol, f"{a} != {b}"


def main():
    m = import_mgan_py()

    # Tokenization.
    assert m.tokenize("ZTE, Qualcomm export!") == ["zte", "qualcomm", "export"]
    assert m.tokenize("") == []

    # Keyword extraction over a tiny corpus.
    docs = [
        "the heart failure study tracked heart rate and heart rhythm",
        "bone density loss in the elderly bone cohort",
        "insulin control of glucose in the diabetes clinic",
    ]
    keywords = m.extract_keywords(docs, 0.4)
    assert len(keywords) == 3
    assert "heart" in keywords[0]
    assert all("the" not in kws for kws in keywords)

    # Graph construction: the two-keyword hand example has weight 1/6.
    document = " ".join(
        ["pad"] * 3 + ["vi"] + ["pad"] * 6 + ["vj"] + ["pad"] * 34 + ["vj"] + ["pad"] * 4 + ["vi"]
    )
    graph = m.build_graph(document, ["vi", "vj"], 20)
    assert graph.vertices() == ["vi", "vj"]
    (i, j, w), = graph.edges()
    assert (i, j) == (0, 1)
    approx(w, 1.0 / 6.0, 1e-15)
    adj = graph.adjacency()
    assert adj[0][1] == adj[1][0]
    stats = graph.stats()
    assert stats["vertex_count"] == 2 and stats["edge_count"] == 1

    # Propagation operator: rows are stochastic; the hand example is uniform.
    p = m.propagation_matrix([[0.0, 1.0], [1.0, 0.0]], 1.0)
    assert p == [[0.5, 0.5], [0.5, 0.5]]
    p = m.propagation_matrix([[0.0, 0.3, 0.0], [0.3, 0.0, 0.9], [0.0, 0.9, 0.0]], 0.7)
    for row in p:
        approx(sum(row), 1.0, 1e-12)

    # Metrics.
    scored = m.metrics([0.9, 0.2, 0.8, 0.4], [1, 0, 1, 0], 0.5)
    assert scored["accuracy"] == 1.0 and scored["f1"] == 1.0

    # Baseline similarity behaves like a cosine.
    s = m.tfidf_cosine("heart failure", "heart failure", ["heart failure", "bone density"])
    approx(s, 1.0, 1e-12)
    assert m.tfidf_cosine("heart", "bone density", ["heart a", "bone density"]) == 0.0

    # Full pipeline through the CLI bindings: generate, train, then score
    # with a Matcher.
    workdir = Path(tempfile.mkdtemp(prefix="mgan_smoke_"))
    synth = workdir / "synth"
    run = workdir / "run"
    assert m.run_cli(["gen-synth", "--out", str(synth), "--pairs", "120"]) == 0
    assert m.run_cli([
        "train",
        "--corpus", str(synth / "pairs.jsonl"),
        "--embeddings", str(synth / "embeddings.txt"),
        "--out", str(run),
        "--epochs", "2",
        "--batch-size", "2",
        "--seed", "1",
        "--pool-size", "8",
        "--hidden-size", "16",
    ]) == 0

    matcher = m.Matcher.load(
        str(run / "checkpoint.bin"),
        str(synth / "embeddings.txt"),
        str(run / "idf.json"),
    )
    config = matcher.config()
    assert config["embed_dim"] == 40.0 and config["pool_size"] == 8.0

    pairs = [json.loads(line) for line in (synth / "pairs.jsonl").read_text().splitlines()]
    probs, labels = [], []
    for pair in pairs[:40]:
        p = matcher.predict(pair["query"], pair["document"])
        assert 0.0 < p < 1.0 and math.isfinite(p)
        probs.append(p)
        labels.append(pair["label"])
    scored = m.metrics(probs, labels, 0.5)
    assert scored["n"] == 40.0
    print(f"matcher accuracy on {int(scored['n'])} training-corpus pairs: {scored['accuracy']:.3f}")

    # Bad inputs surface as ValueError.
    try:
        m.propagation_matrix([[0.0, 1.0]], 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("non-square adjacency must raise")

    print("smoke test passed")


if __name__ == "__main__":
    main()
