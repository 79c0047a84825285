import json
import os

import pytest

import codepipe as cp

DATA = os.environ.get("CODEPIPE_DATA_DIR", os.path.join(os.path.dirname(__file__), "..", "..", "data"))


def test_length_stats():
    s = cp.length_stats([1, 5000, 3, 4096])
    assert s["median"] == 2049.5
    assert s["min"] == 1 and s["max"] == 5000
    assert s["pct_ge_4096"] == 50.0


def test_encode_decode_round_trip():
    text = "def f():\n    return 'π'\n"
    assert cp.decode(cp.encode(text)).decode() == text
    assert cp.special_id("END_OF_DOC") >= 50250


def test_table_and_plan():
    r = cp.validate_table(os.path.join(DATA, "mixture_table.csv"))
    assert abs(r["code_share"] - 0.80) <= 0.01
    plan = cp.plan_mixture(1_000_000, renormalize=True)
    assert sum(plan.values()) == 1_000_000
    with pytest.raises(cp.Error):
        cp.plan_mixture(1_000_000)


def test_fim_round_trip():
    text = "abcdefghij" * 20
    for seed in range(50):
        ex = cp.apply_fim(text, rate=1.0, seed=seed)
        assert ex["mode"] in ("psm", "spm")
        assert cp.reconstruct_text(ex["tokens"]).decode() == text


def test_repo_packing():
    packs = cp.pack_repository("r", [("a.py", "A"), ("b.py", "B"), ("c.py", "C")], seed=1)
    assert len(packs) == 2
    assert packs[0]["file_order"] != packs[1]["file_order"]
    sep = cp.special_id("REPO_CONTINUATION")
    assert all(p["tokens"].count(sep) == 2 for p in packs)


def test_sequence_packing():
    seqs = cp.pack_sequences([[1, 2, 3], [4, 5, 6]], 8)
    assert len(seqs) == 1 and len(seqs[0]) == 8


def test_reference_values():
    assert cp.tokens_per_step() == 4_194_304
    assert cp.param_count()["total"] == cp.PUBLISHED_PARAMETER_COUNT == 2_795_443_200
    assert abs(cp.mfu(222e12, 312e12) - 71.15) < 0.01
    assert cp.stage_lr("PRETRAIN", 0) >= 0.0
    assert all(cp.kernel_checks(configs=5).values())


def test_dedup():
    pairs = [("p", "c"), ("p ", "c\n"), ("q", "c")]
    assert cp.exact_dedup(pairs) == [("p", "c"), ("q", "c")]


def test_pipeline_rerun(tmp_path):
    cfg = json.dumps({"stage": "PRETRAIN", "seed": 4, "synthetic_repos": 4})
    first = cp.run_pipeline(cfg, str(tmp_path / "a"))
    again = cp.rerun_pipeline(first["manifest"], str(tmp_path / "b"))
    assert again == first["outputs"]
