"""Acceptance criteria, one test per criterion.

Each test records a single ``criterion N: PASS|FAIL|SKIP ...`` line, printed
in the terminal summary and to stdout.
"""

import contextlib
import io
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from ambiscore import cli
from ambiscore.corpus import annotation_stats, load_dataset, plausibility_band, PlausibilityBand
from ambiscore.difficulty import REFERENCE_TARGETS, calibrate_thresholds
from ambiscore.ensemble import (
    equal_weights,
    fit_linear,
    kfold_cv,
    kfold_indices,
    learner_for,
    majority_vote,
    weighted_average,
)
from ambiscore.ensemble.gbt import fit_gbt_params
from ambiscore.ensemble.svr import fit_svr_params, rbf_kernel, solve_svr, svr_decision
from ambiscore.gateway import MockServer, oracle_script
from ambiscore.metrics import acc_within_sd, spearman
from ambiscore.prompting import build_prompt, load_run, parse_score
from ambiscore.retrieval import CategoryIndex, search
from ambiscore.difficulty import DifficultyCategory
from ambiscore.sft_export import SCHEMA, Strategy, dump_records, export_strategy
from ambiscore.synthetic import calibration_fixture, make_split
from oracles import brute_spearman, dual_objective, qp_svr
from workspace import make_workspace, snapshot

GOLDEN = conftest.FIXTURES / "prompts"
AMBISTORY_TRAIN_ENV = "AMBISCORE_AMBISTORY_TRAIN"


@contextlib.contextmanager
def criterion(n, title, budget=None):
    info = {}
    t0 = time.perf_counter()
    status = "FAIL"
    try:
        yield info
        status = "PASS"
    except pytest.skip.Exception:
        status = "SKIP"
        raise
    finally:
        dt = time.perf_counter() - t0
        if status == "PASS" and budget is not None and dt >= budget:
            status = "FAIL"
            info["detail"] = f"took {dt:.1f}s, budget {budget}s"
        line = f"criterion {n}: {status} {title} ({dt:.2f}s)"
        if info.get("detail"):
            line += f" - {info['detail']}"
        conftest.ACCEPTANCE_LINES.append(line)
        print(line)
    if budget is not None:
        assert dt < budget, f"criterion {n} exceeded {budget}s"


def test_c01_spearman_oracle():
    with criterion(1, "spearman vs brute-force oracle", budget=5.0) as info:
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(1000):
            x = rng.normal(size=50)
            y = 0.5 * x + rng.normal(size=50)
            x[rng.integers(0, 50, size=10)] = x[0]
            y[rng.integers(0, 50, size=10)] = y[1]
            x, y = np.round(x, 1), np.round(y, 1)
            worst = max(worst, abs(spearman(x, y) - brute_spearman(x, y)))
        assert worst <= 1e-9
        tie = spearman([3, 3, 5], [2, 4, 5])
        assert abs(tie - 0.8660) <= 1e-4
        info["detail"] = f"max |diff| {worst:.1e}; tie case {tie:.4f}"


def test_c02_acc_within_sd_cases():
    with criterion(2, "acc_within_sd hand-checked cases") as info:
        zero = {"a": annotation_stats([4, 4, 4, 4, 4])}
        assert acc_within_sd({"a": 4}, zero) == 1.0
        assert acc_within_sd({"a": 5}, zero) == 0.0
        s = {"a": annotation_stats([5, 5, 4, 4, 4])}
        for conv in ("sample", "population"):
            assert acc_within_sd({"a": 4}, s, conv) == 1.0
            assert acc_within_sd({"a": 5}, s, conv) == 0.0
        info["detail"] = "zero-std boundary and both std conventions"


def test_c03_band_transitions():
    with criterion(3, "plausibility band transitions") as info:
        means = [round(1 + 0.01 * i, 2) for i in range(401)]
        bands = [plausibility_band(m) for m in means]
        cuts = [means[i] for i in range(1, len(means)) if bands[i] is not bands[i - 1]]
        assert cuts == [2.0, 3.0, 4.0]
        assert [bands[0], bands[-1]] == [PlausibilityBand.NOT_PLAUSIBLE, PlausibilityBand.HIGH]
        info["detail"] = f"transitions at {cuts}"


def test_c04_difficulty_calibration():
    with criterion(4, "difficulty calibration", budget=60.0) as info:
        path = os.environ.get(AMBISTORY_TRAIN_ENV)
        if path and Path(path).exists():
            train = load_dataset(path, "train", require_labels=True).instances
            res = calibrate_thresholds(train, REFERENCE_TARGETS)
            rel = [abs(c - t) / t for c, t in zip(res.counts, REFERENCE_TARGETS)]
            info["detail"] = f"counts {res.counts}, l1_gap {res.l1_gap}, thresholds {res.thresholds}"
            assert max(rel) <= 0.02
        else:
            res = calibrate_thresholds(calibration_fixture(), (10, 10, 10))
            info["detail"] = (f"dataset unavailable (set {AMBISTORY_TRAIN_ENV}); synthetic fixture "
                              f"counts {res.counts}, l1_gap {res.l1_gap}")
            assert res.l1_gap == 0


def test_c05_retrieval_exactness():
    with criterion(5, "retrieval exactness", budget=10.0) as info:
        rng = np.random.default_rng(5)
        worst_self = 0.0
        for n in (1, 17, 200):
            v = rng.normal(size=(n, 24))
            ids = [f"id{i:04d}" for i in range(n)]
            idx = CategoryIndex(DifficultyCategory.AMBIGUOUS_CONTEXT, ids, v / np.linalg.norm(v, axis=1)[:, None],
                                ids, [1] * n, [1.0] * n, "m")
            V = idx.vectors.astype(np.float64)
            for _ in range(100):
                q = rng.normal(size=24)
                sims = V @ (q / np.linalg.norm(q))
                expect = [ids[i] for i in sorted(range(n), key=lambda i: (-sims[i], ids[i]))]
                assert [r.id for r in search(idx, q, n)] == expect
            for i in range(0, n, max(1, n // 10)):
                top = search(idx, V[i], 1)[0]
                assert top.id == ids[i]
                worst_self = max(worst_self, abs(top.similarity - 1.0))
        assert worst_self <= 1e-6
        info["detail"] = f"300 queries exact; worst self-similarity error {worst_self:.1e}"


def test_c06_prompt_fidelity(golden_instance, golden_examples):
    with criterion(6, "prompt fidelity against golden fixtures") as info:
        zero = build_prompt(golden_instance).text
        assert zero == (GOLDEN / "zero_shot.txt").read_text(encoding="utf-8")
        for k in (1, 3):
            few = build_prompt(golden_instance, golden_examples[k]).text
            assert few == (GOLDEN / f"few_shot_k{k}.txt").read_text(encoding="utf-8")
            cut = zero.index("\n\nNow evaluate")
            assert few[:cut] == zero[:cut] and few.endswith(zero[cut:])
        assert zero.endswith("print only the final integer score as an output.")
        info["detail"] = "zero-shot, K=1, K=3 byte-identical"


def test_c07_ensemble_units():
    with criterion(7, "ensemble unit cases") as info:
        for votes, out in [([3, 3, 3, 5, 1], 3), ([4, 4, 2, 2, 5], 3), ([1, 2, 3, 4, 5], 3)]:
            assert majority_vote(votes) == out
        for s, out in [([5, 4, 4, 3, 4], 4), ([5, 5, 5, 2, 2], 4), ([1, 1, 2, 2, 2], 2)]:
            assert weighted_average(s, equal_weights(5)) == out
        rng = np.random.default_rng(0)
        X = rng.integers(1, 6, size=(200, 2)).astype(float)
        m = fit_linear(X, 0.5 * X[:, 0] + 0.5 * X[:, 1])
        assert np.allclose(m.params["coef"], [0.5, 0.5], atol=1e-6) and abs(m.params["intercept"]) < 1e-6
        Xs = rng.normal(size=(40, 2))
        y = Xs[:, 0].copy()
        p = fit_svr_params(Xs, y, C=100.0, epsilon=0.1, gamma=0.5)
        resid = float(np.abs(svr_decision(p, Xs) - y).max())
        assert resid <= 0.1 + 1e-3
        Z = (Xs - p["feature_mean"]) / np.asarray(p["feature_scale"])
        K = rbf_kernel(Z, Z, 0.5)
        coef_qp, _ = qp_svr(K, y, 100.0, 0.1)
        coef, _, _ = solve_svr(K, y, 100.0, 0.1)
        gap = dual_objective(K, y, coef, 0.1) - dual_objective(K, y, coef_qp, 0.1)
        assert gap <= 1e-3
        g = fit_gbt_params(X, X[:, 0] * 0.3 + X[:, 1] * 0.7 + rng.normal(0, 0.2, 200), n_trees=100, max_depth=2,
                           learning_rate=0.1, min_leaf=5)
        mse = g["train_mse"]
        assert all(b <= a + 1e-12 for a, b in zip(mse, mse[1:]))
        info["detail"] = f"SVR max residual {resid:.4f}, dual gap to QP {gap:.1e}; GBT loss monotone"


def test_c08_stacking_gain():
    with criterion(8, "stacking gain over best single column", budget=60.0) as info:
        rng = np.random.default_rng(8)
        n = 600
        M = rng.integers(1, 6, size=(n, 5)).astype(float)
        gold = 0.3 * M[:, 0] + 0.7 * M[:, 1] + rng.normal(0, 0.2, n)
        folds = kfold_indices(n, 5, seed=0)
        col_cv = [float(np.mean([spearman(M[f, j], gold[f]) for f in folds])) for j in range(5)]
        col_full = [spearman(M[:, j], gold) for j in range(5)]
        best = max(max(col_cv), max(col_full))
        learners = {
            "linear": {},
            "svr": {"C": 1.0, "epsilon": 0.1, "gamma": None},
            "gbt": {"n_trees": 200, "max_depth": 2, "learning_rate": 0.05, "min_leaf": 5},
        }
        got = {}
        for kind, params in learners.items():
            got[kind] = kfold_cv(learner_for(kind, **params), M, gold, k=5, seed=0).mean_spearman
        info["detail"] = f"best column {best:.4f}; " + ", ".join(f"{k} {v:.4f}" for k, v in got.items())
        assert all(v > best for v in got.values())


def _quiet(fn, *a):
    err = io.StringIO()
    with contextlib.redirect_stdout(io.StringIO()), contextlib.redirect_stderr(err):
        code = fn(*a)
    return code, err.getvalue()


def test_c09_end_to_end_determinism(tmp_path):
    with criterion(9, "infer+eval twice with warm cache") as info:
        dev = make_split(40, "dev", seed=12)
        with MockServer(oracle_script(dev)) as srv:
            ws = make_workspace(tmp_path / "ws", srv.base_url)
            base = ["--config", str(ws["config"])]
            for cmd in ("calibrate", "index"):
                assert _quiet(cli.main, [cmd, *base])[0] == 0
            snaps, calls = [], []
            for _ in range(2):
                before = sum(srv.backend.requests.values())
                code, err = _quiet(cli.main, ["infer", *base])
                assert code == 0
                assert _quiet(cli.main, ["eval", *base])[0] == 0
                calls.append(sum(srv.backend.requests.values()) - before)
                snaps.append({k: v for k, v in snapshot(ws["out"]).items() if k.startswith(("runs", "eval"))})
            assert snaps[0] == snaps[1] and len(snaps[0]) == 4
            assert calls[1] == 0 and "network calls: 0" in err
        info["detail"] = f"{len(snaps[0])} artifacts identical; server requests {calls[0]} then {calls[1]}"


def test_c10_oracle_mock(tmp_path):
    with criterion(10, "oracle mock on dev split") as info:
        dev = make_split(600, "dev", seed=0)
        with MockServer(oracle_script(dev, default=None)) as srv:
            ws = make_workspace(tmp_path / "ws", srv.base_url, n_dev=600, max_in_flight=8)
            (tmp_path / "ws" / "dev.json").write_text(json.dumps([i.to_dict() for i in dev]))
            base = ["--config", str(ws["config"])]
            for cmd in ("calibrate", "index", "infer", "eval"):
                assert _quiet(cli.main, [cmd, *base])[0] == 0
        rep = json.loads((ws["out"] / "eval" / "dev_mock-chat_few-shot-k1.report.json").read_text())
        info["detail"] = (f"spearman {rep['spearman']:.4f}, acc_within_sd {rep['acc_within_sd']:.4f}, "
                          f"n={rep['n_evaluated']}, failed={rep['n_failed']}")
        assert rep["n_evaluated"] == 600 and rep["spearman"] >= 0.95 and rep["acc_within_sd"] >= 0.95


def test_c11_live_smoke(tmp_path, monkeypatch):
    with criterion(11, "live smoke (not required)") as info:
        dev_path = os.environ.get("AMBISCORE_LIVE_DEV")
        if not conftest.LIVE_API_KEY or not dev_path:
            info["detail"] = "no credentials; live numbers are not desk-reproducible"
            pytest.skip("set AMBISCORE_API_KEY and AMBISCORE_LIVE_DEV to run the live smoke test")
        monkeypatch.setenv("AMBISCORE_API_KEY", conftest.LIVE_API_KEY)
        cfg = Path(__file__).parents[1] / "configs" / "live-smoke.json"
        argv = ["--config", str(cfg), "--out", str(tmp_path / "out"), "--cache-dir", str(tmp_path / "cache"),
                "--set", f"data.dev={json.dumps(str(Path(dev_path).resolve()))}"]
        assert cli.main(["infer", *argv]) == 0
        recs = load_run(next((tmp_path / "out" / "runs").glob("*.jsonl")).read_text())
        assert len(recs) == 20
        info["detail"] = f"{sum(r.status != 'failed' for r in recs)}/20 scored"


def test_c12_sft_export():
    import jsonschema

    with criterion(12, "SFT export counts and schema") as info:
        insts = make_split(25, "train", seed=3)
        from ambiscore.difficulty import CategoryThresholds
        aux = {"thresholds": CategoryThresholds(0.6, 4.0, 2.0), "sense_hints": {i.id: "a sense" for i in insts}}
        counts = {}
        for s in Strategy:
            recs = export_strategy(insts, s, **aux)
            counts[s.value] = len(recs)
            for line in dump_records(recs).splitlines():
                doc = json.loads(line)
                jsonschema.validate(doc, SCHEMA)
                assert 1 <= parse_score(doc["target"]).score <= 5
        assert counts["single_annotator"] == 5 * len(insts)
        info["detail"] = ", ".join(f"{k}={v}" for k, v in counts.items())
