import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opinion_em.cli import main
from opinion_em.em import complete_log_likelihood
from opinion_em.generator import GenConfig, generate_trace
from opinion_em.io import (DataError, latent_from_dict, read_anchors, read_json, read_trace,
                           write_trace)
from opinion_em.model import MacroParams
from opinion_em.trace import Trace

QUICK = ["--restarts", "1", "--epochs", "1", "--inner-iterations", "3"]
SMALL = ["--actors", "8", "--actions", "5", "--timesteps", "3"]


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestTraceFiles:
    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 1000))
    def test_round_trip(self, tmp_path_factory, seed):
        trace, _ = generate_trace(GenConfig(num_actors=6, num_actions=4, num_timesteps=3,
                                            seed=seed))
        directory = tmp_path_factory.mktemp("trace")
        write_trace(trace, directory)
        assert read_trace(directory) == trace

    def test_round_trip_keeps_multiplicity_and_idle_ids(self, tmp_path):
        trace = Trace(["b", "a", "idle"], ["x", "y"],
                      [(0, "a", "b"), (0, "a", "b"), (1, "b", "a")],
                      [(1, "a", "x"), (1, "a", "x")], 3)
        write_trace(trace, tmp_path)
        back = read_trace(tmp_path)
        assert back == trace
        assert back.n_interactions == 3 and back.num_timesteps == 3

    def test_without_entities_infers_universe(self, tmp_path):
        _write(tmp_path / "interactions.tsv", "t\tu\tv\n0\tu2\tu10\n")
        _write(tmp_path / "actions.tsv", "t\tv\ta\n1\tu2\ta1\n")
        trace = read_trace(tmp_path)
        assert trace.actors == ("u2", "u10") and trace.num_timesteps == 2

    @pytest.mark.parametrize("body, fragment", [
        ("t\tu\tv\n0\tu1\n", ":2: expected 3 columns"),
        ("t\tu\tv\nx\tu1\tu2\n", ":2: column 't' must be an integer"),
        ("t\tu\tv\n0\tu1\tu2\n-1\tu1\tu2\n", ":3: column 't' must be >= 0"),
        ("u\tv\n0\tu1\n", ":1: expected header"),
        ("t\tu\tv\n0\t\tu2\n", ":2: empty value in column 'u'"),
    ])
    def test_malformed(self, tmp_path, body, fragment):
        _write(tmp_path / "interactions.tsv", body)
        _write(tmp_path / "actions.tsv", "t\tv\ta\n")
        with pytest.raises(DataError, match=fragment):
            read_trace(tmp_path)

    def test_self_loop_rejected(self, tmp_path):
        _write(tmp_path / "interactions.tsv", "t\tu\tv\n0\tu1\tu1\n")
        _write(tmp_path / "actions.tsv", "t\tv\ta\n")
        with pytest.raises(DataError):
            read_trace(tmp_path)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            read_trace(tmp_path / "nope")


class TestAnchors:
    def test_read(self, tmp_path):
        path = _write(tmp_path / "anchors.tsv", "a\tw\nleft\t-1\nright\t1\n")
        assert read_anchors(path) == {"left": -1.0, "right": 1.0}

    def test_out_of_range(self, tmp_path):
        path = _write(tmp_path / "anchors.tsv", "a\tw\nleft\t-1.5\n")
        with pytest.raises(DataError, match=":2:"):
            read_anchors(path)

    def test_unknown_action(self, tmp_path):
        trace = Trace(["u0", "u1"], ["a0"])
        path = _write(tmp_path / "anchors.tsv", "a\tw\nzz\t0.5\n")
        with pytest.raises(DataError, match="zz"):
            read_anchors(path, trace)


def test_latent_from_dict_names_first_offending_id():
    trace = Trace(["u0", "u1"], ["a0"])
    payload = {"x0": {"u0": 0.1, "u9": 0.2, "u1": 0.0}, "w": {"a0": 0.0}, "sigma": {"a0": 0.5},
               "signs": []}
    with pytest.raises(DataError, match="'u9'"):
        latent_from_dict(trace, payload)
    payload["x0"] = {"u0": 0.1}
    with pytest.raises(DataError, match="missing ID 'u1'"):
        latent_from_dict(trace, payload)


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["generate", "--scenario", "balanced", "--seed", "7", "--out", str(out)] + SMALL) == 0
    return out


class TestCli:
    def test_generate_files(self, generated):
        for name in ("interactions.tsv", "actions.tsv", "ground_truth.json", "manifest.json"):
            assert (generated / name).is_file()
        trace = read_trace(generated)
        assert trace.n_interactions == 8 * 3 * 3
        assert trace.n_actor_actions == 8 * 15 * 3
        manifest = read_json(generated / "manifest.json")
        assert manifest["command"] == "generate" and manifest["seed"] == 7
        assert manifest["config"]["params"]["mu_plus"] == 0.1

    def test_generate_deterministic(self, tmp_path, monkeypatch):
        contents = []
        for run in ("a", "b"):
            (tmp_path / run).mkdir()
            monkeypatch.chdir(tmp_path / run)
            assert main(["generate", "--seed", "3", "--out", "d"] + SMALL) == 0
            contents.append({p.name: p.read_bytes() for p in (tmp_path / run / "d").iterdir()})
        assert contents[0] == contents[1]

    def test_unknown_scenario(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["generate", "--scenario", "none", "--out", str(tmp_path)])
        assert exc.value.code == 2
        err = capsys.readouterr().err
        for name in ("balanced", "high_contrast", "high_acceptance", "non_commitment"):
            assert name in err

    @pytest.mark.parametrize("flag, value", [("--mu-plus", "0"), ("--rho-g", "-1"),
                                             ("--epochs", "0"), ("--eps-plus", "2.5"),
                                             ("--lr-actions", "nan")])
    def test_out_of_range_flags(self, generated, tmp_path, flag, value):
        with pytest.raises(SystemExit) as exc:
            main(["fit", "--trace", str(generated), "--out", str(tmp_path), "--scenario",
                  "balanced", flag, value])
        assert exc.value.code == 2
        assert not (tmp_path / "fit.json").exists()

    def test_inverted_latitudes(self, generated, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["fit", "--trace", str(generated), "--out", str(tmp_path),
                  "--eps-plus", "1.0", "--eps-minus", "0.5"])
        assert exc.value.code == 2

    def test_fit_outputs(self, generated, tmp_path):
        assert main(["fit", "--trace", str(generated), "--out", str(tmp_path),
                     "--scenario", "balanced"] + QUICK) == 0
        payload = read_json(tmp_path / "fit.json")
        trace = read_trace(generated)
        assert np.isfinite(payload["log_likelihood"])
        assert len(payload["signs"]) == trace.n_interactions
        assert set(payload["trajectory"]) == set(trace.actors)
        assert len(payload["alpha_series"]) == trace.num_timesteps
        latent = latent_from_dict(trace, payload)
        recomputed = complete_log_likelihood(trace, latent, MacroParams(**payload["params"]))
        assert recomputed == pytest.approx(payload["log_likelihood"], rel=1e-6)
        assert read_json(tmp_path / "manifest.json")["command"] == "fit"

    def test_fit_reddit_speeds_and_flags(self, generated, tmp_path):
        anchors = _write(tmp_path / "anchors.tsv", "a\tw\na0\t1\na1\t-1\n")
        out = tmp_path / "out"
        assert main(["fit", "--trace", str(generated), "--out", str(out), "--eps-plus", "0.6",
                     "--eps-minus", "1.2", "--mu-plus", "1e-3", "--mu-minus", "1e-4",
                     "--anchors", str(anchors), "--sigma-prior", "--normalized-posterior",
                     "--threads", "1"] + QUICK) == 0
        payload = read_json(out / "fit.json")
        assert payload["w"]["a0"] == 1.0 and payload["w"]["a1"] == -1.0
        assert payload["params"]["mu_minus"] == 1e-4
        manifest = read_json(out / "manifest.json")
        assert manifest["config"]["fit"]["sigma_prior_enabled"] is True

    @pytest.mark.filterwarnings("ignore:link probabilities underflow")
    def test_fit_hard_latitudes(self, generated, tmp_path):
        assert main(["fit", "--trace", str(generated), "--out", str(tmp_path), "--scenario",
                     "high_contrast", "--hard-latitudes"] + QUICK) == 0
        assert read_json(tmp_path / "fit.json")["params"]["rho_g"] == 1e4

    def test_fit_unknown_anchor(self, generated, tmp_path, capsys):
        anchors = _write(tmp_path / "anchors.tsv", "a\tw\nnot_an_action\t0.5\n")
        code = main(["fit", "--trace", str(generated), "--out", str(tmp_path), "--scenario",
                     "balanced", "--anchors", str(anchors)] + QUICK)
        assert code == 3
        assert "not_an_action" in capsys.readouterr().err

    def test_fit_malformed_trace(self, tmp_path, capsys):
        _write(tmp_path / "interactions.tsv", "t\tu\tv\n0\tu1\n")
        _write(tmp_path / "actions.tsv", "t\tv\ta\n")
        code = main(["fit", "--trace", str(tmp_path), "--out", str(tmp_path / "o"),
                     "--scenario", "balanced"] + QUICK)
        assert code == 3
        assert "interactions.tsv:2" in capsys.readouterr().err

    def test_select_missing_trace(self, tmp_path, capsys):
        missing = tmp_path / "missing"
        assert main(["select", "--trace", str(missing), "--out", str(tmp_path)] + QUICK) == 3
        assert str(missing) in capsys.readouterr().err

    def test_select_subset(self, generated, tmp_path):
        assert main(["select", "--trace", str(generated), "--out", str(tmp_path),
                     "--candidates", "balanced,high_contrast"] + QUICK) == 0
        payload = read_json(tmp_path / "selection.json")
        assert [c["name"] for c in payload["candidates"]] == ["balanced", "high_contrast"]
        assert payload["chosen"] in ("balanced", "high_contrast")
        assert sorted(payload["ranking"]) == ["balanced", "high_contrast"]

    def test_select_unknown_candidate(self, generated, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["select", "--trace", str(generated), "--out", str(tmp_path),
                  "--candidates", "balanced,bogus"])
        assert exc.value.code == 2

    def test_threads_env(self, generated, tmp_path, monkeypatch):
        monkeypatch.setenv("OPINION_EM_THREADS", "zero")
        with pytest.raises(SystemExit) as exc:
            main(["fit", "--trace", str(generated), "--out", str(tmp_path), "--scenario",
                  "balanced"] + QUICK)
        assert exc.value.code == 2

    def test_evaluate_truth_against_itself(self, generated, tmp_path):
        assert main(["evaluate", "--trace", str(generated), "--fit",
                     str(generated / "ground_truth.json"), "--truth",
                     str(generated / "ground_truth.json"), "--out", str(tmp_path)]) == 0
        report = read_json(tmp_path / "eval.json")
        assert report["mae_x0"] == 0.0 and report["mae_w"] == 0.0 and report["sign_f1"] == 1.0
        assert report["f1_positive_class"] == "+1"

    def test_evaluate_actor_mismatch(self, generated, tmp_path, capsys):
        truth = json.loads((generated / "ground_truth.json").read_text())
        truth["x0"]["stranger"] = 0.0
        bad = _write(tmp_path / "bad.json", json.dumps(truth))
        code = main(["evaluate", "--trace", str(generated), "--fit", str(bad), "--truth",
                     str(generated / "ground_truth.json"), "--out", str(tmp_path)])
        assert code == 3
        assert "'stranger'" in capsys.readouterr().err


def test_end_to_end_non_commitment(tmp_path):
    gen, fitted, ev = tmp_path / "gen", tmp_path / "fit", tmp_path / "eval"
    assert main(["generate", "--scenario", "non_commitment", "--seed", "1", "--out", str(gen)]) == 0
    assert main(["fit", "--trace", str(gen), "--out", str(fitted), "--scenario",
                 "non_commitment", "--threads", "1"]) == 0
    assert main(["evaluate", "--trace", str(gen), "--fit", str(fitted / "fit.json"), "--truth",
                 str(gen / "ground_truth.json"), "--out", str(ev)]) == 0
    assert read_json(ev / "eval.json")["sign_f1"] >= 0.95


def test_select_balanced_trace(tmp_path):
    gen, out = tmp_path / "gen", tmp_path / "sel"
    assert main(["generate", "--scenario", "balanced", "--seed", "0", "--out", str(gen)]) == 0
    assert main(["select", "--trace", str(gen), "--out", str(out), "--threads", "1"]) == 0
    assert read_json(out / "selection.json")["chosen"] == "balanced"
