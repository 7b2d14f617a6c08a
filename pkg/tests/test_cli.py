import csv
import json

import numpy as np
import pytest

from netred.cli import main
from netred.networks import (
    Box,
    box_to_dict,
    network_from_dict,
    network_to_dict,
    reduced_from_dict,
    save_json,
)

from conftest import random_network


@pytest.fixture
def workdir(tmp_path, rng):
    net = random_network(rng, n_x=1, sizes=[4], n_f=1)
    net_path = tmp_path / "net.json"
    box_path = tmp_path / "box.json"
    save_json(network_to_dict(net), net_path)
    save_json(box_to_dict(Box(np.array([-2.0]), np.array([2.0]))), box_path)
    return tmp_path, net, net_path, box_path


def test_usage_error_exits_2():
    assert main([]) == 2
    assert main(["synthesize", "--net", "x.json"]) == 2
    assert main(["demo", "nonsense"]) == 2


def test_missing_file_exits_2(tmp_path):
    assert main(["prune", "--net", str(tmp_path / "nope.json"), "--count", "0"]) == 2


def test_prune_count_zero_round_trips(workdir, capsys):
    tmp_path, net, net_path, _ = workdir
    out_path = tmp_path / "pruned.json"
    assert main(["prune", "--net", str(net_path), "--count", "0", "--out", str(out_path)]) == 0
    pruned = network_from_dict(json.loads(out_path.read_text()))
    for a, b in zip(net.weights, pruned.weights):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(net.biases, pruned.biases):
        np.testing.assert_array_equal(a, b)


def test_prune_count_out_of_range_exits_2(workdir):
    tmp_path, net, net_path, _ = workdir
    assert main(["prune", "--net", str(net_path), "--count", "999"]) == 2


def test_synthesize_zero_output_net(tmp_path, capsys):
    rng = np.random.default_rng(3)
    net_dict = {
        "activation": "relu",
        "layers": [
            {"W": rng.standard_normal((4, 1)).tolist(), "b": rng.standard_normal(4).tolist()},
            {"W": [[0.0, 0.0, 0.0, 0.0]], "b": [1.5]},
        ],
    }
    net_path = tmp_path / "net.json"
    box_path = tmp_path / "box.json"
    save_json(net_dict, net_path)
    save_json({"lower": [-10.0], "upper": [10.0]}, box_path)
    out_path = tmp_path / "result.json"
    code = main(["synthesize", "--net", str(net_path), "--dims", "2",
                 "--box", str(box_path), "--feedforward", "--out", str(out_path)])
    assert code == 0
    result = json.loads(out_path.read_text())
    assert result["gamma"] <= 1e-4
    assert result["gamma_x"] >= 0.0
    assert result["solver_status"] == "optimal"
    reduced = reduced_from_dict(result)      # result embeds the network schema
    assert reduced.partition == (2,)


def test_synthesize_then_verify(workdir):
    tmp_path, net, net_path, box_path = workdir
    out_path = tmp_path / "result.json"
    code = main(["synthesize", "--net", str(net_path), "--dims", "2",
                 "--box", str(box_path), "--feedforward", "--out", str(out_path)])
    assert code == 0
    cert_path = tmp_path / "cert.json"
    code = main(["verify", "--net", str(net_path), "--reduced", str(out_path),
                 "--box", str(box_path), "--out", str(cert_path)])
    assert code == 0
    cert = json.loads(cert_path.read_text())
    assert cert["gamma_x"] >= 0.0 and cert["gamma"] >= 0.0
    assert cert["bound_sup"] == pytest.approx(cert["gamma_x"] * 4.0 + cert["gamma"])


def test_solver_failure_exits_1(workdir):
    tmp_path, net, net_path, box_path = workdir
    # an absurdly small iteration cap forces a failed solve
    code = main(["synthesize", "--net", str(net_path), "--dims", "2",
                 "--box", str(box_path), "--max-solver-iters", "1"])
    assert code == 1


def test_search_writes_trace_and_best(workdir):
    tmp_path, net, net_path, box_path = workdir
    out_dir = tmp_path / "search"
    code = main(["search", "--net", str(net_path), "--box", str(box_path),
                 "--eps1", "1e9", "--eps2", "1e9", "--max-iters", "2",
                 "--feedforward", "--samples", "200", "--out-dir", str(out_dir)])
    assert code == 0
    with open(out_dir / "search_trace.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["m1", "bound", "empirical"]
    assert len(rows) >= 2
    best = json.loads((out_dir / "best_result.json").read_text())
    assert "gamma_x" in best and "Psi" in best


def test_demo_example2_csv(tmp_path, capsys):
    out_dir = tmp_path / "demo2"
    code = main(["demo", "example2", "--out-dir", str(out_dir), "--samples", "200"])
    assert code == 0
    with open(out_dir / "example2_outputs.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "f", "g_reduced", "g_reduced_diag", "g_pruned"]
    assert len(rows) == 201
    pruned_col = np.array([float(r[4]) for r in rows[1:]])
    assert float(np.std(pruned_col)) <= 1e-6   # pruning collapses to a constant
    err = capsys.readouterr().err
    assert "pruned output mean" in err


def test_demo_example2_deterministic(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    for d in (d1, d2):
        assert main(["demo", "example2", "--out-dir", str(d), "--samples", "100"]) == 0
    assert (d1 / "example2_outputs.csv").read_bytes() == (d2 / "example2_outputs.csv").read_bytes()


def test_demo_example1_wiring(tmp_path, monkeypatch, capsys):
    # the real sweep runs in the acceptance suite; here only the argument
    # forwarding and exit code are exercised
    import netred.cli as cli_module

    calls = {}

    def fake_run(out_dir, seed, samples, solver):
        calls.update(out_dir=out_dir, seed=seed, samples=samples, solver=solver)
        return {"bounds": [1.0], "empirical": [0.5], "statuses": ["optimal"],
                "trace": None, "results": []}

    monkeypatch.setattr(cli_module.lab, "run_example1", fake_run)
    code = main(["demo", "example1", "--out-dir", str(tmp_path), "--seed", "9",
                 "--samples", "123"])
    assert code == 0
    assert calls["seed"] == 9 and calls["samples"] == 123
    assert calls["solver"].backend == "scs" and calls["solver"].tol <= 1e-9
    assert "example1: bounds" in capsys.readouterr().err
