import json
import os

import numpy as np
import pytest

from sncert.cli import main
from sncert.game import GameInstance, ensemble_from_witness
from sncert.objects import BipartiteState, distributed_measurement_from, teleportation_instrument_from
from sncert.robustness import bell_povm
from sncert.sampling import free_state_with_ensemble, ginibre_state
from sncert.serialize import dumps, to_json_dict
from sncert.tensors import max_entangled_projector


@pytest.fixture
def bell_state_file(tmp_path):
    p = tmp_path / "bell2.json"
    p.write_text(dumps(BipartiteState(max_entangled_projector(2), (2, 2))))
    return str(p)


@pytest.fixture
def product_state_file(tmp_path):
    mat = np.diag([1.0, 0, 0, 0]).astype(complex)
    p = tmp_path / "product.json"
    p.write_text(dumps(BipartiteState(mat, (2, 2))))
    return str(p)


def read(path):
    with open(path) as fh:
        return json.load(fh)


class TestRkeCommand:
    def test_bell_value_one(self, bell_state_file, tmp_path):
        out = tmp_path / "rep.json"
        code = main(["rke", "--state", bell_state_file, "--k", "1", "--out", str(out)])
        assert code == 0
        rep = read(out)
        assert rep["version"]
        assert rep["config"]["subcommand"] == "rke"
        val = rep["results"][0]["report"]["lower"]["value"]
        assert abs(val - 1.0) < 1e-6

    def test_product_state_zero(self, product_state_file, tmp_path):
        out = tmp_path / "rep.json"
        code = main(["rke", "--state", product_state_file, "--k", "1", "--out", str(out)])
        assert code == 0
        rep = read(out)
        assert rep["results"][0]["report"]["lower"]["value"] <= 1e-7

    def test_missing_k_is_validation_error(self, bell_state_file):
        assert main(["rke", "--state", bell_state_file]) == 2

    def test_unreadable_state_names_field(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["rke", "--state", str(bad), "--k", "1"]) == 2
        assert "--state" in capsys.readouterr().err

    def test_wrong_type_names_field(self, tmp_path, capsys):
        f = tmp_path / "povm.json"
        f.write_text(dumps(bell_povm(2)))
        assert main(["rke", "--state", str(f), "--k", "1"]) == 2
        assert "--state" in capsys.readouterr().err

    def test_dump_problem(self, bell_state_file, tmp_path):
        out = tmp_path / "rep.json"
        code = main(["rke", "--state", bell_state_file, "--k", "1",
                     "--out", str(out), "--dump-problem"])
        assert code == 0
        rep = read(out)
        assert rep["conic_problems"]
        assert "blocks" in rep["conic_problems"][0]


class TestOtherCommands:
    def test_rkdm(self, tmp_path):
        rho = BipartiteState(max_entangled_projector(2), (2, 2))
        dm = distributed_measurement_from(rho, bell_povm(2), bell_povm(2))
        f = tmp_path / "dm.json"
        f.write_text(dumps(dm))
        out = tmp_path / "rep.json"
        code = main(["rkdm", "--measurement", str(f), "--k", "1", "--out", str(out)])
        assert code == 0
        val = read(out)["results"][0]["report"]["lower"]["value"]
        assert abs(val - 1.0) < 1e-4

    def test_rsc(self, tmp_path):
        rho = BipartiteState(max_entangled_projector(2), (2, 2))
        inst = teleportation_instrument_from(rho, bell_povm(2))
        f = tmp_path / "inst.json"
        f.write_text(dumps(inst))
        out = tmp_path / "rep.json"
        code = main(["rsc", "--instrument", str(f), "--k", "1", "--out", str(out)])
        assert code == 0
        val = read(out)["results"][0]["report"]["lower"]["value"]
        assert abs(val - 1.0) < 1e-4

    def test_game(self, tmp_path):
        ens, _, _ = ensemble_from_witness(2.0 * max_entangled_projector(2), 2)
        g = GameInstance(ens, BipartiteState(max_entangled_projector(2), (2, 2)), 1)
        f = tmp_path / "game.json"
        f.write_text(json.dumps(g.to_json_dict()))
        out = tmp_path / "rep.json"
        code = main(["game", "--ensemble", str(f), "--restarts", "2", "--out", str(out)])
        assert code == 0
        res = read(out)["results"][0]["result"]
        assert res["ratio"][0] <= res["ratio"][1]

    def test_decompose(self, tmp_path):
        rng = np.random.default_rng(0)
        mat, _, _ = free_state_with_ensemble(rng, 2, 2, 1)
        f = tmp_path / "state.json"
        f.write_text(dumps(BipartiteState(mat, (2, 2))))
        out = tmp_path / "rep.json"
        code = main(["decompose", "--state", str(f), "--k", "1", "--out", str(out)])
        assert code == 0
        res = read(out)["results"][0]["result"]
        assert res["certified"]
        assert res["decomposition"]["residual"] <= 1e-7

    def test_choi_from_state(self, bell_state_file, tmp_path):
        out = tmp_path / "rep.json"
        code = main(["choi", "--state", bell_state_file, "--out", str(out)])
        assert code == 0
        res = read(out)["results"][0]
        assert res["trace_preserving"] is True

    def test_choi_from_instrument(self, tmp_path):
        rho = BipartiteState(max_entangled_projector(2), (2, 2))
        inst = teleportation_instrument_from(rho, bell_povm(2))
        f = tmp_path / "inst.json"
        f.write_text(dumps(inst))
        out = tmp_path / "rep.json"
        code = main(["choi", "--instrument", str(f), "--out", str(out)])
        assert code == 0
        res = read(out)["results"][0]
        assert len(res["chois"]) == 4


class TestVerifyCommands:
    def test_verify_theorem2_pass(self, bell_state_file, tmp_path, capsys):
        out = tmp_path / "rep.json"
        code = main(["verify-theorem2", "--state", bell_state_file, "--k", "1",
                     "--out", str(out)])
        assert code == 0
        table = capsys.readouterr().out
        assert "R_ke" in table and "R_kDM" in table
        rec = read(out)["results"][0]["record"]
        assert rec["passed"] is True

    def test_verify_theorem5_pass(self, bell_state_file, tmp_path, capsys):
        out = tmp_path / "rep.json"
        code = main(["verify-theorem5", "--state", bell_state_file, "--k", "1",
                     "--restarts", "8", "--out", str(out)])
        assert code == 0
        table = capsys.readouterr().out
        assert "ratio" in table
        rec = read(out)["results"][0]["record"]
        assert rec["passed"] is True
        assert abs(rec["ratio"][0] - 2.0) < 1e-4

    def test_batch_states(self, bell_state_file, product_state_file, tmp_path):
        out = tmp_path / "rep.json"
        code = main(["verify-theorem2", "--state", bell_state_file,
                     "--state", product_state_file, "--k", "1", "--out", str(out)])
        assert code == 0
        assert len(read(out)["results"]) == 2


class TestReproducibility:
    def test_identical_runs_identical_bytes(self, tmp_path):
        rng = np.random.default_rng(5)
        rho = BipartiteState(ginibre_state(rng, 4), (2, 2))
        f = tmp_path / "state.json"
        f.write_text(dumps(rho))
        out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
        for out in (out1, out2):
            code = main(["rke", "--state", str(f), "--k", "1", "--seed", "7",
                         "--out", str(out)])
            assert code == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_threads_env_validation(self, bell_state_file, monkeypatch, capsys):
        monkeypatch.setenv("SNCERT_THREADS", "zebra")
        assert main(["rke", "--state", bell_state_file, "--k", "1"]) == 2
        assert "SNCERT_THREADS" in capsys.readouterr().err
