import numpy as np
import pytest

from sncert.game import (
    Assemblage,
    GameInstance,
    GameResult,
    assemblage_from_instrument,
    ensemble_from_witness,
    evaluate_game,
    optimize_play,
    p_g_k_bounds,
    play,
    verify_theorem5,
)
from sncert.objects import (
    BipartiteState,
    Ensemble,
    Povm,
    teleportation_instrument_from,
)
from sncert.robustness import bell_povm, r_ke
from sncert.sampling import ginibre_state, rand_povm
from sncert.tensors import (
    heisenberg_weyl_set,
    kron,
    max_entangled,
    max_entangled_projector,
)


def bell_states():
    om = max_entangled(2)
    out = []
    for u in heisenberg_weyl_set(2):
        v = kron(u, np.eye(2)) @ om
        out.append(np.outer(v, v.conj()))
    return out


def uniform_ensemble(states_grid):
    nx, ny = len(states_grid), len(states_grid[0])
    probs = np.full((nx, ny), 1.0 / (nx * ny))
    return Ensemble(probs, tuple(tuple(row) for row in states_grid))


def trivial_povm(dims):
    from sncert.tensors import as_dims

    return Povm((np.eye(as_dims(dims).total, dtype=complex),), tuple(dims))


class TestPlay:
    def test_single_state_trivial_strategy_wins(self):
        rng = np.random.default_rng(0)
        sigma = BipartiteState(ginibre_state(rng, 4), (2, 2))
        ens = uniform_ensemble([[sigma]])
        g = GameInstance(ens, BipartiteState(np.eye(4) / 4, (2, 2)), 1)
        v = play(g, trivial_povm((2, 2)), trivial_povm((2, 2)))
        assert abs(v - 1.0) < 1e-10

    def test_blind_guess_on_alice_labelled_bells(self):
        # labels live on Alice's axis only: every strategy wins with 1/4
        bells = bell_states()
        ens = uniform_ensemble([[BipartiteState(b, (2, 2))] for b in bells])
        g = GameInstance(ens, BipartiteState(np.eye(4) / 4, (2, 2)), 1)
        guess = Povm(
            (np.eye(4, dtype=complex), np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4))),
            (2, 2),
        )
        v = play(g, guess, trivial_povm((2, 2)))
        assert abs(v - 0.25) < 1e-10

    def test_constructed_round_trip_analytic(self):
        # play of the witness-built instance equals tr(rho F)/(tr F * d^2)
        rng = np.random.default_rng(1)
        for d in (2, 3):
            f = ginibre_state(rng, d * d) * (d * d)
            ens, pa, pb = ensemble_from_witness(f, d)
            for _ in range(2):
                rho = BipartiteState(ginibre_state(rng, d * d), (d, d))
                g = GameInstance(ens, rho, 1)
                got = play(g, pa, pb)
                want = np.trace(rho.mat @ f).real / (np.trace(f).real * d * d)
                assert abs(got - want) < 1e-10

    def test_linearity_in_ensemble(self):
        rng = np.random.default_rng(2)
        s1 = BipartiteState(ginibre_state(rng, 4), (2, 2))
        s2 = BipartiteState(ginibre_state(rng, 4), (2, 2))
        rho = BipartiteState(ginibre_state(rng, 4), (2, 2))
        pa = Povm(tuple(rand_povm(rng, 4, 2)), (2, 2))
        pb = Povm(tuple(rand_povm(rng, 4, 2)), (2, 2))
        for p in (0.25, 0.5):
            probs = np.array([[p, 1 - p]])
            mixed = Ensemble(probs, ((s1, s2),))
            v = play(GameInstance(mixed, rho, 1), pa, pb)
            v1 = play(GameInstance(Ensemble(np.array([[1.0, 0.0]]), ((s1, s2),)), rho, 1), pa, pb)
            v2 = play(GameInstance(Ensemble(np.array([[0.0, 1.0]]), ((s1, s2),)), rho, 1), pa, pb)
            assert abs(v - (p * v1 + (1 - p) * v2)) < 1e-10

    def test_coarse_graining_cannot_beat_optimized_fine_strategy(self):
        rng = np.random.default_rng(3)
        bells = bell_states()
        grid = [[BipartiteState(bells[0], (2, 2)), BipartiteState(bells[1], (2, 2))],
                [BipartiteState(bells[2], (2, 2)), BipartiteState(bells[3], (2, 2))]]
        ens = uniform_ensemble(grid)
        rho = BipartiteState(max_entangled_projector(2), (2, 2))
        g = GameInstance(ens, rho, 1)
        pa = Povm(tuple(rand_povm(rng, 4, 2)), (2, 2))
        pb = Povm(tuple(rand_povm(rng, 4, 2)), (2, 2))
        merged = Povm((sum(pb.elements),), (2, 2))
        coarse = play(g, pa, merged)
        fine_best, _, _ = optimize_play(g, restarts=2, seed=3)
        assert coarse <= fine_best + 1e-9


class TestOptimizePlay:
    def test_orthogonal_product_ensemble_reaches_one(self):
        units = [np.zeros((2, 2), dtype=complex) for _ in range(2)]
        units[0][0, 0] = 1.0
        units[1][1, 1] = 1.0
        grid = [
            [BipartiteState(kron(units[x], units[y]), (2, 2)) for y in range(2)]
            for x in range(2)
        ]
        ens = uniform_ensemble(grid)
        g = GameInstance(ens, BipartiteState(np.eye(4) / 4, (2, 2)), 1)
        val, pa, pb = optimize_play(g, restarts=4, seed=0)
        assert val >= 1.0 - 1e-6

    def test_theorem5_instance_reaches_constructed_value(self):
        f = 2.0 * max_entangled_projector(2)
        ens, pa, pb = ensemble_from_witness(f, 2)
        rho = BipartiteState(max_entangled_projector(2), (2, 2))
        g = GameInstance(ens, rho, 1)
        constructed = play(g, pa, pb)
        val, _, _ = optimize_play(g, restarts=4, seed=1)
        assert val >= constructed - 1e-6
        assert abs(constructed - 0.25) < 1e-10

    def test_alice_labelled_bells_blind_for_any_strategy(self):
        bells = bell_states()
        ens = uniform_ensemble([[BipartiteState(b, (2, 2))] for b in bells])
        g = GameInstance(ens, BipartiteState(np.eye(4) / 4, (2, 2)), 1)
        val, _, _ = optimize_play(g, restarts=6, seed=2)
        assert val <= 0.25 + 1e-6


class TestPgkBounds:
    def test_identical_states_both_bounds_one(self):
        rng = np.random.default_rng(4)
        s = BipartiteState(ginibre_state(rng, 4), (2, 2))
        ens = uniform_ensemble([[s]])
        g = GameInstance(ens, BipartiteState(np.eye(4) / 4, (2, 2)), 1)
        lo, hi, _, _ = p_g_k_bounds(g, restarts=4, seed=0)
        assert abs(lo - 1.0) < 1e-6 and abs(hi - 1.0) < 1e-6

    def test_witness_instance_upper_bound(self):
        f = 2.0 * max_entangled_projector(2)
        ens, pa, pb = ensemble_from_witness(f, 2)
        g = GameInstance(ens, BipartiteState(max_entangled_projector(2), (2, 2)), 1)
        lo, hi, _, _ = p_g_k_bounds(g, restarts=8, seed=0)
        # analytic restricted value: 1/(tr F * d^2)
        want = 1.0 / (2.0 * 4.0)
        assert hi <= want + 1e-4
        assert lo <= hi + 1e-9
        assert lo >= want - 1e-4  # the product strategy attains it

    def test_bracket_ordering_and_unrestricted_consistency(self):
        f = 2.0 * max_entangled_projector(2)
        ens, pa, pb = ensemble_from_witness(f, 2)
        rho = BipartiteState(max_entangled_projector(2), (2, 2))
        g1 = GameInstance(ens, rho, 1)
        g2 = GameInstance(ens, rho, 2)
        lo1, hi1, _, _ = p_g_k_bounds(g1, restarts=4, seed=0)
        lo2, hi2, _, _ = p_g_k_bounds(g2, restarts=4, seed=0)
        assert lo1 <= hi1 + 1e-9
        assert hi1 <= hi2 + 1e-9  # larger k can only help
        # k = min dims: unrestricted; the constructed strategy is feasible
        constructed = play(g2, pa, pb)
        assert hi2 >= constructed - 1e-6

    def test_restricting_shared_state_cannot_help(self):
        # p_g_k upper <= value of the best strategy with the best state
        f = 2.0 * max_entangled_projector(2)
        ens, pa, pb = ensemble_from_witness(f, 2)
        rho = BipartiteState(max_entangled_projector(2), (2, 2))
        g = GameInstance(ens, rho, 1)
        lo, hi, _, _ = p_g_k_bounds(g, restarts=4, seed=0)
        val, _, _ = optimize_play(g, restarts=4, seed=0)
        assert lo <= hi + 1e-9
        assert hi <= val + 1e-6  # for this instance rho realizes the optimum


class TestEnsembleFromWitness:
    def test_trivial_witness_no_information(self):
        ens, pa, pb = ensemble_from_witness(np.eye(4) / 4, 2)
        rng = np.random.default_rng(5)
        rho = BipartiteState(ginibre_state(rng, 4), (2, 2))
        g = GameInstance(ens, rho, 1)
        v = play(g, pa, pb)
        assert abs(v - 1.0 / 16.0) < 1e-10
        # all ensemble states equal I/d^2
        for row in ens.states:
            for s in row:
                assert np.max(np.abs(s.mat - np.eye(4) / 4)) < 1e-12

    def test_bell_witness_equivalence_classes(self):
        ens, _, _ = ensemble_from_witness(2.0 * max_entangled_projector(2), 2)
        # 16 states in 4 equivalence classes by fidelity
        mats = [s.mat for row in ens.states for s in row]
        classes = []
        for m in mats:
            for c in classes:
                if np.max(np.abs(m - c[0])) < 1e-10:
                    c.append(m)
                    break
            else:
                classes.append([m])
        assert len(classes) == 4
        assert sorted(len(c) for c in classes) == [4, 4, 4, 4]

    def test_rejects_non_psd(self):
        with pytest.raises(ValueError):
            ensemble_from_witness(np.diag([1.0, -0.5, 1.0, 1.0]), 2)


class TestTheorem5:
    def test_separable_state_ratio_one(self):
        rng = np.random.default_rng(6)
        from sncert.sampling import free_state_with_ensemble

        mat, _, _ = free_state_with_ensemble(rng, 2, 2, 1)
        rec = verify_theorem5(BipartiteState(mat, (2, 2)), 1, restarts=6)
        assert rec.ratio_lower - 1e-6 <= 1.0 <= rec.ratio_upper + 1e-6
        assert rec.passed

    def test_bell_state_ratio_two(self):
        rec = verify_theorem5(BipartiteState(max_entangled_projector(2), (2, 2)), 1, restarts=8)
        assert abs(rec.ratio_lower - 2.0) < 1e-4
        assert abs(rec.ratio_upper - 2.0) < 1e-4
        assert rec.passed

    def test_isotropic_high_visibility(self):
        from sncert.sampling import isotropic_state

        rho = BipartiteState(isotropic_state(2, 0.8), (2, 2))
        rep = r_ke(rho, 1, compute_upper=False)
        rec = verify_theorem5(rho, 1, restarts=8)
        target = 1.0 + rep.lower.value
        assert rec.ratio_lower - 1e-3 <= target <= rec.ratio_upper + 1e-3
        assert rec.passed

    def test_leq_direction_random_ensembles(self):
        rng = np.random.default_rng(7)
        rho = BipartiteState(ginibre_state(rng, 4), (2, 2))
        r = r_ke(rho, 1, compute_upper=False).lower.value
        for i in range(5):
            probs = rng.dirichlet(np.ones(4)).reshape(2, 2)
            grid = tuple(
                tuple(BipartiteState(ginibre_state(rng, 4), (2, 2)) for _ in range(2))
                for _ in range(2)
            )
            g = GameInstance(Ensemble(probs, grid), rho, 1)
            pa = Povm(tuple(rand_povm(rng, 4, 2)), (2, 2))
            pb = Povm(tuple(rand_povm(rng, 4, 2)), (2, 2))
            v = play(g, pa, pb)
            _, hi, _, _ = p_g_k_bounds(g, restarts=2, seed=i)
            assert v / hi <= 1.0 + r + 1e-6


class TestAssemblage:
    def test_bell_instrument_teleports_inputs(self):
        rho = BipartiteState(max_entangled_projector(2), (2, 2))
        inst = teleportation_instrument_from(rho, bell_povm(2))
        zero = np.zeros((2, 2), dtype=complex)
        zero[0, 0] = 1.0
        plus = np.full((2, 2), 0.5, dtype=complex)
        asm = assemblage_from_instrument(inst, [zero, plus])
        us = heisenberg_weyl_set(2)
        for i, u in enumerate(us):
            for x, w in enumerate((zero, plus)):
                want = u.conj().T @ w @ u / 4.0
                assert np.max(np.abs(asm.tau[i][x] - want)) < 1e-10

    def test_normalization_per_input(self):
        rng = np.random.default_rng(8)
        rho = BipartiteState(ginibre_state(rng, 4), (2, 2))
        povm = Povm(tuple(rand_povm(rng, 4, 3)), (2, 2))
        inst = teleportation_instrument_from(rho, povm)
        inputs = [ginibre_state(rng, 2) for _ in range(3)]
        asm = assemblage_from_instrument(inst, inputs)
        for x in range(3):
            total = sum(np.trace(asm.tau[i][x]).real for i in range(len(asm.tau)))
            assert abs(total - 1.0) < 1e-9

    def test_preparable_flag_from_certificate(self):
        rng = np.random.default_rng(9)
        from sncert.cone import decomposition_from_ensemble
        from sncert.objects import InstrumentProvenance, TeleportationInstrument
        from sncert.sampling import free_state_with_ensemble

        mat, w, vecs = free_state_with_ensemble(rng, 2, 2, 1)
        cert = decomposition_from_ensemble(w, vecs, (2, 2), 1)
        rho = BipartiteState(mat, (2, 2))
        inst = teleportation_instrument_from(rho, bell_povm(2))
        inst = TeleportationInstrument(
            inst.chois, InstrumentProvenance(rho, bell_povm(2), cert)
        )
        asm = assemblage_from_instrument(inst, [np.eye(2) / 2])
        assert asm.preparable_order == 1

    def test_single_trivial_input_and_povm(self):
        rng = np.random.default_rng(10)
        rho = BipartiteState(ginibre_state(rng, 4), (2, 2))
        inst = teleportation_instrument_from(rho, trivial_povm((2, 2)))
        asm = assemblage_from_instrument(inst, [np.eye(2) / 2])
        from sncert.tensors import partial_trace

        want = partial_trace(rho.mat, (2, 2), [1])
        assert np.max(np.abs(asm.tau[0][0] - want)) < 1e-10


class TestGameResult:
    def test_evaluate_game_and_serialization(self):
        f = 2.0 * max_entangled_projector(2)
        ens, _, _ = ensemble_from_witness(f, 2)
        g = GameInstance(ens, BipartiteState(max_entangled_projector(2), (2, 2)), 1)
        res = evaluate_game(g, restarts=2, seed=0)
        assert res.p_g_k_lower <= res.p_g_k_upper + 1e-9
        assert res.ratio_lower <= res.ratio_upper + 1e-9
        d = res.to_json_dict()
        assert "p_g_k" in d and "ratio" in d
        blob = g.to_json_dict()
        g2 = GameInstance.from_json_dict(blob)
        assert g2.k == g.k
        assert np.array_equal(g2.shared.mat, g.shared.mat)


class TestAssemblageMixtureForm:
    def test_certified_resource_assemblage_decomposes(self):
        # the assemblage of an instrument built on a certified mixture equals
        # the same mixture of per-component assemblages
        rng = np.random.default_rng(11)
        from sncert.sampling import free_state_with_ensemble

        mat, w, vecs = free_state_with_ensemble(rng, 2, 2, 1, terms=5)
        rho = BipartiteState(mat, (2, 2))
        povm = bell_povm(2)
        inst = teleportation_instrument_from(rho, povm)
        inputs = [ginibre_state(rng, 2) for _ in range(2)]
        asm = assemblage_from_instrument(inst, inputs)
        parts = []
        for v in vecs:
            comp = BipartiteState(np.outer(v, v.conj()), (2, 2))
            parts.append(assemblage_from_instrument(
                teleportation_instrument_from(comp, povm), inputs
            ))
        for i in range(len(inst.chois)):
            for x in range(len(inputs)):
                want = sum(wi * p.tau[i][x] for wi, p in zip(w, parts))
                assert np.max(np.abs(asm.tau[i][x] - want)) < 1e-9
