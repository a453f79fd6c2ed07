import numpy as np
import pytest

from sncert.sdp import (
    ConicProblem,
    HermitianProgram,
    SolveOptions,
    deembed_hermitian,
    embed_hermitian,
    hconst,
    hermitian_basis,
    slater_margin,
    solve,
    svec,
    svec_dim,
    unsvec,
)
from sncert.tensors import max_entangled_projector, partial_transpose

SY = np.array([[0, -1j], [1j, 0]], dtype=complex)


def rand_herm(rng, n):
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (g + g.conj().T)


class TestEmbedding:
    def test_real_symmetric_is_block_diagonal(self):
        h = np.array([[2.0, 1.0], [1.0, 3.0]])
        e = embed_hermitian(h)
        assert np.allclose(e, np.block([[h, np.zeros((2, 2))], [np.zeros((2, 2)), h]]))

    def test_sigma_y_eigenvalues(self):
        e = embed_hermitian(SY)
        assert e.shape == (4, 4)
        assert np.allclose(np.sort(np.linalg.eigvalsh(e)), [-1, -1, 1, 1], atol=1e-12)

    def test_psd_agreement_100_random(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            h = rand_herm(rng, 4)
            lam = np.linalg.eigvalsh(h)
            lam_e = np.linalg.eigvalsh(embed_hermitian(h))
            assert (lam[0] >= -1e-12) == (lam_e[0] >= -1e-12)
            # doubled multiplicities
            assert np.allclose(np.repeat(lam, 2), np.sort(lam_e), atol=1e-10)

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        h = rand_herm(rng, 5)
        assert np.allclose(deembed_hermitian(embed_hermitian(h)), h, atol=1e-14)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            embed_hermitian(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_inner_product_factor_two(self):
        rng = np.random.default_rng(2)
        a, b = rand_herm(rng, 3), rand_herm(rng, 3)
        lhs = np.sum(embed_hermitian(a) * embed_hermitian(b))
        assert abs(lhs - 2.0 * np.trace(a @ b).real) < 1e-10


class TestSvec:
    def test_inner_product_preserved(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((4, 4))
        a = a + a.T
        b = rng.standard_normal((4, 4))
        b = b + b.T
        assert abs(svec(a) @ svec(b) - np.trace(a @ b)) < 1e-10

    def test_round_trip(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((5, 5))
        a = a + a.T
        assert np.allclose(unsvec(svec(a), 5), a, atol=1e-12)
        assert svec(a).shape == (svec_dim(5),)

    def test_basis_orthonormal(self):
        for n in (2, 3):
            bs = hermitian_basis(n)
            assert len(bs) == n * n
            for i, x in enumerate(bs):
                for j, y in enumerate(bs):
                    ip = np.trace(x.conj().T @ y)
                    assert abs(ip - (1.0 if i == j else 0.0)) < 1e-12


class TestConicSolve:
    def test_min_trace_above_identity(self):
        # min tr(X) s.t. X >= I on a real 2x2 block
        p = ConicProblem()
        p.add_block("s", 2)
        p.add_block("x", 2)
        # x - s = I entrywise
        for b in [np.diag([1.0, 0]), np.diag([0, 1.0]), np.array([[0, 0.5], [0.5, 0]])]:
            p.add_eq({"x": b, "s": -b}, np.trace(b @ np.eye(2)))
        p.set_objective({"x": np.eye(2)})
        rep = solve(p)
        assert rep.status == "optimal"
        assert abs(rep.primal_value - 2.0) < 1e-7
        assert np.allclose(rep.block_values["x"], np.eye(2), atol=1e-6)
        assert rep.gap <= 1e-6

    def test_infeasible_is_a_return(self):
        p = ConicProblem()
        p.add_block("x", 2)
        p.add_eq({"x": np.eye(2)}, -1.0)  # tr X = -1 impossible for PSD X
        p.set_objective({"x": np.eye(2)})
        rep = solve(p)
        assert rep.status == "infeasible"

    def test_unbounded_is_a_return(self):
        p = ConicProblem()
        p.add_block("x", 2)
        p.set_objective({"x": -np.eye(2)})
        rep = solve(p)
        assert rep.status == "unbounded"

    def test_weak_duality_and_determinism(self):
        rng = np.random.default_rng(5)
        c = rng.standard_normal((3, 3))
        c = c @ c.T + np.eye(3)
        p = ConicProblem()
        p.add_block("x", 3)
        p.add_eq({"x": np.eye(3)}, 1.0)
        p.set_objective({"x": c})
        r1 = solve(p)
        r2 = solve(p)
        assert r1.status == "optimal"
        assert r1.primal_value >= r1.dual_value - 1e-9
        assert r1.primal_value == r2.primal_value
        assert r1.iterations == r2.iterations
        assert np.array_equal(r1.block_values["x"], r2.block_values["x"])

    def test_json_round_trip(self):
        p = ConicProblem()
        p.add_block("x", 2)
        p.add_ineq({"x": np.eye(2)}, 3.0)
        p.add_eq({"x": np.diag([1.0, 0.0])}, 1.0)
        p.set_objective({"x": -np.eye(2)}, offset=0.5)
        q = ConicProblem.from_json_dict(p.to_json_dict())
        r1, r2 = solve(p), solve(q)
        assert r1.primal_value == r2.primal_value

    def test_slater_margin(self):
        p = ConicProblem()
        p.add_block("x", 2)
        p.add_eq({"x": np.eye(2)}, 1.0)  # tr X = 1: interior exists
        p.set_objective({"x": np.diag([1.0, 0.0])})
        m = slater_margin(p)
        assert m is not None and m > 0.2  # X = I/2 is feasible with margin 1/2
        assert m <= 0.5 + 1e-6


class TestHermitianProgram:
    def test_min_trace_above_hermitian_target(self):
        # min tr(X) s.t. X >= T for a complex Hermitian PSD target
        rng = np.random.default_rng(6)
        g = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        t = g @ g.conj().T / 3.0
        prog = HermitianProgram()
        x = prog.psd_var("x", 3)
        prog.add_psd_constraint(x - hconst(t), group="dom")
        prog.add_objective_term("x", np.eye(3))
        rep = prog.solve().require_optimal()
        # optimum is X = T (T already PSD)
        assert abs(rep.primal_value - np.trace(t).real) < 1e-6
        assert np.max(np.abs(rep.value("x") - t)) < 1e-5

    def test_psd_constraint_multiplier_calibration(self):
        # min tr(X) s.t. X >= I: multiplier of the constraint is I
        prog = HermitianProgram()
        x = prog.psd_var("x", 2)
        prog.add_psd_constraint(x - hconst(np.eye(2)), group="dom")
        prog.add_objective_term("x", np.eye(2))
        rep = prog.solve().require_optimal()
        assert abs(rep.primal_value - 2.0) < 1e-7
        y = rep.psd_dual("dom")
        assert np.allclose(y, np.eye(2), atol=1e-6)
        # Lagrangian consistency: primal = tr(Y * I) at optimum
        assert abs(np.trace(y).real - rep.dual_value) < 1e-6

    def test_complex_data_path(self):
        # min tr(X) s.t. X >= P for P = |psi><psi| with complex psi
        psi = np.array([1.0, 1j]) / np.sqrt(2)
        p = np.outer(psi, psi.conj())
        prog = HermitianProgram()
        x = prog.psd_var("x", 2)
        prog.add_psd_constraint(x - hconst(p), group="dom")
        prog.add_objective_term("x", np.eye(2))
        rep = prog.solve().require_optimal()
        assert abs(rep.primal_value - 1.0) < 1e-7
        assert np.max(np.abs(rep.value("x") - p)) < 1e-5

    def test_hermitian_equality_and_scalar_var(self):
        # min t s.t. t*I - P >= 0  ->  t = 1 for projector P
        p = max_entangled_projector(2) * 2.0  # eigenvalues {2, 0, 0, 0}
        prog = HermitianProgram()
        t = prog.scalar_var("t")
        x = prog.psd_var("x", 4)
        # x = t*I via Hermitian equality
        prog.add_eq(x - t.map(lambda s: s[0, 0] * np.eye(4), 4), group="tie")
        prog.add_psd_constraint(x - hconst(p), group="dom")
        prog.add_objective_term("t", np.eye(1))
        rep = prog.solve().require_optimal()
        assert abs(rep.scalar("t") - 2.0) < 1e-6

    def test_ppt_feasibility_via_map(self):
        # min tr(X) s.t. X >= Phi+, X^{T_B} >= 0 : the 2x2 robustness program
        phi = max_entangled_projector(2)
        prog = HermitianProgram()
        x = prog.psd_var("x", 4)
        prog.add_psd_constraint(x - hconst(phi), group="dom")
        prog.add_psd_constraint(x.map(lambda m: partial_transpose(m, (2, 2), 1), 4), group="ppt")
        prog.add_objective_term("x", np.eye(4))
        rep = prog.solve().require_optimal()
        assert abs(rep.primal_value - 2.0) < 1e-6  # 1 + robustness = 2
        # dual witness consistency: A = multiplier of dom, tr(A phi) = primal
        a = rep.psd_dual("dom")
        assert abs(np.trace(a @ phi).real - rep.primal_value) < 1e-5

    def test_scalar_constraints(self):
        # max tr(P X) s.t. tr X = 1, X PSD -> largest eigenvalue of P
        rng = np.random.default_rng(8)
        p = rand_herm(rng, 3)
        prog = HermitianProgram()
        x = prog.psd_var("x", 3)
        prog.add_scalar_eq(x, np.eye(3), 1.0, group="norm")
        prog.add_objective_term("x", -p)
        rep = prog.solve().require_optimal()
        assert abs(-rep.primal_value - np.linalg.eigvalsh(p)[-1]) < 1e-7

    def test_scalar_ineq(self):
        # min tr(X) s.t. tr(diag(1,0) X) >= 2 (as -tr <= -2)
        prog = HermitianProgram()
        x = prog.psd_var("x", 2)
        prog.add_scalar_ineq(x, -np.diag([1.0, 0.0]), -2.0, group="lb")
        prog.add_objective_term("x", np.eye(2))
        rep = prog.solve().require_optimal()
        assert abs(rep.primal_value - 2.0) < 1e-7


class TestSlaterWiring:
    def test_slater_reported_when_requested(self):
        from sncert.objects import BipartiteState
        from sncert.robustness import r_ke
        from sncert.sampling import ginibre_state

        rng = np.random.default_rng(9)
        rho = BipartiteState(ginibre_state(rng, 4), (2, 2))
        rep = r_ke(rho, 1, compute_upper=False,
                   opts=SolveOptions(slater_check=True))
        d = rep.diagnostics[0]
        assert d.slater_margin is not None
        assert d.slater_margin > 0  # the robustness primal has interior points
