import numpy as np
import pytest

from mptrom import pod
from mptrom.errors import NonConvergence, NonPositiveFrequency, SingularReducedSystem, SnapshotFailure
from mptrom.fom import assemble_source
from mptrom.mpt import fmm_blocks
from mptrom.pod import (
    PodRom,
    ReducedOperators,
    batched_online_solve,
    load_reduced,
    mm_blocks_batched,
    mpt_mm,
    online_solve,
    residual_vector,
    save_reduced,
    solve_many,
)

FREQS = np.geomspace(1e2, 1e8, 7)


@pytest.fixture(scope="module")
def small_rom(small_sphere):
    return PodRom.build(small_sphere, FREQS, tol_sigma=1e-8, rel_tol=1e-10)


def test_basis_orthonormal_and_spans_snapshots(small_rom):
    for i, U in enumerate(small_rom.basis.U):
        assert np.allclose(U.conj().T @ U, np.eye(U.shape[1]), atol=1e-12)
        D = small_rom.snapshots.D[i]
        proj = U @ (U.conj().T @ D)
        assert np.linalg.norm(D - proj) <= 1e-7 * np.linalg.norm(D)


def test_projected_operators(small_rom, small_sphere):
    U = small_rom.basis.U[1]
    assert np.allclose(small_rom.ops.K[1], U.conj().T @ (small_sphere.K @ U))
    assert np.allclose(small_rom.ops.f[1], U.conj().T @ small_sphere.source_factor(1))
    assert small_rom.ops.revision == small_rom.basis.revision


def test_galerkin_orthogonality(small_rom, small_sphere):
    w = 4.2e5
    p, res = online_solve(small_rom.ops, w, direction=0, return_residual=True)
    r = residual_vector(small_sphere, small_rom.basis, 0, w, p)
    U = small_rom.basis.U[0]
    assert np.linalg.norm(U.conj().T @ r) <= 1e-10 * np.linalg.norm(assemble_source(small_sphere, 0, w))
    assert res < 1e-14


def test_batched_matches_single(small_rom):
    ws = np.geomspace(1e3, 1e7, 5)
    P = batched_online_solve(small_rom.ops, ws)
    for n, w in enumerate(ws):
        single = online_solve(small_rom.ops, w)
        for i in range(3):
            assert np.allclose(P[i][n], single[i], rtol=1e-12, atol=0)


def test_mm_equals_fmm_on_reconstruction(small_rom, small_sphere):
    ws = np.geomspace(1e2, 1e8, 9)
    P = batched_online_solve(small_rom.ops, ws)
    R, I = mm_blocks_batched(small_rom.pre, P, ws)
    for n, w in enumerate(ws):
        Q = np.stack([small_rom.basis.U[i] @ P[i][n] for i in range(3)])
        Rf, If = fmm_blocks(small_sphere, Q, w)
        assert np.max(np.abs(R[n] - Rf)) <= 1e-12 * np.max(np.abs(Rf))
        assert np.max(np.abs(I[n] - If)) <= 1e-12 * np.max(np.abs(If))
        r00, i00 = mpt_mm(small_rom.pre, P[0][n], P[0][n], w, 0, 0)
        assert r00 == pytest.approx(R[n, 0, 0], rel=1e-12)
        assert i00 == pytest.approx(I[n, 0, 0], rel=1e-12)


def test_snapshot_frequencies_reproduced_without_truncation(small_sphere, small_rom):
    # SVD fixes small singular directions only to about eps * sigma_1, so the
    # reproduction floor is measured against sigma_1 rather than each column
    full = PodRom(small_sphere, small_rom.snapshots, tol_sigma=1e-13)
    for n, w in enumerate(full.snapshots.frequencies):
        Q = full.reconstruct_all(w)
        for i in range(3):
            d = full.snapshots.D[i][:, n]
            assert np.linalg.norm(Q[i] - d) <= 1e-12 * full.basis.sigma[i][0]


def test_truncated_projection_error_bounded_by_dropped_sigma(small_rom):
    for i in range(3):
        U, s, D = small_rom.basis.U[i], small_rom.basis.sigma[i], small_rom.snapshots.D[i]
        err = np.linalg.norm(D - U @ (U.conj().T @ D))
        assert err <= np.sqrt(np.sum(s[U.shape[1]:] ** 2)) * (1 + 1e-6) + 1e-14 * s[0]


def test_add_snapshots_changes_revision(small_sphere):
    rom = PodRom.build(small_sphere, FREQS[::2], tol_sigma=1e-8)
    rev = rom.basis.revision
    rom.add_snapshots([3e6])
    assert rom.snapshots.N == 5
    assert np.all(np.diff(rom.snapshots.frequencies) > 0)
    assert rom.basis.revision != rev and rom.pre.revision == rom.basis.revision


def test_parallel_solves_identical(small_sphere):
    a = solve_many(small_sphere, FREQS[:3], 1e-8, parallel=1)
    b = solve_many(small_sphere, FREQS[:3], 1e-8, parallel=3)
    assert np.array_equal(a, b)


def test_snapshot_failure_collects_every_failure(small_sphere, monkeypatch):
    real = pod.solve_full_order

    def flaky(fom, i, w, rel_tol):
        if i == 2:
            raise NonConvergence(5, 0.1)
        return real(fom, i, w, rel_tol)

    monkeypatch.setattr(pod, "solve_full_order", flaky)
    with pytest.raises(SnapshotFailure) as exc:
        solve_many(small_sphere, FREQS[:2])
    assert [(f[0], f[2]) for f in exc.value.failures] == [(0, 2), (1, 2)]


def test_singular_and_invalid_reduced_systems():
    Z = np.zeros((2, 2))
    ops = ReducedOperators((Z,) * 3, (Z,) * 3, (Z,) * 3, (np.ones(2),) * 3, 0.0, "x")
    with pytest.raises(SingularReducedSystem):
        online_solve(ops, 1.0)
    with pytest.raises(NonPositiveFrequency):
        online_solve(ops, 0.0)


def test_save_load_reduced_exact(small_rom, tmp_path):
    save_reduced(tmp_path, small_rom.basis, small_rom.ops)
    basis, ops = load_reduced(tmp_path)
    for i in range(3):
        assert np.array_equal(basis.U[i], small_rom.basis.U[i])
        assert np.array_equal(ops.K[i], small_rom.ops.K[i])
        assert np.array_equal(ops.f[i], small_rom.ops.f[i])
    assert basis.revision == small_rom.basis.revision
