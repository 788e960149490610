"""Lindblad master-equation simulation of small spin-cavity systems.

The Hilbert space is ``cavity (x) spins`` with the cavity factor first. A
spin-1/2 uses the basis ``(|g>, |e>)`` so index 0 of the full space is the
vacuum with every spin in its ground state. Collective spins use the
``|j, m>`` basis ordered from ``m = -j`` upward.

Spin operators follow the Pauli convention (``sz`` has eigenvalues +-1,
``sm = |g><e|``). Collective ``jz, jm, jp`` are Pauli sums
``sum_i sz_i`` etc. restricted to the symmetric subspace, optionally scaled
by ``1/sqrt(N)``; ``*_conv`` attributes hold the conventional angular
momentum ``J = sum_i sigma_i / 2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from . import ode
from .model import ParameterError, SystemParams
from .protocol import DriveProtocol
from .trace import Trace

DEFAULT_MAX_DIM = 64


class TruncationError(ParameterError):
    """The truncated Fock space cannot hold the expected photon number."""


@dataclass(frozen=True)
class HilbertSpec:
    """Cavity truncation plus either ``n_spins`` spin-1/2s or one collective spin ``j``."""

    fock_dim: int
    n_spins: int | None = None
    collective_j: float | None = None
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        if self.fock_dim < 2:
            raise ParameterError("fock_dim must be >= 2")
        if (self.n_spins is None) == (self.collective_j is None):
            raise ParameterError("give exactly one of n_spins or collective_j")
        if self.n_spins is not None and self.n_spins < 1:
            raise ParameterError("n_spins must be >= 1")
        if self.collective_j is not None:
            two_j = 2 * self.collective_j
            if two_j < 1 or abs(two_j - round(two_j)) > 1e-12:
                raise ParameterError("collective_j must be a positive half-integer")
        if self.dim > self.max_dim:
            raise ParameterError(f"Hilbert dimension {self.dim} exceeds the cap of {self.max_dim}")

    @property
    def collective(self):
        return self.collective_j is not None

    @property
    def spin_dim(self):
        if self.collective:
            return int(round(2 * self.collective_j)) + 1
        return 2 ** self.n_spins

    @property
    def n_effective(self):
        """Number of spin-1/2 constituents (``2j`` for a collective spin)."""
        return int(round(2 * self.collective_j)) if self.collective else self.n_spins

    @property
    def dim(self):
        return self.fock_dim * self.spin_dim


@dataclass
class OperatorSet:
    spec: HilbertSpec
    a: sps.csr_matrix
    adag: sps.csr_matrix
    num: sps.csr_matrix
    sm: list = field(default_factory=list)
    sp: list = field(default_factory=list)
    sz: list = field(default_factory=list)
    jm: sps.csr_matrix | None = None
    jp: sps.csr_matrix | None = None
    jz: sps.csr_matrix | None = None
    jx_conv: sps.csr_matrix | None = None
    jy_conv: sps.csr_matrix | None = None
    jz_conv: sps.csr_matrix | None = None
    normalization: str = "pauli"

    @property
    def identity(self):
        return sps.identity(self.spec.dim, dtype=complex, format="csr")

    def j_squared(self):
        """Conventional total angular momentum squared."""
        return (self.jx_conv @ self.jx_conv + self.jy_conv @ self.jy_conv
                + self.jz_conv @ self.jz_conv).tocsr()


_SM = sps.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))
_SZ = sps.csr_matrix(np.diag([-1.0, 1.0]).astype(complex))


def _kron_all(mats):
    out = mats[0]
    for m in mats[1:]:
        out = sps.kron(out, m, format="csr")
    return out.tocsr()


def _spin_j(j):
    """Conventional ``(J-, Jz)`` for spin ``j`` in the ascending ``m`` basis."""
    d = int(round(2 * j)) + 1
    m = -j + np.arange(d)
    jz = sps.diags(m.astype(complex), format="csr")
    # J- |m> = sqrt(j(j+1) - m(m-1)) |m-1>
    lower = np.sqrt(j * (j + 1) - m[1:] * (m[1:] - 1))
    jm = sps.diags(lower.astype(complex), offsets=1, format="csr")
    return jm, jz


def build_operators(spec: HilbertSpec, normalization="pauli") -> OperatorSet:
    """Embed cavity and spin operators in the product space.

    ``normalization="scaled"`` scales the collective operators by
    ``1/sqrt(N)`` (the collective angular momentum normalization of the Dicke
    Hamiltonian); ``"pauli"`` leaves plain Pauli sums.
    """
    if normalization not in ("pauli", "scaled"):
        raise ParameterError(f"unknown normalization {normalization!r}")
    nf = spec.fock_dim
    a_f = sps.diags(np.sqrt(np.arange(1, nf)).astype(complex), offsets=1, format="csr")
    id_f = sps.identity(nf, dtype=complex, format="csr")
    id_s = sps.identity(spec.spin_dim, dtype=complex, format="csr")
    a = sps.kron(a_f, id_s, format="csr")
    adag = a.conj().T.tocsr()
    ops = OperatorSet(spec, a, adag, (adag @ a).tocsr(), normalization=normalization)
    scale = 1.0 / math.sqrt(spec.n_effective) if normalization == "scaled" else 1.0

    if spec.collective:
        jm_c, jz_c = _spin_j(spec.collective_j)
        jm_c = sps.kron(id_f, jm_c, format="csr")
        jz_c = sps.kron(id_f, jz_c, format="csr")
    else:
        n = spec.n_spins
        id2 = sps.identity(2, dtype=complex, format="csr")
        for i in range(n):
            fac = [id2] * n
            fac[i] = _SM
            sm = sps.kron(id_f, _kron_all(fac), format="csr")
            fac[i] = _SZ
            sz = sps.kron(id_f, _kron_all(fac), format="csr")
            ops.sm.append(sm)
            ops.sp.append(sm.conj().T.tocsr())
            ops.sz.append(sz)
        jm_c = sum(ops.sm[1:], ops.sm[0]).tocsr()
        jz_c = (0.5 * sum(ops.sz[1:], ops.sz[0])).tocsr()

    jp_c = jm_c.conj().T.tocsr()
    ops.jx_conv = (0.5 * (jp_c + jm_c)).tocsr()
    ops.jy_conv = (-0.5j * (jp_c - jm_c)).tocsr()
    ops.jz_conv = jz_c
    ops.jm = (scale * jm_c).tocsr()
    ops.jp = (scale * jp_c).tocsr()
    ops.jz = (2 * scale * jz_c).tocsr()
    return ops


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------

def _drive_term(ops, drive):
    if drive == 0:
        return sps.csr_matrix(ops.a.shape, dtype=complex)
    return (1j * (drive * ops.adag - np.conj(drive) * ops.a)).tocsr()


def _assert_hermitian(h, what):
    diff = h - h.conj().T
    if diff.nnz and abs(diff).max() > 1e-12 * max(1.0, abs(h).max()):
        raise AssertionError(f"{what} Hamiltonian is not Hermitian")


def tc_hamiltonian(ops: OperatorSet, params: SystemParams, per_spin_detunings=None,
                   per_spin_g0=None, drive=None):
    """Tavis-Cummings Hamiltonian with a coherent cavity drive.

    ``H = dc a'a + sum_i (ds_i/2) sz_i + i sum_i (g0_i/2)(sm_i a' - sp_i a) + i(E a' - E* a)``.
    ``drive`` is the complex ``E`` (defaults to ``drive_amp * exp(i drive_phase)``).
    """
    spec = ops.spec
    if spec.collective:
        raise ParameterError("the Tavis-Cummings Hamiltonian needs individual spins")
    n = spec.n_spins
    ds = [params.delta_s] * n if per_spin_detunings is None else list(per_spin_detunings)
    g0 = [params.g0] * n if per_spin_g0 is None else list(per_spin_g0)
    if len(ds) != n or len(g0) != n:
        raise ParameterError(f"per-spin lists must have length {n}")
    if drive is None:
        drive = params.drive_amp * np.exp(1j * params.drive_phase)
    h = params.delta_c * ops.num
    for i in range(n):
        h = h + 0.5 * ds[i] * ops.sz[i]
        h = h + 0.5j * g0[i] * (ops.sm[i] @ ops.adag - ops.sp[i] @ ops.a)
    h = (h + _drive_term(ops, drive)).tocsr()
    _assert_hermitian(h, "Tavis-Cummings")
    return h


def dicke_hamiltonian(ops: OperatorSet, params: SystemParams, drive=None):
    """Collective Hamiltonian ``dc a'a + (ds/2) Jz + i g (J- a' - J+ a) + i(E a' - E* a)``."""
    if drive is None:
        drive = params.drive_amp * np.exp(1j * params.drive_phase)
    g = params.g_eff
    h = (params.delta_c * ops.num + 0.5 * params.delta_s * ops.jz
         + 1j * g * (ops.jm @ ops.adag - ops.jp @ ops.a) + _drive_term(ops, drive)).tocsr()
    _assert_hermitian(h, "Dicke")
    return h


# ---------------------------------------------------------------------------
# dissipators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LindbladRates:
    """Rates entering the dissipators exactly as written.

    ``kappa (2 a r a' - a'a r - r a'a)``,
    ``gamma1 (sm r sp - {sp sm, r}/2)`` and ``gamma_phi (sz r sz - r)``
    per spin (or with collective operators).
    """

    kappa: float = 0.0
    gamma1: float = 0.0
    gamma_phi: float = 0.0

    @classmethod
    def from_params(cls, params: SystemParams):
        """Rates reproducing the mean-field decay laws.

        Each spin coherence decays at ``gamma1/2 + 2 gamma_phi`` under these
        dissipators, so ``gamma_phi = (gamma_2 - gamma_1/2) / 2`` makes it
        decay at ``gamma_2`` as in the mean-field equations.

        Raises
        ------
        ParameterError
            If ``gamma_2 < gamma_1 / 2``, which no dephasing rate can match.
        """
        g1, g2 = params.gamma_1, params.gamma_2
        phi = 0.5 * (g2 - 0.5 * g1)
        if phi < -1e-12 * max(g1, g2):
            raise ParameterError(
                f"gamma_2={g2:g} is below gamma_1/2={0.5 * g1:g}; the transverse decay cannot be "
                "represented with these dissipators")
        return cls(params.kappa, g1, max(phi, 0.0))


def _jump_operators(ops: OperatorSet, rates: LindbladRates):
    jumps = []
    if rates.kappa:
        jumps.append((2 * rates.kappa, ops.a))
    if ops.spec.collective:
        spin_ops = [(ops.jm, ops.jz)]
    else:
        spin_ops = list(zip(ops.sm, ops.sz))
    for sm, sz in spin_ops:
        if rates.gamma1:
            jumps.append((rates.gamma1, sm))
        if rates.gamma_phi:
            jumps.append((rates.gamma_phi, sz))
    return jumps


class Liouvillian:
    """Matrix-free ``rho -> -i[H, rho] + sum_k c_k (L rho L' - {L'L, rho}/2)``."""

    def __init__(self, h, jumps):
        self.h = h.tocsr()
        heff = self.h.astype(complex)
        self.jumps = []
        for c, L in jumps:
            L = L.tocsr()
            Ld = L.conj().T.tocsr()
            heff = heff - 0.5j * c * (Ld @ L)
            self.jumps.append((c, L, Ld))
        self.heff = heff.tocsr()
        self.heff_dag = self.heff.conj().T.tocsr()

    def __call__(self, rho):
        out = -1j * (self.heff @ rho - (self.heff_dag.T @ rho.T).T)
        for c, L, Ld in self.jumps:
            out += c * (L @ (Ld.T @ rho.T).T)
        return out


def lindblad_rhs(rho, h, ops: OperatorSet, rates: LindbladRates):
    """Time derivative of a density matrix under the master equation."""
    rho = np.asarray(rho.data if isinstance(rho, DensityMatrix) else rho, dtype=complex)
    if rho.shape != h.shape:
        raise ValueError(f"density matrix shape {rho.shape} does not match H {h.shape}")
    if not np.all(np.isfinite(rho)):
        raise ValueError("density matrix has non-finite entries")
    return Liouvillian(h, _jump_operators(ops, rates))(rho)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

@dataclass
class DensityMatrix:
    data: np.ndarray
    spec: HilbertSpec

    @classmethod
    def from_state(cls, psi, spec):
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), spec)

    @classmethod
    def ground(cls, spec):
        psi = np.zeros(spec.dim, dtype=complex)
        psi[0] = 1.0
        return cls.from_state(psi, spec)

    @classmethod
    def product(cls, spec, fock_n=0, spin_state=None):
        """``|fock_n>`` times a spin basis state.

        ``spin_state`` is a sequence of 0/1 (ground/excited) per spin, or the
        index in the collective ``m`` basis.
        """
        cav = np.zeros(spec.fock_dim)
        cav[fock_n] = 1.0
        spin = np.zeros(spec.spin_dim)
        if spin_state is None:
            spin[0] = 1.0
        elif spec.collective:
            spin[int(spin_state)] = 1.0
        else:
            idx = 0
            for bit in spin_state:
                idx = 2 * idx + int(bit)
            spin[idx] = 1.0
        return cls.from_state(np.kron(cav, spin), spec)

    def trace(self):
        return float(np.real(np.trace(self.data)))

    def hermiticity_error(self):
        return float(np.max(np.abs(self.data - self.data.conj().T)))

    def min_eigenvalue(self):
        return float(np.min(np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T))))

    def expect(self, op):
        return complex(np.sum(op.multiply(self.data.T)) if sps.issparse(op) else np.trace(op @ self.data))

    def check(self, trace_tol=1e-8, herm_tol=1e-10, pos_tol=1e-8):
        problems = []
        if abs(self.trace() - 1) > trace_tol:
            problems.append(f"trace {self.trace():.12g}")
        if self.hermiticity_error() > herm_tol:
            problems.append(f"hermiticity error {self.hermiticity_error():.3g}")
        if self.min_eigenvalue() < -pos_tol:
            problems.append(f"min eigenvalue {self.min_eigenvalue():.3g}")
        return problems


def _expect_many(rhos, op):
    # rhos: (n, d, d); tr(op rho) = sum_ij op_ij rho_ji
    op = op.toarray() if sps.issparse(op) else op
    return np.einsum("ij,nji->n", op, rhos)


def evolve(rho0, spec: HilbertSpec, params: SystemParams, protocol: DriveProtocol, sample_times,
           hamiltonian="tc", rates=None, per_spin_detunings=None, per_spin_g0=None,
           normalization="scaled", rtol=1e-10, atol=1e-12, check_invariants=True,
           return_states=False):
    """Integrate the master equation through a drive protocol.

    Segment amplitudes are the cavity drive ``|E|`` (rad/s) and phases its
    argument. The spin columns ``jx, jy, jz`` are per-spin averages of the
    Pauli sums, matching the mean-field normalization where the ground state
    has ``jz = -1``.

    Raises
    ------
    TruncationError
        If ``(|E| / kappa)**2 > fock_dim / 4`` for some segment.
    """
    if hamiltonian not in ("tc", "dicke"):
        raise ParameterError(f"unknown Hamiltonian {hamiltonian!r}")
    if hamiltonian == "tc" and spec.collective:
        raise ParameterError("the Tavis-Cummings model needs n_spins, not collective_j")
    ops = build_operators(spec, normalization=normalization if hamiltonian == "dicke" else "pauli")
    rates = LindbladRates.from_params(params) if rates is None else rates
    for seg in protocol.segments:
        if seg.amplitude == 0:
            continue
        if not rates.kappa > 0 or (seg.amplitude / rates.kappa) ** 2 > spec.fock_dim / 4:
            raise TruncationError(
                f"drive |E|={seg.amplitude:g} with kappa={rates.kappa:g} needs more than "
                f"fock_dim={spec.fock_dim} levels")

    if rho0 is None:
        rho = DensityMatrix.ground(spec).data
    else:
        rho = np.asarray(rho0.data if isinstance(rho0, DensityMatrix) else rho0, dtype=complex)
    d = spec.dim
    if rho.shape != (d, d):
        raise ValueError(f"initial state has shape {rho.shape}, expected {(d, d)}")

    times = np.asarray(sample_times, dtype=float)
    rate_scale = max([abs(params.delta_c), abs(params.delta_s), params.g_eff, params.g0,
                      rates.kappa, rates.gamma1, rates.gamma_phi, protocol.max_amplitude, 0.0])
    u = rate_scale if rate_scale > 0 else 1.0
    jumps = _jump_operators(ops, rates)
    states = np.empty((times.size, d, d), dtype=complex)
    bounds = protocol.boundaries
    y = np.concatenate([rho.real.ravel(), rho.imag.ravel()])
    n2 = d * d

    for i, seg in enumerate(protocol.segments):
        drive = seg.amplitude * np.exp(1j * seg.phase)
        if hamiltonian == "tc":
            h = tc_hamiltonian(ops, params, per_spin_detunings, per_spin_g0, drive=drive)
        else:
            h = dicke_hamiltonian(ops, params, drive=drive)
        L = Liouvillian(h / u, [(c / u, op) for c, op in jumps])

        def f(s, yv, L=L):
            r = (yv[:n2] + 1j * yv[n2:]).reshape(d, d)
            dr = L(r).ravel()
            return np.concatenate([dr.real, dr.imag])

        t0, t1 = bounds[i], bounds[i + 1]
        last = i == len(protocol.segments) - 1
        mask = (times >= t0) & ((times <= t1) if last else (times < t1))
        sol = ode.integrate(ode.OdeProblem(f, y, (t0 * u, t1 * u), rtol=rtol, atol=atol))
        if mask.any():
            ys = ode.sample(sol, np.clip(times[mask] * u, sol.t[0], sol.t[-1]))
            states[mask] = (ys[:, :n2] + 1j * ys[:, n2:]).reshape(-1, d, d)
        y = sol.y_final.copy()

    n = spec.n_effective
    if hamiltonian == "dicke":
        # undo the collective scaling so columns are per-spin averages
        s = math.sqrt(n) if normalization == "scaled" else 1.0
        jx_op, jy_op, jz_op = (ops.jp + ops.jm) * s, -1j * (ops.jp - ops.jm) * s, ops.jz * s
        exc_op = ops.num + 0.5 * (ops.jz * s + n * ops.identity)
    else:
        jx_op = sum(p + m for p, m in zip(ops.sp, ops.sm))
        jy_op = sum(-1j * (p - m) for p, m in zip(ops.sp, ops.sm))
        jz_op = sum(ops.sz)
        exc_op = ops.num + sum(p @ m for p, m in zip(ops.sp, ops.sm))

    a = _expect_many(states, ops.a)
    cols = {
        "a_re": a.real,
        "a_im": a.imag,
        "n_photon": _expect_many(states, ops.num).real,
        "jx": _expect_many(states, jx_op).real / n,
        "jy": _expect_many(states, jy_op).real / n,
        "jz": _expect_many(states, jz_op).real / n,
        "excitations": _expect_many(states, exc_op).real,
        "trace": np.real(np.einsum("nii->n", states)),
    }
    # population of the top Fock level
    top = np.zeros(spec.dim)
    top[(spec.fock_dim - 1) * spec.spin_dim:] = 1.0
    cols["top_fock_pop"] = np.real(np.einsum("i,nii->n", top, states))
    notes = []
    if check_invariants and times.size:
        herm = np.max(np.abs(states - np.conj(np.transpose(states, (0, 2, 1)))))
        mins = np.array([np.linalg.eigvalsh(0.5 * (r + r.conj().T))[0] for r in states])
        cols["min_eig"] = mins
        bad = []
        if np.max(np.abs(cols["trace"] - 1)) > 1e-8:
            bad.append("trace")
        if herm > 1e-10:
            bad.append("hermiticity")
        if mins.min() < -1e-8:
            bad.append("positivity")
        if bad:
            raise ode.IntegrationError("density-matrix invariants violated: " + ", ".join(bad))
    if times.size and cols["top_fock_pop"].max() >= 1e-6:
        notes.append(f"top Fock level population reached {cols['top_fock_pop'].max():.3g}; "
                     "increase fock_dim")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    md = {"model": f"lindblad-{hamiltonian}", "protocol_digest": protocol.digest(), "warnings": notes}
    tr = Trace(times, cols, md)
    return (tr, states) if return_states else tr
