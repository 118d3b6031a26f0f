"""Pure numpy kernels.

Mirrors the compiled ``_kernels`` module function for function. The
integer part of the generator is bit-exact between the two; the float
transforms (log, cos, exp) may differ in the last ulp depending on libm.
"""
import numpy as np

COS, SINCOS, EXP, EXPEXP = 0, 1, 2, 3

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 2.0 ** -53

# lanes within one (row, coordinate) counter slot
LANE_OMEGA = 0  # uses lanes 0 and 1
LANE_BIAS = 2
LANE_CHI = 3  # uses lanes 3 and 4
_LANES_PER_COORD = 8


def _mix64(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def _row_keys(seed, alpha0, nrows):
    alphas = np.arange(alpha0, alpha0 + nrows, dtype=np.uint64)
    return _mix64(np.uint64(seed) ^ _mix64(alphas * _GOLDEN))


def _uniforms(keys, coords, lane):
    counters = coords.astype(np.uint64) * np.uint64(_LANES_PER_COORD) + np.uint64(lane + 1)
    w = _mix64(keys[:, None] + counters[None, :] * _GOLDEN)
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def normals(seed, alpha0, nrows, D, lane=LANE_OMEGA):
    """Standard normals for rows ``alpha0 .. alpha0+nrows-1`` (1-based), shape (nrows, D).

    Coordinates ``2k`` and ``2k+1`` are the cosine and sine branches of one
    Box-Muller draw keyed on counter slot ``k``.
    """
    keys = _row_keys(seed, alpha0, nrows)
    slots = np.arange((D + 1) // 2, dtype=np.uint64)
    radius = np.sqrt(-2.0 * np.log(_uniforms(keys, slots, lane)))
    theta = _TWO_PI * _uniforms(keys, slots, lane + 1)
    out = np.empty((nrows, 2 * slots.shape[0]))
    out[:, 0::2] = radius * np.cos(theta)
    out[:, 1::2] = radius * np.sin(theta)
    return out[:, :D] if D % 2 else out


def biases(seed, alpha0, nrows):
    keys = _row_keys(seed, alpha0, nrows)
    return _TWO_PI * _uniforms(keys, np.zeros(1, dtype=np.uint64), LANE_BIAS)[:, 0]


def n_out(kind, Y):
    return 2 * Y if kind in (SINCOS, EXPEXP) else Y


# ---------------------------------------------------------------------------
# block math: shared by the chunked, orthogonal and materialized paths


def block_features(kind, P, bias, sq, Y):
    """Features for a block of projections ``P = U @ omega.T`` (n, B)."""
    n, B = P.shape
    if kind == COS:
        return np.sqrt(2.0 / Y) * np.cos(P + bias)
    if kind == SINCOS:
        out = np.empty((n, 2 * B))
        out[:, 0::2] = np.cos(P)
        out[:, 1::2] = np.sin(P)
        out /= np.sqrt(Y)
        return out
    if kind == EXP:
        return np.exp(P + bias - sq[:, None]) / np.sqrt(Y)
    if kind == EXPEXP:
        out = np.empty((n, 2 * B))
        out[:, 0::2] = np.exp(P - sq[:, None])
        out[:, 1::2] = np.exp(-P - sq[:, None])
        out /= np.sqrt(2.0 * Y)
        return out
    raise ValueError(f"unknown kind {kind}")


def block_grad(kind, P, bias, sq, Tb, Y):
    """Inner product and projection coefficients for one block.

    Returns ``(s, C)`` with ``s[i] = <phi_block(u_i), Tb>`` and ``C`` such that
    ``C @ omega`` is this block's share of ``d<phi(u), T>/du`` (before the
    ``-2 u s`` prefactor term of the exponential kinds).
    """
    if kind == COS:
        arg = P + bias
        a = np.sqrt(2.0 / Y)
        return a * (np.cos(arg) @ Tb), -a * np.sin(arg) * Tb
    if kind == SINCOS:
        c, sn = np.cos(P), np.sin(P)
        Tc, Ts = Tb[0::2], Tb[1::2]
        r = 1.0 / np.sqrt(Y)
        return r * (c @ Tc + sn @ Ts), r * (c * Ts - sn * Tc)
    if kind == EXP:
        FT = np.exp(P + bias - sq[:, None]) * (Tb / np.sqrt(Y))
        return FT.sum(axis=1), FT
    if kind == EXPEXP:
        r = 1.0 / np.sqrt(2.0 * Y)
        Fp = np.exp(P - sq[:, None]) * (Tb[0::2] * r)
        Fm = np.exp(-P - sq[:, None]) * (Tb[1::2] * r)
        return Fp.sum(axis=1) + Fm.sum(axis=1), Fp - Fm
    raise ValueError(f"unknown kind {kind}")


def finish_grad(kind, U, s, z):
    if kind in (EXP, EXPEXP):
        z -= 2.0 * U * s[:, None]
    return z


# ---------------------------------------------------------------------------
# streaming entry points (i.i.d. projections, regenerated on demand)


def chunk_rows(kind, Y, D):
    """Rows per generated chunk, keeping chunk storage well under ``Y_eff`` words."""
    return max(1, min(Y, n_out(kind, Y) // (4 * D)))


def _chunks(Y, B):
    for start in range(0, Y, B):
        yield start, min(B, Y - start)


def stream_features(kind, seed, Y, u):
    D = u.shape[0]
    m = 2 if kind in (SINCOS, EXPEXP) else 1
    out = np.empty(n_out(kind, Y))
    U = u[None, :]
    sq = np.array([u @ u])
    for start, b in _chunks(Y, chunk_rows(kind, Y, D)):
        omega = normals(seed, start + 1, b, D)
        bias = biases(seed, start + 1, b) if kind in (COS, EXP) else 0.0
        out[m * start:m * (start + b)] = block_features(kind, U @ omega.T, bias, sq, Y)[0]
    return out


def stream_energy_grad(kind, seed, Y, u, T):
    """Return ``(<phi(u), T>, d<phi(u), T>/du)`` without materializing the projection."""
    D = u.shape[0]
    m = 2 if kind in (SINCOS, EXPEXP) else 1
    U = u[None, :]
    sq = np.array([u @ u])
    s = np.zeros(1)
    z = np.zeros((1, D))
    for start, b in _chunks(Y, chunk_rows(kind, Y, D)):
        omega = normals(seed, start + 1, b, D)
        bias = biases(seed, start + 1, b) if kind in (COS, EXP) else 0.0
        sb, C = block_grad(kind, U @ omega.T, bias, sq, T[m * start:m * (start + b)], Y)
        s += sb
        z += C @ omega
    return float(s[0]), finish_grad(kind, U, s, z)[0]


def stream_consolidate(kind, seed, Y, U, T, R=None, X=None):
    """Accumulate ``sum_mu phi(U[mu])`` into ``T`` (and ``phi X^T`` into ``R``) in place."""
    K, D = U.shape
    m = 2 if kind in (SINCOS, EXPEXP) else 1
    sq = np.einsum("ij,ij->i", U, U)
    for start, b in _chunks(Y, chunk_rows(kind, Y, D)):
        omega = normals(seed, start + 1, b, D)
        bias = biases(seed, start + 1, b) if kind in (COS, EXP) else 0.0
        F = block_features(kind, U @ omega.T, bias, sq, Y)
        sl = slice(m * start, m * (start + b))
        T[sl] += np.ascontiguousarray(F.T).sum(axis=1)  # pairwise over memories
        if R is not None:
            R[sl] += F.T @ X
