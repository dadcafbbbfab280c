"""Hot numeric kernels.

The inner loops of the package live here: the branched-embedder forward and
backward passes over a flat parameter buffer, and the cyclic Jacobi
eigensolver. Each kernel is written in numba-compatible numpy and compiled
with ``@njit`` when numba is available. Setting the environment variable
``DEEPMETRIC_DISABLE_NUMBA=1`` (before import) selects the pure-numpy
fallback: the identical functions run un-jitted. ``benchmarks/bench_kernels.py``
compares the two paths.
"""

import os

import numpy as np

_ENV_FLAG = "DEEPMETRIC_DISABLE_NUMBA"


def _numba_requested() -> bool:
    if os.environ.get(_ENV_FLAG, "").strip().lower() in {"1", "true", "yes"}:
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _numba_requested()

if NUMBA_ENABLED:
    from numba import njit
else:
    def njit(*args, **kwargs):
        # identity decorator: the numpy fallback runs the same source un-jitted
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


def engine_name() -> str:
    """Name of the active kernel engine, recorded in run manifests."""
    return "numba" if NUMBA_ENABLED else "numpy"


@njit(cache=True)
def embedder_forward(flat, x, seg_starts, seg_len, dims, bw_off, bb_off,
                     jw_off, jb_off, ow_off, ob_off,
                     concat_dim, joint_dim, out_dim, tape):
    """Run the branched network, filling `tape` with everything backward needs.

    Tape layout (one contiguous float64 buffer):
      per branch b: segment (seg_len), then pre-activations z_0..z_{m-1}
      concat vector (concat_dim), joint pre-activation (joint_dim),
      final pre-normalization output y (out_dim).
    """
    num_branches = seg_starts.shape[0]
    num_layers = dims.shape[0] - 1
    per_branch = seg_len
    for l in range(num_layers):
        per_branch += dims[l + 1]
    c_off = num_branches * per_branch
    zj_off = c_off + concat_dim
    y_off = zj_off + joint_dim

    branch_out = dims[num_layers]
    for b in range(num_branches):
        base = b * per_branch
        s = seg_starts[b]
        tape[base:base + seg_len] = x[s:s + seg_len]
        act = x[s:s + seg_len].copy()
        cur = base + seg_len
        for l in range(num_layers):
            d_in = dims[l]
            d_out = dims[l + 1]
            w = flat[bw_off[b, l]:bw_off[b, l] + d_out * d_in].reshape(d_out, d_in)
            bias = flat[bb_off[b, l]:bb_off[b, l] + d_out]
            z = np.dot(w, act) + bias
            tape[cur:cur + d_out] = z
            cur += d_out
            act = np.maximum(z, 0.0)
        tape[c_off + b * branch_out:c_off + (b + 1) * branch_out] = act

    c = tape[c_off:c_off + concat_dim]
    wj = flat[jw_off:jw_off + joint_dim * concat_dim].reshape(joint_dim, concat_dim)
    bj = flat[jb_off:jb_off + joint_dim]
    zj = np.dot(wj, c) + bj
    tape[zj_off:zj_off + joint_dim] = zj

    aj = np.maximum(zj, 0.0)
    wo = flat[ow_off:ow_off + out_dim * joint_dim].reshape(out_dim, joint_dim)
    bo = flat[ob_off:ob_off + out_dim]
    tape[y_off:y_off + out_dim] = np.dot(wo, aj) + bo


@njit(cache=True)
def embedder_backward(flat, tape, g_emb, seg_starts, seg_len, dims,
                      bw_off, bb_off, jw_off, jb_off, ow_off, ob_off,
                      concat_dim, joint_dim, out_dim, g_flat, g_x):
    """Exact reverse-mode pass matching `embedder_forward`'s tape layout.

    Accumulates parameter gradients into `g_flat` and input gradients into
    `g_x` (both pre-zeroed by the caller). Tied branches share offsets, so
    their gradients accumulate into the shared block automatically.
    """
    num_branches = seg_starts.shape[0]
    num_layers = dims.shape[0] - 1
    per_branch = seg_len
    for l in range(num_layers):
        per_branch += dims[l + 1]
    c_off = num_branches * per_branch
    zj_off = c_off + concat_dim
    y_off = zj_off + joint_dim

    # normalization jacobian: d(y/|y|) = (I - nn^T)/|y|
    y = tape[y_off:y_off + out_dim]
    nrm = np.sqrt(np.dot(y, y))
    n = y / nrm
    g_y = (g_emb - n * np.dot(n, g_emb)) / nrm

    zj = tape[zj_off:zj_off + joint_dim]
    aj = np.maximum(zj, 0.0)
    g_wo = g_flat[ow_off:ow_off + out_dim * joint_dim].reshape(out_dim, joint_dim)
    g_wo += np.outer(g_y, aj)
    g_flat[ob_off:ob_off + out_dim] += g_y
    wo = flat[ow_off:ow_off + out_dim * joint_dim].reshape(out_dim, joint_dim)
    g_aj = np.dot(g_y, wo)

    g_zj = np.where(zj > 0.0, g_aj, 0.0)
    c = tape[c_off:c_off + concat_dim]
    g_wj = g_flat[jw_off:jw_off + joint_dim * concat_dim].reshape(joint_dim, concat_dim)
    g_wj += np.outer(g_zj, c)
    g_flat[jb_off:jb_off + joint_dim] += g_zj
    wj = flat[jw_off:jw_off + joint_dim * concat_dim].reshape(joint_dim, concat_dim)
    g_c = np.dot(g_zj, wj)

    # z offsets within a branch region, relative to base + seg_len
    zcum = np.zeros(num_layers + 1, dtype=np.int64)
    for l in range(num_layers):
        zcum[l + 1] = zcum[l] + dims[l + 1]

    branch_out = dims[num_layers]
    for b in range(num_branches):
        base = b * per_branch
        g_act = g_c[b * branch_out:(b + 1) * branch_out].copy()
        for l in range(num_layers - 1, -1, -1):
            d_in = dims[l]
            d_out = dims[l + 1]
            z_off = base + seg_len + zcum[l]
            z = tape[z_off:z_off + d_out]
            g_z = np.where(z > 0.0, g_act, 0.0)
            if l > 0:
                a_in = np.maximum(tape[z_off - d_in:z_off], 0.0)
            else:
                a_in = tape[base:base + seg_len]
            g_w = g_flat[bw_off[b, l]:bw_off[b, l] + d_out * d_in].reshape(d_out, d_in)
            g_w += np.outer(g_z, a_in)
            g_flat[bb_off[b, l]:bb_off[b, l] + d_out] += g_z
            w = flat[bw_off[b, l]:bw_off[b, l] + d_out * d_in].reshape(d_out, d_in)
            g_act = np.dot(g_z, w)
        s = seg_starts[b]
        g_x[s:s + seg_len] += g_act


@njit(cache=True)
def jacobi_sweeps(a, v, tol, max_sweeps):
    """Cyclic Jacobi diagonalization of symmetric `a`, in place.

    Accumulates rotations into `v` (pass the identity). Converged when the
    off-diagonal Frobenius norm drops to tol times the Frobenius norm of the
    input. Returns (off_norm, sweeps_used, converged).
    """
    n = a.shape[0]
    fro = np.sqrt(np.sum(a * a))
    if fro == 0.0:
        return 0.0, 0, True
    for sweep in range(max_sweeps):
        off2 = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off2 += 2.0 * a[p, q] * a[p, q]
        off = np.sqrt(off2)
        if off <= tol * fro:
            return off, sweep, True
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    off2 = 0.0
    for p in range(n - 1):
        for q in range(p + 1, n):
            off2 += 2.0 * a[p, q] * a[p, q]
    off = np.sqrt(off2)
    return off, max_sweeps, off <= tol * fro
