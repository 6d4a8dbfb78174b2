"""Solve an exported standard-form problem with an external conic solver.

Usage: external_conic.py problem.json [clarabel|scs]

Each Hermitian PSD block H = A + iB enters the solver as the real symmetric
embedding [[A, -B], [B, A]] in scaled triangle form: upper column-major for
Clarabel, lower column-major for SCS. Clarabel (interior point) is exact but
memory-hungry past embedded blocks of about 100; SCS handles larger ones.
Prints the optimal objective c'x on stdout as JSON.
"""
import json
import sys

import numpy as np
import scipy.sparse as sp


def embedding(d, offset, lower):
    """Triplets (row, col, val) mapping packed x to svec of the 2d embedding."""
    n = 2 * d
    if lower:
        svec = lambda i, j: j * n - j * (j - 1) // 2 + (i - j)  # i >= j
    else:
        svec = lambda i, j: j * (j + 1) // 2 + i  # i <= j
    rows, cols, vals = [], [], []

    def put(i, j, var, val):
        if (i > j) != lower and i != j:
            i, j = j, i
        rows.append(svec(i, j))
        cols.append(var)
        vals.append(val)

    k = offset
    for i in range(d):
        # Diagonal of both A blocks.
        put(i, i, k, 1.0)
        put(i + d, i + d, k, 1.0)
        k += 1
        for j in range(i + 1, d):
            re, im = k, k + 1
            # x holds sqrt2*Re and sqrt2*Im, svec scales off-diagonals by sqrt2.
            put(i, j, re, 1.0)
            put(i + d, j + d, re, 1.0)
            # Upper-right block -B with B_ij = Im h_ij, B_ji = -Im h_ij.
            put(i, j + d, im, -1.0)
            put(j, i + d, im, 1.0)
            k += 2
    assert k - offset == d * d
    return rows, cols, vals, (2 * d) * (2 * d + 1) // 2


def main():
    prob = json.load(open(sys.argv[1]))
    backend = sys.argv[2] if len(sys.argv) > 2 else "clarabel"
    lower = backend == "scs"
    n, m = prob["num_vars"], prob["num_rows"]
    a = prob["A"]
    a_eq = sp.csc_matrix((a["vals"], (a["rows"], a["cols"])), shape=(m, n))
    blocks, psd = [a_eq], []
    for k in prob["cones"]:
        if k["type"] != "hermitian_psd":
            continue
        d = k["dim"]
        r, c, v, size = embedding(d, k["offset"], lower)
        # Slack s = h - Gx with h = 0 and G = -S.
        blocks.append(sp.csc_matrix((-np.array(v), (r, c)), shape=(size, n)))
        psd.append(2 * d)
    g = sp.vstack(blocks).tocsc()
    h = np.concatenate([np.array(prob["b"], dtype=float), np.zeros(g.shape[0] - m)])
    c = np.array(prob["c"], dtype=float)

    if backend == "scs":
        import scs

        solver = scs.SCS(
            {"A": g, "b": h, "c": c},
            {"z": m, "s": psd},
            eps_abs=1e-9,
            eps_rel=1e-9,
            max_iters=500_000,
            verbose=False,
        )
        sol = solver.solve()
        info = sol["info"]
        status = "optimal" if info["status"] == "solved" else info["status"]
        objective = info["pobj"]
    else:
        import clarabel

        cones = [clarabel.ZeroConeT(m)] + [clarabel.PSDTriangleConeT(k) for k in psd]
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        sol = clarabel.DefaultSolver(sp.csc_matrix((n, n)), c, g, h, cones, settings).solve()
        status = "optimal" if str(sol.status) == "Solved" else str(sol.status)
        objective = sol.obj_val
    print(json.dumps({"status": status, "objective": objective}))


if __name__ == "__main__":
    main()
