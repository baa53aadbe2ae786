"""Size-only replay of a free sampler.

The walk consumes uniforms from an array in exactly the order the
structure builder does, but only counts atoms. Rejection loops run it
first and build a structure (from the same uniforms) only for accepted
draws. Any situation the walk does not handle is reported through the
status code and the caller falls back to the builder.
"""

import math

import numpy as np

from .._jit import njit
from .dist import geometric_invert, hermite_invert, loga_invert, poisson_invert
from .gf import exp_inf, hermite_eval, hermite_eval_one, newton

K_EMPTY, K_ATOM, K_REF, K_UNION, K_PRODUCT, K_SEQ, K_SET, K_CYCLE, K_MSET = range(9)

W_OK = 0
W_ABORTED = 1
W_NEED_UNIFORMS = 2
W_NEED_POINT = 3
W_STACK_FULL = 4
W_TOO_MANY_NODES = 5
W_FALLBACK = 6
W_POINTS_FULL = 7

POISSON_CAP = 1e6
LOGA_MAX_TERMS = 10**8
MAX_INDEX_TERMS = 1 << 20


@njit
def node_values(kind, arg_a, arg_b, atom_w, ref_col, slot, z, y, tails, out):
    """Value of every expression node at parameter z (children come first)."""
    for i in range(kind.shape[0]):
        k = kind[i]
        if k == K_EMPTY:
            out[i] = 1.0
        elif k == K_ATOM:
            out[i] = atom_w[i] * z
        elif k == K_REF:
            out[i] = y[ref_col[i]]
        elif k == K_UNION:
            out[i] = out[arg_a[i]] + out[arg_b[i]]
        elif k == K_PRODUCT:
            out[i] = out[arg_a[i]] * out[arg_b[i]]
        elif k == K_SEQ:
            v = out[arg_a[i]]
            out[i] = 1.0 / (1.0 - v) if v < 1.0 else math.inf
        elif k == K_SET:
            out[i] = exp_inf(out[arg_a[i]])
        elif k == K_CYCLE:
            v = out[arg_a[i]]
            out[i] = -math.log1p(-v) if v < 1.0 else math.inf
        else:
            out[i] = exp_inf(out[arg_a[i]] + tails[slot[i]])


@njit
def size_walk(kind, arg_a, arg_b, ref_body, start, vals, have, U, pos0, ceiling, max_nodes,
              stk_e, stk_k, stk_m, tmp, out):
    """One draw reading U from pos0.

    Returns a status; out = [end position, atoms, nodes, lookups, detail].
    """
    n_u = U.shape[0]
    n_pts = vals.shape[0]
    cap = stk_e.shape[0]
    pos = pos0
    atoms = 0
    nodes = 0
    lookups = 0
    stk_e[0] = start
    stk_k[0] = 1
    stk_m[0] = 1
    sp = 1
    status = W_OK
    while sp > 0:
        sp -= 1
        e = stk_e[sp]
        k = stk_k[sp]
        m = stk_m[sp]
        kd = kind[e]
        if kd == K_REF:
            stk_e[sp] = ref_body[e]
            sp += 1
            continue
        nodes += 1
        if nodes > max_nodes:
            status = W_TOO_MANY_NODES
            break
        if kd == K_ATOM:
            # multiset components are replicated, their atoms counted m times
            atoms += m
            if ceiling >= 0 and atoms > ceiling:
                status = W_ABORTED
                break
        elif kd == K_EMPTY:
            pass
        elif kd == K_UNION:
            if pos >= n_u:
                status = W_NEED_UNIFORMS
                break
            u = U[pos]
            pos += 1
            lookups += 1
            p = vals[k, arg_a[e]] / vals[k, e]
            if not (p >= 0.0 and p <= 1.0):
                status = W_FALLBACK
                break
            if sp + 1 > cap:
                status = W_STACK_FULL
                break
            stk_e[sp] = arg_a[e] if u < p else arg_b[e]
            stk_k[sp] = k
            stk_m[sp] = m
            sp += 1
        elif kd == K_PRODUCT:
            if sp + 2 > cap:
                status = W_STACK_FULL
                break
            stk_e[sp] = arg_b[e]
            stk_k[sp] = k
            stk_m[sp] = m
            stk_e[sp + 1] = arg_a[e]
            stk_k[sp + 1] = k
            stk_m[sp + 1] = m
            sp += 2
        elif kd == K_MSET:
            if pos >= n_u:
                status = W_NEED_UNIFORMS
                break
            a = arg_a[e]
            cx = vals[k, e]
            if not cx >= 1.0:
                status = W_FALLBACK
                break
            uu = U[pos]
            pos += 1
            level = math.log(uu) + math.log(cx) if uu > 0.0 else -math.inf
            partial = 0.0
            K = 0
            missing = 0
            while not level < partial:
                K += 1
                kk = k * K
                if kk >= n_pts or not have[kk]:
                    missing = kk
                    break
                v = vals[kk, a]
                if K > MAX_INDEX_TERMS or (K > 64 and v == 0.0):
                    missing = -1
                    break
                partial = partial + v / K
            if missing > 0:
                status = W_NEED_POINT
                out[4] = missing
                break
            if missing < 0:
                status = W_FALLBACK
                break
            lookups += K
            n_items = 0
            for j in range(1, K + 1):
                lam = vals[k * j, a] / j
                minv = 1 if j == K else 0
                if lam <= 0.0 and minv == 0:
                    continue
                if not (lam > 0.0 and lam <= POISSON_CAP):
                    status = W_FALLBACK
                    break
                if pos >= n_u:
                    status = W_NEED_UNIFORMS
                    break
                c = poisson_invert(U[pos], lam, minv)
                pos += 1
                if n_items + c > tmp.shape[0]:
                    status = W_STACK_FULL
                    out[4] = n_items + c
                    break
                for _ in range(c):
                    tmp[n_items] = j
                    n_items += 1
            if status != W_OK:
                break
            nodes += n_items
            if sp + n_items > cap:
                status = W_STACK_FULL
                out[4] = sp + n_items
                break
            for i in range(n_items - 1, -1, -1):
                stk_e[sp] = a
                stk_k[sp] = k * tmp[i]
                stk_m[sp] = m * tmp[i]
                sp += 1
        else:
            if pos >= n_u:
                status = W_NEED_UNIFORMS
                break
            u = U[pos]
            pos += 1
            lookups += 1
            p = vals[k, arg_a[e]]
            if kd == K_SEQ:
                if not (p >= 0.0 and p < 1.0):
                    status = W_FALLBACK
                    break
                c = geometric_invert(u, p)
            elif kd == K_SET:
                if p == 0.0:
                    c = 0
                elif not (p > 0.0 and p <= POISSON_CAP):
                    status = W_FALLBACK
                    break
                else:
                    c = poisson_invert(u, p, 0)
            else:
                if not (p > 0.0 and p < 1.0):
                    status = W_FALLBACK
                    break
                c = loga_invert(u, p, LOGA_MAX_TERMS)
                if c < 0:
                    status = W_FALLBACK
                    break
            if sp + c > cap:
                status = W_STACK_FULL
                out[4] = sp + c
                break
            for _ in range(c):
                stk_e[sp] = arg_a[e]
                stk_k[sp] = k
                stk_m[sp] = m
                sp += 1
    out[0] = pos
    out[1] = atoms
    out[2] = nodes
    out[3] = lookups
    return status


@njit
def trial_walk(kind, arg_a, arg_b, ref_body, start, vals, have, U, lo, ceiling, max_trials, max_nodes,
               stk_e, stk_k, stk_m, tmp, out):
    """Draws until one has lo <= size (<= ceiling), up to max_trials.

    Returns the status of the last draw: W_OK means accepted, W_ABORTED
    means the trial budget ran out; anything else interrupted the last
    draw. out = [completed rejected trials, their atoms, their uniforms
    (= start of the last draw), lookups, detail, atoms of the accepted
    draw].
    """
    one = out[5:10]
    pos = 0
    trials = 0
    atoms = 0
    lookups = 0
    status = W_ABORTED
    while trials < max_trials:
        st = size_walk(kind, arg_a, arg_b, ref_body, start, vals, have, U, pos, ceiling, max_nodes,
                       stk_e, stk_k, stk_m, tmp, one)
        if st == W_OK and one[1] >= lo:
            status = W_OK
            break
        if st != W_OK and st != W_ABORTED:
            status = st
            out[4] = one[4]
            break
        trials += 1
        atoms += one[1]
        lookups += one[3]
        pos = one[0]
        status = W_ABORTED
    out[0] = trials
    out[1] = atoms
    out[2] = pos
    out[3] = lookups
    return status


@njit
def ode_point(kind, arg_a, arg_b, atom_w, ref_col, slot, op, arg, starts, ends, w, y0, diff, plain,
              tol, maxit, cap, ys, fs, gn, gh, gx, t, ybuf, ydiff, hist, sv, sd, tails, out):
    """Node values at t inside a differential specification; False if the plain classes diverge."""
    for c in range(y0.shape[0]):
        ybuf[c] = y0[c]
    hermite_eval(ys, fs, gn, gh, gx, t, ydiff)
    for c in range(diff.shape[0]):
        ybuf[diff[c]] = ydiff[c]
    if plain.shape[0] > 0:
        for c in range(plain.shape[0]):
            ybuf[plain[c]] = 0.0
        st, it, res = newton(op, arg, starts, ends, t, w, ybuf, plain, tails, tails, tol, maxit, cap,
                             hist, sv, sd)
        if st != 0:
            return False
    node_values(kind, arg_a, arg_b, atom_w, ref_col, slot, t, ybuf, tails, out)
    return True


@njit
def ode_walk(kind, arg_a, arg_b, ref_body, ref_col, is_diff, a0_of, diff_col, atom_w, slot,
             op, arg, starts, ends, w, y0, diff, plain, tol, maxit, cap,
             grid_t, ysT, fsT, ys, fs, gn, gh, gx,
             start, top_vals, U, pos0, ceiling, max_nodes,
             stk_e, stk_p, pv, ybuf, ydiff, hist, sv, sd, tails, out):
    """size_walk for specifications with differential classes.

    Every unrolling opens a new parameter point t < z; its node values go
    to a fresh row of pv (row 0 holds the values at x).
    """
    n_u = U.shape[0]
    cap_s = stk_e.shape[0]
    n_rows = pv.shape[0]
    for i in range(top_vals.shape[0]):
        pv[0, i] = top_vals[i]
    rows = 1
    pos = pos0
    atoms = 0
    nodes = 0
    lookups = 0
    stk_e[0] = start
    stk_p[0] = 0
    sp = 1
    status = W_OK
    while sp > 0:
        sp -= 1
        e = stk_e[sp]
        p = stk_p[sp]
        kd = kind[e]
        if kd == K_REF:
            c = ref_col[e]
            if not is_diff[c]:
                stk_e[sp] = ref_body[e]
                sp += 1
                continue
            # unrolling of a differential class at z = pz
            nodes += 1
            if nodes > max_nodes:
                status = W_TOO_MANY_NODES
                break
            lookups += 1
            val = pv[p, e]
            z = pv[p, kind.shape[0]]
            a0 = a0_of[c]
            if a0 > 0:
                if pos >= n_u:
                    status = W_NEED_UNIFORMS
                    break
                u = U[pos]
                pos += 1
                q = a0 / val
                if not (q >= 0.0 and q <= 1.0):
                    status = W_FALLBACK
                    break
                if u < q:
                    if a0 > 1:
                        if pos >= n_u:
                            status = W_NEED_UNIFORMS
                            break
                        pos += 1
                    continue
            if pos >= n_u:
                status = W_NEED_UNIFORMS
                break
            u = U[pos]
            pos += 1
            col = diff_col[c]
            if not (z > 0.0 and z <= gx * (1 + 1e-15)):
                status = W_FALLBACK
                break
            lo_v = ysT[col, 0]
            top = hermite_eval_one(ys, fs, gn, gh, gx, col, z)
            if not top > lo_v:
                status = W_FALLBACK
                break
            target = lo_v + u * (top - lo_v)
            t = hermite_invert(grid_t, ysT[col], fsT[col], gn, target, z, 1e-12 * z)
            if t < 0.0:
                status = W_FALLBACK
                break
            t = min(t, z)
            if not t > 0.0:
                t = 5e-324
            atoms += 1
            if ceiling >= 0 and atoms > ceiling:
                status = W_ABORTED
                break
            if rows >= n_rows:
                status = W_POINTS_FULL
                break
            ok = ode_point(kind, arg_a, arg_b, atom_w, ref_col, slot, op, arg, starts, ends, w, y0, diff,
                           plain, tol, maxit, cap, ys, fs, gn, gh, gx, t, ybuf, ydiff, hist, sv, sd,
                           tails, pv[rows])
            if not ok:
                status = W_FALLBACK
                break
            pv[rows, kind.shape[0]] = t
            if sp + 1 > cap_s:
                status = W_STACK_FULL
                break
            stk_e[sp] = ref_body[e]
            stk_p[sp] = rows
            sp += 1
            rows += 1
            continue
        nodes += 1
        if nodes > max_nodes:
            status = W_TOO_MANY_NODES
            break
        if kd == K_ATOM:
            atoms += 1
            if ceiling >= 0 and atoms > ceiling:
                status = W_ABORTED
                break
        elif kd == K_EMPTY:
            pass
        elif kd == K_UNION:
            if pos >= n_u:
                status = W_NEED_UNIFORMS
                break
            u = U[pos]
            pos += 1
            lookups += 1
            q = pv[p, arg_a[e]] / pv[p, e]
            if not (q >= 0.0 and q <= 1.0):
                status = W_FALLBACK
                break
            if sp + 1 > cap_s:
                status = W_STACK_FULL
                break
            stk_e[sp] = arg_a[e] if u < q else arg_b[e]
            stk_p[sp] = p
            sp += 1
        elif kd == K_PRODUCT:
            if sp + 2 > cap_s:
                status = W_STACK_FULL
                break
            stk_e[sp] = arg_b[e]
            stk_p[sp] = p
            stk_e[sp + 1] = arg_a[e]
            stk_p[sp + 1] = p
            sp += 2
        elif kd == K_MSET:
            status = W_FALLBACK
            break
        else:
            if pos >= n_u:
                status = W_NEED_UNIFORMS
                break
            u = U[pos]
            pos += 1
            lookups += 1
            q = pv[p, arg_a[e]]
            if kd == K_SEQ:
                if not (q >= 0.0 and q < 1.0):
                    status = W_FALLBACK
                    break
                c = geometric_invert(u, q)
            elif kd == K_SET:
                if q == 0.0:
                    c = 0
                elif not (q > 0.0 and q <= POISSON_CAP):
                    status = W_FALLBACK
                    break
                else:
                    c = poisson_invert(u, q, 0)
            else:
                if not (q > 0.0 and q < 1.0):
                    status = W_FALLBACK
                    break
                c = loga_invert(u, q, LOGA_MAX_TERMS)
                if c < 0:
                    status = W_FALLBACK
                    break
            if sp + c > cap_s:
                status = W_STACK_FULL
                out[4] = sp + c
                break
            for _ in range(c):
                stk_e[sp] = arg_a[e]
                stk_p[sp] = p
                sp += 1
    out[0] = pos
    out[1] = atoms
    out[2] = nodes
    out[3] = lookups
    return status


@njit
def ode_trial_walk(kind, arg_a, arg_b, ref_body, ref_col, is_diff, a0_of, diff_col, atom_w, slot,
                   op, arg, starts, ends, w, y0, diff, plain, tol, maxit, cap,
                   grid_t, ysT, fsT, ys, fs, gn, gh, gx,
                   start, top_vals, U, lo, ceiling, max_trials, max_nodes,
                   stk_e, stk_p, pv, ybuf, ydiff, hist, sv, sd, tails, out):
    """trial_walk for specifications with differential classes."""
    one = out[5:10]
    pos = 0
    trials = 0
    atoms = 0
    lookups = 0
    status = W_ABORTED
    while trials < max_trials:
        st = ode_walk(kind, arg_a, arg_b, ref_body, ref_col, is_diff, a0_of, diff_col, atom_w, slot,
                      op, arg, starts, ends, w, y0, diff, plain, tol, maxit, cap,
                      grid_t, ysT, fsT, ys, fs, gn, gh, gx,
                      start, top_vals, U, pos, ceiling, max_nodes,
                      stk_e, stk_p, pv, ybuf, ydiff, hist, sv, sd, tails, one)
        if st == W_OK and one[1] >= lo:
            status = W_OK
            break
        if st != W_OK and st != W_ABORTED:
            status = st
            out[4] = one[4]
            break
        trials += 1
        atoms += one[1]
        lookups += one[3]
        pos = one[0]
        status = W_ABORTED
    out[0] = trials
    out[1] = atoms
    out[2] = pos
    out[3] = lookups
    return status
