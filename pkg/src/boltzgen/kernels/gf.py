"""Generating-function kernels: a postfix stack machine over the equation
system, Newton iteration, and fixed/adaptive-step RK4 for differential
classes.

A compiled system is a set of rows. Row ``r`` is the postfix code
``op[starts[r]:ends[r]]`` (with integer operands in ``arg``); rows
``0..m-1`` are the right-hand sides of the m classes, later rows are
auxiliary expressions (multiset arguments). Every stack slot carries its
value and its gradient with respect to the m class values plus, in the
last column, the partial derivative with respect to the variable x.
"""

import math

import numpy as np

from .._jit import njit

OP_EMPTY = 0
OP_ATOM = 1
OP_REF = 2
OP_ADD = 3
OP_MUL = 4
OP_SEQ = 5
OP_SET = 6
OP_CYC = 7
OP_MSET = 8

# Newton / ODE status codes
OK = 0
CAP = 1
SINGULAR = 2
MAXIT = 3
DOMAIN = 4
NONMONOTONE = 5
BLOWUP = 6

# largest argument math.exp takes without overflowing (rounded down)
EXP_MAX = 709.78


@njit
def exp_inf(v):
    """exp that gives inf past the float range in both compiled and plain mode."""
    return math.exp(v) if v <= EXP_MAX else math.inf


@njit
def eval_rows(op, arg, starts, ends, lo, hi, x, w, y, tails, tails_dx,
              vals, jac, sv, sd, want_d):
    """Evaluate rows lo..hi-1 at (x, y).

    Returns 0, or 1 when a construction argument left its domain, or 2 when
    a value overflowed.

    vals[r - lo] receives the value, jac[r - lo, :m] the gradient in y and
    jac[r - lo, m] the partial derivative in x (only when want_d).
    """
    m = y.shape[0]
    bad = 0
    for r in range(lo, hi):
        sp = 0
        for pc in range(starts[r], ends[r]):
            o = op[pc]
            if o == OP_EMPTY:
                sv[sp] = 1.0
                if want_d:
                    sd[sp, :] = 0.0
                sp += 1
            elif o == OP_ATOM:
                wt = w[arg[pc]]
                sv[sp] = wt * x
                if want_d:
                    sd[sp, :] = 0.0
                    sd[sp, m] = wt
                sp += 1
            elif o == OP_REF:
                j = arg[pc]
                sv[sp] = y[j]
                if want_d:
                    sd[sp, :] = 0.0
                    sd[sp, j] = 1.0
                sp += 1
            elif o == OP_ADD:
                sp -= 1
                sv[sp - 1] += sv[sp]
                if want_d:
                    for k in range(m + 1):
                        sd[sp - 1, k] += sd[sp, k]
            elif o == OP_MUL:
                sp -= 1
                a = sv[sp - 1]
                b = sv[sp]
                sv[sp - 1] = a * b
                if want_d:
                    for k in range(m + 1):
                        sd[sp - 1, k] = a * sd[sp, k] + b * sd[sp - 1, k]
            elif o == OP_SEQ:
                a = sv[sp - 1]
                if not a < 1.0:
                    bad = 1
                    a = 0.0
                inv = 1.0 / (1.0 - a)
                sv[sp - 1] = inv
                if want_d:
                    g = inv * inv
                    for k in range(m + 1):
                        sd[sp - 1, k] *= g
            elif o == OP_SET:
                v = exp_inf(sv[sp - 1])
                sv[sp - 1] = v
                if want_d:
                    for k in range(m + 1):
                        sd[sp - 1, k] *= v
            elif o == OP_CYC:
                a = sv[sp - 1]
                if not a < 1.0:
                    bad = 1
                    a = 0.0
                sv[sp - 1] = -math.log1p(-a)
                if want_d:
                    g = 1.0 / (1.0 - a)
                    for k in range(m + 1):
                        sd[sp - 1, k] *= g
            else:  # OP_MSET
                s = arg[pc]
                v = exp_inf(sv[sp - 1] + tails[s])
                sv[sp - 1] = v
                if want_d:
                    sd[sp - 1, m] += tails_dx[s]
                    for k in range(m + 1):
                        sd[sp - 1, k] *= v
        vals[r - lo] = sv[0]
        if bad == 0 and not math.isfinite(sv[0]):
            bad = 2
        if want_d:
            for k in range(m + 1):
                jac[r - lo, k] = sd[0, k]
    return bad


@njit
def solve_linear(A, b, out):
    """Gaussian elimination with partial pivoting; False if (near) singular."""
    n = b.shape[0]
    M = A.copy()
    v = b.copy()
    for c in range(n):
        p = c
        best = abs(M[c, c])
        for r in range(c + 1, n):
            if abs(M[r, c]) > best:
                best = abs(M[r, c])
                p = r
        # I - J degenerates through its diagonal; huge off-diagonal entries
        # (exponential constructions) are harmless for elimination
        scale = max(1.0, abs(A[c, c]))
        if not best > 1e-14 * scale:
            return False
        if p != c:
            for k in range(n):
                tmp = M[c, k]
                M[c, k] = M[p, k]
                M[p, k] = tmp
            tmp = v[c]
            v[c] = v[p]
            v[p] = tmp
        for r in range(c + 1, n):
            f = M[r, c] / M[c, c]
            if f != 0.0:
                for k in range(c, n):
                    M[r, k] -= f * M[c, k]
                v[r] -= f * v[c]
    for c in range(n - 1, -1, -1):
        s = v[c]
        for k in range(c + 1, n):
            s -= M[c, k] * out[k]
        out[c] = s / M[c, c]
    return True


@njit
def newton(op, arg, starts, ends, x, w, y, unknown, tails, tails_dx,
           tol, maxit, cap, hist, sv, sd):
    """Newton iteration for y = Phi(x, y) on the `unknown` coordinates.

    Starts from the entries of y as given (zero for a cold start) and
    updates y in place. Other coordinates are held fixed. Returns
    (status, iterations, final residual); hist[k] receives the residual
    max|Phi(y_k) - y_k| of iterate k. Convergence is declared when it is
    below tol * (1 + max|y|).
    """
    m = y.shape[0]
    nu = unknown.shape[0]
    vals = np.empty(m)
    jac = np.empty((m, m + 1))
    A = np.empty((nu, nu))
    rhs = np.empty(nu)
    delta = np.empty(nu)
    it = 0
    polish = 0
    res = np.inf
    while True:
        bad = eval_rows(op, arg, starts, ends, 0, m, x, w, y, tails, tails_dx,
                        vals, jac, sv, sd, True)
        if bad:
            return (DOMAIN if bad == 1 else CAP), it, res
        res = 0.0
        ymax = 0.0
        for i in range(nu):
            u = unknown[i]
            r = vals[u] - y[u]
            rhs[i] = r
            res = max(res, abs(r))
            ymax = max(ymax, abs(y[u]))
        if it < hist.shape[0]:
            hist[it] = res
        if res <= tol * (1.0 + ymax):
            # a few extra steps take the values to machine precision; the
            # derivative and tuning code relies on it near the singularity
            if polish >= 3 or res <= 4e-16 * (1.0 + ymax):
                return OK, it, res
            polish += 1
        if it >= maxit:
            return MAXIT, it, res
        for i in range(nu):
            for k in range(nu):
                A[i, k] = -jac[unknown[i], unknown[k]]
            A[i, i] += 1.0
        if not solve_linear(A, rhs, delta):
            if polish > 0:
                return OK, it, res
            return SINGULAR, it, res
        for i in range(nu):
            u = unknown[i]
            # from y = 0 the iterates increase to the least fixed point
            if polish == 0 and delta[i] < -1e-9 * (1.0 + abs(y[u])):
                return NONMONOTONE, it, res
            y[u] += delta[i]
            if not math.isfinite(y[u]) or abs(y[u]) > cap:
                return CAP, it, res
        it += 1


@njit
def _ode_rhs(op, arg, starts, ends, t, w, y, diff, plain, tails, tails_dx,
             tol, maxit, cap, hist, sv, sd, vals, jac, out):
    """Right-hand sides of the differential classes at (t, y[diff])."""
    for i in range(plain.shape[0]):
        y[plain[i]] = 0.0
    if plain.shape[0] > 0:
        st, _, _ = newton(op, arg, starts, ends, t, w, y, plain, tails, tails_dx,
                          tol, maxit, cap, hist, sv, sd)
        if st != OK:
            return False
    m = y.shape[0]
    if eval_rows(op, arg, starts, ends, 0, m, t, w, y, tails, tails_dx,
                 vals, jac, sv, sd, False):
        return False
    for i in range(diff.shape[0]):
        out[i] = vals[diff[i]]
    return True


@njit
def rk4_grid(op, arg, starts, ends, x, nsteps, w, y0, diff, plain,
             tol, maxit, cap, ys, fs, sv, sd):
    """Classical RK4 on a uniform grid of nsteps steps over [0, x].

    ys[i] / fs[i] receive the differential-class values and derivatives at
    t_i = i * x / nsteps. Returns a status code.
    """
    m = y0.shape[0]
    nd = diff.shape[0]
    h = x / nsteps
    y = y0.copy()
    vals = np.empty(m)
    jac = np.empty((m, m + 1))
    hist = np.empty(0)
    tails = np.empty(0)
    k1 = np.empty(nd)
    k2 = np.empty(nd)
    k3 = np.empty(nd)
    k4 = np.empty(nd)
    cur = np.empty(nd)
    for i in range(nd):
        cur[i] = y0[diff[i]]
        ys[0, i] = cur[i]
    for step in range(nsteps):
        t = step * h
        for i in range(nd):
            y[diff[i]] = cur[i]
        if not _ode_rhs(op, arg, starts, ends, t, w, y, diff, plain, tails, tails,
                        tol, maxit, cap, hist, sv, sd, vals, jac, k1):
            return DOMAIN
        for i in range(nd):
            fs[step, i] = k1[i]
            y[diff[i]] = cur[i] + 0.5 * h * k1[i]
        if not _ode_rhs(op, arg, starts, ends, t + 0.5 * h, w, y, diff, plain, tails, tails,
                        tol, maxit, cap, hist, sv, sd, vals, jac, k2):
            return DOMAIN
        for i in range(nd):
            y[diff[i]] = cur[i] + 0.5 * h * k2[i]
        if not _ode_rhs(op, arg, starts, ends, t + 0.5 * h, w, y, diff, plain, tails, tails,
                        tol, maxit, cap, hist, sv, sd, vals, jac, k3):
            return DOMAIN
        for i in range(nd):
            y[diff[i]] = cur[i] + h * k3[i]
        if not _ode_rhs(op, arg, starts, ends, t + h, w, y, diff, plain, tails, tails,
                        tol, maxit, cap, hist, sv, sd, vals, jac, k4):
            return DOMAIN
        for i in range(nd):
            cur[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not math.isfinite(cur[i]) or abs(cur[i]) > cap:
                return BLOWUP
            ys[step + 1, i] = cur[i]
    for i in range(nd):
        y[diff[i]] = cur[i]
    if not _ode_rhs(op, arg, starts, ends, x, w, y, diff, plain, tails, tails,
                    tol, maxit, cap, hist, sv, sd, vals, jac, k1):
        return DOMAIN
    for i in range(nd):
        fs[nsteps, i] = k1[i]
    return OK


@njit
def rk4_blowup(op, arg, starts, ends, x, w, y0, diff, plain, tol, maxit, cap,
               eta, sv, sd):
    """RK4 with steps scaled to the local growth rate of the solution.

    Returns (status, t) where status is OK if the solution stays below cap
    on [0, x] and BLOWUP / DOMAIN otherwise, t being where it stopped. The
    step is eta * min_i (1 + |y_i|) / |y_i'|, so a pole is approached
    geometrically and the blow-up point is located to about 1/cap.
    """
    m = y0.shape[0]
    nd = diff.shape[0]
    y = y0.copy()
    vals = np.empty(m)
    jac = np.empty((m, m + 1))
    hist = np.empty(0)
    tails = np.empty(0)
    k1 = np.empty(nd)
    k2 = np.empty(nd)
    k3 = np.empty(nd)
    k4 = np.empty(nd)
    cur = np.empty(nd)
    for i in range(nd):
        cur[i] = y0[diff[i]]
    t = 0.0
    hmax = x / 64.0
    while t < x:
        for i in range(nd):
            y[diff[i]] = cur[i]
        if not _ode_rhs(op, arg, starts, ends, t, w, y, diff, plain, tails, tails,
                        tol, maxit, cap, hist, sv, sd, vals, jac, k1):
            return DOMAIN, t
        h = hmax
        for i in range(nd):
            if k1[i] != 0.0:
                h = min(h, eta * (1.0 + abs(cur[i])) / abs(k1[i]))
        if t + h == t:
            # the step underflowed: the solution is at a pole
            return BLOWUP, t
        last = False
        if t + h >= x:
            h = x - t
            last = True
        for i in range(nd):
            y[diff[i]] = cur[i] + 0.5 * h * k1[i]
        if not _ode_rhs(op, arg, starts, ends, t + 0.5 * h, w, y, diff, plain, tails, tails,
                        tol, maxit, cap, hist, sv, sd, vals, jac, k2):
            return DOMAIN, t
        for i in range(nd):
            y[diff[i]] = cur[i] + 0.5 * h * k2[i]
        if not _ode_rhs(op, arg, starts, ends, t + 0.5 * h, w, y, diff, plain, tails, tails,
                        tol, maxit, cap, hist, sv, sd, vals, jac, k3):
            return DOMAIN, t
        for i in range(nd):
            y[diff[i]] = cur[i] + h * k3[i]
        if not _ode_rhs(op, arg, starts, ends, t + h, w, y, diff, plain, tails, tails,
                        tol, maxit, cap, hist, sv, sd, vals, jac, k4):
            return DOMAIN, t
        for i in range(nd):
            cur[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not math.isfinite(cur[i]) or abs(cur[i]) > cap:
                return BLOWUP, t
        t = x if last else t + h
    return OK, x


@njit
def lattice(op, arg, starts, ends, mset_rows, x, K, kmin, w, tol, maxit, cap, log_cap,
            Y, A, T, status, hist, sv, sd):
    """Solve the system at z = x**k for k = K, K-1, ..., kmin.

    Row values of multiset arguments are kept in A[k]; the tail
    T[k, s] = sum_{j >= 2, kj <= K} A[kj, s] / j is what the multiset rows
    add to their argument. Points beyond K are taken to contribute nothing.
    Returns the largest k whose solve failed (0 if none); status[k] is set
    for every point.
    """
    m = Y.shape[1]
    ns = mset_rows.shape[0]
    unknown = np.arange(m)
    aval = np.empty(1)
    ajac = np.empty((1, m + 1))
    zero_dx = np.zeros(ns)
    failed = 0
    for k in range(K, kmin - 1, -1):
        if failed:
            status[k] = status[failed]
            continue
        z = x**k
        big = False
        for s in range(ns):
            total = 0.0
            j = 2
            while k * j <= K:
                total += A[k * j, s] / j
                j += 1
            T[k, s] = total
            if total > log_cap:
                big = True
        if big:
            status[k] = CAP
            failed = k
            continue
        y = Y[k]
        y[:] = 0.0
        st, it, res = newton(op, arg, starts, ends, z, w, y, unknown, T[k], zero_dx,
                             tol, maxit, cap, hist, sv, sd)
        if st == OK:
            for i in range(m):
                if not (y[i] >= -tol) or not math.isfinite(y[i]):
                    st = DOMAIN
        status[k] = st
        if st != OK:
            failed = k
            continue
        for s in range(ns):
            r = mset_rows[s]
            eval_rows(op, arg, starts, ends, r, r + 1, z, w, y, T[k], zero_dx,
                      aval, ajac, sv, sd, False)
            A[k, s] = aval[0]
    return failed


@njit
def lattice_derivative(op, arg, starts, ends, mset_rows, x, K, w, Y, T, DY, DT, sv, sd):
    """dy/dz at the lattice points, bottom-up like :func:`lattice`.

    The tail derivative is DT[k, s] = sum_j A_s'(z^j) z^(j-1) with
    A_s' the total derivative of the multiset argument. Returns False if
    some I - J is singular.
    """
    m = Y.shape[1]
    ns = mset_rows.shape[0]
    vals = np.empty(m)
    jac = np.empty((m, m + 1))
    aval = np.empty(1)
    ajac = np.empty((1, m + 1))
    DA = np.zeros((K + 1, ns))
    M = np.empty((m, m))
    b = np.empty(m)
    for k in range(K, 0, -1):
        z = x**k
        for s in range(ns):
            total = 0.0
            j = 2
            zp = z
            while k * j <= K:
                total += DA[k * j, s] * zp
                zp *= z
                j += 1
            DT[k, s] = total
        eval_rows(op, arg, starts, ends, 0, m, z, w, Y[k], T[k], DT[k], vals, jac, sv, sd, True)
        for i in range(m):
            for c in range(m):
                M[i, c] = -jac[i, c]
            M[i, i] += 1.0
            b[i] = jac[i, m]
        if not solve_linear(M, b, DY[k]):
            return False
        for s in range(ns):
            r = mset_rows[s]
            eval_rows(op, arg, starts, ends, r, r + 1, z, w, Y[k], T[k], DT[k],
                      aval, ajac, sv, sd, True)
            d = ajac[0, m]
            for c in range(m):
                d += ajac[0, c] * DY[k, c]
            DA[k, s] = d
    return True


@njit
def hermite_eval(ys, fs, n, h, x, t, out):
    """Cubic Hermite interpolation of every grid column at t into out."""
    nd = ys.shape[1]
    if t <= 0.0:
        for c in range(nd):
            out[c] = ys[0, c]
        return
    if t >= x:
        for c in range(nd):
            out[c] = ys[n, c]
        return
    i = min(int(t / h), n - 1)
    s = (t - i * h) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2 * h
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1) * h
    for c in range(nd):
        out[c] = h00 * ys[i, c] + h10 * fs[i, c] + h01 * ys[i + 1, c] + h11 * fs[i + 1, c]


@njit
def hermite_eval_one(ys, fs, n, h, x, col, t):
    if t <= 0.0:
        return ys[0, col]
    if t >= x:
        return ys[n, col]
    i = min(int(t / h), n - 1)
    s = (t - i * h) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2 * h
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1) * h
    return h00 * ys[i, col] + h10 * fs[i, col] + h01 * ys[i + 1, col] + h11 * fs[i + 1, col]
