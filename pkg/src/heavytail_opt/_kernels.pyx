# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled step kernels for the optimizer inner loops.

Each span call advances a run over a window of iterations whose mini-batch
noise means were pre-sampled by the driver (noise is additive, so sampling
is independent of the trajectory).  The pure-Python backend implements the
same span contract; numeric agreement between the two is pinned by tests.

Problem dispatch (kind ids match problems.KIND_IDS):
  0 quadratic            mat = Hessian, grad = H (x - s)
  1 power_norm           p1 = scale, p2 = nu
  2 huberized_norm       p1 = scale, p2 = delta
  3 piecewise_linear_max mat = piece rows a_i, aux = row norms
  4 quad_plus_norm       p1 = mu, p2 = norm weight
"""

from libc.math cimport INFINITY, isfinite, pow, sqrt

# Iterate norms beyond this mark a run as diverged.
cdef double DIVERGE_NORM = 1e30
cdef double DIVERGE_NORM_SQ = 1e60


cdef inline double _norm_sq(double[::1] u) noexcept:
    cdef Py_ssize_t i, n = u.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc += u[i] * u[i]
    return acc


cdef inline double _dist_sq(double[::1] u, double[::1] v) noexcept:
    cdef Py_ssize_t i, n = u.shape[0]
    cdef double acc = 0.0, t
    for i in range(n):
        t = u[i] - v[i]
        acc += t * t
    return acc


cdef double _objective(int kind, double[:, ::1] mat, double[::1] shift,
                       double p1, double p2, double[::1] aux,
                       double[::1] x, double[::1] scratch) noexcept:
    """f(x). `scratch` has length dim and may be clobbered."""
    cdef Py_ssize_t i, j, d = x.shape[0], rows
    cdef double acc, r, vmax, v
    if kind == 0:  # quadratic: 0.5 (x-s)' H (x-s)
        for i in range(d):
            scratch[i] = x[i] - shift[i]
        acc = 0.0
        for i in range(d):
            v = 0.0
            for j in range(d):
                v += mat[i, j] * scratch[j]
            acc += v * scratch[i]
        return 0.5 * acc
    if kind == 1:  # power_norm: scale ||x-s||^(1+nu) / (1+nu)
        r = 0.0
        for i in range(d):
            v = x[i] - shift[i]
            r += v * v
        r = sqrt(r)
        return p1 * pow(r, 1.0 + p2) / (1.0 + p2)
    if kind == 2:  # huberized_norm
        r = 0.0
        for i in range(d):
            v = x[i] - shift[i]
            r += v * v
        r = sqrt(r)
        if r <= p2:
            return p1 * r * r / (2.0 * p2)
        return p1 * (r - p2 / 2.0)
    if kind == 3:  # piecewise max of <a_i, x - s>
        rows = mat.shape[0]
        vmax = -INFINITY
        for i in range(rows):
            v = 0.0
            for j in range(d):
                v += mat[i, j] * (x[j] - shift[j])
            if v > vmax:
                vmax = v
        return vmax
    # kind == 4: quad_plus_norm: mu/2 r^2 + c r
    r = 0.0
    for i in range(d):
        v = x[i] - shift[i]
        r += v * v
    r = sqrt(r)
    return 0.5 * p1 * r * r + p2 * r


cdef void _gradient(int kind, double[:, ::1] mat, double[::1] shift,
                    double p1, double p2, double[::1] aux,
                    double[::1] x, double[::1] out) noexcept:
    """out = (sub)gradient of f at x; minimum-norm choice at kinks."""
    cdef Py_ssize_t i, j, d = x.shape[0], rows, best
    cdef double r, v, vmax, coef
    if kind == 0:
        for i in range(d):
            v = 0.0
            for j in range(d):
                v += mat[i, j] * (x[j] - shift[j])
            out[i] = v
        return
    if kind == 1:
        r = 0.0
        for i in range(d):
            v = x[i] - shift[i]
            r += v * v
        r = sqrt(r)
        if r == 0.0:
            for i in range(d):
                out[i] = 0.0
            return
        coef = p1 * pow(r, p2 - 1.0)
        for i in range(d):
            out[i] = coef * (x[i] - shift[i])
        return
    if kind == 2:
        r = 0.0
        for i in range(d):
            v = x[i] - shift[i]
            r += v * v
        r = sqrt(r)
        coef = p1 / p2 if r <= p2 else p1 / r
        for i in range(d):
            out[i] = coef * (x[i] - shift[i])
        return
    if kind == 3:
        rows = mat.shape[0]
        vmax = -INFINITY
        best = 0
        for i in range(rows):
            v = 0.0
            for j in range(d):
                v += mat[i, j] * (x[j] - shift[j])
            if v > vmax or (v == vmax and aux[i] < aux[best]):
                vmax = v
                best = i
        if vmax == 0.0:
            # 0 is a subgradient exactly at the minimizer (pieces span).
            for i in range(d):
                out[i] = 0.0
            return
        for i in range(d):
            out[i] = mat[best, i]
        return
    # kind == 4
    r = 0.0
    for i in range(d):
        v = x[i] - shift[i]
        r += v * v
    r = sqrt(r)
    if r == 0.0:
        for i in range(d):
            out[i] = 0.0
        return
    coef = p1 + p2 / r
    for i in range(d):
        out[i] = coef * (x[i] - shift[i])


def backend_name():
    return "compiled"


def run_sgd_span(double[::1] x, double[::1] x_sum, double[::1] mom,
                 double[:, ::1] noise, long long k0,
                 double gamma, double lam, int clip_mode, double momentum,
                 int kind, double[:, ::1] mat, double[::1] shift,
                 double p1, double p2, double[::1] aux,
                 double[::1] x_star, double f_star,
                 long long[::1] rec_idx, double[::1] out_gap, double[::1] out_dist,
                 double[::1] grad, double[::1] scratch, double[::1] run_state):
    """Advance plain SGD over a pre-sampled window.

    rec_idx holds ascending step offsets j (0-based within the window) after
    which a record row is written: gap of the running average and squared
    distance of the iterate.  run_state = [max_dist_sq, diverged, steps_done]
    is updated in place.  Returns the number of steps consumed in this window
    (each consumed step queried the oracle, including a diverging one).
    """
    cdef Py_ssize_t n = noise.shape[0], d = x.shape[0]
    cdef Py_ssize_t j, i, ri = 0, nrec = rec_idx.shape[0], done = 0
    cdef double gn, scale, ds, val, denom
    cdef double max_dist_sq = run_state[0]
    cdef bint diverged = run_state[1] != 0.0
    cdef bint use_mom = momentum > 0.0
    for j in range(n):
        if diverged:
            break
        done += 1  # this step's oracle batch is consumed from here on
        _gradient(kind, mat, shift, p1, p2, aux, x, grad)
        for i in range(d):
            grad[i] += noise[j, i]
        if clip_mode == 1:
            gn = sqrt(_norm_sq(grad))
            if not isfinite(gn):
                diverged = True
                break
            if gn > lam:
                scale = lam / gn
                for i in range(d):
                    grad[i] *= scale
        elif clip_mode == 2:
            for i in range(d):
                if grad[i] > lam:
                    grad[i] = lam
                elif grad[i] < -lam:
                    grad[i] = -lam
        if use_mom:
            for i in range(d):
                mom[i] = momentum * mom[i] + grad[i]
                x_sum[i] += x[i]
                x[i] -= gamma * mom[i]
        else:
            for i in range(d):
                x_sum[i] += x[i]
                x[i] -= gamma * grad[i]
        ds = _dist_sq(x, x_star)
        if ds > max_dist_sq:
            max_dist_sq = ds
        if not isfinite(ds) or ds > DIVERGE_NORM_SQ:
            diverged = True
            if ri < nrec and rec_idx[ri] == j:
                out_gap[ri] = INFINITY
                out_dist[ri] = INFINITY
                ri += 1
            break
        if ri < nrec and rec_idx[ri] == j:
            denom = <double> (k0 + j + 1)
            for i in range(d):
                scratch[i] = x_sum[i] / denom
            val = _objective(kind, mat, shift, p1, p2, aux, scratch, grad)
            out_gap[ri] = val - f_star
            out_dist[ri] = ds
            ri += 1
    if diverged:
        while ri < nrec:
            out_gap[ri] = INFINITY
            out_dist[ri] = INFINITY
            ri += 1
    run_state[0] = max_dist_sq
    run_state[1] = 1.0 if diverged else 0.0
    run_state[2] += <double> done
    return done


def run_sstm_span(double[::1] y, double[::1] z,
                  double[:, ::1] noise,
                  double[::1] alphas, double[::1] a_prev, double[::1] a_next,
                  double[::1] lams, double cap,
                  int kind, double[:, ::1] mat, double[::1] shift,
                  double p1, double p2, double[::1] aux,
                  double[::1] x_star, double f_star,
                  long long[::1] rec_idx, double[::1] out_gap, double[::1] out_dist,
                  double[::1] xbuf, double[::1] grad, double[::1] run_state):
    """Advance the accelerated method over a pre-sampled window.

    Window step j uses stepsize alphas[j], weights a_prev[j]/a_next[j] and
    clipping level lams[j].  The combination weight on the accumulated
    sequence is capped at `cap` (pass cap >= 1 to disable).  Records after
    step j: gap at the output sequence and squared mirror-point distance.
    """
    cdef Py_ssize_t n = noise.shape[0], d = y.shape[0]
    cdef Py_ssize_t j, i, ri = 0, nrec = rec_idx.shape[0], done = 0
    cdef double w, cw, gn, scale, ds, val, alpha
    cdef double max_dist_sq = run_state[0]
    cdef bint diverged = run_state[1] != 0.0
    for j in range(n):
        if diverged:
            break
        done += 1
        w = a_prev[j] / a_next[j]
        if w > cap:
            w = cap
        cw = 1.0 - w
        alpha = alphas[j]
        for i in range(d):
            xbuf[i] = w * y[i] + cw * z[i]
        _gradient(kind, mat, shift, p1, p2, aux, xbuf, grad)
        for i in range(d):
            grad[i] += noise[j, i]
        gn = sqrt(_norm_sq(grad))
        if not isfinite(gn):
            diverged = True
            break
        if gn > lams[j]:
            scale = lams[j] / gn
            for i in range(d):
                grad[i] *= scale
        for i in range(d):
            z[i] -= alpha * grad[i]
            y[i] = w * y[i] + cw * z[i]
        ds = _dist_sq(z, x_star)
        if ds > max_dist_sq:
            max_dist_sq = ds
        if not isfinite(ds) or ds > DIVERGE_NORM_SQ:
            diverged = True
            if ri < nrec and rec_idx[ri] == j:
                out_gap[ri] = INFINITY
                out_dist[ri] = INFINITY
                ri += 1
            break
        if ri < nrec and rec_idx[ri] == j:
            val = _objective(kind, mat, shift, p1, p2, aux, y, grad)
            out_gap[ri] = val - f_star
            out_dist[ri] = ds
            ri += 1
    if diverged:
        while ri < nrec:
            out_gap[ri] = INFINITY
            out_dist[ri] = INFINITY
            ri += 1
    run_state[0] = max_dist_sq
    run_state[1] = 1.0 if diverged else 0.0
    run_state[2] += <double> done
    return done
