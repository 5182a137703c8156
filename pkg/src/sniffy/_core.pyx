# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the hot loops.

* ``splat_gaussians`` / ``moves_clear`` -- filament model kernels;
* ``cast_lasers`` -- the four axis-aligned laser rangers;
* ``run_episode`` -- a whole swarm episode (sim + controller + baselines).

Every expression follows the operation order of the Python reference so
the episode trajectories are bit-identical to ``sniffy.sim._run_python``.
Edit both sides together.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, ceil, exp, log, cos, fabs, isfinite, INFINITY, M_PI
from libc.stdint cimport uint64_t
from libc.stdlib cimport malloc, free, calloc

cnp.import_array()

NATIVE = True

# --------------------------------------------------------------------------
# filament kernels


def splat_gaussians(double[:, ::1] out, double[::1] xs, double[::1] ys, double[::1] sigmas,
                    double[::1] masses, double h, double cutoff):
    """Add ``mass * N(center, sigma^2 I)`` of every filament onto grid nodes of ``out``."""
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t ny1 = out.shape[0], nx1 = out.shape[1]
    cdef Py_ssize_t f, a, b, reach, ci, cj, gi, gj
    cdef double s, inv, lim, dx, dy, wy, scale
    cdef double* wx = NULL
    cdef int maxp = 0
    for f in range(n):
        reach = <Py_ssize_t>ceil(cutoff * sigmas[f] / h)
        if 2 * reach + 1 > maxp:
            maxp = <int>(2 * reach + 1)
    if n == 0:
        return
    wx = <double*>malloc(maxp * sizeof(double))
    try:
        for f in range(n):
            s = sigmas[f]
            inv = 1.0 / (2.0 * s * s)
            lim = cutoff * s
            reach = <Py_ssize_t>ceil(cutoff * s / h)
            ci = <Py_ssize_t>floor(xs[f] / h + 0.5)
            cj = <Py_ssize_t>floor(ys[f] / h + 0.5)
            scale = masses[f] * inv / M_PI
            for a in range(2 * reach + 1):
                gi = ci - reach + a
                dx = gi * h - xs[f]
                if fabs(dx) <= lim and gi >= 0 and gi < nx1:
                    wx[a] = exp(-dx * dx * inv) * scale
                else:
                    wx[a] = 0.0
            for b in range(2 * reach + 1):
                gj = cj - reach + b
                if gj < 0 or gj >= ny1:
                    continue
                dy = gj * h - ys[f]
                if not fabs(dy) <= lim:
                    continue
                wy = exp(-dy * dy * inv)
                for a in range(2 * reach + 1):
                    gi = ci - reach + a
                    if wx[a] != 0.0:
                        out[gj, gi] += wy * wx[a]
    finally:
        free(wx)


cdef bint _segments_touch(double px, double py, double qx, double qy,
                          double ax, double ay, double bx, double by) nogil:
    cdef double rx = qx - px, ry = qy - py
    cdef double sx = bx - ax, sy = by - ay
    cdef double denom = rx * sy - ry * sx
    cdef double qpx = ax - px, qpy = ay - py
    cdef double t_num = qpx * sy - qpy * sx
    cdef double u_num = qpx * ry - qpy * rx
    cdef double t, u, rr, ss, t0, t1, lo, hi
    if denom != 0.0:
        t = t_num / denom
        u = u_num / denom
        return t >= 0.0 and t <= 1.0 and u >= 0.0 and u <= 1.0
    if t_num != 0.0:
        return False
    rr = rx * rx + ry * ry
    ss = sx * sx + sy * sy
    if rr > 0:
        t0 = (qpx * rx + qpy * ry) / rr
        t1 = t0 + (sx * rx + sy * ry) / rr
    else:
        t0 = 0.0
        t1 = 0.0
    lo = t0 if t0 < t1 else t1
    hi = t1 if t0 < t1 else t0
    return hi >= 0.0 and lo <= 1.0 and (rr > 0 or ss > 0)


def moves_clear(double[::1] x0, double[::1] y0, double[::1] x1, double[::1] y1, walls):
    cdef double[:, ::1] w = np.ascontiguousarray(walls, dtype=np.float64).reshape(-1, 4)
    cdef Py_ssize_t n = x0.shape[0], m = w.shape[0], i, k
    out = np.ones(n, dtype=bool)
    cdef cnp.npy_bool[::1] o = out
    for i in range(n):
        for k in range(m):
            if _segments_touch(x0[i], y0[i], x1[i], y1[i], w[k, 0], w[k, 1], w[k, 2], w[k, 3]):
                o[i] = False
                break
    return out


# --------------------------------------------------------------------------
# lasers


cdef double AX[4]
cdef double AY[4]
AX[0], AX[1], AX[2], AX[3] = 1.0, 0.0, -1.0, 0.0
AY[0], AY[1], AY[2], AY[3] = 0.0, 1.0, 0.0, -1.0


cdef double _axis_hit(double x, double y, int k, double ax, double ay, double bx, double by,
                      double max_range) nogil:
    cdef double miss = max_range + 1.0
    cdef double sign, ta, tb, lo, hi, t, s
    if k == 0 or k == 2:
        sign = 1.0 if k == 0 else -1.0
        if ay == by:
            if ay != y:
                return miss
            ta = (ax - x) * sign
            tb = (bx - x) * sign
            lo = ta if ta < tb else tb
            hi = tb if ta < tb else ta
            if hi < 0.0:
                return miss
            t = 0.0 if lo <= 0.0 else lo
            return t if t <= max_range else miss
        s = (y - ay) / (by - ay)
        if s < 0.0 or s > 1.0:
            return miss
        t = (ax + s * (bx - ax) - x) * sign
    else:
        sign = 1.0 if k == 1 else -1.0
        if ax == bx:
            if ax != x:
                return miss
            ta = (ay - y) * sign
            tb = (by - y) * sign
            lo = ta if ta < tb else tb
            hi = tb if ta < tb else ta
            if hi < 0.0:
                return miss
            t = 0.0 if lo <= 0.0 else lo
            return t if t <= max_range else miss
        s = (x - ax) / (bx - ax)
        if s < 0.0 or s > 1.0:
            return miss
        t = (ay + s * (by - ay) - y) * sign
    if t < 0.0 or t > max_range:
        return miss
    return t


cdef void _cast(double x, double y, const double[:, ::1] walls, double max_range, double* out) nogil:
    cdef Py_ssize_t i
    cdef int k
    cdef double t
    for k in range(4):
        out[k] = max_range
    for i in range(walls.shape[0]):
        for k in range(4):
            t = _axis_hit(x, y, k, walls[i, 0], walls[i, 1], walls[i, 2], walls[i, 3], max_range)
            if t < out[k]:
                out[k] = t


def cast_lasers(double x, double y, walls, double max_range=4.0):
    cdef double[:, ::1] w = np.ascontiguousarray(walls, dtype=np.float64).reshape(-1, 4)
    cdef double out[4]
    _cast(x, y, w, max_range, out)
    return [out[0], out[1], out[2], out[3]]


cdef bint _move_crosses(double x0, double y0, double x1, double y1, const double[:, ::1] walls) nogil:
    cdef double rx = x1 - x0, ry = y1 - y0
    cdef double ax, ay, sx, sy, denom, qpx, qpy, t, u
    cdef Py_ssize_t i
    for i in range(walls.shape[0]):
        ax = walls[i, 0]
        ay = walls[i, 1]
        sx = walls[i, 2] - ax
        sy = walls[i, 3] - ay
        denom = rx * sy - ry * sx
        if denom == 0.0:
            continue
        qpx = ax - x0
        qpy = ay - y0
        t = (qpx * sy - qpy * sx) / denom
        u = (qpx * ry - qpy * rx) / denom
        if 0.0 <= t and t <= 1.0 and 0.0 <= u and u <= 1.0:
            return True
    return False


# --------------------------------------------------------------------------
# counter-based RNG (mirrors sniffy.rng)


cdef inline uint64_t _splitmix(uint64_t x) nogil:
    cdef uint64_t z
    x = x + <uint64_t>0x9E3779B97F4A7C15ULL
    z = x
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _keyed(uint64_t seed, uint64_t agent, uint64_t it, uint64_t slot) nogil:
    cdef uint64_t h = _splitmix(seed)
    h = _splitmix(h ^ agent)
    h = _splitmix(h ^ it)
    h = _splitmix(h ^ slot)
    return <double>(h >> 11) * (1.0 / 9007199254740992.0)


cdef inline double _keyed_normal(uint64_t seed, uint64_t agent, uint64_t step, uint64_t slot) nogil:
    cdef uint64_t s = seed ^ <uint64_t>0x6E6F697365ULL
    cdef double u1 = _keyed(s, agent, step, 2 * slot)
    cdef double u2 = _keyed(s, agent, step, 2 * slot + 1)
    return sqrt(-2.0 * log(1.0 - u1)) * cos(2.0 * M_PI * u2)


def keyed_uniform(seed, agent, iteration, slot):
    M = (1 << 64) - 1
    return _keyed(seed & M, agent & M, iteration & M, slot & M)


# --------------------------------------------------------------------------
# field sampling


cdef double _node_bilinear(const float[:, :, ::1] frames, Py_ssize_t fi, double h, double x, double y) nogil:
    cdef Py_ssize_t ny = frames.shape[1] - 1
    cdef Py_ssize_t nx = frames.shape[2] - 1
    cdef double gx = x / h
    cdef double gy = y / h
    cdef Py_ssize_t i0, j0
    cdef double fx, fy, c00, c10, c01, c11
    if gx < 0.0:
        gx = 0.0
    elif gx > nx:
        gx = <double>nx
    if gy < 0.0:
        gy = 0.0
    elif gy > ny:
        gy = <double>ny
    i0 = <Py_ssize_t>gx
    j0 = <Py_ssize_t>gy
    if i0 > nx - 1:
        i0 = nx - 1
    if j0 > ny - 1:
        j0 = ny - 1
    fx = gx - i0
    fy = gy - j0
    c00 = frames[fi, j0, i0]
    c10 = frames[fi, j0, i0 + 1]
    c01 = frames[fi, j0 + 1, i0]
    c11 = frames[fi, j0 + 1, i0 + 1]
    return (c00 * (1.0 - fx) + c10 * fx) * (1.0 - fy) + (c01 * (1.0 - fx) + c11 * fx) * fy


cdef inline double _pymax(double a, double b) nogil:
    # Python's max(a, b): a unless b > a
    return b if b > a else a


cdef inline double _pymin(double a, double b) nogil:
    return b if b < a else a


cdef double _bilinear_centered(const double[:, ::1] a, double h, double x, double y) nogil:
    cdef Py_ssize_t ny = a.shape[0], nx = a.shape[1]
    cdef double gx = _pymin(_pymax(x / h - 0.5, 0.0), nx - 1.0)
    cdef double gy = _pymin(_pymax(y / h - 0.5, 0.0), ny - 1.0)
    cdef Py_ssize_t cap_x = nx - 2 if nx - 2 > 0 else 0
    cdef Py_ssize_t cap_y = ny - 2 if ny - 2 > 0 else 0
    cdef Py_ssize_t i0 = <Py_ssize_t>floor(gx)
    cdef Py_ssize_t j0 = <Py_ssize_t>floor(gy)
    cdef Py_ssize_t i1, j1
    cdef double fx, fy
    if cap_x < i0:
        i0 = cap_x
    if cap_y < j0:
        j0 = cap_y
    i1 = i0 + 1 if i0 + 1 < nx - 1 else nx - 1
    j1 = j0 + 1 if j0 + 1 < ny - 1 else ny - 1
    fx = gx - i0
    fy = gy - j0
    return ((1 - fx) * (1 - fy) * a[j0, i0] + fx * (1 - fy) * a[j0, i1]
            + (1 - fx) * fy * a[j1, i0] + fx * fy * a[j1, i1])


# --------------------------------------------------------------------------
# controller state


cdef enum:
    LF = 0
    WF = 1
    AR = 2

cdef struct Agent:
    # world
    double x, y, vx, vy
    double lz[4]
    bint crashed
    int cause
    # tracking
    int mode
    double gx, gy, pgx, pgy, lsx, lsy
    bint has_pb
    double pbx, pby, pbr
    double last_wp
    long iteration
    bint initialised
    int wf_dir
    bint wf_left
    double wf_leave
    bint held
    # chemotaxis
    int phase
    double probe_start
    double sx[3]
    double sy[3]
    double sr[3]
    int ns
    double cpgx, cpgy
    # anemotaxis
    bint in_plume
    bint has_last
    double lastx, lasty


cdef struct Genes:
    double omega, phi_p, phi_g, omega_prime, r_r, t_wp, d_wp, d_laser, d_swarm, d_line
    double k_laser, k_swarm, d_laser_prime


cdef struct Params:
    double v, r_rand, threshold, width, height
    double probe_offset, step_len, probe_tol, probe_timeout, probe_clear
    uint64_t seed


cdef inline double _norm(double x, double y) nogil:
    return sqrt(x * x + y * y)


cdef int _best_axis(double dx, double dy) nogil:
    cdef double best = -INFINITY, p
    cdef int k, bk = 0
    for k in range(4):
        p = AX[k] * dx + AY[k] * dy
        if p > best:
            best = p
            bk = k
    return bk


cdef void _cross_track(Agent* s, double* ex, double* ey) nogil:
    cdef double dx = s.gx - s.lsx
    cdef double dy = s.gy - s.lsy
    cdef double dd = dx * dx + dy * dy
    cdef double t
    if dd == 0.0:
        ex[0] = s.x - s.lsx
        ey[0] = s.y - s.lsy
        return
    t = ((s.x - s.lsx) * dx + (s.y - s.lsy) * dy) / dd
    ex[0] = s.x - (s.lsx + t * dx)
    ey[0] = s.y - (s.lsy + t * dy)


cdef inline double _clamp(double v, double hi) nogil:
    return _pymin(_pymax(v, 0.0), hi)


cdef void _wall_follow_cmd(Agent* s, Genes* g, double v, double* cx, double* cy) nogil:
    cdef int desired = _best_axis(s.gx - s.x, s.gy - s.y)
    cdef int j, k
    for j in range(4):
        k = (desired + s.wf_dir * j) % 4
        if k < 0:
            k += 4
        if s.lz[k] > g.d_laser:
            s.held = False
            cx[0] = AX[k] * v
            cy[0] = AY[k] * v
            return
    s.held = True
    cx[0] = 0.0
    cy[0] = 0.0


cdef void _start_wall_follow(Agent* s, Genes* g) nogil:
    cdef double tx = s.gx - s.x, ty = s.gy - s.y
    cdef int desired = _best_axis(tx, ty)
    cdef double ex, ey, off
    s.wf_dir = -1 if AX[desired] * ty - AY[desired] * tx < 0.0 else 1
    _cross_track(s, &ex, &ey)
    off = _norm(ex, ey)
    s.wf_left = off > g.d_line
    s.wf_leave = _norm(tx, ty) if s.wf_left else INFINITY


cdef bint _obstacle_avoided(Agent* s, Genes* g) nogil:
    cdef double ex, ey, off, dist
    _cross_track(s, &ex, &ey)
    off = _norm(ex, ey)
    dist = _norm(s.gx - s.x, s.gy - s.y)
    if not s.wf_left:
        if off > g.d_line:
            s.wf_left = True
            s.wf_leave = dist
        return False
    return off <= g.d_line and dist < s.wf_leave


cdef void _track(Agent* s, Genes* g, double v, double* rx, double* ry, int nn,
                 double* cx, double* cy) nogil:
    cdef bint near = False
    cdef int j, k
    cdef double d, w, ax, ay, gx, gy, gn, an, ex, ey
    s.held = False
    for j in range(nn):
        if sqrt(rx[j] * rx[j] + ry[j] * ry[j]) < g.d_swarm:
            near = True
            break
    if near:
        s.mode = AR
    elif s.mode == AR:
        s.mode = LF
    if s.mode == AR:
        ax = 0.0
        ay = 0.0
        for j in range(nn):
            d = sqrt(rx[j] * rx[j] + ry[j] * ry[j])
            if d > 0.0 and d < g.d_swarm:
                w = g.k_swarm * (g.d_swarm - d) / d
                ax += w * rx[j]
                ay += w * ry[j]
        for k in range(4):
            if s.lz[k] < g.d_laser_prime:
                w = g.k_laser * (g.d_laser_prime - s.lz[k])
                ax -= w * AX[k]
                ay -= w * AY[k]
        gx = s.gx - s.x
        gy = s.gy - s.y
        gn = sqrt(gx * gx + gy * gy)
        if gn > 0.0:
            ax += gx / gn * v
            ay += gy / gn * v
        an = sqrt(ax * ax + ay * ay)
        if an > 0.0:
            cx[0] = ax / an * v
            cy[0] = ay / an * v
        elif gn > 0.0:
            cx[0] = gx / gn * v
            cy[0] = gy / gn * v
        else:
            cx[0] = 0.0
            cy[0] = 0.0
        return
    if s.mode == WF:
        if not _obstacle_avoided(s, g):
            _wall_follow_cmd(s, g, v, cx, cy)
            return
        s.mode = LF
    # line following
    _cross_track(s, &ex, &ey)
    if _norm(ex, ey) > g.d_line:
        k = _best_axis(-ex, -ey)
    else:
        k = _best_axis(s.gx - s.x, s.gy - s.y)
    if s.lz[k] > g.d_laser:
        cx[0] = AX[k] * v
        cy[0] = AY[k] * v
        return
    s.mode = WF
    _start_wall_follow(s, g)
    _wall_follow_cmd(s, g, v, cx, cy)


cdef bint _wp_trigger(Agent* s, Genes* g, double now, bint new_best) nogil:
    if _norm(s.x - s.gx, s.y - s.gy) < g.d_wp:
        return True
    if now - s.last_wp > g.t_wp:
        return True
    return new_best


cdef double MAX_STEP = 1000.0


cdef inline void _cap_step(double* vx, double* vy) nogil:
    cdef double n = sqrt(vx[0] * vx[0] + vy[0] * vy[0])
    if n > MAX_STEP:
        vx[0] = vx[0] / n * MAX_STEP
        vy[0] = vy[0] / n * MAX_STEP


cdef void _explore_goal(Agent* s, Genes* g, Params* p, int agent, long it, double prevx, double prevy,
                        double* ox, double* oy) nogil:
    cdef double u1 = _keyed(p.seed, agent, it, 0)
    cdef double u2 = _keyed(p.seed, agent, it, 1)
    cdef double rx = s.x + (u1 - 0.5) * p.r_rand
    cdef double ry = s.y + (u2 - 0.5) * p.r_rand
    cdef double vx = g.omega_prime * (prevx - s.x) + g.r_r * (rx - s.x)
    cdef double vy = g.omega_prime * (prevy - s.y) + g.r_r * (ry - s.y)
    _cap_step(&vx, &vy)
    ox[0] = s.x + vx
    oy[0] = s.y + vy


cdef bint _triggered(int policy, Agent* s, Genes* g, Params* p, double reading, double now,
                     bint new_best) nogil:
    cdef bint changed, in_plume
    if policy == 0:
        return _wp_trigger(s, g, now, new_best)
    if policy == 1:
        if s.phase == 0:
            return _wp_trigger(s, g, now, False)
        if _norm(s.x - s.gx, s.y - s.gy) < p.probe_tol:
            return True
        return now - s.probe_start > p.probe_timeout
    in_plume = reading > p.threshold
    changed = in_plume != s.in_plume
    s.in_plume = in_plume
    if in_plume:
        s.has_last = True
        s.lastx = s.x
        s.lasty = s.y
    return changed or _wp_trigger(s, g, now, False)


cdef void _waypoint(int policy, Agent* s, Genes* g, Params* p, int agent, double reading,
                    double windx, double windy, double now, bint gas_mode,
                    double sbx, double sby, double* ox, double* oy) nogil:
    cdef long it = s.iteration + 1
    cdef double alpha, beta, a, b, pbx, pby, vx, vy, u1, u2, sgn
    cdef double ca, cb, cc, cd, det, d1, d2, grx, gry, gn, wn
    cdef bint ok
    if policy == 0:
        if gas_mode:
            alpha = _keyed(p.seed, agent, it, 2)
            beta = _keyed(p.seed, agent, it, 3)
            pbx = s.pbx if s.has_pb else s.x
            pby = s.pby if s.has_pb else s.y
            a = g.phi_p * alpha
            b = g.phi_g * beta
            vx = g.omega * (s.gx - s.x) + a * (pbx - s.x) + b * (sbx - s.x)
            vy = g.omega * (s.gy - s.y) + a * (pby - s.y) + b * (sby - s.y)
            _cap_step(&vx, &vy)
            ox[0] = s.x + vx
            oy[0] = s.y + vy
        else:
            _explore_goal(s, g, p, agent, it, s.gx, s.gy, ox, oy)
        s.iteration = it
        return
    if policy == 1:
        if s.phase == 0:
            s.ns = 1
            s.sx[0] = s.x
            s.sy[0] = s.y
            s.sr[0] = reading
            s.cpgx = s.gx
            s.cpgy = s.gy
            sgn = 1.0 if s.lz[0] > p.probe_clear else -1.0
            s.phase = 1
            s.probe_start = now
            ox[0] = s.x + sgn * p.probe_offset
            oy[0] = s.y + 0.0
            return
        s.sx[s.ns] = s.x
        s.sy[s.ns] = s.y
        s.sr[s.ns] = reading
        s.ns += 1
        if s.phase == 1:
            sgn = 1.0 if s.lz[1] > p.probe_clear else -1.0
            s.phase = 2
            s.probe_start = now
            ox[0] = s.x + 0.0
            oy[0] = s.y + sgn * p.probe_offset
            return
        s.phase = 0
        s.iteration = it
        ca = s.sx[1] - s.sx[0]
        cb = s.sy[1] - s.sy[0]
        cc = s.sx[2] - s.sx[0]
        cd = s.sy[2] - s.sy[0]
        det = ca * cd - cb * cc
        ok = False
        if not fabs(det) < 1e-9:
            d1 = s.sr[1] - s.sr[0]
            d2 = s.sr[2] - s.sr[0]
            grx = (cd * d1 - cb * d2) / det
            gry = (-cc * d1 + ca * d2) / det
            if isfinite(grx) and isfinite(gry):
                gn = _norm(grx, gry)
                ok = gn > 0.0
        if ok:
            ox[0] = s.x + grx / gn * p.step_len
            oy[0] = s.y + gry / gn * p.step_len
        else:
            _explore_goal(s, g, p, agent, it, s.cpgx, s.cpgy, ox, oy)
        ox[0] = _clamp(ox[0], p.width)
        oy[0] = _clamp(oy[0], p.height)
        return
    # anemotaxis
    u1 = _keyed(p.seed, agent, it, 0)
    u2 = _keyed(p.seed, agent, it, 1)
    s.iteration = it
    if reading > p.threshold:
        s.has_last = True
        s.lastx = s.x
        s.lasty = s.y
        wn = _norm(windx, windy)
        if wn > 0.0:
            ox[0] = s.x - p.step_len * windx / wn
            oy[0] = s.y - p.step_len * windy / wn
        else:
            ox[0] = s.x + (u1 - 0.5) * p.r_rand
            oy[0] = s.y + (u2 - 0.5) * p.r_rand
    elif s.has_last:
        ox[0] = s.lastx + (u1 - 0.5) * p.r_rand
        oy[0] = s.lasty + (u2 - 0.5) * p.r_rand
    else:
        _explore_goal(s, g, p, agent, it, s.gx, s.gy, ox, oy)
    ox[0] = _clamp(ox[0], p.width)
    oy[0] = _clamp(oy[0], p.height)


# --------------------------------------------------------------------------
# episode


def run_episode(dict prep, double gas_h, double frame_interval, double flow_h, double width, double height,
                spawn, genome, int policy, seed, tuple config, bint record_events,
                tuple policy_params=(0.3, 2.0, 0.1, 5.0, 0.5)):
    """Native episode loop; returns (trajectory, crashed, cause, crash_step, events)."""
    cdef double dt = config[0], kp = config[1]
    cdef long N = config[2]
    cdef double v = config[3], wall_crash = config[4], agent_crash = config[5], sigma = config[6]
    cdef double laser_range = config[7]
    cdef const double[:, ::1] walls = np.ascontiguousarray(prep["walls"], dtype=np.float64).reshape(-1, 4)
    cdef const float[:, :, ::1] frames = np.ascontiguousarray(prep["frames"], dtype=np.float32)
    cdef const double[:, ::1] wind_u = np.ascontiguousarray(prep["wind_u"], dtype=np.float64)
    cdef const double[:, ::1] wind_v = np.ascontiguousarray(prep["wind_v"], dtype=np.float64)
    cdef double[:, ::1] sp = np.ascontiguousarray(spawn, dtype=np.float64).reshape(-1, 2)
    cdef double[::1] gv = np.ascontiguousarray(genome, dtype=np.float64)
    cdef int A = sp.shape[0]
    cdef Py_ssize_t n_frames = frames.shape[0]
    cdef Genes g
    cdef Params p
    g.omega, g.phi_p, g.phi_g, g.omega_prime, g.r_r = gv[0], gv[1], gv[2], gv[3], gv[4]
    g.t_wp, g.d_wp, g.d_laser, g.d_swarm, g.d_line = gv[5], gv[6], gv[7], gv[8], gv[9]
    g.k_laser, g.k_swarm, g.d_laser_prime = gv[10], gv[11], gv[12]
    p.v = v
    p.r_rand = config[9]
    p.threshold = config[8]
    p.width = width
    p.height = height
    p.probe_offset, p.step_len, p.probe_tol, p.probe_timeout, p.probe_clear = policy_params
    p.seed = seed & ((1 << 64) - 1)

    traj_arr = np.empty((N + 1, A, 2))
    cdef double[:, :, ::1] traj = traj_arr
    crash_step_arr = np.full(A, -1, dtype=np.int64)
    cdef long long[::1] crash_step = crash_step_arr
    events = []

    cdef Agent* ag = <Agent*>calloc(A, sizeof(Agent))
    cdef double* rx = <double*>malloc(max(A, 1) * sizeof(double))
    cdef double* ry = <double*>malloc(max(A, 1) * sizeof(double))
    cdef double* readings = <double*>malloc(max(A, 1) * sizeof(double))
    cdef double* cmdx = <double*>malloc(max(A, 1) * sizeof(double))
    cdef double* cmdy = <double*>malloc(max(A, 1) * sizeof(double))
    cdef char* hit = <char*>malloc(max(A, 1))
    cdef bint has_best = False, new_best, triggered
    cdef double best_r = 0.0, sbx = 0.0, sby = 0.0
    cdef long n
    cdef int i, j, nn, mode_before, k
    cdef Py_ssize_t fi
    cdef double t, r, wx, wy, cx, cy, ox, oy, nxp, nyp, lmin, dx, dy
    cdef Agent* s
    try:
        for i in range(A):
            s = &ag[i]
            s.x = sp[i, 0]
            s.y = sp[i, 1]
            _cast(s.x, s.y, walls, laser_range, s.lz)
            s.mode = LF
            s.wf_dir = 1
            s.wf_leave = INFINITY
            traj[0, i, 0] = s.x
            traj[0, i, 1] = s.y
        for n in range(N):
            t = n * dt
            fi = <Py_ssize_t>floor(t / frame_interval)
            if fi < 0:
                fi = 0
            if fi > n_frames - 1:
                fi = n_frames - 1
            # sensing
            for i in range(A):
                if not ag[i].crashed:
                    readings[i] = _node_bilinear(frames, fi, gas_h, ag[i].x, ag[i].y)
            for i in range(A):
                s = &ag[i]
                if s.crashed:
                    continue
                r = readings[i]
                if r > p.threshold and r > s.pbr:
                    s.has_pb = True
                    s.pbx = s.x
                    s.pby = s.y
                    s.pbr = r
            new_best = False
            for i in range(A):
                s = &ag[i]
                if s.has_pb and s.pbr > best_r:
                    best_r = s.pbr
                    sbx = s.pbx
                    sby = s.pby
                    has_best = True
                    new_best = True
            # control
            for i in range(A):
                s = &ag[i]
                if s.crashed:
                    cmdx[i] = 0.0
                    cmdy[i] = 0.0
                    continue
                nn = 0
                for j in range(A):
                    if j == i:
                        continue
                    rx[nn] = ag[i].x - ag[j].x
                    ry[nn] = ag[i].y - ag[j].y
                    if sigma > 0.0:
                        rx[nn] = rx[nn] + sigma * _keyed_normal(p.seed, i, n, 2 * j)
                        ry[nn] = ry[nn] + sigma * _keyed_normal(p.seed, i, n, 2 * j + 1)
                    nn += 1
                if policy == 2:
                    wx = _bilinear_centered(wind_u, flow_h, s.x, s.y)
                    wy = _bilinear_centered(wind_v, flow_h, s.x, s.y)
                else:
                    wx = 0.0
                    wy = 0.0
                r = readings[i]
                mode_before = s.mode
                triggered = False
                if not s.initialised:
                    s.initialised = True
                    ox = s.x + (_keyed(p.seed, i, 0, 0) - 0.5) * p.r_rand
                    oy = s.y + (_keyed(p.seed, i, 0, 1) - 0.5) * p.r_rand
                    s.gx = ox
                    s.gy = oy
                    s.pgx = ox
                    s.pgy = oy
                    s.lsx = s.x
                    s.lsy = s.y
                    s.last_wp = t
                    triggered = True
                elif _triggered(policy, s, &g, &p, r, t, new_best):
                    _waypoint(policy, s, &g, &p, i, r, wx, wy, t, has_best, sbx, sby, &ox, &oy)
                    s.pgx = s.gx
                    s.pgy = s.gy
                    s.gx = ox
                    s.gy = oy
                    s.lsx = s.x
                    s.lsy = s.y
                    s.last_wp = t
                    if s.mode == WF:
                        s.mode = LF
                    triggered = True
                if triggered and record_events:
                    events.append((t, i, 0, s.mode, s.x, s.y, s.gx, s.gy, r))
                _track(s, &g, v, rx, ry, nn, &cx, &cy)
                cmdx[i] = cx
                cmdy[i] = cy
                if s.mode != mode_before and record_events:
                    events.append((t, i, 1, s.mode, s.x, s.y, s.gx, s.gy, r))
            # world
            for i in range(A):
                s = &ag[i]
                if s.crashed:
                    continue
                s.vx = s.vx + kp * (cmdx[i] - s.vx) * dt
                s.vy = s.vy + kp * (cmdy[i] - s.vy) * dt
                nxp = s.x + s.vx * dt
                nyp = s.y + s.vy * dt
                if _move_crosses(s.x, s.y, nxp, nyp, walls):
                    s.crashed = True
                    s.cause = 1
                    s.vx = 0.0
                    s.vy = 0.0
                    crash_step[i] = n + 1
                    continue
                s.x = nxp
                s.y = nyp
                _cast(nxp, nyp, walls, laser_range, s.lz)
                lmin = s.lz[0]
                for k in range(1, 4):
                    if s.lz[k] < lmin:
                        lmin = s.lz[k]
                if lmin < wall_crash:
                    s.crashed = True
                    s.cause = 1
                    crash_step[i] = n + 1
            for i in range(A):
                hit[i] = 0
            for i in range(A):
                for j in range(i + 1, A):
                    if ag[i].crashed and ag[j].crashed:
                        continue
                    dx = ag[i].x - ag[j].x
                    dy = ag[i].y - ag[j].y
                    if sqrt(dx * dx + dy * dy) < agent_crash:
                        hit[i] = 1
                        hit[j] = 1
            for i in range(A):
                s = &ag[i]
                if hit[i] and not s.crashed:
                    s.crashed = True
                    s.cause = 2
                    crash_step[i] = n + 1
                if s.crashed:
                    s.vx = 0.0
                    s.vy = 0.0
                traj[n + 1, i, 0] = s.x
                traj[n + 1, i, 1] = s.y
        crashed = np.array([bool(ag[i].crashed) for i in range(A)])
        cause = np.array([ag[i].cause for i in range(A)], dtype=np.int8)
    finally:
        free(ag)
        free(rx)
        free(ry)
        free(readings)
        free(cmdx)
        free(cmdy)
        free(hit)
    return traj_arr, crashed, cause, crash_step_arr, events
