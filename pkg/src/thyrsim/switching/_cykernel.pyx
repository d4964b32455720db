# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled switching-bridge kernel.

Statement-for-statement mirror of ``_pure.Kernel``; both must stay in sync.
See the pure module for the algorithm description.
"""
from libc.math cimport cos, sin, sqrt, floor, M_PI

from ..errors import CommutationFailure

cdef double TWO_PI = 2.0 * M_PI
cdef double PI_3 = M_PI / 3.0

cdef int[6] _POS_PHASE = [0, 0, 1, 1, 2, 2]
cdef int[6] _NEG_PHASE = [1, 2, 2, 0, 0, 1]
cdef int[6] _COMM_RAIL = [1, -1, 1, -1, 1, -1]
cdef int[6] _COMM_IN = [0, 2, 1, 0, 2, 1]
cdef int[6] _COMM_OUT = [2, 1, 0, 2, 1, 0]

cdef int PERT_NONE = 0, PERT_VD = 1, PERT_VQ = 2, PERT_IDC = 3
cdef int PERT_ALPHA = 4, PERT_IREF = 5
cdef int LOAD_ELECTROLYZER = 0, LOAD_CURRENT = 1
cdef int CTRL_CONST = 0, CTRL_PI = 1

DEF NYMAX = 8
DEF NBMAX = 2


cdef class Kernel:
    cdef public double v_m, omega_g, l_c, l_d, r0, r1, c1, v_rev, i0
    cdef public double alpha0, pi_kp, pi_ki, i_ref, alpha_min, alpha_max
    cdef public double omega_z, pll_kp, pll_ki, omega_n
    cdef public double pert_amp, pert_omega, dt, bisect_tol
    cdef public int n_b, load_kind, ctrl_kind, pert_channel
    cdef public int ny, n_fires, n_commutations
    cdef public double t
    cdef double phi[NBMAX]
    cdef double _y[NYMAX]
    cdef int _s[NBMAX]
    cdef int _comm[NBMAX]
    cdef int _rail[NBMAX]
    cdef int _ph_in[NBMAX]
    cdef int _ph_out[NBMAX]
    cdef int _pending_s[NBMAX]
    cdef long _m[NBMAX]

    def __init__(self, cfg):
        self.v_m = cfg["v_m"]
        self.omega_g = cfg["omega_g"]
        self.l_c = cfg["l_c"]
        self.n_b = cfg["n_bridges"]
        if self.n_b > NBMAX:
            raise ValueError("too many bridges")
        for b, p in enumerate(cfg["phase_shifts"]):
            self.phi[b] = p
        self.load_kind = cfg["load_kind"]
        self.l_d = cfg["l_d"]
        self.r0 = cfg["r0"]
        self.r1 = cfg["r1"]
        self.c1 = cfg["c1"]
        self.v_rev = cfg["v_rev"]
        self.i0 = cfg["i0"]
        self.ctrl_kind = cfg["ctrl_kind"]
        self.alpha0 = cfg["alpha0"]
        self.pi_kp = cfg["pi_kp"]
        self.pi_ki = cfg["pi_ki"]
        self.i_ref = cfg["i_ref"]
        self.alpha_min = cfg["alpha_min"]
        self.alpha_max = cfg["alpha_max"]
        self.omega_z = cfg["omega_z"]
        self.pll_kp = cfg["pll_kp"]
        self.pll_ki = cfg["pll_ki"]
        self.omega_n = cfg["omega_n"]
        self.pert_channel = cfg["pert_channel"]
        self.pert_amp = cfg["pert_amp"]
        self.pert_omega = cfg["pert_omega"]
        self.dt = cfg["dt"]
        self.bisect_tol = cfg.get("bisect_tol", 1e-9)
        self.ny = 6 + self.n_b
        self.t = 0.0
        self.n_fires = 0
        self.n_commutations = 0

    # python-visible views used by the wrapper and state chaining
    @property
    def y(self):
        return [self._y[i] for i in range(self.ny)]

    def init_state(self, double t0, double i_dc0, double alpha_init):
        cdef int b, m0
        self.t = t0
        self._y[0] = i_dc0
        self._y[1] = self.r1 * i_dc0
        self._y[2] = 0.0
        self._y[3] = alpha_init
        self._y[4] = self.omega_g * t0
        self._y[5] = 0.0
        for b in range(self.n_b):
            self._y[6 + b] = 0.0
            m0 = <int>floor((self._y[4] + PI_3 + self.phi[b] - alpha_init)
                            / PI_3) + 1
            self._m[b] = m0
            self._s[b] = (m0 - 1) % 6
            if self._s[b] < 0:
                self._s[b] += 6
            self._comm[b] = 0

    def get_state(self):
        return (self.t,
                [self._y[i] for i in range(self.ny)],
                [self._s[b] for b in range(self.n_b)],
                [self._comm[b] for b in range(self.n_b)],
                [self._rail[b] for b in range(self.n_b)],
                [self._ph_in[b] for b in range(self.n_b)],
                [self._ph_out[b] for b in range(self.n_b)],
                [self._pending_s[b] for b in range(self.n_b)],
                [self._m[b] for b in range(self.n_b)])

    def set_state(self, st):
        cdef int i, b
        (t, y, s, comm, rail, ph_in, ph_out, pend, m) = st
        self.t = t
        for i in range(self.ny):
            self._y[i] = y[i]
        for b in range(self.n_b):
            self._s[b] = s[b]
            self._comm[b] = comm[b]
            self._rail[b] = rail[b]
            self._ph_in[b] = ph_in[b]
            self._ph_out[b] = ph_out[b]
            self._pending_s[b] = pend[b]
            self._m[b] = m[b]

    # -- waveforms ------------------------------------------------------------

    cdef inline void _grid_dq(self, double t, double* vd, double* vq):
        vd[0] = self.v_m
        vq[0] = 0.0
        if self.pert_channel == PERT_VD:
            vd[0] += self.pert_amp * cos(self.pert_omega * t)
        elif self.pert_channel == PERT_VQ:
            vq[0] = self.pert_amp * cos(self.pert_omega * t)

    cdef inline double _phase_voltage(self, int ph, int b, double t,
                                      double vd, double vq):
        cdef double ang = self.omega_g * t + self.phi[b] - ph * (TWO_PI / 3.0)
        return vd * cos(ang) - vq * sin(ang)

    cdef inline double _i_prescribed(self, double t):
        if self.pert_channel == PERT_IDC:
            return self.i0 + self.pert_amp * cos(self.pert_omega * t)
        return self.i0

    cdef inline double _di_prescribed(self, double t):
        if self.pert_channel == PERT_IDC:
            return -self.pert_amp * self.pert_omega * sin(self.pert_omega * t)
        return 0.0

    cdef inline double _alpha_cmd(self, double t, double i_dc, double x_i):
        cdef double a, i_ref
        if self.ctrl_kind == CTRL_CONST:
            a = self.alpha0
            if self.pert_channel == PERT_ALPHA:
                a += self.pert_amp * cos(self.pert_omega * t)
        else:
            i_ref = self.i_ref
            if self.pert_channel == PERT_IREF:
                i_ref += self.pert_amp * cos(self.pert_omega * t)
            a = self.alpha0 + self.pi_kp * (i_dc - i_ref) + x_i
        if a < self.alpha_min:
            a = self.alpha_min
        elif a > self.alpha_max:
            a = self.alpha_max
        return a

    # -- dynamics ---------------------------------------------------------------

    cdef void _derivs(self, double t, double* y, double* dy):
        cdef double vd, vq, i_dc, v1, x_i, alpha, theta_pll, x_pll
        cdef double e_sum, l_sum, v_in, v_out, v_p, v_n, di
        cdef double i_ref, err, a_raw, delta, v_q_pll
        cdef int b
        self._grid_dq(t, &vd, &vq)
        if self.load_kind == LOAD_ELECTROLYZER:
            i_dc = y[0]
        else:
            i_dc = self._i_prescribed(t)
        v1 = y[1]
        x_i = y[2]
        alpha = y[3]
        theta_pll = y[4]
        x_pll = y[5]

        e_sum = 0.0
        l_sum = 0.0
        for b in range(self.n_b):
            if self._comm[b]:
                v_in = self._phase_voltage(self._ph_in[b], b, t, vd, vq)
                v_out = self._phase_voltage(self._ph_out[b], b, t, vd, vq)
                if self._rail[b] > 0:
                    v_n = self._phase_voltage(_NEG_PHASE[self._s[b]], b, t, vd, vq)
                    e_sum += 0.5 * (v_in + v_out) - v_n
                else:
                    v_p = self._phase_voltage(_POS_PHASE[self._s[b]], b, t, vd, vq)
                    e_sum += v_p - 0.5 * (v_in + v_out)
                l_sum += 1.5 * self.l_c
            else:
                v_p = self._phase_voltage(_POS_PHASE[self._s[b]], b, t, vd, vq)
                v_n = self._phase_voltage(_NEG_PHASE[self._s[b]], b, t, vd, vq)
                e_sum += v_p - v_n
                l_sum += 2.0 * self.l_c

        if self.load_kind == LOAD_ELECTROLYZER:
            di = (e_sum - self.r0 * i_dc - v1 - self.v_rev) / (self.l_d + l_sum)
            dy[0] = di
            dy[1] = (i_dc - v1 / self.r1) / self.c1
        else:
            di = self._di_prescribed(t)
            dy[0] = 0.0
            dy[1] = 0.0

        if self.ctrl_kind == CTRL_PI:
            i_ref = self.i_ref
            if self.pert_channel == PERT_IREF:
                i_ref += self.pert_amp * cos(self.pert_omega * t)
            err = i_dc - i_ref
            a_raw = self.alpha0 + self.pi_kp * err + x_i
            if (a_raw > self.alpha_max and err > 0.0) or \
               (a_raw < self.alpha_min and err < 0.0):
                dy[2] = 0.0
            else:
                dy[2] = self.pi_ki * err
        else:
            dy[2] = 0.0

        dy[3] = self.omega_z * (self._alpha_cmd(t, i_dc, x_i) - alpha)

        delta = theta_pll - self.omega_g * t
        v_q_pll = -vd * sin(delta) + vq * cos(delta)
        dy[4] = self.omega_n + self.pll_kp * v_q_pll + x_pll
        dy[5] = self.pll_ki * v_q_pll

        for b in range(self.n_b):
            if self._comm[b]:
                v_in = self._phase_voltage(self._ph_in[b], b, t, vd, vq)
                v_out = self._phase_voltage(self._ph_out[b], b, t, vd, vq)
                if self._rail[b] > 0:
                    dy[6 + b] = (v_in - v_out) / (2.0 * self.l_c) + 0.5 * di
                else:
                    dy[6 + b] = (v_out - v_in) / (2.0 * self.l_c) + 0.5 * di
            else:
                dy[6 + b] = 0.0

    cdef void _rk4(self, double t, double* y, double h, double* out):
        cdef double k1[NYMAX]
        cdef double k2[NYMAX]
        cdef double k3[NYMAX]
        cdef double k4[NYMAX]
        cdef double tmp[NYMAX]
        cdef int i, n = self.ny
        self._derivs(t, y, k1)
        for i in range(n):
            tmp[i] = y[i] + 0.5 * h * k1[i]
        self._derivs(t + 0.5 * h, tmp, k2)
        for i in range(n):
            tmp[i] = y[i] + 0.5 * h * k2[i]
        self._derivs(t + 0.5 * h, tmp, k3)
        for i in range(n):
            tmp[i] = y[i] + h * k3[i]
        self._derivs(t + h, tmp, k4)
        for i in range(n):
            out[i] = y[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

    # -- events -----------------------------------------------------------------

    cdef void _event_values(self, double t, double* y, double* ev):
        cdef double i_dc, target
        cdef int b
        if self.load_kind == LOAD_ELECTROLYZER:
            i_dc = y[0]
        else:
            i_dc = self._i_prescribed(t)
        for b in range(self.n_b):
            target = -PI_3 - self.phi[b] + y[3] + self._m[b] * PI_3
            ev[b] = y[4] - target
            if self._comm[b]:
                ev[self.n_b + b] = y[6 + b] - i_dc
            else:
                ev[self.n_b + b] = -1.0

    cdef int _apply_event(self, int idx, double t) except -1:
        cdef int b, k0
        if idx < self.n_b:
            b = idx
            if self._comm[b]:
                raise CommutationFailure(
                    f"firing pulse at t={t:.9f}s while bridge {b} is still "
                    f"commutating (overlap exceeds 60 degrees)")
            k0 = <int>(self._m[b] % 6)
            if k0 < 0:
                k0 += 6
            self._comm[b] = 1
            self._rail[b] = _COMM_RAIL[k0]
            self._ph_in[b] = _COMM_IN[k0]
            self._ph_out[b] = _COMM_OUT[k0]
            self._pending_s[b] = k0
            self._y[6 + b] = 0.0
            self._m[b] += 1
            self.n_fires += 1
        else:
            b = idx - self.n_b
            self._comm[b] = 0
            self._s[b] = self._pending_s[b]
            self._y[6 + b] = 0.0
            self.n_commutations += 1
        return 0

    cdef int _try_step(self, double h) except -1:
        cdef double t0 = self.t
        cdef double y0[NYMAX]
        cdef double y1[NYMAX]
        cdef double ym[NYMAX]
        cdef double e0[2 * NBMAX]
        cdef double e1[2 * NBMAX]
        cdef double em[2 * NBMAX]
        cdef double lo, hi, mid, h_ev
        cdef int i, ne = 2 * self.n_b, idx_ev
        for i in range(self.ny):
            y0[i] = self._y[i]
        self._event_values(t0, y0, e0)
        self._rk4(t0, y0, h, y1)
        self._event_values(t0 + h, y1, e1)

        h_ev = -1.0
        idx_ev = -1
        for i in range(ne):
            if e0[i] < 0.0 and e1[i] >= 0.0:
                lo = 0.0
                hi = h
                while hi - lo > self.bisect_tol:
                    mid = 0.5 * (lo + hi)
                    self._rk4(t0, y0, mid, ym)
                    self._event_values(t0 + mid, ym, em)
                    if em[i] >= 0.0:
                        hi = mid
                    else:
                        lo = mid
                if idx_ev < 0 or hi < h_ev:
                    h_ev = hi
                    idx_ev = i
        if idx_ev < 0:
            self.t = t0 + h
            for i in range(self.ny):
                self._y[i] = y1[i]
            return 0
        self._rk4(t0, y0, h_ev, ym)
        for i in range(self.ny):
            self._y[i] = ym[i]
        self.t = t0 + h_ev
        self._apply_event(idx_ev, self.t)
        return 0

    # -- outputs ----------------------------------------------------------------

    cdef void _outputs(self, double t, double* y, double* out):
        cdef double vd, vq, i_dc, e_sum, l_sum, i_al, i_be
        cdef double v_in, v_out, v_p, v_n, itr, al, be, c, s, di, v1
        cdef double ph[3]
        cdef int b, j
        self._grid_dq(t, &vd, &vq)
        if self.load_kind == LOAD_ELECTROLYZER:
            i_dc = y[0]
        else:
            i_dc = self._i_prescribed(t)

        e_sum = 0.0
        l_sum = 0.0
        i_al = 0.0
        i_be = 0.0
        for b in range(self.n_b):
            for j in range(3):
                ph[j] = 0.0
            if self._comm[b]:
                itr = y[6 + b]
                v_in = self._phase_voltage(self._ph_in[b], b, t, vd, vq)
                v_out = self._phase_voltage(self._ph_out[b], b, t, vd, vq)
                if self._rail[b] > 0:
                    v_n = self._phase_voltage(_NEG_PHASE[self._s[b]], b, t, vd, vq)
                    e_sum += 0.5 * (v_in + v_out) - v_n
                    ph[self._ph_in[b]] += itr
                    ph[self._ph_out[b]] += i_dc - itr
                    ph[_NEG_PHASE[self._s[b]]] -= i_dc
                else:
                    v_p = self._phase_voltage(_POS_PHASE[self._s[b]], b, t, vd, vq)
                    e_sum += v_p - 0.5 * (v_in + v_out)
                    ph[_POS_PHASE[self._s[b]]] += i_dc
                    ph[self._ph_in[b]] -= itr
                    ph[self._ph_out[b]] -= i_dc - itr
                l_sum += 1.5 * self.l_c
            else:
                v_p = self._phase_voltage(_POS_PHASE[self._s[b]], b, t, vd, vq)
                v_n = self._phase_voltage(_NEG_PHASE[self._s[b]], b, t, vd, vq)
                e_sum += v_p - v_n
                ph[_POS_PHASE[self._s[b]]] += i_dc
                ph[_NEG_PHASE[self._s[b]]] -= i_dc
                l_sum += 2.0 * self.l_c
            al = ph[0]
            be = (ph[1] - ph[2]) / sqrt(3.0)
            c = cos(self.phi[b])
            s = sin(self.phi[b])
            i_al += al * c + be * s
            i_be += -al * s + be * c

        if self.load_kind == LOAD_ELECTROLYZER:
            v1 = y[1]
            di = (e_sum - self.r0 * i_dc - v1 - self.v_rev) / (self.l_d + l_sum)
        else:
            di = self._di_prescribed(t)
        out[0] = i_dc
        out[1] = e_sum - l_sum * di
        out[2] = i_al
        out[3] = -0.5 * i_al + 0.5 * sqrt(3.0) * i_be
        out[4] = -0.5 * i_al - 0.5 * sqrt(3.0) * i_be

    cdef int _mask(self):
        cdef int mask = 0, b, s
        for b in range(self.n_b):
            s = self._s[b]
            mask |= 1 << (6 * b + s)
            mask |= 1 << (6 * b + (s + 5) % 6)
            if self._comm[b]:
                mask |= 1 << (6 * b + self._pending_s[b])
        return mask

    # -- main loop ----------------------------------------------------------------

    def run(self, long n_steps, long stride, bint average=False):
        cdef list rec_t = [], rec_i = [], rec_v = []
        cdef list rec_a = [], rec_b = [], rec_c = []
        cdef list rec_al = [], rec_th = [], rec_m = []
        cdef double t_base = self.t
        cdef double dt = self.dt
        cdef double t_next
        cdef double out[5]
        cdef double acc[5]
        cdef long k
        cdef int j
        for j in range(5):
            acc[j] = 0.0
        for k in range(n_steps):
            t_next = t_base + (k + 1) * dt
            while self.t < t_next - 1e-13:
                self._try_step(t_next - self.t)
            self.t = t_next
            if average:
                self._outputs(self.t, self._y, out)
                for j in range(5):
                    acc[j] += out[j]
            if (k + 1) % stride == 0:
                if average:
                    for j in range(5):
                        out[j] = acc[j] / stride
                        acc[j] = 0.0
                else:
                    self._outputs(self.t, self._y, out)
                rec_t.append(self.t)
                rec_i.append(out[0])
                rec_v.append(out[1])
                rec_a.append(out[2])
                rec_b.append(out[3])
                rec_c.append(out[4])
                rec_al.append(self._y[3])
                rec_th.append(self._y[4])
                rec_m.append(self._mask())
        return rec_t, rec_i, rec_v, rec_a, rec_b, rec_c, rec_al, rec_th, rec_m
