"""Reference switching-bridge kernel in pure Python.

Fixed-step RK4 at microsecond resolution with bisection to nanosecond
accuracy on the two discrete events per bridge: a thyristor firing (the PLL
ramp crosses the filtered delay angle) and a commutation completing (the
incoming valve current reaching the DC current). The compiled kernel mirrors
this file statement for statement; keep them in sync.
"""
import math

from ..errors import CommutationFailure

TWO_PI = 2.0 * math.pi
PI_3 = math.pi / 3.0

# conduction state s = 0-based index of the last-fired thyristor
_POS_PHASE = (0, 0, 1, 1, 2, 2)   # s -> phase feeding the positive rail
_NEG_PHASE = (1, 2, 2, 0, 0, 1)   # s -> phase fed from the negative rail

# firing thyristor k = s_pending + 1 commutes one rail: (rail, in, out)
_COMM_RAIL = (1, -1, 1, -1, 1, -1)    # +1 positive rail, -1 negative rail
_COMM_IN = (0, 2, 1, 0, 2, 1)
_COMM_OUT = (2, 1, 0, 2, 1, 0)

# perturbation channels
PERT_NONE, PERT_VD, PERT_VQ, PERT_IDC, PERT_ALPHA, PERT_IREF = 0, 1, 2, 3, 4, 5
LOAD_ELECTROLYZER, LOAD_CURRENT = 0, 1
CTRL_CONST, CTRL_PI = 0, 1


class Kernel:
    """Bridge simulator state machine. Configure via a flat dict of numbers."""

    def __init__(self, cfg):
        self.v_m = float(cfg["v_m"])
        self.omega_g = float(cfg["omega_g"])
        self.l_c = float(cfg["l_c"])
        self.n_b = int(cfg["n_bridges"])
        self.phi = [float(p) for p in cfg["phase_shifts"]]
        self.load_kind = int(cfg["load_kind"])
        self.l_d = float(cfg["l_d"])
        self.r0 = float(cfg["r0"])
        self.r1 = float(cfg["r1"])
        self.c1 = float(cfg["c1"])
        self.v_rev = float(cfg["v_rev"])
        self.i0 = float(cfg["i0"])
        self.ctrl_kind = int(cfg["ctrl_kind"])
        self.alpha0 = float(cfg["alpha0"])
        self.pi_kp = float(cfg["pi_kp"])
        self.pi_ki = float(cfg["pi_ki"])
        self.i_ref = float(cfg["i_ref"])
        self.alpha_min = float(cfg["alpha_min"])
        self.alpha_max = float(cfg["alpha_max"])
        self.omega_z = float(cfg["omega_z"])
        self.pll_kp = float(cfg["pll_kp"])
        self.pll_ki = float(cfg["pll_ki"])
        self.omega_n = float(cfg["omega_n"])
        self.pert_channel = int(cfg["pert_channel"])
        self.pert_amp = float(cfg["pert_amp"])
        self.pert_omega = float(cfg["pert_omega"])
        self.dt = float(cfg["dt"])
        self.bisect_tol = float(cfg.get("bisect_tol", 1e-9))

        # continuous state: [i_dc, v1, x_i, alpha, theta_pll, x_pll, itr...]
        self.ny = 6 + self.n_b
        self.y = [0.0] * self.ny
        self.t = 0.0
        # discrete state per bridge
        self.s = [0] * self.n_b
        self.comm = [0] * self.n_b
        self.rail = [0] * self.n_b
        self.ph_in = [0] * self.n_b
        self.ph_out = [0] * self.n_b
        self.pending_s = [0] * self.n_b
        self.m = [0] * self.n_b
        self.n_fires = 0
        self.n_commutations = 0

    # -- initialization ------------------------------------------------------

    def init_state(self, t0, i_dc0, alpha_init):
        self.t = float(t0)
        y = self.y
        y[0] = float(i_dc0)
        y[1] = self.r1 * float(i_dc0)
        y[2] = 0.0
        y[3] = float(alpha_init)
        y[4] = self.omega_g * float(t0)   # PLL assumed locked at start
        y[5] = 0.0
        for b in range(self.n_b):
            y[6 + b] = 0.0
            base = -PI_3 - self.phi[b]
            # first firing target strictly ahead of the current PLL angle
            m0 = int(math.floor((y[4] - base - alpha_init) / PI_3)) + 1
            self.m[b] = m0
            self.s[b] = (m0 - 1) % 6
            self.comm[b] = 0

    def get_state(self):
        return (self.t, list(self.y), list(self.s), list(self.comm),
                list(self.rail), list(self.ph_in), list(self.ph_out),
                list(self.pending_s), list(self.m))

    def set_state(self, st):
        (self.t, y, s, comm, rail, ph_in, ph_out, pend, m) = st
        self.y = list(y)
        self.s = list(s)
        self.comm = list(comm)
        self.rail = list(rail)
        self.ph_in = list(ph_in)
        self.ph_out = list(ph_out)
        self.pending_s = list(pend)
        self.m = list(m)

    # -- source, load and control waveforms ----------------------------------

    def _grid_dq(self, t):
        vd = self.v_m
        vq = 0.0
        if self.pert_channel == PERT_VD:
            vd += self.pert_amp * math.cos(self.pert_omega * t)
        elif self.pert_channel == PERT_VQ:
            vq = self.pert_amp * math.cos(self.pert_omega * t)
        return vd, vq

    def _phase_voltage(self, ph, b, t, vd, vq):
        ang = self.omega_g * t + self.phi[b] - ph * (TWO_PI / 3.0)
        return vd * math.cos(ang) - vq * math.sin(ang)

    def _i_prescribed(self, t):
        if self.pert_channel == PERT_IDC:
            return self.i0 + self.pert_amp * math.cos(self.pert_omega * t)
        return self.i0

    def _di_prescribed(self, t):
        if self.pert_channel == PERT_IDC:
            return -self.pert_amp * self.pert_omega * math.sin(self.pert_omega * t)
        return 0.0

    def _alpha_cmd(self, t, i_dc, x_i):
        if self.ctrl_kind == CTRL_CONST:
            a = self.alpha0
            if self.pert_channel == PERT_ALPHA:
                a += self.pert_amp * math.cos(self.pert_omega * t)
        else:
            i_ref = self.i_ref
            if self.pert_channel == PERT_IREF:
                i_ref += self.pert_amp * math.cos(self.pert_omega * t)
            a = self.alpha0 + self.pi_kp * (i_dc - i_ref) + x_i
        if a < self.alpha_min:
            a = self.alpha_min
        elif a > self.alpha_max:
            a = self.alpha_max
        return a

    # -- continuous dynamics ---------------------------------------------------

    def _derivs(self, t, y, dy):
        vd, vq = self._grid_dq(t)
        if self.load_kind == LOAD_ELECTROLYZER:
            i_dc = y[0]
        else:
            i_dc = self._i_prescribed(t)
        v1, x_i, alpha = y[1], y[2], y[3]
        theta_pll, x_pll = y[4], y[5]

        # bridge EMFs and loop inductances
        e_sum = 0.0
        l_sum = 0.0
        for b in range(self.n_b):
            if self.comm[b]:
                v_in = self._phase_voltage(self.ph_in[b], b, t, vd, vq)
                v_out = self._phase_voltage(self.ph_out[b], b, t, vd, vq)
                if self.rail[b] > 0:
                    v_n = self._phase_voltage(_NEG_PHASE[self.s[b]], b, t, vd, vq)
                    e_sum += 0.5 * (v_in + v_out) - v_n
                else:
                    v_p = self._phase_voltage(_POS_PHASE[self.s[b]], b, t, vd, vq)
                    e_sum += v_p - 0.5 * (v_in + v_out)
                l_sum += 1.5 * self.l_c
            else:
                v_p = self._phase_voltage(_POS_PHASE[self.s[b]], b, t, vd, vq)
                v_n = self._phase_voltage(_NEG_PHASE[self.s[b]], b, t, vd, vq)
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

        # PI integrator with conditional anti-windup
        if self.ctrl_kind == CTRL_PI:
            i_ref = self.i_ref
            if self.pert_channel == PERT_IREF:
                i_ref += self.pert_amp * math.cos(self.pert_omega * t)
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

        # PLL tracks the grid space vector rotated into its own frame
        delta = theta_pll - self.omega_g * t
        v_q_pll = -vd * math.sin(delta) + vq * math.cos(delta)
        dy[4] = self.omega_n + self.pll_kp * v_q_pll + x_pll
        dy[5] = self.pll_ki * v_q_pll

        for b in range(self.n_b):
            if self.comm[b]:
                v_in = self._phase_voltage(self.ph_in[b], b, t, vd, vq)
                v_out = self._phase_voltage(self.ph_out[b], b, t, vd, vq)
                if self.rail[b] > 0:
                    dy[6 + b] = (v_in - v_out) / (2.0 * self.l_c) + 0.5 * di
                else:
                    dy[6 + b] = (v_out - v_in) / (2.0 * self.l_c) + 0.5 * di
            else:
                dy[6 + b] = 0.0

    def _rk4(self, t, y, h):
        n = self.ny
        k1 = [0.0] * n
        k2 = [0.0] * n
        k3 = [0.0] * n
        k4 = [0.0] * n
        tmp = [0.0] * n
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
        out = [0.0] * n
        for i in range(n):
            out[i] = y[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        return out

    # -- events ----------------------------------------------------------------

    def _event_values(self, t, y, ev):
        if self.load_kind == LOAD_ELECTROLYZER:
            i_dc = y[0]
        else:
            i_dc = self._i_prescribed(t)
        for b in range(self.n_b):
            target = -PI_3 - self.phi[b] + y[3] + self.m[b] * PI_3
            ev[b] = y[4] - target
            if self.comm[b]:
                ev[self.n_b + b] = y[6 + b] - i_dc
            else:
                ev[self.n_b + b] = -1.0

    def _apply_event(self, idx, t):
        if idx < self.n_b:
            b = idx
            if self.comm[b]:
                raise CommutationFailure(
                    f"firing pulse at t={t:.9f}s while bridge {b} is still "
                    f"commutating (overlap exceeds 60 degrees)")
            k0 = self.m[b] % 6          # 0-based index of the fired thyristor
            self.comm[b] = 1
            self.rail[b] = _COMM_RAIL[k0]
            self.ph_in[b] = _COMM_IN[k0]
            self.ph_out[b] = _COMM_OUT[k0]
            self.pending_s[b] = k0
            self.y[6 + b] = 0.0
            self.m[b] += 1
            self.n_fires += 1
        else:
            b = idx - self.n_b
            self.comm[b] = 0
            self.s[b] = self.pending_s[b]
            self.y[6 + b] = 0.0
            self.n_commutations += 1

    def _try_step(self, h):
        """One RK4 step of size h; stops at the earliest event inside it."""
        t0 = self.t
        y0 = self.y
        ne = 2 * self.n_b
        e0 = [0.0] * ne
        e1 = [0.0] * ne
        em = [0.0] * ne
        self._event_values(t0, y0, e0)
        y1 = self._rk4(t0, y0, h)
        self._event_values(t0 + h, y1, e1)

        h_ev = -1.0
        idx_ev = -1
        for i in range(ne):
            if e0[i] < 0.0 <= e1[i]:
                lo, hi = 0.0, h
                while hi - lo > self.bisect_tol:
                    mid = 0.5 * (lo + hi)
                    ym = self._rk4(t0, y0, mid)
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
            self.y = y1
            return
        self.y = self._rk4(t0, y0, h_ev)
        self.t = t0 + h_ev
        self._apply_event(idx_ev, self.t)

    # -- outputs ---------------------------------------------------------------

    def _outputs(self, t, y):
        """(i_dc, v_dc, ia, ib, ic) at the grid connection point."""
        vd, vq = self._grid_dq(t)
        if self.load_kind == LOAD_ELECTROLYZER:
            i_dc = y[0]
        else:
            i_dc = self._i_prescribed(t)

        e_sum = 0.0
        l_sum = 0.0
        i_al = 0.0
        i_be = 0.0
        for b in range(self.n_b):
            ph = [0.0, 0.0, 0.0]
            if self.comm[b]:
                itr = y[6 + b]
                v_in = self._phase_voltage(self.ph_in[b], b, t, vd, vq)
                v_out = self._phase_voltage(self.ph_out[b], b, t, vd, vq)
                if self.rail[b] > 0:
                    v_n = self._phase_voltage(_NEG_PHASE[self.s[b]], b, t, vd, vq)
                    e_sum += 0.5 * (v_in + v_out) - v_n
                    ph[self.ph_in[b]] += itr
                    ph[self.ph_out[b]] += i_dc - itr
                    ph[_NEG_PHASE[self.s[b]]] -= i_dc
                else:
                    v_p = self._phase_voltage(_POS_PHASE[self.s[b]], b, t, vd, vq)
                    e_sum += v_p - 0.5 * (v_in + v_out)
                    ph[_POS_PHASE[self.s[b]]] += i_dc
                    ph[self.ph_in[b]] -= itr
                    ph[self.ph_out[b]] -= i_dc - itr
                l_sum += 1.5 * self.l_c
            else:
                v_p = self._phase_voltage(_POS_PHASE[self.s[b]], b, t, vd, vq)
                v_n = self._phase_voltage(_NEG_PHASE[self.s[b]], b, t, vd, vq)
                e_sum += v_p - v_n
                ph[_POS_PHASE[self.s[b]]] += i_dc
                ph[_NEG_PHASE[self.s[b]]] -= i_dc
                l_sum += 2.0 * self.l_c
            # phase-shift transformer: voltages rotate by +phi, currents by
            # -phi, so power is conserved and low harmonics cancel
            al = ph[0]
            be = (ph[1] - ph[2]) / math.sqrt(3.0)
            c = math.cos(self.phi[b])
            s = math.sin(self.phi[b])
            i_al += al * c + be * s
            i_be += -al * s + be * c

        if self.load_kind == LOAD_ELECTROLYZER:
            v1 = y[1]
            di = (e_sum - self.r0 * i_dc - v1 - self.v_rev) / (self.l_d + l_sum)
        else:
            di = self._di_prescribed(t)
        v_dc = e_sum - l_sum * di
        ia = i_al
        ib = -0.5 * i_al + 0.5 * math.sqrt(3.0) * i_be
        ic = -0.5 * i_al - 0.5 * math.sqrt(3.0) * i_be
        return i_dc, v_dc, ia, ib, ic

    def _mask(self):
        mask = 0
        for b in range(self.n_b):
            s = self.s[b]
            mask |= 1 << (6 * b + s)
            mask |= 1 << (6 * b + (s + 5) % 6)
            if self.comm[b]:
                mask |= 1 << (6 * b + self.pending_s[b])
        return mask

    # -- main loop ---------------------------------------------------------------

    def run(self, n_steps, stride, average=False):
        """Advance n_steps fixed steps; record every stride-th boundary.

        With ``average`` each recorded electrical sample is the boxcar mean
        of the ``stride`` fine-step values ending at the record time, which
        suppresses aliasing of discontinuous switching waveforms; the boxcar
        response must then be compensated by the consumer.

        Returns column lists: t, i_dc, v_dc, ia, ib, ic, alpha, theta_pll, mask.
        """
        rec_t = []
        rec_i = []
        rec_v = []
        rec_a = []
        rec_b = []
        rec_c = []
        rec_al = []
        rec_th = []
        rec_m = []
        t_base = self.t
        dt = self.dt
        acc = [0.0] * 5
        for k in range(n_steps):
            t_next = t_base + (k + 1) * dt
            while self.t < t_next - 1e-13:
                self._try_step(t_next - self.t)
            self.t = t_next
            if average:
                out = self._outputs(self.t, self.y)
                for j in range(5):
                    acc[j] += out[j]
            if (k + 1) % stride == 0:
                if average:
                    i_dc, v_dc, ia, ib, ic = (v / stride for v in acc)
                    acc = [0.0] * 5
                else:
                    i_dc, v_dc, ia, ib, ic = self._outputs(self.t, self.y)
                rec_t.append(self.t)
                rec_i.append(i_dc)
                rec_v.append(v_dc)
                rec_a.append(ia)
                rec_b.append(ib)
                rec_c.append(ic)
                rec_al.append(self.y[3])
                rec_th.append(self.y[4])
                rec_m.append(self._mask())
        return rec_t, rec_i, rec_v, rec_a, rec_b, rec_c, rec_al, rec_th, rec_m
