# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the actor-critic hot path.

Same contract and weight layout as _kernels_py; see that module for the
reference semantics. Loops are arranged as contiguous saxpy/map passes over
stack-local accumulators (forward passes read weights transposed) so the
compiler can vectorize them, including the tanh maps via libmvec.
"""

import numpy as np

from libc.math cimport exp, log, pow, sqrt, tanh

NAME = "compiled"
N_STATE = 5

# stack-buffer cap on hidden-layer width
MAX_HIDDEN = 512

cdef enum:
    NIN = 5
    MAXH = 512


cdef void _transpose(const double* w, int rows, int cols, double* wt) noexcept nogil:
    cdef int r, c
    for r in range(rows):
        for c in range(cols):
            wt[c * rows + r] = w[r * cols + c]


cdef void _transpose_net(const double* th, int h1, int h2, int nout,
                         double* w1t, double* w2t, double* w3t) noexcept nogil:
    cdef const double* w1 = th
    cdef const double* w2 = th + h1 * NIN + h1
    cdef const double* w3 = w2 + h2 * h1 + h2
    _transpose(w1, h1, NIN, w1t)
    _transpose(w2, h2, h1, w2t)
    _transpose(w3, nout, h2, w3t)


cdef void _net_forward(const double* th, const double* w1t, const double* w2t,
                       const double* w3t, int h1, int h2, int nout,
                       const double* x, double* a1, double* a2,
                       double* out) noexcept nogil:
    """Forward one row; a1/a2 receive the hidden activations for the backward pass."""
    cdef const double* b1 = th + h1 * NIN
    cdef const double* b2 = th + h1 * NIN + h1 + h2 * h1
    cdef const double* b3 = b2 + h2 + nout * h2
    cdef double z[MAXH]
    cdef double xk
    cdef int i, k
    for i in range(h1):
        z[i] = b1[i]
    for k in range(NIN):
        xk = x[k]
        for i in range(h1):
            z[i] += w1t[k * h1 + i] * xk
    for i in range(h1):
        a1[i] = tanh(z[i])
    for i in range(h2):
        z[i] = b2[i]
    for k in range(h1):
        xk = a1[k]
        for i in range(h2):
            z[i] += w2t[k * h2 + i] * xk
    for i in range(h2):
        a2[i] = tanh(z[i])
    for i in range(nout):
        out[i] = b3[i]
    for k in range(h2):
        xk = a2[k]
        for i in range(nout):
            out[i] += w3t[k * nout + i] * xk


cdef void _net_backward(const double* th, int h1, int h2, int nout,
                        const double* x, const double* a1, const double* a2,
                        const double* gout, double* gth) noexcept nogil:
    """Accumulate parameter gradients given d(loss)/d(output pre-activation)."""
    cdef const double* w2 = th + h1 * NIN + h1
    cdef const double* w3 = w2 + h2 * h1 + h2
    cdef double* gw1 = gth
    cdef double* gb1 = gth + h1 * NIN
    cdef double* gw2 = gb1 + h1
    cdef double* gb2 = gw2 + h2 * h1
    cdef double* gw3 = gb2 + h2
    cdef double* gb3 = gw3 + nout * h2
    cdef double dz1[MAXH]
    cdef double dz2[MAXH]
    cdef double g
    cdef int i, k
    for k in range(h2):
        dz2[k] = 0.0
    for i in range(nout):
        g = gout[i]
        gb3[i] += g
        for k in range(h2):
            gw3[i * h2 + k] += g * a2[k]
        for k in range(h2):
            dz2[k] += g * w3[i * h2 + k]
    for k in range(h2):
        dz2[k] *= 1.0 - a2[k] * a2[k]
    for k in range(h1):
        dz1[k] = 0.0
    for i in range(h2):
        g = dz2[i]
        gb2[i] += g
        for k in range(h1):
            gw2[i * h1 + k] += g * a1[k]
        for k in range(h1):
            dz1[k] += g * w2[i * h1 + k]
    for k in range(h1):
        dz1[k] *= 1.0 - a1[k] * a1[k]
    for i in range(h1):
        g = dz1[i]
        gb1[i] += g
        for k in range(NIN):
            gw1[i * NIN + k] += g * x[k]


cdef void _check_width(int h1, int h2):
    if h1 > MAXH or h2 > MAXH or h1 < 1 or h2 < 1:
        raise ValueError(f"hidden widths must be in 1..{MAXH}, got ({h1}, {h2})")


cdef class _Scratch:
    """Per-call heap scratch: transposed weights and activation rows."""

    cdef double[::1] aw1t, aw2t, aw3t, cw1t, cw2t, cw3t, act1, act2

    def __cinit__(self, int h1, int h2):
        self.aw1t = np.empty(h1 * NIN, dtype=np.float64)
        self.aw2t = np.empty(h2 * h1, dtype=np.float64)
        self.aw3t = np.empty(2 * h2, dtype=np.float64)
        self.cw1t = np.empty(h1 * NIN, dtype=np.float64)
        self.cw2t = np.empty(h2 * h1, dtype=np.float64)
        self.cw3t = np.empty(h2, dtype=np.float64)
        self.act1 = np.empty(h1, dtype=np.float64)
        self.act2 = np.empty(h2, dtype=np.float64)

    cdef void refresh(self, const double* ath, const double* cth,
                      int h1, int h2) noexcept nogil:
        _transpose_net(ath, h1, h2, 2, &self.aw1t[0], &self.aw2t[0], &self.aw3t[0])
        _transpose_net(cth, h1, h2, 1, &self.cw1t[0], &self.cw2t[0], &self.cw3t[0])


def probs_values(double[::1] actor_theta, double[::1] critic_theta, int h1, int h2,
                 double[:, ::1] x):
    """Action probabilities and value estimates for a batch of states."""
    _check_width(h1, h2)
    cdef int n = x.shape[0]
    probs_arr = np.empty((n, 2), dtype=np.float64)
    values_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] probs = probs_arr
    cdef double[::1] values = values_arr
    cdef _Scratch s = _Scratch(h1, h2)
    cdef const double* ath = &actor_theta[0]
    cdef const double* cth = &critic_theta[0]
    cdef double logits[2]
    cdef double vout[1]
    cdef double zmax, e0, e1
    cdef int t
    with nogil:
        s.refresh(ath, cth, h1, h2)
        for t in range(n):
            _net_forward(ath, &s.aw1t[0], &s.aw2t[0], &s.aw3t[0], h1, h2, 2,
                         &x[t, 0], &s.act1[0], &s.act2[0], logits)
            zmax = logits[0] if logits[0] > logits[1] else logits[1]
            e0 = exp(logits[0] - zmax)
            e1 = exp(logits[1] - zmax)
            probs[t, 0] = e0 / (e0 + e1)
            probs[t, 1] = e1 / (e0 + e1)
            _net_forward(cth, &s.cw1t[0], &s.cw2t[0], &s.cw3t[0], h1, h2, 1,
                         &x[t, 0], &s.act1[0], &s.act2[0], vout)
            values[t] = vout[0]
    return probs_arr, values_arr


cdef void _grads_pass(const double* ath, const double* cth, _Scratch s,
                      int h1, int h2,
                      double[:, ::1] x, long[::1] actions, double[::1] old_logp,
                      double[::1] returns, double[::1] advantages,
                      double clip_eps, double prob_floor,
                      double* ga, double* gc, double* losses) noexcept nogil:
    cdef int n = x.shape[0]
    cdef double logits[2]
    cdef double vout[1]
    cdef double gl[2]
    cdef double gv[1]
    cdef double zmax, e0, e1, p0, p1, pa, pa_floored, ratio, clipped
    cdef double s_unclipped, s_clipped, g_ratio, g_pa, diff
    cdef double aloss = 0.0, closs = 0.0
    cdef double inv_n = 1.0 / n
    cdef int t
    cdef long a
    s.refresh(ath, cth, h1, h2)
    for t in range(n):
        _net_forward(ath, &s.aw1t[0], &s.aw2t[0], &s.aw3t[0], h1, h2, 2,
                     &x[t, 0], &s.act1[0], &s.act2[0], logits)
        zmax = logits[0] if logits[0] > logits[1] else logits[1]
        e0 = exp(logits[0] - zmax)
        e1 = exp(logits[1] - zmax)
        p0 = e0 / (e0 + e1)
        p1 = e1 / (e0 + e1)
        a = actions[t]
        pa = p1 if a == 1 else p0
        pa_floored = pa if pa > prob_floor else prob_floor
        ratio = exp(log(pa_floored) - old_logp[t])
        clipped = ratio
        if clipped < 1.0 - clip_eps:
            clipped = 1.0 - clip_eps
        elif clipped > 1.0 + clip_eps:
            clipped = 1.0 + clip_eps
        s_unclipped = ratio * advantages[t]
        s_clipped = clipped * advantages[t]
        if s_unclipped <= s_clipped:
            aloss -= s_unclipped
            g_ratio = advantages[t] * (-inv_n)
        else:
            aloss -= s_clipped
            g_ratio = 0.0
        if pa > prob_floor:
            g_pa = g_ratio * ratio / pa_floored
        else:
            g_pa = 0.0
        gl[0] = -g_pa * pa * p0
        gl[1] = -g_pa * pa * p1
        gl[a] += g_pa * pa
        _net_backward(ath, h1, h2, 2, &x[t, 0], &s.act1[0], &s.act2[0], gl, ga)

        _net_forward(cth, &s.cw1t[0], &s.cw2t[0], &s.cw3t[0], h1, h2, 1,
                     &x[t, 0], &s.act1[0], &s.act2[0], vout)
        diff = vout[0] - returns[t]
        closs += diff * diff
        gv[0] = 2.0 * inv_n * diff
        _net_backward(cth, h1, h2, 1, &x[t, 0], &s.act1[0], &s.act2[0], gv, gc)
    losses[0] = aloss * inv_n
    losses[1] = closs * inv_n


def ppo_grads(double[::1] actor_theta, double[::1] critic_theta, int h1, int h2,
              double[:, ::1] x, long[::1] actions, double[::1] old_logp,
              double[::1] returns, double[::1] advantages,
              double clip_eps, double prob_floor):
    """Gradients of the clipped-surrogate actor loss and the critic MSE loss."""
    _check_width(h1, h2)
    actor_grad = np.zeros(actor_theta.shape[0], dtype=np.float64)
    critic_grad = np.zeros(critic_theta.shape[0], dtype=np.float64)
    losses = np.zeros(2, dtype=np.float64)
    cdef double[::1] ga = actor_grad
    cdef double[::1] gc = critic_grad
    cdef double[::1] lv = losses
    cdef _Scratch s = _Scratch(h1, h2)
    with nogil:
        _grads_pass(&actor_theta[0], &critic_theta[0], s, h1, h2, x, actions,
                    old_logp, returns, advantages, clip_eps, prob_floor,
                    &ga[0], &gc[0], &lv[0])
    return actor_grad, critic_grad, float(losses[0]), float(losses[1])


cdef void _adam(double* theta, double* m, double* v, const double* g, int size,
                int t, double lr, double beta1, double beta2, double eps) noexcept nogil:
    cdef double corr1 = 1.0 - pow(beta1, t)
    cdef double corr2 = 1.0 - pow(beta2, t)
    cdef int i
    for i in range(size):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        theta[i] -= lr * (m[i] / corr1) / (sqrt(v[i] / corr2) + eps)


def ppo_update(double[::1] actor_theta, double[::1] actor_m, double[::1] actor_v,
               double[::1] critic_theta, double[::1] critic_m, double[::1] critic_v,
               int h1, int h2, double[:, ::1] x, long[::1] actions,
               double[::1] old_logp, double[::1] returns, double[::1] advantages,
               double clip_eps, double prob_floor, double lr, double beta1,
               double beta2, double adam_eps, int epochs, int t0):
    """Run `epochs` gradient/Adam passes in place; returns the new Adam step count."""
    _check_width(h1, h2)
    cdef int na = actor_theta.shape[0]
    cdef int nc = critic_theta.shape[0]
    actor_grad = np.empty(na, dtype=np.float64)
    critic_grad = np.empty(nc, dtype=np.float64)
    losses = np.zeros(2, dtype=np.float64)
    cdef double[::1] ga = actor_grad
    cdef double[::1] gc = critic_grad
    cdef double[::1] lv = losses
    cdef _Scratch s = _Scratch(h1, h2)
    cdef int t = t0
    cdef int epoch, i
    with nogil:
        for epoch in range(epochs):
            for i in range(na):
                ga[i] = 0.0
            for i in range(nc):
                gc[i] = 0.0
            _grads_pass(&actor_theta[0], &critic_theta[0], s, h1, h2, x, actions,
                        old_logp, returns, advantages, clip_eps, prob_floor,
                        &ga[0], &gc[0], &lv[0])
            t += 1
            _adam(&actor_theta[0], &actor_m[0], &actor_v[0], &ga[0], na,
                  t, lr, beta1, beta2, adam_eps)
            _adam(&critic_theta[0], &critic_m[0], &critic_v[0], &gc[0], nc,
                  t, lr, beta1, beta2, adam_eps)
    return t
