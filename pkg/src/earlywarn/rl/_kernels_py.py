"""Pure-numpy kernels for the actor-critic hot path.

Same call surface as the compiled module; used when the extension is not
built or when EARLYWARN_BACKEND=python. Weights live in flat float64 vectors
laid out as [W1 (h1 x 5), b1, W2 (h2 x h1), b2, W3 (out x h2), b3]; hidden
activations are tanh, the actor head is a 2-way softmax, the critic head a
scalar.
"""

from __future__ import annotations

import numpy as np

NAME = "python"
N_STATE = 5


def _views(theta, h1, h2, out):
    o = 0
    w1 = theta[o:o + h1 * N_STATE].reshape(h1, N_STATE); o += h1 * N_STATE
    b1 = theta[o:o + h1]; o += h1
    w2 = theta[o:o + h2 * h1].reshape(h2, h1); o += h2 * h1
    b2 = theta[o:o + h2]; o += h2
    w3 = theta[o:o + out * h2].reshape(out, h2); o += out * h2
    b3 = theta[o:o + out]; o += out
    if o != theta.shape[0]:
        raise ValueError(f"theta has {theta.shape[0]} entries, layout needs {o}")
    return w1, b1, w2, b2, w3, b3


def _forward(views, x):
    w1, b1, w2, b2, w3, b3 = views
    h1 = np.tanh(x @ w1.T + b1)
    h2 = np.tanh(h1 @ w2.T + b2)
    return h1, h2, h2 @ w3.T + b3


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def probs_values(actor_theta, critic_theta, h1, h2, x):
    """Action probabilities and value estimates for a batch of states."""
    _, _, logits = _forward(_views(actor_theta, h1, h2, 2), x)
    _, _, vout = _forward(_views(critic_theta, h1, h2, 1), x)
    return _softmax(logits), vout[:, 0].copy()


def _backward(views, x, a1, a2, grad_out, grad_views):
    """Accumulate parameter gradients given d(loss)/d(output pre-activation)."""
    w1, _, w2, _, w3, _ = views
    gw1, gb1, gw2, gb2, gw3, gb3 = grad_views
    gw3 += grad_out.T @ a2
    gb3 += grad_out.sum(axis=0)
    dz2 = (grad_out @ w3) * (1.0 - a2 * a2)
    gw2 += dz2.T @ a1
    gb2 += dz2.sum(axis=0)
    dz1 = (dz2 @ w2) * (1.0 - a1 * a1)
    gw1 += dz1.T @ x
    gb1 += dz1.sum(axis=0)


def ppo_grads(actor_theta, critic_theta, h1, h2, x, actions, old_logp, returns,
              advantages, clip_eps, prob_floor):
    """Gradients of the clipped-surrogate actor loss and the value-regression critic loss.

    Returns (actor_grad, critic_grad, actor_loss, critic_loss). Losses are
    mean-reduced over the batch; gradient flows through the unclipped ratio
    only where it attains the surrogate minimum (ties go to the unclipped
    branch), and probabilities are floored before the log.
    """
    n = x.shape[0]
    rows = np.arange(n)

    aviews = _views(actor_theta, h1, h2, 2)
    a1, a2, logits = _forward(aviews, x)
    probs = _softmax(logits)
    pa = probs[rows, actions]
    pa_floored = np.maximum(pa, prob_floor)
    ratio = np.exp(np.log(pa_floored) - old_logp)
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    s_unclipped = ratio * advantages
    s_clipped = clipped * advantages
    actor_loss = -np.minimum(s_unclipped, s_clipped).mean()

    g_ratio = np.where(s_unclipped <= s_clipped, advantages, 0.0) * (-1.0 / n)
    g_pa = np.where(pa > prob_floor, g_ratio * ratio / pa_floored, 0.0)
    grad_logits = -(g_pa * pa)[:, None] * probs
    grad_logits[rows, actions] += g_pa * pa
    actor_grad = np.zeros_like(actor_theta)
    _backward(aviews, x, a1, a2, grad_logits, _views(actor_grad, h1, h2, 2))

    cviews = _views(critic_theta, h1, h2, 1)
    c1, c2, vout = _forward(cviews, x)
    diff = vout[:, 0] - returns
    critic_loss = float(np.mean(diff * diff))
    critic_grad = np.zeros_like(critic_theta)
    _backward(cviews, x, c1, c2, (2.0 / n) * diff[:, None], _views(critic_grad, h1, h2, 1))

    return actor_grad, critic_grad, float(actor_loss), critic_loss


def _adam(theta, m, v, grad, t, lr, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    theta -= lr * mhat / (np.sqrt(vhat) + eps)


def ppo_update(actor_theta, actor_m, actor_v, critic_theta, critic_m, critic_v,
               h1, h2, x, actions, old_logp, returns, advantages,
               clip_eps, prob_floor, lr, beta1, beta2, adam_eps, epochs, t0):
    """Run `epochs` gradient/Adam passes in place; returns the new Adam step count."""
    t = t0
    for _ in range(epochs):
        actor_grad, critic_grad, _, _ = ppo_grads(
            actor_theta, critic_theta, h1, h2, x, actions, old_logp, returns,
            advantages, clip_eps, prob_floor)
        t += 1
        _adam(actor_theta, actor_m, actor_v, actor_grad, t, lr, beta1, beta2, adam_eps)
        _adam(critic_theta, critic_m, critic_v, critic_grad, t, lr, beta1, beta2, adam_eps)
    return t
