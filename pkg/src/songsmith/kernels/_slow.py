"""Pure Python / NumPy fallback kernels.

Mirrors ``songsmith.kernels._fast`` operation for operation. The LSTM gate
kernel is vectorized with NumPy ufuncs; the skip-gram inner loop keeps
scalar arithmetic in the exact order the compiled loop uses (same libm
calls, same update sequence), so both backends produce bit-identical
embeddings from the same inputs.
"""

import math

import numpy as np

_U64 = 0xFFFFFFFFFFFFFFFF
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


def lstm_gates_forward(preact, c_prev):
    """Fused LSTM cell pointwise math.

    preact is (B, 4H) laid out [input | forget | candidate | output];
    returns (out, cache) where out is (B, 2H) = [h ++ c].
    """
    b, h4 = preact.shape
    h = h4 // 4
    gi = _sigmoid(preact[:, :h])
    gf = _sigmoid(preact[:, h:2 * h])
    gg = np.tanh(preact[:, 2 * h:3 * h])
    go = _sigmoid(preact[:, 3 * h:])
    c = gf * c_prev + gi * gg
    tc = np.tanh(c)
    out = np.empty((b, 2 * h), dtype=np.float64)
    out[:, :h] = go * tc
    out[:, h:] = c
    return out, (gi, gf, gg, go, c_prev, tc)


def lstm_gates_backward(cache, d_out):
    gi, gf, gg, go, c_prev, tc = cache
    h = gi.shape[1]
    dh = d_out[:, :h]
    dc = d_out[:, h:] + dh * go * (1.0 - tc * tc)
    d_pre = np.empty((gi.shape[0], 4 * h), dtype=np.float64)
    d_pre[:, :h] = dc * gg * gi * (1.0 - gi)
    d_pre[:, h:2 * h] = dc * c_prev * gf * (1.0 - gf)
    d_pre[:, 2 * h:3 * h] = dc * gi * (1.0 - gg * gg)
    d_pre[:, 3 * h:] = dh * tc * go * (1.0 - go)
    dc_prev = dc * gf
    return d_pre, dc_prev


def _sigmoid(x):
    # exp(-|x|) <= 1, so neither branch can overflow
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sgns_epoch(centers, contexts, syn0, syn1, cum_table, negatives, lr, rng_state):
    """One pass of skip-gram negative-sampling updates over a pair list.

    Scalar loops on purpose: bit-identical to the compiled kernel. Returns
    (summed loss, new rng state). syn0/syn1 are updated in place.
    """
    dim = syn0.shape[1]
    loss = 0.0
    state = rng_state & _U64
    for p in range(len(centers)):
        c = int(centers[p])
        o = int(contexts[p])
        neu = [0.0] * dim
        for k in range(negatives + 1):
            if k == 0:
                target = o
                label = 1.0
            else:
                state = _xorshift(state)
                r = (state * 0x2545F4914F6CDD1D) & _U64
                target = _sample(cum_table, (r >> 11) * _INV_2_53)
                if target == o:
                    continue
                label = 0.0
            f = 0.0
            for d in range(dim):
                f += syn0[c, d] * syn1[target, d]
            if f > 30.0:
                f = 30.0
            elif f < -30.0:
                f = -30.0
            s = 1.0 / (1.0 + math.exp(-f))
            if label == 1.0:
                loss -= math.log(s)
            else:
                loss -= math.log(1.0 - s)
            g = (label - s) * lr
            for d in range(dim):
                tmp = syn1[target, d]
                neu[d] += g * tmp
                syn1[target, d] = tmp + g * syn0[c, d]
        for d in range(dim):
            syn0[c, d] += neu[d]
    return loss, state


def _xorshift(x):
    x ^= (x >> 12)
    x = (x ^ (x << 25)) & _U64
    x ^= (x >> 27)
    return x


def _sample(cum_table, u):
    # first index whose cumulative weight exceeds u * total
    x = u * cum_table[len(cum_table) - 1]
    lo = 0
    hi = len(cum_table) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum_table[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo
