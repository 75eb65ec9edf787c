#!/usr/bin/env python3
"""Independent single-layer trace used to freeze the expected CLS embedding
in test_backbone.cpp ("hand-traced one-layer forward"). Mirrors the layer
arithmetic with plain numpy; run it to regenerate the constants."""

import numpy as np


def layer_norm(x, gamma, beta, eps):
    mean = x.mean()
    var = ((x - mean) ** 2).mean()
    return gamma * (x - mean) / np.sqrt(var + eps) + beta


def gelu(x):
    c = np.sqrt(2.0 / np.pi)
    return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x**3)))


def main():
    tok_cls = np.array([0.1, -0.2])
    pos0 = np.array([0.05, 0.3])

    wq = np.array([[0.5, -0.3], [0.2, 0.1]])
    bq = np.array([0.01, -0.02])
    wk = np.array([[-0.4, 0.25], [0.3, 0.15]])
    bk = np.array([0.0, 0.05])
    wv = np.array([[0.6, -0.1], [-0.2, 0.35]])
    bv = np.array([0.02, 0.0])
    wo = np.array([[0.9, 0.2], [-0.3, 0.4]])
    bo = np.array([-0.01, 0.03])
    w1 = np.array([[0.7, -0.5], [0.1, 0.8]])
    b1 = np.array([0.0, 0.1])
    w2 = np.array([[0.45, -0.15], [0.25, 0.6]])
    b2 = np.array([0.05, -0.05])
    ln1_g, ln1_b = np.array([1.1, 0.9]), np.array([0.02, -0.01])
    ln2_g, ln2_b = np.array([0.95, 1.05]), np.array([0.0, 0.01])
    eps = 1e-5

    x = tok_cls + pos0
    # Single position: attention over one key is the identity on v.
    v = x @ wv + bv
    attn = v @ wo + bo
    z = layer_norm(x + attn, ln1_g, ln1_b, eps)
    ff = gelu(z @ w1 + b1) @ w2 + b2
    h = layer_norm(z + ff, ln2_g, ln2_b, eps)
    print(", ".join(f"{u:.17g}" for u in h))


if __name__ == "__main__":
    main()
