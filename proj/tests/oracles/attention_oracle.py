# SPDX-License-Identifier: Apache-2.0
# Direct numpy transcription of the aggregation formulas. Prints the frozen
# values used by test_aggregator.cpp ("frozen oracle" case).
import numpy as np

H, D, M, K, N = 3, 2, 3, 2, 3
T, W_SELF, ALPHA, BETA = 0.7, 0.6, 0.5, 0.5

n_shared = D * H + D + M * 2 * D + M
n_total = n_shared + N * 2 * D * M
p = np.array([0.5 * np.sin(1.3 * i + 0.2) for i in range(n_total)])

enc_w = p[0:D * H].reshape(D, H)
enc_b = p[D * H:D * H + D]
off = D * H + D
exp_w = p[off:off + M * 2 * D].reshape(M, 2 * D)
off += M * 2 * D
exp_b = p[off:off + M]
off += M
gates = []
for i in range(N):
    g = p[off:off + D * M].reshape(D, M)
    off += 2 * D * M  # noise weights follow, unused with noise off
    gates.append(g)

u = np.array([[np.cos(0.7 * i + 1.1 * c) for c in range(H)] for i in range(N)])
e = u @ enc_w.T + enc_b

for i in range(N):
    logits = e[i] @ gates[i]
    top = np.argsort(-logits, kind="stable")[:K]
    c = np.zeros(M)
    z = np.exp(logits[top] - logits[top].max())
    c[top] = z / z.sum()
    nbrs = [j for j in range(N) if j != i]
    v = np.array([c @ (exp_w @ np.concatenate([e[j], e[i]]) + exp_b) for j in nbrs])
    w = np.exp((v - v.max()) / T)
    w /= w.sum()
    pers = W_SELF * u[i] + (1 - W_SELF) * sum(w[r] * u[j] for r, j in enumerate(nbrs))
    cos = pers @ u[i] / (np.linalg.norm(pers) * np.linalg.norm(u[i]))
    loss = ALPHA * np.sum((pers - u[i]) ** 2) + BETA * (1 - cos)
    print(f"client {i}")
    print("  mix   ", ", ".join(f"{x:.17g}" for x in c))
    print("  w     ", ", ".join(f"{x:.17g}" for x in w))
    print("  pers  ", ", ".join(f"{x:.17g}" for x in pers))
    print("  loss  ", f"{loss:.17g}")
