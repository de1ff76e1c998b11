"""
The recurrence h_t = z_t h~_t + (1 - z_t) h_{t-1} two ways: one step at a
time, and all at once with a lower-triangular decay matrix.
"""
import numpy as np

from qrn import scan

np.set_printoptions(precision=4, suppress=True)

# three time steps, scalar gates
z = np.array([0.9, 0.5, 0.2])
D = scan.build_decay_matrix(z).data
print(D)
# row t, column i holds prod_{j=i+1..t} (1 - z_j); z_1 never shows up

Ht = np.array([[1.0], [2.0], [-1.0]])
Z = z[:, None]
print(scan.scan_scalar(Z, Ht).data.ravel())
print(scan.sequential_scan(Z, Ht).data.ravel())

"""
Vector gates: every hidden dimension gets its own decay matrix
"""
rng = np.random.default_rng(0)
Z = 1 / (1 + np.exp(-rng.normal(size=(6, 4))))
Ht = np.tanh(rng.normal(size=(6, 4)))
par = scan.scan_vector(Z, Ht).data
seq = scan.sequential_scan(Z, Ht).data
print(np.abs(par - seq).max())  # rounding noise only

# a gate of exactly 1 wipes the past; log(0) is clamped so nothing overflows
print(scan.build_decay_matrix(np.ones(4)).data)

"""
Timing. The parallel form does O(T^2) work instead of O(T), but as a few
large matrix products it still beats the Python loop.
"""
for T in (10, 50, 100):
    print(scan.benchmark_scan(T, 50, 32, repeats=3).line())
