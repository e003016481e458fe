"""Slot-level cell scheduler kernels: round robin and proportional fair.

This is the one hot numeric loop in the platform (slots x UEs with a
sequential dependency through the proportional-fair average), shared by
the digital twin and the RAN simulator so both sides run the exact same
model.

Two interchangeable implementations, selected once at import:

* a scalar kernel compiled with numba ``@njit`` (default), and
* a per-slot vectorized numpy fallback, chosen when numba is missing or
  ``BAZAAR_NO_NUMBA=1`` is set.

Both perform the same float64 operations in the same order, so their
outputs are bit-identical (tests assert this). ``benchmarks/bench_sched.py``
compares their throughput.

Model, per slot t and UE i:
    rate_i(t) = eff_i * bandwidth * max(RATE_FLOOR, 1 + stddev * g_i(t))
with g the pre-drawn standard-normal fading matrix (UE-major order).
ROUND_ROBIN serves UE (t mod N). PROPORTIONAL_FAIR serves the UE with the
highest rate_i / avg_i, where avg starts at eff_i * bandwidth / N and is
smoothed with PF_ALPHA; ties break to the lowest UE index.
"""

from __future__ import annotations

import os

import numpy as np

PF_ALPHA = 0.1
RATE_FLOOR = 0.05

ROUND_ROBIN = 0
PROPORTIONAL_FAIR = 1

POLICY_IDS = {"ROUND_ROBIN": ROUND_ROBIN, "PROPORTIONAL_FAIR": PROPORTIONAL_FAIR}


def _schedule_scalar(eff, bandwidth, stddev, fading, policy):
    """Scalar reference kernel; compiled with numba when enabled."""
    n_ues, slots = fading.shape
    tput_sum = np.zeros(n_ues, dtype=np.float64)
    served = np.zeros(n_ues, dtype=np.int64)
    avg = np.empty(n_ues, dtype=np.float64)
    for i in range(n_ues):
        avg[i] = eff[i] * bandwidth / n_ues
    for t in range(slots):
        if policy == ROUND_ROBIN:
            sel = t % n_ues
            factor = 1.0 + stddev * fading[sel, t]
            if factor < RATE_FLOOR:
                factor = RATE_FLOOR
            rate_sel = eff[sel] * bandwidth * factor
        else:
            sel = 0
            best = -1.0
            rate_sel = 0.0
            for i in range(n_ues):
                factor = 1.0 + stddev * fading[i, t]
                if factor < RATE_FLOOR:
                    factor = RATE_FLOOR
                rate = eff[i] * bandwidth * factor
                ratio = rate / avg[i]
                if ratio > best:
                    best = ratio
                    sel = i
                    rate_sel = rate
            for i in range(n_ues):
                avg[i] = (1.0 - PF_ALPHA) * avg[i]
            avg[sel] += PF_ALPHA * rate_sel
        tput_sum[sel] += rate_sel
        served[sel] += 1
    return tput_sum, served


def _schedule_numpy(eff, bandwidth, stddev, fading, policy):
    """Per-slot vectorized fallback; op-for-op identical to the scalar kernel."""
    n_ues, slots = fading.shape
    tput_sum = np.zeros(n_ues, dtype=np.float64)
    served = np.zeros(n_ues, dtype=np.int64)
    avg = eff * bandwidth / n_ues
    rate_full = eff * bandwidth
    for t in range(slots):
        if policy == ROUND_ROBIN:
            sel = t % n_ues
            factor = 1.0 + stddev * fading[sel, t]
            if factor < RATE_FLOOR:
                factor = RATE_FLOOR
            rate_sel = eff[sel] * bandwidth * factor
        else:
            factor = np.maximum(1.0 + stddev * fading[:, t], RATE_FLOOR)
            rate = rate_full * factor
            sel = int(np.argmax(rate / avg))
            rate_sel = rate[sel]
            avg *= 1.0 - PF_ALPHA
            avg[sel] += PF_ALPHA * rate_sel
        tput_sum[sel] += rate_sel
        served[sel] += 1
    return tput_sum, served


def _pick_impl():
    if os.environ.get("BAZAAR_NO_NUMBA", "").lower() in ("1", "true", "yes"):
        return _schedule_numpy, "numpy"
    try:
        from numba import njit
    except ImportError:
        return _schedule_numpy, "numpy"
    return njit(cache=True)(_schedule_scalar), "numba"


_kernel, KERNEL_BACKEND = _pick_impl()


def draw_fading(n_ues: int, slots: int, seed: int) -> tuple[np.ndarray, np.random.Generator]:
    """Standard-normal fading matrix in (UE-major, slot-minor) order.

    Returns the generator too so callers (the RAN sim) can keep drawing
    from the same stream, e.g. for measurement noise.
    """
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n_ues, slots)), rng


def simulate_schedule(efficiencies, bandwidth_hz: float, fading_stddev: float,
                      fading: np.ndarray, policy) -> tuple[np.ndarray, np.ndarray]:
    """Run one scheduler over a pre-drawn fading matrix.

    Returns (per-UE mean throughput in bit/s, per-UE served-slot counts).
    """
    eff = np.ascontiguousarray(efficiencies, dtype=np.float64)
    fading = np.ascontiguousarray(fading, dtype=np.float64)
    if eff.ndim != 1 or fading.shape[0] != eff.shape[0]:
        raise ValueError("fading must be (n_ues, slots) matching efficiencies")
    policy_id = POLICY_IDS[policy] if isinstance(policy, str) else int(policy)
    if policy_id not in (ROUND_ROBIN, PROPORTIONAL_FAIR):
        raise ValueError(f"unknown policy {policy!r}")
    tput_sum, served = _kernel(eff, float(bandwidth_hz), float(fading_stddev),
                               fading, policy_id)
    slots = fading.shape[1]
    return tput_sum / slots, served


def simulate_with_seed(efficiencies, bandwidth_hz: float, slots: int,
                       fading_stddev: float, seed: int, policy):
    """Seeded end-to-end run. Returns (throughputs, served, generator)."""
    eff = np.asarray(efficiencies, dtype=np.float64)
    fading, rng = draw_fading(eff.shape[0], int(slots), seed)
    tput, served = simulate_schedule(eff, bandwidth_hz, fading_stddev, fading, policy)
    return tput, served, rng
