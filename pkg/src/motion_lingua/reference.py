"""Naive reference implementation of the thresholds, detectors and labelling.

Plain Python loops over lists, written for readability rather than speed.
It shares no code with the vectorized pipeline and serves as its oracle
(``motion-lingua oracle-check`` and the test-suite).
"""

from __future__ import annotations

import math

WORDS = {
    "x": ("forward", "backward"),
    "y": ("left", "right"),
    "z": ("up", "down"),
    "pitch": ("up", "down"),
    "yaw": ("counterclockwise", "clockwise"),
}


def thresholds(norm_actions, t_base, beta, tau):
    """List of 7-lists: base threshold plus beta times the recent mean magnitude."""
    out = []
    for t in range(len(norm_actions)):
        first = max(0, t - tau + 1)
        row = []
        for i in range(7):
            history = [abs(norm_actions[s][i]) for s in range(first, t + 1)]
            row.append(t_base[i] + beta * (sum(history) / len(history)))
        out.append(row)
    return out


def window(t, dt, n_positions, anchor, fit):
    last = n_positions - 1
    if anchor == "forward":
        start, end = t, t + dt
    else:
        start, end = t - dt + 1, t + 1
    if fit == "shrink":
        if start < 0:
            start = 0
        if end > last:
            end = last
        return start, end
    span = dt if dt < last else last
    if end > last:
        return last - span, last
    if start < 0:
        return 0, span
    return start, end


def _sub(a, b):
    return [a[0] - b[0], a[1] - b[1], a[2] - b[2]]


def _norm(v):
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def verdict(p, t, T, windows, anchor, fit, direction_check):
    """(fast, mid, slow) booleans at step ``t`` for positions ``p``."""
    dt_fast, dt_mid, dt_slow = windows
    results = []
    for level, dt in enumerate(windows):
        start, end = window(t, dt, len(p), anchor, fit)
        net = _sub(p[end], p[start])
        size = _norm(net)
        steps = [_sub(p[k + 1], p[k]) for k in range(start, end)]
        if level == 0:
            results.append(size > 2 * T)
            continue
        if not steps:
            results.append(False)
            continue
        smallest = min(_norm(u) for u in steps)
        if level == 1:
            results.append(size > T and smallest > 0)
            continue
        ok = size > T and smallest > T / (2 * dt_slow)
        if ok and direction_check:
            for u in steps:
                if u[0] * net[0] + u[1] * net[1] + u[2] * net[2] <= 0:
                    ok = False
                    break
        results.append(ok)
    return tuple(results)


def positions(norm_actions):
    p = [[0.0, 0.0, 0.0]]
    for a in norm_actions:
        last = p[-1]
        p.append([last[0] + a[0], last[1] + a[1], last[2] + a[2]])
    return p


def label(norm_actions, gripper, p, t, thr, fired, windows, anchor, fit, cutoff, convention):
    """Canonical motion string at step ``t`` given its verdict's fired window."""
    n = len(norm_actions)
    dt_fast = windows[0]
    dt = windows[fired] if fired is not None else windows[1]
    start, end = window(t, dt, len(p), anchor, fit)
    a0 = min(start, n - 1)
    a1 = min(max(end, a0 + 1), n)
    acc = [p[end][k] - p[start][k] for k in range(3)]
    for k in (3, 4, 5):
        acc.append(sum(norm_actions[s][k] for s in range(a0, a1)))
    span_t = end - start
    span_r = a1 - a0
    exceeds = []
    for k in range(6):
        span = span_t if k < 3 else span_r
        exceeds.append(abs(acc[k]) > thr[t][k] * (span / dt_fast))
    motion = fired is not None

    def word(axis, value):
        pos, neg = WORDS[axis]
        if convention[axis] != pos:
            pos, neg = neg, pos
        return pos if value > 0 else neg

    moves = []
    if motion:
        chosen = [k for k in range(3) if exceeds[k]]
        if not chosen:
            best = 0
            for k in (1, 2):
                if abs(acc[k]) > abs(acc[best]):
                    best = k
            chosen = [best] if acc[best] != 0 else []
        for k in chosen:
            moves.append(word("xyz"[k], acc[k]))
    parts = []
    if moves:
        parts = ["move"] + moves
    if exceeds[4]:
        parts += ["tilt", word("pitch", acc[4])]
    if exceeds[5]:
        parts += ["rotate", word("yaw", acc[5])]
    before = gripper[a0 - 1] if a0 > 0 else gripper[a0]
    after = gripper[a1 - 1]
    before, after = before >= cutoff, after >= cutoff
    if after and not before:
        parts += ["open", "gripper"]
    elif before and not after:
        parts += ["close", "gripper"]
    return " ".join(parts) if parts else "stop"


def annotate(norm_actions, gripper, p, cfg, thr=None):
    """Reference labels, one canonical string per step.

    ``cfg`` is any object exposing the PipelineConfig attributes; the axis
    convention is read from it once and turned into a plain dict.
    """
    conv = cfg.axis_convention
    convention = {"x": conv.x, "y": conv.y, "z": conv.z, "pitch": conv.pitch, "yaw": conv.yaw}
    rows = [list(map(float, a)) for a in norm_actions]
    if p is None:
        p = positions(rows)
    else:
        p = [list(map(float, q)) for q in p]
    if thr is None:
        thr = thresholds(rows, cfg.t_base, cfg.beta, cfg.tau)
    out = []
    for t in range(len(rows)):
        T = (thr[t][0] + thr[t][1] + thr[t][2]) / 3
        v = verdict(p, t, T, cfg.windows, cfg.anchor, cfg.window_fit, cfg.slow_direction_check)
        fired = next((k for k in range(3) if v[k]), None)
        out.append(
            label(rows, list(gripper), p, t, thr, fired, cfg.windows, cfg.anchor,
                  cfg.window_fit, cfg.gripper_cutoff, convention)
        )
    return out
