"""Finite-difference verification of backpropagated gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    per_param: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)
    h: float = 0.0
    tol: float = 0.0

    @property
    def max_rel_err(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def total_skipped(self) -> int:
        return sum(self.skipped.values())

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def summary(self) -> str:
        lines = [
            "%-28s %.3e" % (name, err)
            for name, err in sorted(self.per_param.items())
        ]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(
            "max rel err %.3e (tol %.1e, h %.1e, %d kink entries skipped): %s"
            % (self.max_rel_err, self.tol, self.h, self.total_skipped, verdict)
        )
        return "\n".join(lines)


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def finite_diff_check(loss_fn, params, h: float = 1e-5, tol: float = 1e-4,
                      max_entries: int = 0, rng=None,
                      kink_tol: float = None) -> GradCheckReport:
    """Compare backprop gradients of loss_fn against central differences.

    loss_fn is a zero-argument closure over `params` returning a scalar
    Tensor; it is re-evaluated with each coordinate perturbed by ±h.
    Checks every entry of every parameter unless max_entries caps the
    per-parameter count (entries then subsampled via rng). Parameters
    must be float64 for the differences to resolve at tol 1e-4.

    Entries whose [-h, +h] interval straddles a kink or argmax tie (ReLU
    boundary, pool tie) are excluded: there the forward and backward
    one-sided slopes disagree, while on smooth ground they agree to
    O(h). A kink inside the interval contaminates the central difference
    by half the one-sided disagreement, so the skip threshold defaults
    to tol itself, keeping any surviving contamination below the pass
    tolerance. The rule never consults the analytic gradient, so a
    backward bug at a smooth entry cannot hide behind it; skip counts
    are reported per parameter.
    """
    params = list(params)
    if kink_tol is None:
        kink_tol = tol
    for p in params:
        if p.values.dtype != np.float64:
            raise ValueError("finite_diff_check requires float64 parameters")
        p.grad = None
    loss = loss_fn()
    if not isinstance(loss, Tensor) or loss.values.size != 1:
        raise ValueError("loss_fn must return a scalar Tensor")
    base = float(loss.values)
    loss.backward()
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.values)
        for p in params
    ]

    report = GradCheckReport(h=h, tol=tol)
    for pi, p in enumerate(params):
        flat = p.values.ravel()
        n = flat.size
        if max_entries and n > max_entries:
            if rng is None:
                rng = np.random.default_rng(0)
            entries = rng.choice(n, size=max_entries, replace=False)
        else:
            entries = range(n)
        worst = 0.0
        skipped = 0
        for j in entries:
            orig = flat[j]
            flat[j] = orig + h
            lo_hi = float(loss_fn().values)
            flat[j] = orig - h
            lo_lo = float(loss_fn().values)
            flat[j] = orig
            forward = (lo_hi - base) / h
            backward = (base - lo_lo) / h
            if abs(forward - backward) > kink_tol * max(abs(forward), abs(backward), 1e-8):
                skipped += 1
                continue
            fd = (lo_hi - lo_lo) / (2.0 * h)
            worst = max(worst, relative_error(fd, float(analytic[pi].ravel()[j])))
        name = p.name or f"param[{pi}]"
        report.per_param[name] = worst
        report.skipped[name] = skipped
    return report
