"""Decaying anisotropic radial basis kernels.

Every kernel is a function of the squared Mahalanobis distance ``dm2``.
The shape exponent ``beta`` and the spread ``xi`` enter through

    u = dm2 ** (beta / 2) / xi

and the family picks the profile ``f(u)``.  Weights are zero at and beyond
the kernel's cutoff, so tiled and brute-force compositing see the same
footprint.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, InvalidParameterError

# render box of unbounded kernels, in the d_M units of the exp(-d^2/2) footprint
RENDER_SIGMAS = 3.0


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    HALF_COSINE = "half-cosine"
    RAISED_COSINE = "raised-cosine"
    MODULUS_SINC = "mod-sinc"
    INVERSE_MULTIQUADRATIC = "inv-multiquadratic"

    @property
    def bounded(self) -> bool:
        return self not in (Family.GAUSSIAN, Family.INVERSE_MULTIQUADRATIC)


def _analytic_cutoff_dm2(family: Family, beta: float, xi: float, lobes: int) -> float:
    if family is Family.HALF_COSINE:
        u_max = math.pi / 2
    elif family is Family.RAISED_COSINE:
        u_max = lobes * math.pi
    elif family is Family.MODULUS_SINC:
        u_max = (lobes + 1) * math.pi / 2
    else:
        # no natural support: box at 3 sigma-equivalents, i.e. u = 3**beta / 2
        return (RENDER_SIGMAS * (xi / 2.0) ** (1.0 / beta)) ** 2
    return (xi * u_max) ** (2.0 / beta)


@dataclass(frozen=True)
class KernelSpec:
    """One member of the kernel family.

    ``cutoff_dm2`` is filled in by :func:`make_kernel`; pass an explicit value
    only to widen or narrow the support (calibration does this for the
    unbounded families).
    """

    family: Family
    beta: float
    xi: float
    lobes: int = 1
    cutoff_dm2: float = field(default=float("nan"))
    name: str = ""

    @property
    def cutoff_dm(self) -> float:
        return math.sqrt(self.cutoff_dm2)

    def label(self) -> str:
        return self.name or self.family.value

    def with_cutoff(self, cutoff_dm2: float) -> "KernelSpec":
        if not cutoff_dm2 > 0:
            raise InvalidParameterError(f"cutoff_dm2 must be positive, got {cutoff_dm2}")
        return replace(self, cutoff_dm2=float(cutoff_dm2))

    def weight(self, dm2):
        return weight_and_derivative(self, dm2)[0]

    def weight_and_derivative(self, dm2):
        return weight_and_derivative(self, dm2)


@dataclass(frozen=True)
class KernelSample:
    dm2: float
    weight: float
    dweight_ddm2: float


def make_kernel(family, beta: float, xi: float, lobes: int = 1, name: str = "") -> KernelSpec:
    """Validate parameters and precompute the Mahalanobis cutoff."""
    family = Family(family)
    if not (np.isfinite(beta) and beta > 0):
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    if not (np.isfinite(xi) and xi > 0):
        raise InvalidParameterError(f"xi must be positive, got {xi}")
    if int(lobes) != lobes or lobes < 1:
        raise InvalidParameterError(f"lobes must be a positive integer, got {lobes}")
    lobes = int(lobes)
    cutoff = _analytic_cutoff_dm2(family, float(beta), float(xi), lobes)
    return KernelSpec(family, float(beta), float(xi), lobes, cutoff, name)


def cutoff_dm2(spec: KernelSpec) -> float:
    return spec.cutoff_dm2


def analytic_support(spec: KernelSpec) -> KernelSpec:
    """Drop the render box of an unbounded kernel (bounded kernels are returned as is)."""
    return spec if spec.family.bounded else spec.with_cutoff(math.inf)


# Limit of f'(u) / u at u -> 0 for the profiles that are flat at the centre.
_FLAT_CENTRE_CURVATURE = {
    Family.HALF_COSINE: -1.0,
    Family.RAISED_COSINE: -0.5,
    Family.MODULUS_SINC: -1.0 / 3.0,
}


def _profile(family: Family, u: np.ndarray):
    """Return f(u) and f'(u)."""
    if family is Family.GAUSSIAN:
        f = np.exp(-u)
        return f, -f
    if family is Family.HALF_COSINE:
        return np.cos(u), -np.sin(u)
    if family is Family.RAISED_COSINE:
        return 0.5 + 0.5 * np.cos(u), -0.5 * np.sin(u)
    if family is Family.MODULUS_SINC:
        s = np.sin(u)
        f = np.abs(np.sinc(u / np.pi))
        small = u < 1e-4
        safe_u = np.where(small, 1.0, u)
        df = np.sign(s) * (safe_u * np.cos(safe_u) - np.sin(safe_u)) / safe_u**2
        df = np.where(small, -u / 3.0 + u**3 / 30.0, df)
        return f, df
    if family is Family.INVERSE_MULTIQUADRATIC:
        base = u + 1.0
        f = base**-0.5
        return f, -0.5 * base**-1.5
    raise InvalidParameterError(f"unknown family {family!r}")


def weight_and_derivative(spec: KernelSpec, dm2):
    """Vectorised footprint weight ``w(dm2)`` and ``dw/d(dm2)``.

    Inputs must be finite and non-negative.  Returns arrays shaped like
    ``dm2`` (numpy scalars for scalar input).
    """
    dm2 = np.asarray(dm2, dtype=np.float64)
    if not np.all(np.isfinite(dm2)) or np.any(dm2 < 0):
        raise DomainError("squared Mahalanobis distance must be finite and non-negative")

    beta, xi = spec.beta, spec.xi
    half_beta = 0.5 * beta
    if beta == 2.0:
        u = dm2 / xi
    elif beta == 1.0:
        u = np.sqrt(dm2) / xi
    else:
        u = dm2**half_beta / xi
    f, df = _profile(spec.family, u)

    centre = dm2 == 0.0
    safe = np.where(centre, 1.0, dm2)
    # du/d(dm2) = (beta/2) u / dm2
    dw = df * half_beta * u / safe

    if np.any(centre):
        if beta > 2.0:
            lim = 0.0
        elif beta == 2.0:
            lim = float(_profile(spec.family, np.zeros(1))[1][0]) / xi
        elif beta == 1.0 and spec.family in _FLAT_CENTRE_CURVATURE:
            lim = _FLAT_CENTRE_CURVATURE[spec.family] * 0.5 / xi**2
        else:
            # singular chain factor: no finite limit
            lim = 0.0
        dw = np.where(centre, lim, dw)

    inside = dm2 < spec.cutoff_dm2
    w = np.where(inside, np.clip(f, 0.0, 1.0), 0.0)
    dw = np.where(inside, dw, 0.0)
    return w[()], dw[()]


def evaluate(spec: KernelSpec, dm2: float) -> KernelSample:
    """Scalar evaluation returning a :class:`KernelSample`."""
    w, dw = weight_and_derivative(spec, float(dm2))
    return KernelSample(float(dm2), float(w), float(dw))


def grad_check_kernel(spec: KernelSpec, samples: int = 1000, step: float = 1e-5,
                      seed: int = 0, derivative=None) -> float:
    """Worst relative error of the analytic derivative against central differences.

    Points are drawn uniformly in ``(10*step, cutoff - 10*step)``.  For the
    modulus sinc the bands around interior lobe boundaries are excluded as
    well.  ``derivative`` replaces the analytic derivative (used to check
    the checker).
    """
    if step <= 0 or samples <= 0:
        raise InvalidParameterError("step and samples must be positive")
    rng = np.random.default_rng(seed)
    band = 10 * step
    hi = spec.cutoff_dm2 - band
    if not spec.family.bounded:
        # unbounded kernels: stay where the profile is numerically non-trivial
        hi = min(hi, 50.0 * spec.xi ** (2.0 / spec.beta))
    x = rng.uniform(band, hi, size=samples)
    if spec.family is Family.MODULUS_SINC and spec.lobes > 1:
        k = np.arange(1, spec.lobes + 1)
        edges = (k * np.pi * spec.xi) ** (2.0 / spec.beta)
        near = np.any(np.abs(x[:, None] - edges[None, :]) < band, axis=1)
        x = x[~near]
    if derivative is None:
        analytic = weight_and_derivative(spec, x)[1]
    else:
        analytic = np.asarray(derivative(x), dtype=np.float64)
    fd = (spec.weight(x + step) - spec.weight(x - step)) / (2 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
    return float(np.max(np.abs(analytic - fd) / denom))


def derive_xi(family, beta: float, lobes: int = 1) -> float:
    """Spread that makes the kernel's render radius equal the Gaussian 3-sigma box."""
    family = Family(family)
    target = RENDER_SIGMAS**beta  # u-domain edge measured at d_M = 3
    if family is Family.HALF_COSINE:
        return target / (math.pi / 2)
    if family is Family.RAISED_COSINE:
        return target / (lobes * math.pi)
    if family is Family.MODULUS_SINC:
        return target / ((lobes + 1) * math.pi / 2)
    if family is Family.GAUSSIAN:
        return 2.0
    raise InvalidParameterError(
        "inverse multiquadratic has infinite support; xi is a free parameter"
    )


# name -> (family, beta, xi, provenance of xi)
PRESETS = {
    "gaussian": (Family.GAUSSIAN, 2.0, 2.0, "standard exp(-d^2/2) footprint"),
    "half-cosine-sq": (Family.HALF_COSINE, 2.0, 18.0 / math.pi, "published"),
    "raised-cosine": (Family.RAISED_COSINE, 1.0, 2.5 / math.pi, "published"),
    "raised-cosine-matched": (Family.RAISED_COSINE, 1.0, 3.0 / math.pi, "extent-matched"),
    "mod-sinc": (Family.MODULUS_SINC, 1.0, 3.0 / math.pi, "extent-matched"),
    "inv-multiquadratic": (Family.INVERSE_MULTIQUADRATIC, 2.0, 2.0, "extent-matched"),
}

KERNEL_NAMES = ("gaussian", "half-cosine-sq", "raised-cosine", "mod-sinc", "inv-multiquadratic")


def preset(name: str, beta: float | None = None, xi: float | None = None,
           lobes: int | None = None) -> KernelSpec:
    """Build a kernel from a preset name, with optional overrides.

    ``name`` may carry inline overrides: ``"raised-cosine:xi=0.9,lobes=2"``.
    """
    base, _, tail = name.partition(":")
    if base not in PRESETS:
        raise InvalidParameterError(f"unknown kernel {base!r}")
    family, b, x, _ = PRESETS[base]
    n = 1
    if tail:
        for item in tail.split(","):
            key, eq, value = item.partition("=")
            key = key.strip()
            if not eq or key not in ("beta", "xi", "lobes"):
                raise InvalidParameterError(f"bad kernel override {item!r}")
            try:
                if key == "beta":
                    b = float(value)
                elif key == "xi":
                    x = float(value)
                else:
                    n = int(value)
            except ValueError:
                raise InvalidParameterError(f"bad kernel override {item!r}") from None
    if beta is not None:
        b = beta
    if xi is not None:
        x = xi
    if lobes is not None:
        n = lobes
    return make_kernel(family, b, x, n, name=base)
