"""Noise-budget algebra in peak-referred mechanical quanta."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass
from fractions import Fraction

SCHEMES = ("homodyne-conventional", "heterodyne-BAE")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class NoiseBudget:
    scheme: str
    eta: float
    cooperativity: float
    heating_coefficient: float
    n_imp_het: float
    n_imp_hom: float
    n_ba: float
    n_ba_th: float
    n_add: float
    n_add_sql: float
    n_add_th: float
    heisenberg_product: float
    c_opt: float
    n_add_min: float
    beats_sql: bool
    break_even: bool

    def rows(self):
        return [(k, v) for k, v in asdict(self).items()]


def _check(eta, C=None, beta=None, scheme=None):
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    if C is not None and not C > 0:
        raise ValueError(f"cooperativity must be > 0, got {C}")
    if beta is not None and beta < 0:
        raise ValueError(f"heating coefficient must be >= 0, got {beta}")
    if scheme is not None and scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")


def imprecision_hom(eta, C):
    return 1.0 / (16.0 * eta * C)


def imprecision_het(eta, C):
    return 1.0 / (8.0 * eta * C)


def added_noise(C, eta, beta, scheme):
    """n_add(C) for either scheme."""
    if scheme == "homodyne-conventional":
        return imprecision_hom(eta, C) + C
    return imprecision_het(eta, C) + beta * C


def _added_noise_exact(C: Fraction, eta: Fraction, beta: Fraction, scheme) -> Fraction:
    if scheme == "homodyne-conventional":
        return 1 / (16 * eta * C) + C
    return 1 / (8 * eta * C) + beta * C


def golden_section_minimum(eta, beta, scheme, max_iter=400):
    """Numerical minimizer of n_add(C), independent of the closed form.

    Candidate points are floats, but the objective is evaluated in exact
    rational arithmetic so that comparisons stay meaningful down to the
    last ulp, well below the sqrt(eps) floor of a float objective.
    """
    fe, fb = Fraction(eta), Fraction(beta)

    def f(c):
        return _added_noise_exact(Fraction(c), fe, fb, scheme)

    # geometric bracket from C = 1
    a, b = 0.5, 1.0
    fa, fb_ = f(a), f(b)
    if fa < fb_:
        a, b, fa, fb_ = b, a, fb_, fa
        step = 0.5
    else:
        step = 2.0
    c = b * step
    fc = f(c)
    while fc < fb_:
        a, b, fa, fb_ = b, c, fb_, fc
        c = b * step
        fc = f(c)
    lo, hi = min(a, c), max(a, c)
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if hi - lo <= 4.0 * math.ulp(0.5 * (lo + hi)):
            break
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = f(x2)
    c_min = x1 if f1 < f2 else x2
    return c_min, float(f(c_min))


def optimal_cooperativity(eta, beta_heating, scheme="heterodyne-BAE", verify=True):
    """Closed-form optimum ``(C_opt, n_add_min)``.

    With ``verify`` the result is checked against a golden-section search
    and a ``RuntimeError`` is raised if they differ by more than 1e-8.
    """
    _check(eta, beta=beta_heating, scheme=scheme)
    if scheme == "homodyne-conventional":
        c_opt = 1.0 / (4.0 * math.sqrt(eta))
        n_min = 1.0 / math.sqrt(4.0 * eta)
    else:
        if beta_heating == 0:
            warnings.warn("zero heating: added noise falls without bound as C grows",
                          RuntimeWarning)
            return math.inf, 0.0
        c_opt = 1.0 / math.sqrt(8.0 * eta * beta_heating)
        n_min = math.sqrt(beta_heating / (2.0 * eta))
    if verify:
        c_num, n_num = golden_section_minimum(eta, beta_heating, scheme)
        if abs(c_num - c_opt) > 1e-8 * c_opt or abs(n_num - n_min) > 1e-8 * n_min:
            raise RuntimeError(f"optimum check failed: closed form ({c_opt}, {n_min}) "
                               f"vs search ({c_num}, {n_num})")
    return c_opt, n_min


def build_budget(eta, C, beta_heating, scheme="heterodyne-BAE") -> NoiseBudget:
    _check(eta, C, beta_heating, scheme)
    n_hom = imprecision_hom(eta, C)
    n_het = imprecision_het(eta, C)
    n_ba, n_ba_th = C, beta_heating * C
    sql = 1.0 / math.sqrt(4.0 * eta)
    n_th = math.sqrt(beta_heating / (2.0 * eta))
    if scheme == "homodyne-conventional":
        product = 4.0 * math.sqrt(n_hom * n_ba)
    else:
        product = 4.0 * math.sqrt(n_het * n_ba_th)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        c_opt, n_min = optimal_cooperativity(eta, beta_heating, scheme, verify=False)
    tie = math.isclose(n_min, sql, rel_tol=1e-12)
    return NoiseBudget(
        scheme=scheme, eta=eta, cooperativity=C, heating_coefficient=beta_heating,
        n_imp_het=n_het, n_imp_hom=n_hom, n_ba=n_ba, n_ba_th=n_ba_th,
        n_add=added_noise(C, eta, beta_heating, scheme), n_add_sql=sql, n_add_th=n_th,
        heisenberg_product=product, c_opt=c_opt, n_add_min=n_min,
        beats_sql=bool(n_min < sql and not tie), break_even=tie,
    )


def bae_advantage_db(total_non_bae, evaded):
    """Reduction from evading ``evaded`` of ``total_non_bae`` quanta.

    Returns ``(dB, fraction)`` with dB = 10 log10(total / (total - evaded)).
    """
    if evaded < 0 or total_non_bae <= 0:
        raise ValueError("need total > 0 and evaded >= 0")
    if evaded >= total_non_bae:
        raise ValueError(f"evaded ({evaded}) must be below the total ({total_non_bae})")
    db = 10.0 * math.log10(total_non_bae / (total_non_bae - evaded))
    return db, evaded / total_non_bae


def _fmt(v):
    if isinstance(v, bool) or isinstance(v, str):
        return str(v)
    return f"{v:.6g}"


def budget_table(b: NoiseBudget) -> str:
    """Aligned two-column plain-text table."""
    rows = [(k, _fmt(v)) for k, v in b.rows()]
    rows.append(("sql_ratio", _fmt(b.n_add_th / b.n_add_sql)))
    w = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{w}}  {v}" for k, v in rows) + "\n"


def budget_csv(b: NoiseBudget) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["quantity", "value"])
    for k, v in b.rows():
        wr.writerow([k, repr(v) if isinstance(v, float) else v])
    wr.writerow(["sql_ratio", repr(b.n_add_th / b.n_add_sql)])
    return buf.getvalue()
