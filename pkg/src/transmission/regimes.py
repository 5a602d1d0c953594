"""Regime classification for polynomial nonlinearity pairs.

Three families of sufficient conditions are checked, in order: global
boundedness (bulk sink dominating the interface source, or subquadratic
growth, or a sampled moment-balance certificate), dissipativity (quadratic
absorption of the coupled reaction terms below the embedding constant), and
finite-time blow-up (a quadratic gap for the alpha-weighted defect
functions, plus an initial-datum threshold).  All tail behavior is decided
exactly on the polynomial representation; finite-tau constants come from
dense grids with local refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .assembly import DiscreteOperator
from .constants import ConstantsReport
from .dynamics import Nonlinearity

_PRUNE = 1e-13


class PolyFunc:
    """Exact algebra on spans of |t|^a * t^b with b in {0, 1}.

    Closed under the operations the criteria need: sums, products,
    derivative, antiderivative, multiplication by t.  The leading pair
    (total degree a + b, coefficient) decides tail behavior exactly.
    """

    def __init__(self, terms: dict[tuple[float, int], float] | None = None):
        self.terms: dict[tuple[float, int], float] = {}
        for (a, b), c in (terms or {}).items():
            if c == 0.0:
                continue
            a, b = float(a), int(b)
            while b >= 2:          # t^2 == |t|^2
                a, b = a + 2.0, b - 2
            key = (a, b)
            self.terms[key] = self.terms.get(key, 0.0) + c
        self._prune()

    def _prune(self):
        scale = max((abs(c) for c in self.terms.values()), default=0.0)
        self.terms = {k: c for k, c in self.terms.items()
                      if abs(c) > _PRUNE * max(scale, 1.0)}

    @classmethod
    def from_nonlinearity(cls, nl: Nonlinearity) -> "PolyFunc":
        terms = {(float(e), 1): float(c) for c, e in nl.terms}
        if nl.constant:
            terms[(0.0, 0)] = terms.get((0.0, 0), 0.0) + nl.constant
        return cls(terms)

    # ---- algebra ----
    def __add__(self, other: "PolyFunc") -> "PolyFunc":
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0.0) + c
        return PolyFunc(out)

    def __sub__(self, other: "PolyFunc") -> "PolyFunc":
        return self + other.scale(-1.0)

    def scale(self, s: float) -> "PolyFunc":
        return PolyFunc({k: c * s for k, c in self.terms.items()})

    def times_tau(self) -> "PolyFunc":
        return PolyFunc({(a, b + 1): c for (a, b), c in self.terms.items()})

    def __mul__(self, other: "PolyFunc") -> "PolyFunc":
        out: dict[tuple[float, int], float] = {}
        for (a1, b1), c1 in self.terms.items():
            for (a2, b2), c2 in other.terms.items():
                key = (a1 + a2, b1 + b2)
                out[key] = out.get(key, 0.0) + c1 * c2
        return PolyFunc(out)

    def square(self) -> "PolyFunc":
        return self * self

    def derivative(self) -> "PolyFunc":
        out: dict[tuple[float, int], float] = {}
        for (a, b), c in self.terms.items():
            if b == 1:
                key = (a, 0)
                out[key] = out.get(key, 0.0) + c * (a + 1.0)
            elif a != 0.0:
                key = (a - 2.0, 1)
                out[key] = out.get(key, 0.0) + c * a
        return PolyFunc(out)

    def antiderivative(self) -> "PolyFunc":
        out: dict[tuple[float, int], float] = {}
        for (a, b), c in self.terms.items():
            if b == 1:
                out[(a + 2.0, 0)] = out.get((a + 2.0, 0), 0.0) + c / (a + 2.0)
            else:
                out[(a, 1)] = out.get((a, 1), 0.0) + c / (a + 1.0)
        return PolyFunc(out)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = np.zeros(tau.shape)
        a_abs = np.abs(tau)
        for (a, b), c in self.terms.items():
            with np.errstate(divide="ignore", invalid="ignore"):
                base = np.where(a_abs > 0, a_abs ** a, 1.0 if a == 0.0 else 0.0)
            term = c * base * (tau if b else 1.0)
            out = out + term
        return out if out.shape else float(out)

    def leading(self) -> tuple[float, float]:
        """(total degree, coefficient); (0, 0) for the zero function."""
        if not self.terms:
            return (0.0, 0.0)
        deg = max(a + b for (a, b) in self.terms)
        coeff = sum(c for (a, b), c in self.terms.items() if a + b == deg)
        if abs(coeff) <= _PRUNE:
            rest = PolyFunc({k: c for k, c in self.terms.items() if k[0] + k[1] < deg})
            return rest.leading()
        return (deg, coeff)

    def coeff_at(self, degree: float) -> float:
        return sum(c for (a, b), c in self.terms.items()
                   if abs(a + b - degree) < 1e-12)

    @property
    def is_zero(self) -> bool:
        return not self.terms


def alpha_defects(f: Nonlinearity, h: Nonlinearity, alpha: float) -> tuple[PolyFunc, PolyFunc]:
    """The alpha-weighted primitive defects (for w in {f, h}):
    defect_w(t) = alpha * W(t) - w(t) t, with W the primitive of w."""
    if alpha <= 2.0:
        raise ValueError("alpha must exceed 2")
    out = []
    for nl in (f, h):
        p = PolyFunc.from_nonlinearity(nl)
        out.append(p.antiderivative().scale(alpha) - p.times_tau())
    return out[0], out[1]


def _tau_grid(tau_max: float = 1e3, n: int = 4001) -> np.ndarray:
    lin = np.linspace(-tau_max, tau_max, n)
    logs = np.geomspace(1e-3, tau_max, n // 4)
    return np.unique(np.concatenate([lin, logs, -logs, [0.0]]))


def _refined_sup(fun, tau_max: float = 1e3) -> tuple[float, float]:
    """(sup of fun over [-tau_max, tau_max], argmax), grid + local refinement."""
    grid = _tau_grid(tau_max)
    vals = fun(grid)
    order = np.argsort(vals)[::-1][:5]
    best_val, best_tau = -math.inf, 0.0
    for k in order:
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, len(grid) - 1)]
        if lo == hi:
            cand_val, cand_tau = float(vals[k]), float(grid[k])
        else:
            res = minimize_scalar(lambda t: -fun(np.array(t)),
                                  bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12})
            cand_val, cand_tau = float(-res.fun), float(res.x)
            if vals[k] > cand_val:
                cand_val, cand_tau = float(vals[k]), float(grid[k])
        if cand_val > best_val:
            best_val, best_tau = cand_val, cand_tau
    return best_val, best_tau


@dataclass
class RegimeVerdict:
    verdict: str                    # GlobalBounded | BlowUpPredicted | Indeterminate
    rule: str
    certificate: dict = field(default_factory=dict)
    threshold_value: float = math.nan
    lhs_value: float = math.nan
    e0: float = math.nan
    conflict: bool = False
    notes: str = ""


# --------------------------------------------------------------- global rules
def check_global(f: Nonlinearity, h: Nonlinearity, constants: ConstantsReport,
                 eps: float | None = None, d0: float = 1.0,
                 m_grid: tuple[int, ...] = (1, 2, 4, 8, 16),
                 tau0: float = 1.0) -> RegimeVerdict | None:
    """Global-boundedness rules; None when none of them fires."""
    q, c_f = f.leading
    p, c_h = h.leading

    if c_f > 0.0 and c_h > 0.0 and q > 2.0 * p:
        return RegimeVerdict(
            verdict="GlobalBounded", rule="bulk-sink-dominates",
            certificate={"q": q, "p": p, "c_f": c_f, "c_h": c_h},
        )

    # both nonlinearities within a quadratic envelope of the right signs
    if q <= 1.0 and p <= 1.0:
        grid = _tau_grid(1e4)
        sq = grid * grid + 1.0
        cf_env = float(np.max(-f(grid) / sq))
        ch_env = float(np.max(h(grid) / sq))
        return RegimeVerdict(
            verdict="GlobalBounded", rule="quadratic-growth-envelope",
            certificate={"q": q, "p": p,
                         "c_f_envelope": max(cf_env, 0.0),
                         "c_h_envelope": max(ch_env, 0.0)},
        )

    # sampled moment balance with exact tail screening per sampled moment
    if eps is None:
        eps = d0 / 2.0
    rho = constants.total_mass / constants.domain_area
    c_star = constants.c_star
    fp = PolyFunc.from_nonlinearity(f)
    hp = PolyFunc.from_nonlinearity(h)
    hd = hp.derivative()

    if c_h != 0.0 and p > 0.0 and abs(q - 2.0 * p) < 1e-12:
        # the squared-derivative moment term grows linearly in the moment
        # index at the same tau-degree as the sink: no certificate can cover
        # every moment
        return None

    needed = []
    for m in m_grid:
        mono_lo = PolyFunc({(float(m - 1), 1): 1.0})   # |t|^{m-1} t
        lhs = (fp * mono_lo).scale(-1.0) + (hp * mono_lo).scale(rho) \
            + PolyFunc({(float(m - 1), 0): c_star ** 2 / (4.0 * m * eps)}) \
            * (hd.times_tau() + hp.scale(float(m))).square()
        deg, coeff = lhs.leading()
        if deg > m + 1.0 + 1e-12 and coeff > 0.0:
            return None
        bound = m + 1.0

        def ratio(t, lhs=lhs, bound=bound):
            t = np.asarray(t, dtype=float)
            return lhs(t) / (np.abs(t) ** bound + 1.0)

        grid = _tau_grid(1e3)
        grid = grid[np.abs(grid) >= tau0]
        level = float(np.max(ratio(grid)))
        if abs(deg - bound) <= 1e-12:
            level = max(level, coeff)
        needed.append(max(level, 1e-12))

    ms = np.array(m_grid, dtype=float)
    needs = np.array(needed)
    lam_fit, logc = np.polyfit(np.log(ms), np.log(needs), 1)
    lam_fit = max(float(lam_fit), 0.0)   # the growth law is a positive power
    c_fit = float(np.exp(logc))
    cover = needs / (c_fit * ms ** lam_fit)
    c_fit *= float(np.max(cover)) * (1.0 + 1e-9)
    return RegimeVerdict(
        verdict="GlobalBounded", rule="balance-certified",
        certificate={"balance_c": c_fit, "balance_lambda": float(lam_fit),
                     "eps": eps, "c_star": c_star, "tau0": tau0,
                     "m_grid": list(m_grid),
                     "needed": [float(v) for v in needed]},
    )


# ----------------------------------------------------------- dissipativity
def check_dissipative(f: Nonlinearity, h: Nonlinearity,
                      constants: ConstantsReport, eps: float,
                      d0: float = 1.0) -> dict:
    """Smallest quadratic absorption (lambda_star, c_fh) of
    -f(t) t + rho h(t) t + (c_star^2 / 4 eps) (h'(t) t + h(t))^2,
    succeeding when lambda_star < c_bar."""
    if not (0.0 < eps < d0):
        raise ValueError(f"eps={eps} outside (0, d0={d0})")
    rho = constants.total_mass / constants.domain_area
    kappa = constants.c_star ** 2 / (4.0 * eps)
    fp = PolyFunc.from_nonlinearity(f)
    hp = PolyFunc.from_nonlinearity(h)
    lhs = fp.times_tau().scale(-1.0) + hp.times_tau().scale(rho) \
        + (hp.derivative().times_tau() + hp).square().scale(kappa)
    deg, coeff = lhs.leading()
    if deg > 2.0 + 1e-12 and coeff > 0.0:
        _, witness = _refined_sup(lambda t: lhs(t) / (t * t + 1.0))
        return {"success": False, "witness_tau": witness,
                "reason": f"reaction grows like |tau|^{deg:.3g} with positive "
                          "coefficient: no quadratic absorption"}
    lam_star = max(0.0, lhs.coeff_at(2.0)) if abs(deg - 2.0) <= 1e-12 else 0.0
    sup_val, _ = _refined_sup(lambda t: lhs(t) - lam_star * t * t)
    c_fh = max(0.0, sup_val) * (1.0 + 1e-9)
    return {
        "success": bool(lam_star < constants.c_bar),
        "lambda_star": lam_star,
        "c_fh": c_fh,
        "c_bar": constants.c_bar,
        "eps": eps,
    }


# ----------------------------------------------------------------- blow-up
def _best_quadratic_gap(lhs: PolyFunc, ladder: np.ndarray) -> list[tuple[float, float]]:
    """Pairs (C1, C2) with lhs >= C1 t^2 - C2 on the scanned range, one per
    feasible ladder entry."""
    deg, coeff = lhs.leading()
    if coeff <= 0.0 or deg < 2.0 - 1e-12:
        return []
    if abs(deg - 2.0) <= 1e-12:
        ladder = ladder[ladder <= coeff * (1.0 - 1e-9)]
    out = []
    for c1 in ladder:
        sup_val, _ = _refined_sup(lambda t: c1 * t * t - lhs(t))
        out.append((float(c1), max(0.0, sup_val) * (1.0 + 1e-9)))
    return out


def check_blowup(f: Nonlinearity, h: Nonlinearity, alpha: float,
                 constants: ConstantsReport, u0_norm2: float, e0: float,
                 d0: float, lam1: float, eps: float | None = None) -> dict:
    """Blow-up certificates at a fixed alpha.

    Route 'quadratic-gap': the combined defect
        g(t) - rho l(t) - (c_star^2 / 4 eps) l'(t)^2
    admits a positive quadratic minorant C1 t^2 - C2.  Route 'sign-pair':
    g >= C_f t^2 - C_f' and l <= -C_h t^2 + C_h' separately.  Either way the
    verdict fires when D1 ||U0||^2 > alpha E(0) + D2 for the route's
    constants; the embedding constant of the operator domain is estimated
    by 1/lambda_1.
    """
    if alpha <= 2.0:
        raise ValueError("alpha must exceed 2")
    eps_cap = (alpha / 2.0 - 1.0) * d0
    if eps is None:
        eps = 0.5 * eps_cap
    if not (0.0 < eps < eps_cap):
        raise ValueError(f"eps={eps} outside (0, (alpha/2-1) d0 = {eps_cap})")
    rho = constants.total_mass / constants.domain_area
    kappa = constants.c_star ** 2 / (4.0 * eps)
    c_tilde = 1.0 / lam1
    g, l = alpha_defects(f, h, alpha)
    ladder = np.geomspace(1e-4, 1e4, 33)
    area = constants.domain_area
    mu = constants.total_mass

    candidates = []

    lhs2 = g - l.scale(rho) - l.derivative().square().scale(kappa)
    for c1, c2 in _best_quadratic_gap(lhs2, ladder):
        d1 = 2.0 * ((1.0 / d0) * ((alpha / 2.0 - 1.0) * d0 - eps) * c_tilde + c1)
        d2 = c2 * area
        candidates.append({
            "route": "quadratic-gap", "C1": c1, "C2": c2,
            "D1": d1, "D2": d2, "margin": d1 * u0_norm2 - alpha * e0 - d2,
        })

    gap_g = _best_quadratic_gap(g, ladder)
    gap_l = _best_quadratic_gap(l.scale(-1.0), ladder)
    if gap_g and gap_l:
        for cf, cfp in gap_g[:: max(1, len(gap_g) // 8)]:
            for ch, chp in gap_l[:: max(1, len(gap_l) // 8)]:
                d1 = 2.0 * ((alpha / 2.0 - 1.0) * c_tilde + min(cf, ch))
                d2 = cfp * area + chp * mu
                candidates.append({
                    "route": "sign-pair", "C_f": cf, "C_f_prime": cfp,
                    "C_h": ch, "C_h_prime": chp,
                    "D1": d1, "D2": d2, "margin": d1 * u0_norm2 - alpha * e0 - d2,
                })

    if not candidates:
        return {"fired": False, "reason": "no quadratic gap at this alpha",
                "alpha": alpha, "eps": eps}
    best = max(candidates, key=lambda c: c["margin"])
    best.update({
        "fired": bool(best["margin"] > 0.0),
        "alpha": alpha, "eps": eps, "c_star": constants.c_star,
        "c_tilde": c_tilde, "u0_norm2": u0_norm2, "e0": e0,
        "poly_case": _polynomial_case(f, h, alpha, eps, constants),
    })
    return best


def _polynomial_case(f: Nonlinearity, h: Nonlinearity, alpha: float,
                     eps: float, constants: ConstantsReport) -> str:
    """Shortcut labels for pure sign-flipped polynomial pairs."""
    q, c_f = f.leading
    p, c_h = h.leading
    if not (c_f < 0.0 and c_h <= 0.0):
        return ""
    if p + 2.0 < alpha < q + 2.0 and q > 2.0 * p:
        return "a"
    if abs(q - 2.0 * p) < 1e-12 and q > 0:
        lhs = -c_f * (1.0 - alpha / (q + 2.0))
        rhs = constants.c_star ** 2 * c_h ** 2 * (p + 2.0 - alpha) ** 2 / (4.0 * eps)
        if lhs > rhs:
            return "b"
        return ""
    if 2.0 < alpha < q + 2.0 and q > 2.0 * p:
        return "c"
    return ""


# ------------------------------------------------------------------ classify
def default_alpha_candidates(f: Nonlinearity, h: Nonlinearity) -> list[float]:
    q, _ = f.leading
    p, _ = h.leading
    cands = {2.25, 2.5, 3.0, 4.0}
    if q > 0:
        cands |= {0.5 * (p + 2.0 + q + 2.0), 0.5 * (2.0 + q + 2.0), 0.9 * (q + 2.0)}
        cands = {a for a in cands if 2.0 < a < q + 2.0}
    else:
        cands = {a for a in cands if a > 2.0}
    return sorted(round(a, 6) for a in cands)


def classify(f: Nonlinearity, h: Nonlinearity, op: DiscreteOperator,
             constants: ConstantsReport, U0: np.ndarray,
             lam1: float | None = None, alpha: float | None = None,
             eps: float | None = None) -> RegimeVerdict:
    """Deterministic verdict for the nonlinearity pair and initial datum.

    Precedence: global rules, then dissipativity, then blow-up; a blow-up
    certificate that also fires under a global rule is reported as a
    conflict diagnostic on the global verdict.
    """
    from .diagnostics import energy
    from .operators import spectrum

    if lam1 is None:
        lam1 = float(spectrum(op, k=1).eigenvalues[0])
    U0 = np.asarray(U0, dtype=float)
    u0_norm2 = op.pair_norm2(U0)
    e0 = energy(op, U0, f, h).total

    alphas = [alpha] if alpha is not None else default_alpha_candidates(f, h)

    def blowup_scan():
        best = None
        for a in alphas:
            eps_cap = (a / 2.0 - 1.0) * op.d0
            eps_list = [eps] if eps is not None else [0.25 * eps_cap, 0.5 * eps_cap, 0.75 * eps_cap]
            for e in eps_list:
                if not (0.0 < e < eps_cap):
                    continue
                res = check_blowup(f, h, a, constants, u0_norm2, e0,
                                   d0=op.d0, lam1=lam1, eps=e)
                if "margin" in res and (best is None or res["margin"] > best["margin"]):
                    best = res
        return best

    glob = check_global(f, h, constants, eps=eps, d0=op.d0)
    if glob is not None:
        glob.e0 = e0
        blow = blowup_scan()
        if blow is not None and blow.get("fired"):
            glob.conflict = True
            glob.notes = "blow-up certificate also fired; global rule wins"
        return glob

    try:
        diss = check_dissipative(f, h, constants,
                                 eps if eps is not None else op.d0 / 2.0, d0=op.d0)
    except ValueError:
        diss = {"success": False}
    if diss.get("success"):
        return RegimeVerdict(
            verdict="GlobalBounded", rule="dissipative-balance",
            certificate={k: v for k, v in diss.items() if k != "success"},
            e0=e0,
        )

    blow = blowup_scan()
    if blow is not None and blow.get("fired"):
        rule = "quadratic-gap-blowup" if blow["route"] == "quadratic-gap" else "sign-pair-blowup"
        if blow.get("poly_case"):
            rule += f"-case-{blow['poly_case']}"
        return RegimeVerdict(
            verdict="BlowUpPredicted", rule=rule,
            certificate={k: v for k, v in blow.items() if k not in ("fired",)},
            threshold_value=alpha_threshold(blow), lhs_value=blow["D1"] * u0_norm2,
            e0=e0,
        )
    notes = "no sufficient condition applies"
    if blow is not None and not blow.get("fired") and "margin" in blow:
        notes = "blow-up inequality certified but the datum is below threshold"
        return RegimeVerdict(
            verdict="Indeterminate", rule="threshold-not-met",
            certificate={k: v for k, v in blow.items() if k not in ("fired",)},
            threshold_value=alpha_threshold(blow), lhs_value=blow["D1"] * u0_norm2,
            e0=e0, notes=notes,
        )
    return RegimeVerdict(
        verdict="Indeterminate", rule="none",
        certificate={"alphas_scanned": alphas}, e0=e0, notes=notes,
    )


def alpha_threshold(blow: dict) -> float:
    return blow["alpha"] * blow["e0"] + blow["D2"]


# -------------------------------------------------------------------- replay
def replay_certificate(verdict: RegimeVerdict, f: Nonlinearity, h: Nonlinearity,
                       constants: ConstantsReport, n_samples: int = 10_000,
                       seed: int = 0, tau_max: float = 1e3) -> float:
    """Re-evaluate the emitted inequality at fresh tau samples; returns the
    maximum relative violation (0 when the certificate replays cleanly)."""
    rng = np.random.default_rng(seed)
    taus = rng.uniform(-tau_max, tau_max, size=n_samples)
    cert = verdict.certificate
    rho = constants.total_mass / constants.domain_area

    def rel(excess: np.ndarray, scale: np.ndarray) -> float:
        return float(np.max(np.maximum(excess, 0.0) / scale))

    if verdict.rule == "bulk-sink-dominates":
        # tail-sign rule: check the defining limits rather than an inequality
        q, c_f = f.leading
        p, c_h = h.leading
        ok = (c_f > 0) and (c_h > 0) and (q > 2 * p)
        return 0.0 if ok else math.inf
    if verdict.rule == "quadratic-growth-envelope":
        sq = taus * taus + 1.0
        exc_f = -f(taus) - cert["c_f_envelope"] * sq
        exc_h = h(taus) - cert["c_h_envelope"] * sq
        return rel(np.maximum(exc_f, exc_h), sq)
    if verdict.rule == "balance-certified":
        fp = PolyFunc.from_nonlinearity(f)
        hp = PolyFunc.from_nonlinearity(h)
        hd = hp.derivative()
        worst = 0.0
        sel = taus[np.abs(taus) >= cert["tau0"]]
        for m in cert["m_grid"]:
            mono = PolyFunc({(float(m - 1), 1): 1.0})
            lhs = (fp * mono).scale(-1.0) + (hp * mono).scale(rho) \
                + PolyFunc({(float(m - 1), 0): cert["c_star"] ** 2 / (4.0 * m * cert["eps"])}) \
                * (hd.times_tau() + hp.scale(float(m))).square()
            bound = cert["balance_c"] * m ** cert["balance_lambda"] \
                * (np.abs(sel) ** (m + 1.0) + 1.0)
            worst = max(worst, rel(lhs(sel) - bound, bound))
        return worst
    if verdict.rule == "dissipative-balance":
        fp = PolyFunc.from_nonlinearity(f)
        hp = PolyFunc.from_nonlinearity(h)
        kappa = constants.c_star ** 2 / (4.0 * cert["eps"])
        lhs = fp.times_tau().scale(-1.0) + hp.times_tau().scale(rho) \
            + (hp.derivative().times_tau() + hp).square().scale(kappa)
        bound = cert["lambda_star"] * taus * taus + cert["c_fh"]
        return rel(lhs(taus) - bound, np.abs(bound) + 1.0)
    if verdict.rule.startswith(("quadratic-gap-blowup", "sign-pair-blowup")) \
            or verdict.rule == "threshold-not-met":
        g, l = alpha_defects(f, h, cert["alpha"])
        kappa = cert["c_star"] ** 2 / (4.0 * cert["eps"])
        if cert["route"] == "quadratic-gap":
            lhs = g - l.scale(rho) - l.derivative().square().scale(kappa)
            bound = cert["C1"] * taus * taus - cert["C2"]
            return rel(bound - lhs(taus), np.abs(bound) + 1.0)
        exc1 = cert["C_f"] * taus * taus - cert["C_f_prime"] - g(taus)
        exc2 = l(taus) - (-cert["C_h"] * taus * taus + cert["C_h_prime"])
        scale = taus * taus + 1.0
        return rel(np.maximum(exc1, exc2), scale)
    raise ValueError(f"no replayable certificate for rule {verdict.rule!r}")


# -------------------------------------------------------------- serialization
def verdict_to_lines(v: RegimeVerdict) -> list[str]:
    lines = [
        f"verdict={v.verdict}",
        f"rule={v.rule}",
        f"threshold_value={v.threshold_value!r}",
        f"lhs_value={v.lhs_value!r}",
        f"e0={v.e0!r}",
        f"conflict={int(v.conflict)}",
        f"notes={v.notes}",
    ]
    for key in sorted(v.certificate):
        lines.append(f"cert.{key}={v.certificate[key]!r}")
    return lines


def save_verdict(v: RegimeVerdict, path) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(verdict_to_lines(v)) + "\n")
