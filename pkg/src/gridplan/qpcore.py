"""Convex QP/LP solver in standard form with certified residuals.

Solves

    minimize    0.5 x' P x + q' x
    subject to  lower <= A x <= upper

by an operator-splitting (ADMM) iteration: each step alternates one sparse
KKT solve with a projection onto the bound box, following the scheme of
Stellato et al.'s OSQP.  Equality rows are bounds with lower == upper.  The
iteration is deterministic (fixed order, no randomized pivoting), supports
warm starts and in-place updates of q and the bounds (the KKT factorization
is reused), and finishes with an optional active-set polish step that
sharpens primal values and the duals used downstream as prices.

Dual convention: at an optimum, stationarity P x + q + A' y = 0 holds with
y_i >= 0 where the upper bound is active and y_i <= 0 where the lower bound
is active (free for equality rows).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

INF = np.inf

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter"
STATUS_PRIMAL_INFEASIBLE = "primal_infeasible"
STATUS_DUAL_INFEASIBLE = "dual_infeasible"


class QpError(ValueError):
    pass


@dataclass(frozen=True)
class QuadraticProgram:
    """Problem data; P must be symmetric PSD, lower <= upper element-wise."""

    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    lower: np.ndarray
    upper: np.ndarray
    variable_names: tuple[str, ...] | None = None

    def __post_init__(self):
        P = sp.csc_matrix(self.P)
        A = sp.csc_matrix(self.A)
        q = np.asarray(self.q, dtype=float).ravel()
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        n = q.size
        if P.shape != (n, n):
            raise QpError(f"P is {P.shape}, expected {(n, n)}")
        if A.shape[1] != n:
            raise QpError(f"A has {A.shape[1]} columns, expected {n}")
        m = A.shape[0]
        if lower.size != m or upper.size != m:
            raise QpError(f"bounds have {lower.size}/{upper.size} rows, expected {m}")
        asym = abs(P - P.T).max() if P.nnz else 0.0
        if asym > 1e-9 * max(1.0, abs(P).max()):
            raise QpError(f"P is not symmetric (asymmetry {asym:.2e})")
        if np.any(lower > upper):
            i = int(np.argmax(lower > upper))
            raise QpError(f"row {i}: lower {lower[i]} > upper {upper[i]}")
        if self.variable_names is not None and len(self.variable_names) != n:
            raise QpError("variable_names length mismatch")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def num_vars(self) -> int:
        return self.q.size

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return 0.5 * float(x @ (self.P @ x)) + float(self.q @ x)


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: str
    primal_residual: float
    dual_residual: float
    duality_gap: float
    iterations: int
    objective: float
    polished: bool = False


@dataclass(frozen=True)
class SolverSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    max_iter: int = 200_000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    scaling_iters: int = 10
    adaptive_rho: bool = True
    check_every: int = 25
    adapt_every: int = 800
    eps_infeasible: float = 1e-5
    polish: bool = True
    polish_delta: float = 1e-7
    polish_refine: int = 4
    early_polish_factor: float = 1e6


def solve_qp(prob: QuadraticProgram, settings: SolverSettings = SolverSettings()) -> QpSolution:
    """One-shot solve; see :class:`QpSolver` for warm-started re-solves."""
    return QpSolver(prob, settings).solve()


def solve_lp(
    q: np.ndarray,
    A: sp.spmatrix,
    lower: np.ndarray,
    upper: np.ndarray,
    settings: SolverSettings = SolverSettings(),
    variable_names: tuple[str, ...] | None = None,
) -> QpSolution:
    """Linear program: solve_qp with P = 0; duals are the LP shadow prices."""
    n = np.asarray(q).size
    prob = QuadraticProgram(
        P=sp.csc_matrix((n, n)), q=q, A=A, lower=lower, upper=upper, variable_names=variable_names
    )
    return solve_qp(prob, settings)


def dump_program(prob: QuadraticProgram, path) -> None:
    """Plain-text triplet dump (matrix-market flavoured) for offline inspection."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"%%qp n={prob.num_vars} m={prob.num_rows}\n")
        if prob.variable_names:
            for j, name in enumerate(prob.variable_names):
                fh.write(f"%var {j} {name}\n")
        P = prob.P.tocoo()
        fh.write(f"P {P.nnz}\n")
        for i, j, v in zip(P.row, P.col, P.data):
            fh.write(f"{i} {j} {v!r}\n")
        fh.write("q\n")
        for v in prob.q:
            fh.write(f"{v!r}\n")
        A = prob.A.tocoo()
        fh.write(f"A {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{i} {j} {v!r}\n")
        fh.write("bounds\n")
        for lo, hi in zip(prob.lower, prob.upper):
            fh.write(f"{lo!r} {hi!r}\n")


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

_RHO_MIN, _RHO_MAX = 1e-6, 1e6
_RHO_EQ_SCALE = 1e3
_RHO_TRIGGER = 5.0


class QpSolver:
    """Workspace owning one problem instance.

    A solver instance is single-threaded; run separate instances for
    concurrent problems.  ``update`` replaces q and/or the bounds without
    refactorizing the KKT system, which makes repeated solves of structurally
    identical subproblems cheap.
    """

    def __init__(self, prob: QuadraticProgram, settings: SolverSettings = SolverSettings()):
        self.prob = prob
        self.settings = settings
        self.n = prob.num_vars
        self.m = prob.num_rows
        # current (possibly updated) unscaled data; P and A never change
        self._Pu = prob.P
        self._Au = prob.A
        self._qu = prob.q.copy()
        self._lu = prob.lower.copy()
        self._uu = prob.upper.copy()
        self._equilibrate()
        self._rho_vec = None
        self._set_rho(settings.rho)
        self._xh = np.zeros(self.n)  # scaled iterates
        self._zh = np.zeros(self.m)
        self._yh = np.zeros(self.m)
        self._adapt_frozen = False
        self._adapt_score: float | None = None
        self._adapt_best: tuple[float, float] | None = None  # (score, rho_base)

    # -- scaling ------------------------------------------------------------

    def _equilibrate(self):
        """Modified Ruiz equilibration of [[P, A'], [A, 0]] plus cost scaling."""
        P, A, q = self._Pu, self._Au, self._qu
        n, m = self.n, self.m
        d = np.ones(n)
        e = np.ones(m)
        c = 1.0
        Ph, Ah, qh = P.copy(), A.copy(), q.copy()
        for _ in range(self.settings.scaling_iters):
            col_p = _col_inf_norm(Ph, n)
            col_a = _col_inf_norm(Ah, n)
            norm_d = np.maximum(np.maximum(col_p, col_a), 1e-8)
            row_a = _col_inf_norm(sp.csc_matrix(Ah.T), m) if m else np.ones(0)
            norm_e = np.maximum(row_a, 1e-8)
            dd = 1.0 / np.sqrt(norm_d)
            de = 1.0 / np.sqrt(norm_e)
            Dd = sp.diags(dd)
            De = sp.diags(de)
            Ph = (Dd @ Ph @ Dd).tocsc()
            Ah = (De @ Ah @ Dd).tocsc()
            qh = dd * qh
            d *= dd
            e *= de
            # cost scaling keeps the objective terms O(1); a (near-)zero
            # objective is left alone instead of being blown up
            denom = max(np.mean(_col_inf_norm(Ph, n)) if n else 0.0,
                        float(np.max(np.abs(qh))) if qh.size else 0.0)
            gamma = 1.0 / denom if denom > 1e-12 else 1.0
            Ph = Ph * gamma
            qh = qh * gamma
            c *= gamma
        self._Ph = Ph.tocsc()
        self._Ah = Ah.tocsc()
        self._qh = qh
        self._d = d
        self._e = e
        self._c = c
        self._lh = e * self._lu
        self._uh = e * self._uu

    # -- rho / factorization --------------------------------------------------

    def _set_rho(self, rho_base: float):
        rho_base = float(np.clip(rho_base, _RHO_MIN, _RHO_MAX))
        eq = np.isfinite(self._lh) & np.isfinite(self._uh) & (self._uh - self._lh < 1e-12)
        loose = ~np.isfinite(self._lh) & ~np.isfinite(self._uh)
        rho = np.full(self.m, rho_base)
        rho[eq] = np.clip(rho_base * _RHO_EQ_SCALE, _RHO_MIN, _RHO_MAX)
        rho[loose] = _RHO_MIN
        self._rho_base = rho_base
        self._rho_vec = rho
        kkt = sp.bmat(
            [
                [self._Ph + self.settings.sigma * sp.eye(self.n), self._Ah.T],
                [self._Ah, -sp.diags(1.0 / rho)],
            ],
            format="csc",
        ) if self.m else (self._Ph + self.settings.sigma * sp.eye(self.n)).tocsc()
        self._kkt = spla.splu(kkt)

    # -- public API -----------------------------------------------------------

    def update(self, q=None, lower=None, upper=None) -> None:
        """Replace q and/or bounds, keeping the KKT factorization."""
        if q is not None:
            q = np.asarray(q, dtype=float).ravel()
            if q.size != self.n:
                raise QpError("q size mismatch")
            self._qu = q.copy()
            self._qh = self._c * self._d * q
        if lower is not None or upper is not None:
            lo = np.asarray(lower, dtype=float).ravel() if lower is not None else self._lu
            hi = np.asarray(upper, dtype=float).ravel() if upper is not None else self._uu
            if lo.size != self.m or hi.size != self.m:
                raise QpError("bound size mismatch")
            if np.any(lo > hi):
                raise QpError("lower > upper after update")
            self._lu = lo.copy()
            self._uu = hi.copy()
            self._lh = self._e * lo
            self._uh = self._e * hi

    def warm_start(self, x: np.ndarray | None = None, y: np.ndarray | None = None) -> None:
        if x is not None:
            self._xh = np.asarray(x, dtype=float) / self._d
            self._zh = self._Ah @ self._xh if self.m else np.zeros(0)
            np.clip(self._zh, self._lh, self._uh, out=self._zh)
        if y is not None:
            self._yh = self._c * np.asarray(y, dtype=float) / np.where(self._e > 0, self._e, 1.0)

    def solve(self) -> QpSolution:
        st = self.settings
        n, m = self.n, self.m
        xh, zh, yh = self._xh, self._zh, self._yh
        rho = self._rho_vec
        status = STATUS_MAX_ITER
        iters = 0
        prim_cert = dual_cert = None
        early = None  # (x, y, r_prim, r_dual) from an accepted early polish
        early_gate = st.early_polish_factor

        for it in range(1, st.max_iter + 1):
            iters = it
            x_prev = xh.copy()
            y_prev = yh.copy()

            rhs = np.concatenate([st.sigma * xh - self._qh, zh - yh / rho]) if m else (
                st.sigma * xh - self._qh
            )
            sol = self._kkt.solve(rhs)
            xt = sol[:n]
            if m:
                nu = sol[n:]
                zt = zh + (nu - yh) / rho
                xh = st.alpha * xt + (1.0 - st.alpha) * xh
                z_pre = st.alpha * zt + (1.0 - st.alpha) * zh + yh / rho
                zh = np.clip(z_pre, self._lh, self._uh)
                yh = rho * (z_pre - zh)
            else:
                xh = st.alpha * xt + (1.0 - st.alpha) * xh

            if it == 1 or it % st.check_every == 0 or it == st.max_iter:
                r_prim, r_dual, eps_prim, eps_dual = self._residuals(xh, zh, yh)
                if r_prim <= eps_prim and r_dual <= eps_dual:
                    status = STATUS_OPTIMAL
                    break
                # an active-set polish from a merely roughly-converged iterate
                # often lands on the exact optimum; accept it when it meets the
                # full tolerance, otherwise keep iterating and retry later
                if (
                    st.polish
                    and m
                    and r_prim <= early_gate * eps_prim
                    and r_dual <= early_gate * eps_dual
                ):
                    x_c = self._d * xh
                    y_c = self._unscale_y(yh)
                    pol = self._polish(x_c, y_c)
                    if pol is not None and self._polish_acceptable(pol, eps_prim, eps_dual):
                        early = pol
                        status = STATUS_OPTIMAL
                        break
                    early_gate = max(early_gate / 8.0, 1.0)
                dx = xh - x_prev
                dy = yh - y_prev
                if m and self._primal_infeasible(dy):
                    status = STATUS_PRIMAL_INFEASIBLE
                    prim_cert = self._unscale_y(dy)
                    break
                if self._dual_infeasible(dx):
                    status = STATUS_DUAL_INFEASIBLE
                    dual_cert = self._d * dx
                    break
                if st.adaptive_rho and m and it % st.adapt_every == 0:
                    self._maybe_rescale_rho(xh, zh, yh)
                    rho = self._rho_vec

        self._xh, self._zh, self._yh = xh, zh, yh
        x = self._d * xh
        y = self._unscale_y(yh)

        if status == STATUS_PRIMAL_INFEASIBLE:
            return QpSolution(x, prim_cert, status, np.inf, np.inf, np.inf, iters, np.inf)
        if status == STATUS_DUAL_INFEASIBLE:
            return QpSolution(dual_cert, y, status, np.inf, np.inf, np.inf, iters, -np.inf)

        polished = False
        if early is not None:
            x, y, r_prim, r_dual, gap = early
            polished = True
        else:
            r_prim, r_dual = self._unscaled_residuals(x, y)
            gap = self._duality_gap(x, y)
            if st.polish and status == STATUS_OPTIMAL and m:
                pol = self._polish(x, y)
                if pol is not None and pol[2] <= max(r_prim, 1e-10) and pol[3] <= max(
                    r_dual, 1e-10
                ) and pol[4] <= max(gap, 1e-10):
                    x, y, r_prim, r_dual, gap = pol
                    polished = True
        return QpSolution(
            x=x,
            y=y,
            status=status,
            primal_residual=r_prim,
            dual_residual=r_dual,
            duality_gap=gap,
            iterations=iters,
            objective=self._objective(x),
            polished=polished,
        )

    # -- internals ------------------------------------------------------------

    def _unscale_y(self, yh: np.ndarray) -> np.ndarray:
        return self._e * yh / self._c

    def _residuals(self, xh, zh, yh):
        """Unscaled residual norms plus their termination thresholds."""
        st = self.settings
        if self.m == 0:
            ax = np.zeros(0)
            r_prim, p_scale = 0.0, 0.0
        else:
            ax = self._Ah @ xh
            r_prim = _norm((ax - zh) / self._e)
            p_scale = max(_norm(ax / self._e), _norm(zh / self._e))
        px = self._Ph @ xh
        aty = self._Ah.T @ yh if self.m else np.zeros(self.n)
        r_dual = _norm((px + self._qh + aty) * self._d) / self._c
        d_scale = max(_norm(px * self._d), _norm(aty * self._d), _norm(self._qh * self._d)) / self._c
        return (
            r_prim,
            r_dual,
            st.eps_abs + st.eps_rel * p_scale,
            st.eps_abs + st.eps_rel * d_scale,
        )

    def _objective(self, x) -> float:
        return 0.5 * float(x @ (self._Pu @ x)) + float(self._qu @ x)

    def _unscaled_residuals(self, x, y):
        if self.m:
            ax = self._Au @ x
            r_prim = float(
                np.max(np.maximum(self._lu - ax, 0.0) + np.maximum(ax - self._uu, 0.0))
            )
            aty = self._Au.T @ y
        else:
            r_prim = 0.0
            aty = 0.0
        r_dual = _norm(self._Pu @ x + self._qu + aty)
        return r_prim, r_dual

    def _maybe_rescale_rho(self, xh, zh, yh):
        """Residual-balancing rho update with a worsening safeguard.

        If the combined relative residual got worse since the previous
        adaptation, the step size is restored to the best value seen so far
        and further adaptation is frozen; this prevents oscillating updates
        from stalling the iteration.
        """
        if self.m == 0 or self._adapt_frozen:
            return
        ax = self._Ah @ xh
        p_rel = _norm(ax - zh) / max(_norm(ax), _norm(zh), 1e-12)
        px = self._Ph @ xh
        aty = self._Ah.T @ yh
        d_rel = _norm(px + self._qh + aty) / max(_norm(px), _norm(aty), _norm(self._qh), 1e-12)
        score = max(p_rel, d_rel)
        if self._adapt_best is None or score < self._adapt_best[0]:
            self._adapt_best = (score, self._rho_base)
        if self._adapt_score is not None and score > self._adapt_score:
            self._adapt_frozen = True
            if self._adapt_best[1] != self._rho_base:
                self._set_rho(self._adapt_best[1])
            return
        self._adapt_score = score
        new_rho = self._rho_base * np.sqrt(max(p_rel, 1e-12) / max(d_rel, 1e-12))
        new_rho = float(np.clip(new_rho, _RHO_MIN, _RHO_MAX))
        if new_rho > _RHO_TRIGGER * self._rho_base or new_rho < self._rho_base / _RHO_TRIGGER:
            self._set_rho(new_rho)

    def _primal_infeasible(self, dyh) -> bool:
        eps = self.settings.eps_infeasible
        dy = self._unscale_y(dyh)
        norm = _norm(dy)
        if norm <= eps:
            return False
        v = dy / norm
        if _norm(self._Au.T @ v) > eps:
            return False
        upper, lower = self._uu, self._lu
        vp, vm = np.maximum(v, 0.0), np.minimum(v, 0.0)
        if np.any(~np.isfinite(upper) & (vp > eps)) or np.any(~np.isfinite(lower) & (vm < -eps)):
            return False
        support = float(upper[np.isfinite(upper)] @ vp[np.isfinite(upper)]) + float(
            lower[np.isfinite(lower)] @ vm[np.isfinite(lower)]
        )
        return support < -eps

    def _dual_infeasible(self, dxh) -> bool:
        eps = self.settings.eps_infeasible
        dx = self._d * dxh
        norm = _norm(dx)
        if norm <= eps:
            return False
        w = dx / norm
        if float(self._qu @ w) >= -eps:
            return False
        if _norm(self._Pu @ w) > eps:
            return False
        if self.m:
            aw = self._Au @ w
            if np.any(np.isfinite(self._uu) & (aw > eps)):
                return False
            if np.any(np.isfinite(self._lu) & (aw < -eps)):
                return False
        return True

    def _polish_acceptable(self, pol, eps_prim, eps_dual) -> bool:
        """A polished point must meet the full tolerance AND close the duality
        gap; the gap test rejects stationary points on a wrong active set
        (feasible and stationary but with sign-violating multipliers)."""
        _x, _y, rp, rd, gap = pol
        obj = self._objective(_x)
        gap_tol = 10.0 * self.settings.eps_abs * (1.0 + abs(obj))
        return rp <= eps_prim and rd <= eps_dual and gap <= gap_tol

    def _polish(self, x, y):
        """Active-set KKT refinement started from the current iterate.

        Iterative refinement against the unregularized system keeps the
        polished point close to the incoming one when the active set is
        degenerate, so polishing never wanders along an optimal face.
        """
        st = self.settings
        eq = np.isfinite(self._lu) & np.isfinite(self._uu) & (self._uu - self._lu < 1e-12)
        low = (y < 0) & ~eq
        upp = (y > 0) & ~eq
        act = low | upp | eq
        n_act = int(act.sum())
        A_act = self._Au[act]
        b_act = np.where(upp[act], self._uu[act], self._lu[act])
        delta = st.polish_delta
        K_reg = sp.bmat(
            [
                [self._Pu + delta * sp.eye(self.n), A_act.T],
                [A_act, -delta * sp.eye(n_act) if n_act else None],
            ],
            format="csc",
        ) if n_act else (self._Pu + delta * sp.eye(self.n)).tocsc()
        try:
            lu = spla.splu(K_reg)
        except RuntimeError:
            return None
        u = np.concatenate([x, y[act]])
        rhs = np.concatenate([-self._qu, b_act])
        for _ in range(st.polish_refine):
            if n_act:
                resid = rhs - np.concatenate(
                    [self._Pu @ u[: self.n] + A_act.T @ u[self.n :], A_act @ u[: self.n]]
                )
            else:
                resid = rhs - self._Pu @ u
            u = u + lu.solve(resid)
        x_new = u[: self.n]
        y_new = np.zeros(self.m)
        y_new[act] = u[self.n :]
        rp, rd = self._unscaled_residuals(x_new, y_new)
        if not (np.isfinite(rp) and np.isfinite(rd)):
            return None
        gap = self._duality_gap(x_new, y_new)
        return x_new, y_new, rp, rd, gap

    def _duality_gap(self, x, y) -> float:
        xpx = float(x @ (self._Pu @ x))
        primal = 0.5 * xpx + float(self._qu @ x)
        yp, ym = np.maximum(y, 0.0), np.minimum(y, 0.0)
        fin_u, fin_l = np.isfinite(self._uu), np.isfinite(self._lu)
        support = float(self._uu[fin_u] @ yp[fin_u]) + float(self._lu[fin_l] @ ym[fin_l])
        dual = -0.5 * xpx - support
        return abs(primal - dual)


def _norm(v) -> float:
    v = np.asarray(v)
    return float(np.max(np.abs(v))) if v.size else 0.0


def _col_inf_norm(M: sp.csc_matrix, n: int) -> np.ndarray:
    if M.nnz == 0:
        return np.zeros(n)
    out = np.zeros(n)
    M = M.tocsc()
    absdata = np.abs(M.data)
    for j in range(n):
        start, end = M.indptr[j], M.indptr[j + 1]
        if end > start:
            out[j] = absdata[start:end].max()
    return out
