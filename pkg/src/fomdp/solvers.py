"""Weight solvers and policy extraction for linear value functions.

Two routes to the weights: a value-bound LP over per-action backup schemata
(constraint generation picks the ground constraints), and approximate policy
iteration, which alternates greedy policy extraction with a minimal-residual
reweighting LP restricted to the current policy's regions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from itertools import product
from typing import Mapping, Optional, Sequence

from .cases import CaseStatement, Partition, cross_sum, exists_case, max_case
from .folp import (
    VIOLATION_TOL,
    ConstraintSchema,
    FirstOrderLP,
    FOLPError,
    FOLPResult,
    GenerationRow,
    LinearConstraint,
    LinExpr,
    LPModel,
    LPNumericalError,
    affine_case,
    search_schemata,
    seed_rows,
    solve_first_order_lp,
    solve_lp,
)
from .logic import TRUE, ConsistencyChecker, conj, eval_in_state, format_formula, normalize
from .model import FOMDPModel, LinearValueFunction, backup_linear


class SolverError(Exception):
    pass


_PHI = "phi"


def _wvar(i: int) -> str:
    return f"w{i}"


def weight_map(weights: Sequence[float]) -> dict:
    """Weight vector as the LP variable assignment the schemata expect."""
    return {_wvar(i): float(w) for i, w in enumerate(weights)}


# ---------------------------------------------------------------------------
# policies


@dataclass(frozen=True)
class PolicyCase:
    """Decision-list policy: disjoint tagged regions with witness bodies.

    Every partition names its action template in the tag and keeps the open
    formula over the action parameters whose witnesses realize the region's
    value; `cell_exprs` maps (tag, witness body) back to the affine backup
    expression the region came from.
    """

    case: CaseStatement
    cell_exprs: tuple = ()

    def __post_init__(self):
        for p in self.case.partitions:
            if p.tag is None or p.bind_body is None:
                raise SolverError("policy partitions need an action tag and a witness body")

    def actions(self) -> tuple:
        return tuple(sorted({p.tag for p in self.case.partitions}))

    def decide(self, state) -> tuple:
        """(action name, object binding) at a ground state.

        Exactly one region must hold; the binding is the lexicographically
        least witness of its open body over the state's object pools.
        """
        hits = [p for p in self.case.partitions if eval_in_state(p.formula, state)]
        if len(hits) != 1:
            raise SolverError(f"{len(hits)} policy regions hold at the state (expected 1)")
        p = hits[0]
        names = tuple(n for n, _ in p.bind_vars)
        pools = [state.universe.pool(t) for _, t in p.bind_vars]
        for combo in product(*pools):
            if eval_in_state(p.bind_body, state, dict(zip(names, combo))):
                return p.tag, combo
        raise SolverError("satisfied policy region has no parameter witness")


def restrict_policy(policy: PolicyCase, action: str) -> PolicyCase:
    """Partitions tagged with one action template, order preserved.

    A full match returns the policy unchanged; otherwise exhaustiveness is
    lost, so the partitioned flag is cleared.
    """
    kept = tuple(p for p in policy.case.partitions if p.tag == action)
    if len(kept) == len(policy.case.partitions):
        return policy
    cells = tuple((key, e) for key, e in policy.cell_exprs if key[0] == action)
    return PolicyCase(CaseStatement(kept, False), cells)


def loss_bound(phi: float, gamma: float) -> float:
    """Sup-norm loss guaranteed by a fixed-point residual under discounting."""
    if not 0.0 <= gamma < 1.0:
        raise SolverError(f"discount must lie in [0, 1), got {gamma}")
    if phi < 0.0:
        raise SolverError(f"residual must be nonnegative, got {phi}")
    return 2.0 * gamma * phi / (1.0 - gamma)


# ---------------------------------------------------------------------------
# schema construction


def _certified_indices(bases: Sequence[CaseStatement], checker: ConsistencyChecker) -> tuple:
    """Basis indices safe for the orthogonal-indicator search shortcut.

    A basis qualifies with exactly two partitions, nonzero-value positive
    first, zero-value complement second, and a positive region provably
    disjoint from every already-accepted one; a timed-out disjointness check
    disqualifies, since the shortcut must never be assumed.
    """
    kept: list = []
    for i, b in enumerate(bases):
        if len(b.partitions) != 2 or not b.partitioned:
            continue
        pos, neg = b.partitions
        if pos.value == 0.0 or neg.value != 0.0:
            continue
        disjoint = all(
            checker.check(conj((bases[j].partitions[0].formula, pos.formula))) is False
            for j in kept
        )
        if disjoint:
            kept.append(i)
    return tuple(kept)


def _backup_cases(model: FOMDPModel, lvf: LinearValueFunction, name: str) -> tuple:
    """Reward plus per-basis regression cases for one action, values affine."""
    bu = backup_linear(model, lvf, model.action(name))
    cases = [affine_case(bu.reward, None)]
    cases.extend(affine_case(f, _wvar(i)) for i, f in enumerate(bu.fodtrs))
    return tuple(cases)


def _minus_bases(lvf: LinearValueFunction) -> tuple:
    return tuple(affine_case(b, _wvar(i), -1.0) for i, b in enumerate(lvf.bases))


def foalp_lp(
    model: FOMDPModel,
    lvf: LinearValueFunction,
    checker: Optional[ConsistencyChecker] = None,
) -> FirstOrderLP:
    """Value-bound LP: minimize size-weighted sums subject to 0 >= backup - value.

    One schema per action template over the parameterized backup cells; the
    per-parameter constraints imply the same bound as maximizing over the
    parameters first, and the violation search returns the same maximally
    violated row either way.
    """
    chk = checker or model.checker
    variables = tuple(_wvar(i) for i in range(len(lvf.bases)))
    objective = tuple(
        (_wvar(i), sum(p.value for p in b.partitions) / len(b.partitions))
        for i, b in enumerate(lvf.bases)
    )
    minus = _minus_bases(lvf)
    cert = _certified_indices(lvf.bases, chk)
    schemata = []
    for name in model.action_names():
        cases = _backup_cases(model, lvf, name)
        offset = len(cases)
        schemata.append(
            ConstraintSchema(name, cases + minus, tuple(offset + i for i in cert))
        )
    return FirstOrderLP(variables, objective, tuple(schemata))


def _action_cells(
    model: FOMDPModel,
    lvf: LinearValueFunction,
    name: str,
    checker: ConsistencyChecker,
) -> CaseStatement:
    """Existentially closed backup cells of one action, values affine.

    Each cell keeps the open pre-quantification formula; equal-valued cells
    are deliberately not merged so every partition still names exactly one
    affine expression.
    """
    flat = cross_sum(_backup_cases(model, lvf, name), checker)
    tagged = CaseStatement(
        tuple(replace(p, tag=name) for p in flat.partitions), flat.partitioned
    )
    return exists_case(model.action(name).params, tagged, checker, keep_bindings=True)


def _cell_key(p: Partition) -> tuple:
    return (p.tag, p.bind_body)


def _collect_exprs(partitions, exprs: dict):
    """Record each cell's affine value under its (tag, witness body) key."""
    for p in partitions:
        key = _cell_key(p)
        if key in exprs and exprs[key] != p.value:
            raise SolverError("distinct backup cells share a witness body")
        exprs[key] = p.value


def foalp_max_schemata(
    model: FOMDPModel,
    lvf: LinearValueFunction,
    weights: Mapping[str, float],
    checker: Optional[ConsistencyChecker] = None,
) -> tuple:
    """Per-action schemata with the backup maximized over parameters first.

    The cells are ranked at the given weights, carved into best-cell regions,
    and re-attached to their affine expressions, so the search optimum
    matches the parameterized form's at those weights.
    """
    chk = checker or model.checker
    minus = _minus_bases(lvf)
    cert = _certified_indices(lvf.bases, chk)
    out = []
    for name in model.action_names():
        closed = _action_cells(model, lvf, name, chk)
        exprs: dict = {}
        _collect_exprs(closed.partitions, exprs)
        numeric = CaseStatement(
            tuple(replace(p, value=p.value.evaluate(weights)) for p in closed.partitions),
            closed.partitioned,
        )
        best = max_case(numeric, chk)
        head = CaseStatement(
            tuple(replace(p, value=exprs[_cell_key(p)]) for p in best.partitions),
            best.partitioned,
        )
        if not head.partitions:
            continue
        out.append(
            ConstraintSchema(name, (head,) + minus, tuple(1 + i for i in cert))
        )
    return tuple(out)


# ---------------------------------------------------------------------------
# weight solving


def _generate_over_max(model, lvf, chk, tol, max_iters, threads) -> FOLPResult:
    """Constraint generation with per-iteration maximized schemata.

    The schemata depend on the trial weights, so selections are not stable
    across iterations; rows are deduplicated by content instead.
    """
    skeleton = foalp_lp(model, lvf, chk)
    rows: list = []
    seen: set = set()
    for _sid, _sel, expr in seed_rows(skeleton, chk):
        row = LinearConstraint(expr.coeffs, "<=", -expr.const)
        if row not in seen:
            seen.add(row)
            rows.append(row)
    stats: list = []
    for it in range(1, max_iters + 1):
        sol = solve_lp(LPModel(skeleton.variables, skeleton.objective, tuple(rows)))
        if sol.status == "infeasible":
            raise FOLPError("generated LP is infeasible")
        if sol.status == "unbounded":
            scale = 1e4 / max(1.0, max(abs(r) for r in sol.ray.values()))
            weights = {v: scale * sol.ray.get(v, 0.0) for v in skeleton.variables}
            lp_objective = float("-inf")
        else:
            weights = sol.assignment
            lp_objective = sol.objective
        schemata = foalp_max_schemata(model, lvf, weights, chk)
        added = 0
        stalled = False
        for schema, (vc, wall) in zip(schemata, search_schemata(schemata, weights, chk, tol, threads)):
            stats.append(
                GenerationRow(it, schema.schema_id, vc.violation if vc else 0.0, len(rows), lp_objective, wall)
            )
            if vc is None:
                continue
            row = LinearConstraint(vc.expr.coeffs, "<=", -vc.expr.const)
            if row in seen:
                stalled = True
                continue
            seen.add(row)
            rows.append(row)
            added += 1
        if added == 0:
            if sol.status == "unbounded":
                direction = ", ".join(f"{v}={r:g}" for v, r in sorted(sol.ray.items()))
                raise FOLPError(f"LP unbounded along {direction} and no constraint cuts the ray")
            if stalled:
                raise LPNumericalError("violated constraint already present; tolerance conflict")
            return FOLPResult(sol.assignment, sol.objective, tuple(stats), tuple(rows), it)
    raise FOLPError(f"constraint generation exceeded {max_iters} iterations")


def foalp_solve(
    model: FOMDPModel,
    lvf: LinearValueFunction,
    checker: Optional[ConsistencyChecker] = None,
    tol: float = VIOLATION_TOL,
    max_iters: int = 1000,
    threads: int = 1,
    maximize_first: bool = False,
    stats_out: Optional[list] = None,
) -> tuple:
    """Basis weights bounding every action's backup from above.

    Minimizes sum_i w_i * (mean partition value of basis i) subject to
    0 >= backup_A - value for every action, state, and parameter choice.
    With maximize_first the violation search runs on parameter-maximized
    schemata; both routes certify the same optimum.
    """
    chk = checker or model.checker
    if maximize_first:
        res = _generate_over_max(model, lvf, chk, tol, max_iters, threads)
    else:
        res = solve_first_order_lp(foalp_lp(model, lvf, chk), chk, tol, max_iters, threads)
    if stats_out is not None:
        stats_out.extend(res.stats)
    return tuple(res.assignment[_wvar(i)] for i in range(len(lvf.bases)))


# ---------------------------------------------------------------------------
# policy extraction


def _policy_from_cells(action_cells, weights: Mapping[str, float], checker) -> PolicyCase:
    exprs: dict = {}
    parts: list = []
    for closed in action_cells:
        _collect_exprs(closed.partitions, exprs)
        parts.extend(
            replace(p, value=float(p.value.evaluate(weights))) for p in closed.partitions
        )
    best = max_case(CaseStatement(tuple(parts), False), checker)
    return PolicyCase(best, tuple(exprs.items()))


def extract_policy(
    model: FOMDPModel,
    lvf: LinearValueFunction,
    checker: Optional[ConsistencyChecker] = None,
) -> PolicyCase:
    """Greedy policy of a weighted value function.

    Backup cells from every action template are pooled in template-name
    order and maximized; value ties fall to the alphabetically first
    template, then to canonical formula order.  Each region keeps its tag
    and witness body for binding extraction.
    """
    chk = checker or model.checker
    cells = [_action_cells(model, lvf, name, chk) for name in model.action_names()]
    return _policy_from_cells(cells, weight_map(lvf.weights), chk)


# ---------------------------------------------------------------------------
# approximate policy iteration


@dataclass(frozen=True)
class IterationRow:
    iteration: int
    phi: float
    converged: bool
    wall_ms: float


@dataclass(frozen=True)
class SolveReport:
    """Per-iteration weights and residuals of a policy-iteration run.

    `weights` has one vector per reweighting; `phis` the matching residual
    bounds (each >= 0); `loss` is the sup-norm guarantee at convergence and
    None otherwise.
    """

    weights: tuple
    phis: tuple
    converged: bool
    loss: Optional[float]
    stats: tuple

    def final_weights(self) -> tuple:
        return self.weights[-1]

    def csv_lines(self) -> tuple:
        out = ["iter,phi,converged,wall_ms"]
        for r in self.stats:
            out.append(f"{r.iteration},{r.phi:.12g},{int(r.converged)},{r.wall_ms:.3f}")
        return tuple(out)


def _api_lp(lvf: LinearValueFunction, policy: PolicyCase, checker: ConsistencyChecker) -> FirstOrderLP:
    """Residual LP: minimize phi subject to phi >= |Q_pi - value| regionwise.

    Each policy region contributes both signs of its cell's backup
    expression minus the candidate value, anywhere the region holds.
    """
    variables = tuple(_wvar(i) for i in range(len(lvf.bases))) + (_PHI,)
    exprs = dict(policy.cell_exprs)
    cert = _certified_indices(lvf.bases, checker)
    slack = CaseStatement((Partition(TRUE, LinExpr.of({_PHI: -1.0})),), True)
    schemata = []
    for name in policy.actions():
        kept = tuple(p for p in policy.case.partitions if p.tag == name)
        for label, sign in ((".hi", 1.0), (".lo", -1.0)):
            head = CaseStatement(
                tuple(replace(p, value=exprs[_cell_key(p)] * sign) for p in kept), False
            )
            tail = tuple(affine_case(b, _wvar(i), -sign) for i, b in enumerate(lvf.bases))
            schemata.append(
                ConstraintSchema(
                    name + label, (head,) + tail + (slack,), tuple(1 + i for i in cert)
                )
            )
    return FirstOrderLP(variables, ((_PHI, 1.0),), tuple(schemata))


def _policy_key(policy: PolicyCase) -> tuple:
    return tuple(
        (normalize(p.formula), p.tag, round(p.value, 9)) for p in policy.case.partitions
    )


def foapi_solve(
    model: FOMDPModel,
    lvf: LinearValueFunction,
    max_iters: int,
    checker: Optional[ConsistencyChecker] = None,
    tol: float = VIOLATION_TOL,
    lp_iters: int = 1000,
    threads: int = 1,
) -> SolveReport:
    """Alternate greedy extraction with minimal-residual reweighting.

    Convergence is a repeated policy (normalized region formulas, tags, and
    values rounded to 1e-9); hitting the iteration cap reports
    converged=False rather than raising.
    """
    if max_iters < 1:
        raise SolverError(f"max_iters must be at least 1, got {max_iters}")
    chk = checker or model.checker
    cells = [_action_cells(model, lvf, name, chk) for name in model.action_names()]
    weights = tuple(float(w) for w in lvf.weights)
    trajectory: list = []
    phis: list = []
    rows: list = []
    previous = None
    converged = False
    for it in range(1, max_iters + 1):
        t0 = time.perf_counter()
        policy = _policy_from_cells(cells, weight_map(weights), chk)
        if not policy.case.partitions:
            raise SolverError("extracted policy is empty")
        key = _policy_key(policy)
        if key == previous:
            converged = True
            rows.append(IterationRow(it, phis[-1], True, (time.perf_counter() - t0) * 1000.0))
            break
        previous = key
        res = solve_first_order_lp(_api_lp(lvf, policy, chk), chk, tol, lp_iters, threads)
        weights = tuple(res.assignment[_wvar(i)] for i in range(len(lvf.bases)))
        phi = float(res.assignment[_PHI])
        if phi < 0.0:
            if phi < -1e-9:
                raise SolverError(f"negative residual {phi} from the reweighting LP")
            phi = 0.0
        trajectory.append(weights)
        phis.append(phi)
        rows.append(IterationRow(it, phi, False, (time.perf_counter() - t0) * 1000.0))
    loss = loss_bound(phis[-1], model.discount) if converged else None
    return SolveReport(tuple(trajectory), tuple(phis), converged, loss, tuple(rows))


# ---------------------------------------------------------------------------
# reporting


def value_function_lines(lvf: LinearValueFunction) -> tuple:
    """One `weight<TAB>formula` line per basis partition."""
    out = []
    for w, b in zip(lvf.weights, lvf.bases):
        for p in b.partitions:
            out.append(f"{w:g}\t{format_formula(p.formula)}")
    return tuple(out)
