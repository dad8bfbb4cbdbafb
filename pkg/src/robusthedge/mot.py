"""Martingale optimal transport LPs on truncated trees of grid paths."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .discretize import gap_value
from .lp import INFEASIBLE, OPTIMAL, LinearProgram, LPSolution, solve_lp
from .marginals import GridMarginal
from .paths import ConfigError, DomainError, GridPath

DUALITY_TOL = 1e-8
DEFAULT_J = 3
DEFAULT_MAX_NODES = 20_000


class TreeSizeError(ConfigError):
    pass


class WeakDualityViolation(AssertionError):
    pass


def gap_menu(k: int, N: int, J: int, T: float = math.inf, elapsed: float = 0.0) -> list[tuple]:
    """Menu of ``(code, gap)`` for jump k: {i/(2^k N)}_{i<=J} and {1/(i 2^k N)}_{2<=i<=J+1}.

    Only gaps keeping the jump strictly before T are returned, largest first.
    """
    codes = [("A", i) for i in range(J, 0, -1)] + [("B", i) for i in range(2, J + 2)]
    out = []
    for code in codes:
        g = gap_value(k, N, code)
        if elapsed + g < T:
            out.append((code, g))
    return out


@dataclass
class Node:
    index: int
    parent: int
    depth: int
    level: int
    elapsed: float
    code: tuple | None = None      # gap code of the incoming jump
    sign: int = 0                  # sign of the incoming jump (0 for roots)
    end: int = 0                   # subtree occupies [index, end)
    branches: list = field(default_factory=list)  # (code, gap, up_child | None, down_child)


@dataclass
class PathTree:
    N: int
    m: int
    J: int
    B: float
    T: float
    nodes: list
    roots: tuple                   # (down_root, up_root) node indices

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def max_level(self) -> int:
        return int(round(self.B * self.N))

    def history(self, i: int) -> list[int]:
        out = []
        while i >= 0:
            out.append(i)
            i = self.nodes[i].parent
        return out[::-1]

    def grid_path(self, i: int) -> GridPath:
        hist = self.history(i)
        root = self.nodes[hist[0]]
        gaps = [gap_value(self.nodes[j].depth, self.N, self.nodes[j].code) for j in hist[1:]]
        signs = [self.nodes[j].sign for j in hist[1:]]
        return GridPath(self.N, self.T, root.level / self.N, tuple(gaps), tuple(signs))

    def leaf_paths(self) -> list[GridPath]:
        return [self.grid_path(i) for i in range(self.size)]

    def terminal_levels(self) -> np.ndarray:
        return np.array([nd.level for nd in self.nodes])

    def martingale_rows(self) -> list[tuple]:
        """``(node, code, up_child, down_child)`` for every balance condition.

        Node -1 is the virtual start at S_0 = 1 whose two children are the roots.
        """
        rows = [(-1, None, self.roots[1], self.roots[0])]
        for nd in self.nodes:
            for code, _g, up, down in nd.branches:
                rows.append((nd.index, code, up, down))
        return rows

    def martingale_matrix(self) -> np.ndarray:
        """Row r has +1/N on the up subtree and -1/N on the down subtree."""
        rows = self.martingale_rows()
        A = np.zeros((len(rows), self.size))
        for r, (_n, _c, up, down) in enumerate(rows):
            if up is not None:
                A[r, up:self.nodes[up].end] = 1.0 / self.N
            A[r, down:self.nodes[down].end] = -1.0 / self.N
        return A

    def find_child(self, i: int, code: tuple, sign: int) -> int | None:
        for c, _g, up, down in self.nodes[i].branches:
            if c == code:
                return up if sign > 0 else down
        return None

    def locate(self, f: GridPath) -> int | None:
        """Node index of a grid path's full history, or None if it leaves the tree."""
        from .discretize import gap_code

        lvl = f.initial_level
        i = self.roots[1] if lvl == self.N + 1 else self.roots[0] if lvl == self.N - 1 else None
        if i is None:
            return None
        for k, (g, s) in enumerate(zip(f.gaps, f.signs), 1):
            code = gap_code(k, self.N, g)
            i = None if code is None else self.find_child(i, code, s)
            if i is None:
                return None
        return i

    def diagnostics(self) -> dict:
        depth_counts = {}
        for nd in self.nodes:
            depth_counts[nd.depth] = depth_counts.get(nd.depth, 0) + 1
        capped = sum(1 for nd in self.nodes for b in nd.branches if b[2] is None)
        return {
            "nodes": self.size,
            "leaves": self.size,
            "nodes_per_depth": {str(k): v for k, v in sorted(depth_counts.items())},
            "capped_branches": capped,
            "menu_size_per_depth": 2 * self.J,
            "truncation": "heuristic: gap menu and jump count truncated, effect on value not quantified",
        }


def default_cap(N: int, m: int) -> float:
    # high enough that the cap never binds for paths with at most m jumps
    return 1.0 + (m + 1) / N


def build_tree(N: int, m: int, J: int = DEFAULT_J, B: float | None = None, T: float = 1.0,
               max_nodes: int = DEFAULT_MAX_NODES) -> PathTree:
    """Enumerate all grid-path histories with at most m jumps.

    Nodes are numbered in depth-first order, so every subtree is a contiguous
    index range. Every node doubles as a leaf: the path stopped there and held
    constant to T. Level 0 is absorbing and up-jumps above B*N are removed,
    leaving only the down branch whose balance row then forces it to zero mass.
    """
    if N < 1 or m < 0 or J < 1 or not T > 0:
        raise DomainError("need N >= 1, m >= 0, J >= 1, T > 0")
    B = default_cap(N, m) if B is None else float(B)
    if B < 1 + m / N - 1e-12:
        raise DomainError(f"cap B={B} below 1 + m/N = {1 + m / N}")
    cap = int(round(B * N))
    nodes: list[Node] = []

    def grow(parent, depth, level, elapsed, code, sign):
        if len(nodes) >= max_nodes:
            raise TreeSizeError(
                f"tree exceeds {max_nodes} nodes at (N={N}, m={m}, J={J}); "
                f"try m={max(0, m - 1)} or J={max(1, J - 1)}")
        nd = Node(len(nodes), parent, depth, level, elapsed, code, sign)
        nodes.append(nd)
        if depth < m and level > 0:
            for c, g in gap_menu(depth + 1, N, J, T, elapsed):
                up = grow(nd.index, depth + 1, level + 1, elapsed + g, c, 1) if level + 1 <= cap else None
                down = grow(nd.index, depth + 1, level - 1, elapsed + g, c, -1)
                nd.branches.append((c, g, up, down))
        nd.end = len(nodes)
        return nd.index

    lo = grow(-1, 0, N - 1, 0.0, None, 0)
    hi = grow(-1, 0, N + 1, 0.0, None, 0)
    return PathTree(N, m, J, B, T, nodes, (lo, hi))


@dataclass
class TreeMeasure:
    tree: PathTree
    masses: np.ndarray

    def node_masses(self) -> np.ndarray:
        c = np.concatenate([[0.0], np.cumsum(self.masses)])
        return np.array([c[nd.end] - c[nd.index] for nd in self.tree.nodes])

    def terminal_law(self) -> GridMarginal:
        law: dict[int, float] = {}
        for nd, q in zip(self.tree.nodes, self.masses):
            if q > 0:
                law[nd.level] = law.get(nd.level, 0.0) + float(q)
        return GridMarginal(self.tree.N, dict(sorted(law.items())))


def leaf_payoffs(tree: PathTree, G) -> np.ndarray:
    """Claim values on every leaf path, read with the point value S_0 = 1 at t = 0."""
    return np.array([float(G(tree.grid_path(i).to_step(anchor=1.0))) for i in range(tree.size)])


@dataclass
class MOTResult:
    solution: LPSolution
    mode: str
    measure: TreeMeasure | None = None
    h: dict | None = None            # grid level -> static position
    gamma: dict | None = None        # (node, code) -> dynamic position
    cash: float = 0.0
    band_lambda: float = 0.0
    residuals: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return self.solution.value

    @property
    def status(self) -> str:
        return self.solution.status


def _check_inputs(tree: PathTree, nu: GridMarginal, mode: str, K: float):
    if nu.N != tree.N:
        raise DomainError(f"marginal resolution {nu.N} differs from tree resolution {tree.N}")
    if mode not in ("exact", "band"):
        raise ConfigError(f"mode must be 'exact' or 'band', got {mode!r}")
    if mode == "band" and not K >= 0:
        raise ConfigError("band width K must be >= 0")


def _layout(tree: PathTree, nu: GridMarginal, mode: str):
    """Shared structure of primal and dual: kept leaves, kept rows, grid points."""
    levels = tree.terminal_levels()
    A = tree.martingale_matrix()
    rows = tree.martingale_rows()
    if mode == "exact":
        support = {k for k, w in nu.weights.items() if w > 0}
        leaves = np.array([i for i in range(tree.size) if levels[i] in support], dtype=int)
    else:
        leaves = np.arange(tree.size)
    A = A[:, leaves]
    keep = np.nonzero(np.any(A != 0, axis=1))[0]
    grid = sorted(set(levels[leaves].tolist()) | set(nu.weights))
    return levels, leaves, A[keep], [rows[r] for r in keep], grid


def primal_lp(tree: PathTree, G, nu: GridMarginal, mode: str = "exact", K: float = 0.0,
              payoffs: np.ndarray | None = None) -> MOTResult:
    """max sum_leaf q * G(leaf) over martingale tree measures with terminal law nu.

    Exact mode pins Q(S_T = k/N) = nu(k/N); leaves ending outside supp(nu) are
    dropped beforehand since they must carry zero mass. Band mode allows an l1
    deviation of at most K/N through slack pairs.
    """
    _check_inputs(tree, nu, mode, K)
    pay = leaf_payoffs(tree, G) if payoffs is None else payoffs
    levels, leaves, M, _rows, grid = _layout(tree, nu, mode)
    nL, nR, nG = leaves.size, M.shape[0], len(grid)
    lv = levels[leaves]
    P = np.zeros((nG, nL))
    for gi, x in enumerate(grid):
        P[gi, lv == x] = 1.0
    target = np.array([nu.weights.get(x, 0.0) for x in grid])
    if mode == "exact":
        lp = LinearProgram(pay[leaves], A_eq=np.vstack([M, P]),
                           b_eq=np.concatenate([np.zeros(nR), target]), maximize=True)
    else:
        # variables: q (nL), s_plus (nG), s_minus (nG)
        n = nL + 2 * nG
        Aeq = np.zeros((nR + nG + 1, n))
        Aeq[:nR, :nL] = M
        Aeq[nR:nR + nG, :nL] = P
        Aeq[nR:nR + nG, nL:nL + nG] = -np.eye(nG)
        Aeq[nR:nR + nG, nL + nG:] = np.eye(nG)
        Aeq[-1, :nL] = 1.0
        beq = np.concatenate([np.zeros(nR), target, [1.0]])
        Aub = np.zeros((1, n))
        Aub[0, nL:] = 1.0
        c = np.concatenate([pay[leaves], np.zeros(2 * nG)])
        lp = LinearProgram(c, A_eq=Aeq, b_eq=beq, A_ub=Aub, b_ub=[K / tree.N], maximize=True)
    sol = solve_lp(lp)
    res = MOTResult(sol, mode)
    if sol.ok:
        q = np.zeros(tree.size)
        q[leaves] = np.maximum(sol.x[:nL], 0.0)
        res.measure = TreeMeasure(tree, q)
        res.residuals = verify_measure(tree, res.measure, nu, mode, K)
    return res


def dual_lp(tree: PathTree, G, nu: GridMarginal, mode: str = "exact", K: float = 0.0,
            payoffs: np.ndarray | None = None) -> MOTResult:
    """min sum_k h(k/N) nu(k/N) (+ cash + lambda K/N in band mode) over super-hedges.

    Every leaf must satisfy h(terminal) + sum of gamma * jump >= G(leaf), with
    gamma indexed by (node, gap code). In band mode |h| <= lambda.
    """
    _check_inputs(tree, nu, mode, K)
    pay = leaf_payoffs(tree, G) if payoffs is None else payoffs
    levels, leaves, M, rows, grid = _layout(tree, nu, mode)
    nL, nR, nG = leaves.size, M.shape[0], len(grid)
    lv = levels[leaves]
    col = {x: i for i, x in enumerate(grid)}
    nuv = np.array([nu.weights.get(x, 0.0) for x in grid])
    # variables: h (nG, free), gamma (nR, free)[, cash (free), lambda >= 0]
    band = mode == "band"
    n = nG + nR + (2 if band else 0)
    Aub = np.zeros((nL, n))
    for r, x in enumerate(lv):
        Aub[r, col[x]] = -1.0
    Aub[:, nG:nG + nR] = -M.T
    b = -pay[leaves]
    c = np.concatenate([nuv, np.zeros(nR)])
    free = np.ones(n, dtype=bool)
    if band:
        Aub[:, nG + nR] = -1.0
        c = np.concatenate([c, [1.0, K / tree.N]])
        free[-1] = False
        extra = np.zeros((2 * nG, n))
        extra[:nG, :nG] = np.eye(nG)
        extra[nG:, :nG] = -np.eye(nG)
        extra[:, -1] = -1.0
        Aub = np.vstack([Aub, extra])
        b = np.concatenate([b, np.zeros(2 * nG)])
    sol = solve_lp(LinearProgram(c, A_ub=Aub, b_ub=b, free=free))
    res = MOTResult(sol, mode)
    if not sol.ok:
        return res
    x = sol.x
    gamma = {(rw[0], rw[1]): float(v) for rw, v in zip(rows, x[nG:nG + nR])}
    h = {int(k): float(v) for k, v in zip(grid, x[:nG])}
    res.gamma, res.h = gamma, h
    if band:
        res.cash, res.band_lambda = float(x[nG + nR]), float(x[-1])
    else:
        # levels outside supp(nu) cost nothing; fund them so every leaf is covered
        gains = certificate_gains(tree, gamma)
        for i, nd in enumerate(tree.nodes):
            need = float(pay[i] - gains[i])
            if nu.weights.get(nd.level, 0.0) <= 0 and need > h.get(nd.level, -math.inf):
                h[nd.level] = need
    res.residuals = {"replay_margin": float(np.min(certificate_values(tree, res) - pay))}
    return res


def certificate_gains(tree: PathTree, gamma: dict) -> np.ndarray:
    """Trading gain sum gamma * jump along every leaf path of the tree."""
    gains = np.zeros(tree.size)
    for (node, code), g in gamma.items():
        up, down = (tree.roots[1], tree.roots[0]) if node == -1 else (
            tree.find_child(node, code, 1), tree.find_child(node, code, -1))
        if up is not None:
            gains[up:tree.nodes[up].end] += g / tree.N
        gains[down:tree.nodes[down].end] -= g / tree.N
    return gains


def certificate_values(tree: PathTree, res: MOTResult) -> np.ndarray:
    """Pathwise value of the dual portfolio on every leaf."""
    gains = certificate_gains(tree, res.gamma)
    static = np.array([res.h.get(nd.level, 0.0) for nd in tree.nodes])
    if res.mode == "band":
        static = static + res.cash
    return static + gains


def verify_measure(tree: PathTree, Q: TreeMeasure, nu: GridMarginal | None = None,
                   mode: str = "exact", K: float = 0.0) -> dict:
    """Normalization, per-(node, gap) balance and terminal-law residuals."""
    q = np.asarray(Q.masses, dtype=float)
    A = tree.martingale_matrix()
    bal = A @ q
    worst = int(np.argmax(np.abs(bal))) if bal.size else 0
    rows = tree.martingale_rows()
    out = {
        "negative_mass": float(max(0.0, -q.min())) if q.size else 0.0,
        "normalization": float(abs(q.sum() - 1.0)),
        "martingale": float(np.abs(bal).max()) if bal.size else 0.0,
        "martingale_worst": {"node": rows[worst][0], "gap": list(rows[worst][1]) if rows[worst][1] else None},
        "violations": [{"node": rows[r][0], "gap": list(rows[r][1]) if rows[r][1] else None,
                        "residual": float(bal[r])} for r in np.nonzero(np.abs(bal) > 1e-9)[0]],
    }
    if nu is not None:
        law = Q.terminal_law().weights
        keys = set(law) | set(nu.weights)
        diff = [abs(law.get(k, 0.0) - nu.weights.get(k, 0.0)) for k in keys]
        if mode == "exact":
            out["terminal"] = float(max(diff, default=0.0))
        else:
            out["terminal"] = float(max(0.0, sum(diff) - K / tree.N))
    return out


def check_weak_duality(primal: MOTResult, dual: MOTResult, tol: float = DUALITY_TOL) -> float:
    """Return dual - primal; raise if the dual falls below the primal."""
    if not (primal.solution.ok and dual.solution.ok):
        return math.nan
    gap = dual.value - primal.value
    if gap < -tol * (1 + abs(primal.value)):
        raise WeakDualityViolation(f"dual {dual.value!r} below primal {primal.value!r}")
    return gap


def solve_pair(tree: PathTree, G, nu: GridMarginal, mode: str = "exact", K: float = 0.0) -> dict:
    """Primal and dual on one instance, with the weak-duality assertion applied."""
    pay = leaf_payoffs(tree, G)
    p = primal_lp(tree, G, nu, mode, K, payoffs=pay)
    d = dual_lp(tree, G, nu, mode, K, payoffs=pay)
    gap = check_weak_duality(p, d)
    status = p.status if p.status == d.status else f"{p.status}/{d.status}"
    return {"primal": p, "dual": d, "gap": gap, "status": status}


def random_tree_measure(tree: PathTree, rng: np.random.Generator, stop_range=(0.1, 0.9)) -> TreeMeasure:
    """Random martingale measure on the tree.

    Each node stops with a random probability; the rest is spread over its
    uncapped gaps at random, half up and half down.
    """
    q = np.zeros(tree.size)

    def visit(i, mass):
        nd = tree.nodes[i]
        open_br = [b for b in nd.branches if b[2] is not None]
        if not open_br:
            q[i] += mass
            return
        stop = rng.uniform(*stop_range)
        q[i] += mass * stop
        split = rng.dirichlet(np.ones(len(open_br))) * mass * (1 - stop)
        for (_c, _g, up, down), w in zip(open_br, split):
            visit(up, w / 2)
            visit(down, w / 2)

    visit(tree.roots[0], 0.5)
    visit(tree.roots[1], 0.5)
    return TreeMeasure(tree, q)


def refine_experiment(G, mu, schedule, mode: str = "exact", K: float = 0.0, B: float | None = None) -> dict:
    """Primal and dual values along a schedule of (N, m, J); trends are reported, not asserted."""
    from .marginals import project_marginal

    rows = []
    for N, m, J in schedule:
        tree = build_tree(N, m, J, B, G.horizon)
        nu = project_marginal(mu, N)
        r = solve_pair(tree, G, nu, mode, K)
        rows.append({
            "N": N, "m": m, "J": J,
            "primal": r["primal"].value if r["primal"].solution.ok else None,
            "dual": r["dual"].value if r["dual"].solution.ok else None,
            "gap": None if math.isnan(r["gap"]) else r["gap"],
            "status": r["status"],
            "truncation": tree.diagnostics(),
        })
    trends = []
    for a, b in zip(rows, rows[1:]):
        if a["primal"] is None or b["primal"] is None:
            continue
        trends.append({
            "from": [a["N"], a["m"], a["J"]], "to": [b["N"], b["m"], b["J"]],
            "delta_primal": b["primal"] - a["primal"],
        })
    return {"rows": rows, "trends": trends}
