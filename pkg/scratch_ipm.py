"""Scratch validation of the embedded conelp (not part of the package)."""
import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from fpdispatch._ipm import ConeLP, solve_conelp

rng = np.random.default_rng(0)

# --- random bounded LPs vs scipy linprog ---
bad = 0
for trial in range(30):
    n = rng.integers(3, 10)
    p = rng.integers(1, max(2, n // 2))
    A = rng.normal(size=(p, n))
    x0 = rng.uniform(0.2, 0.8, size=n)
    b = A @ x0
    c = rng.normal(size=n)
    # bounds 0 <= x <= 1 as G x <= h
    G = sp.vstack([sp.eye(n), -sp.eye(n)]).tocsr()
    h = np.concatenate([np.ones(n), np.zeros(n)])
    prob = ConeLP(c=c, A=sp.csr_matrix(A), b=b, G=G, h=h, l=2 * n, soc_sizes=[])
    res = solve_conelp(prob, tol=1e-9, max_iter=100)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=[(0, 1)] * n, method="highs")
    if res.status != "optimal" or not ref.success:
        print("TRIAL", trial, "status", res.status, "ref", ref.status)
        bad += 1
        continue
    if abs(res.primal_obj - ref.fun) > 1e-6 * (1 + abs(ref.fun)):
        print("TRIAL", trial, "obj mismatch", res.primal_obj, ref.fun)
        bad += 1
print("LP trials bad:", bad)

# --- infeasible LP ---
A = np.array([[1.0]])
prob = ConeLP(c=np.array([0.0]), A=sp.csr_matrix((0, 1)), b=np.zeros(0),
              G=sp.csr_matrix(np.array([[1.0], [-1.0]])), h=np.array([0.0, -1.0]),
              l=2, soc_sizes=[])
res = solve_conelp(prob, 1e-8, 100)
print("infeasible test ->", res.status)

# --- unbounded LP: min -x, x >= 0 ---
prob = ConeLP(c=np.array([-1.0]), A=sp.csr_matrix((0, 1)), b=np.zeros(0),
              G=sp.csr_matrix(np.array([[-1.0]])), h=np.array([0.0]),
              l=1, soc_sizes=[])
res = solve_conelp(prob, 1e-8, 100)
print("unbounded test ->", res.status)

# --- SOCP: min x0 s.t. x0 >= ||(x1,x2)||, x1 = 3, x2 = 4 -> x0 = 5 ---
A = sp.csr_matrix(np.array([[0.0, 1, 0], [0, 0, 1.0]]))
b = np.array([3.0, 4.0])
G = sp.csr_matrix(-np.eye(3))
h = np.zeros(3)
prob = ConeLP(c=np.array([1.0, 0, 0]), A=A, b=b, G=G, h=h, l=0, soc_sizes=[3])
res = solve_conelp(prob, 1e-9, 100)
print("SOCP norm test -> status", res.status, "x0 =", res.x[0], "(want 5)")

# --- rotated-style: min w s.t. 2*w*(1/2) >= p^2, p = 2 (via rotation rows) ---
# vars (w, half, p); rows done manually like socp._to_conelp
inv = 1 / np.sqrt(2)
Grows = np.array([
    [-inv, -inv, 0.0],
    [-inv, inv, 0.0],
    [0.0, 0.0, -1.0],
])
A = sp.csr_matrix(np.array([[0.0, 1, 0], [0, 0, 1.0]]))
b = np.array([0.5, 2.0])
prob = ConeLP(c=np.array([1.0, 0, 0]), A=A, b=b, G=sp.csr_matrix(Grows),
              h=np.zeros(3), l=0, soc_sizes=[3])
res = solve_conelp(prob, 1e-9, 100)
print("rotated epigraph -> status", res.status, "w =", res.x[0], "(want 4)")

# --- random feasible SOCPs vs dense grid check on 2 vars ---
# min c1*x + c2*y  s.t. x^2 + y^2 <= 1 (norm cone with t fixed 1)
for trial in range(5):
    c2 = rng.normal(size=2)
    A = sp.csr_matrix(np.array([[1.0, 0, 0]]))
    b = np.array([1.0])
    G = sp.csr_matrix(-np.eye(3))
    prob = ConeLP(c=np.array([0.0, c2[0], c2[1]]), A=A, b=b, G=G, h=np.zeros(3),
                  l=0, soc_sizes=[3])
    res = solve_conelp(prob, 1e-9, 100)
    want = -np.linalg.norm(c2)  # optimum at -c/||c|| on the unit circle
    got = c2 @ res.x[1:]
    ok = abs(got - want) < 1e-7
    print(f"circle trial {trial}: status {res.status} obj {got:.9f} want {want:.9f} ok={ok}")
