"""
Eigenmatrix Sparse Recovery

Recovers sparse spike models sum_k w_k delta(x - x_k) from unstructured,
noisy samples u(s_j) = sum_k G(s_j, x_k) w_k by building a data-driven
eigenmatrix M with M g(x) ~ x g(x), reading the spike locations off the
Krylov sequence of M with Prony or ESPRIT, and polishing them with
variable-projection least squares.

Modules are imported by flat name (``from eigenmatrix import build``) with
this directory on ``sys.path``; see ``main.py``.
"""

__version__ = "1.0.0"
