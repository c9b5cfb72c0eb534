"""Independent reference values for the hydrogen eigenfunctions.

Uses sympy.physics.hydrogen.Psi_nlm (Condon-Shortley phase) and symbolic
Cartesian differentiation. Output is pasted into tests/test_hydrogen.cpp.
"""
import sympy as sp
from sympy.physics.hydrogen import Psi_nlm

x, y, z = sp.symbols("x y z", real=True)
r, th, ph = sp.symbols("r theta phi", positive=True)

cases = [
    ((2, 1, 0), (0.3, -0.7, 1.1)),
    ((2, 1, 1), (0.3, -0.7, 1.1)),
    ((2, 1, -1), (1.2, 0.4, -0.5)),
    ((3, 2, 1), (-0.8, 1.3, 0.6)),
    ((3, 1, -1), (2.0, -1.0, 0.5)),
    ((4, 3, -2), (1.5, 2.5, -1.0)),
    ((4, 0, 0), (0.7, 0.2, -0.9)),
]

for (n, l, m), p in cases:
    expr = Psi_nlm(n, l, m, r, ph, th)
    cart = expr.subs({r: sp.sqrt(x**2 + y**2 + z**2),
                      th: sp.acos(z / sp.sqrt(x**2 + y**2 + z**2)),
                      ph: sp.atan2(y, x)})
    sub = {x: sp.Rational(str(p[0])), y: sp.Rational(str(p[1])), z: sp.Rational(str(p[2]))}
    val = complex(sp.N(cart.subs(sub), 20))
    grad = [complex(sp.N(sp.diff(cart, v).subs(sub), 20)) for v in (x, y, z)]
    fmt = lambda c: "{%.15e, %.15e}" % (c.real, c.imag)
    print("{{%d, %d, %d}, {%r, %r, %r}, %s, {%s, %s, %s}}," % (
        n, l, m, p[0], p[1], p[2], fmt(val), fmt(grad[0]), fmt(grad[1]), fmt(grad[2])))
