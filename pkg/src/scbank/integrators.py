"""Fixed-step one-step integrators.

:func:`make_stepper` binds a jitted right-hand side ``rhs(t, x, args)`` into
a kernel ``advance(method, t, x, dt, args) -> x_new``.  Binding through a
closure (rather than passing the function as an argument) keeps the compiled
kernels cacheable on disk.  :func:`step` is the convenience entry point for
ordinary Python callables.
"""

import numpy as np

from ._accel import jit

EULER = 0
RK4 = 1
TRAPEZOIDAL = 2

METHODS = {"euler": EULER, "rk4": RK4, "trapezoidal": TRAPEZOIDAL}

# simplified Newton for the implicit trapezoidal rule
NEWTON_MAXITER = 12
NEWTON_TOL = 1e-11


def make_stepper(rhs, compile=True):
    """Return ``advance(method, t, x, dt, args)`` specialised to ``rhs``.

    With ``compile=False`` the stepper stays interpreted, which is what plain
    Python right-hand sides need.
    """

    def advance(method, t, x, dt, args):
        if method == RK4:
            h2 = 0.5 * dt
            k1 = rhs(t, x, args)
            k2 = rhs(t + h2, x + h2 * k1, args)
            k3 = rhs(t + h2, x + h2 * k2, args)
            k4 = rhs(t + dt, x + dt * k3, args)
            return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if method == TRAPEZOIDAL:
            n = x.shape[0]
            f0 = rhs(t, x, args)
            t1 = t + dt
            y = x + dt * f0
            fy = rhs(t1, y, args)
            jac = np.empty((n, n))
            for j in range(n):
                h = 1e-7 * max(1.0, abs(y[j]))
                yp = y.copy()
                yp[j] += h
                jac[:, j] = (rhs(t1, yp, args) - fy) / h
            m = np.eye(n) - 0.5 * dt * jac
            for _ in range(NEWTON_MAXITER):
                g = y - x - 0.5 * dt * (f0 + fy)
                delta = np.linalg.solve(m, g)
                y = y - delta
                fy = rhs(t1, y, args)
                if np.max(np.abs(delta)) <= NEWTON_TOL * (1.0 + np.max(np.abs(y))):
                    break
            return y
        return x + dt * rhs(t, x, args)

    return jit(advance) if compile else advance


def step(rhs, t, x, dt, args=(), method="rk4"):
    """Advance ``x`` by one step of ``dt`` for a Python callable
    ``rhs(t, x, args)``."""
    advance = make_stepper(rhs, compile=False)
    return advance(METHODS[method], float(t), np.asarray(x, dtype=np.float64), float(dt), args)


def integrate(rhs, x0, dt, n_steps, args=(), method="rk4", t0=0.0):
    """State after ``n_steps`` fixed steps of a Python right-hand side."""
    advance = make_stepper(rhs, compile=False)
    code = METHODS[method]
    x = np.asarray(x0, dtype=np.float64)
    for k in range(n_steps):
        x = advance(code, t0 + k * dt, x, float(dt), args)
    return x
