"""Canonical geodesic flows d iota/dt = J iota_* X and the two-curve problem.

Two schemes solve the Cauchy problem for coordinate-aligned X on flat charts:

* flow_spectral: exact continuation of the trigonometric-polynomial
  representative. For X = c d/dtheta_k each Fourier mode m along axis k is
  multiplied by e^{-m c t}; a winding (linear) part picks up the constant
  drift t c J(W e_k). Negative modes grow like e^{|m| c t}, which is the
  ill-posedness of the inward problem: growth past amp_max aborts, and for
  curves whose adverse-side radius estimate pins them to the unit circle the
  flow refuses to start at all.

* flow_timestep: guarded RK4 with a 2/3 dealiasing filter and a spectral
  tail-energy monitor that aborts (BlowUpDetected) when the retained top
  modes carry more than 1e-3 of the energy. It fails loudly on smooth
  non-analytic data instead of smoothing it away.

solve_bvp_annulus fits a Laurent polynomial annulus map between two nested
Jordan curves by Gauss-Newton on (modulus, coefficients, boundary
correspondences), the discrete version of the doubly connected Riemann
mapping theorem.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _spectral, curve_lab
from .errors import (AmplificationExceeded, BlowUpDetected, NotNested,
                     StepTooLarge, UnsupportedField, ValidationError)
from .immersion import (GridTorus, Immersion, VectorFieldOnL, frames,
                        is_totally_real)

AMP_MAX = 1e6
TAIL_ENERGY_ABORT = 1e-3
DEALIAS_FRACTION = 2.0 / 3.0
SPECTRAL_PRESENCE_FLOOR = 1e-15


@dataclass
class FlowResult:
    times: list
    immersions: list
    amplification: float
    scheme: str                  # "spectral" | "timestep"
    geodesic_residual: Optional[float] = None


@dataclass
class BvpResult:
    modulus: float
    curve: curve_lab.FourierCurve     # Laurent coefficients of the annulus map
    outer_misfit: float
    inner_misfit: float
    converged: bool
    iterations: int
    residual_history: list
    min_map_derivative: float = 0.0   # min |g'| over the sampled annulus


def _coordinate_alignment(X):
    """Return (axis, scale) when X = c * d/dtheta_axis with constant c."""
    comp = X.components
    axis = None
    for k in range(comp.shape[0]):
        arr = comp[k]
        if np.max(np.abs(arr)) < 1e-14:
            continue
        if np.max(np.abs(arr - arr.flat[0])) > 1e-12 * max(1.0, abs(arr.flat[0])):
            return None
        if axis is not None:
            return None
        axis = k
    if axis is None:
        return None
    return axis, float(comp[axis].flat[0])


def _complex_components(points, n):
    """z_k = x_k + i y_k arrays; the flow acts mode-wise on these."""
    return points[..., :n] + 1j * points[..., n:]


def mode_growth_guard(im, axis, c, t_extent, margin=curve_lab.RADIUS_MARGIN):
    """Raise AmplificationExceeded for directions the data cannot support.

    Two guards: the amplitude cap e^{|m| |c t|} <= AMP_MAX over modes present
    above the spectral noise floor, and for curves with a populated adverse
    tail, the radius estimate itself (flowing inward needs inner radius
    strictly below 1, outward needs outer radius strictly above 1).
    """
    z = _complex_components(im.points, im.chart.n)
    coeffs = np.fft.fftn(z, axes=tuple(range(im.n)))
    mags = np.abs(coeffs)
    scale = float(np.max(mags))
    m = _spectral.modes(im.grid.sizes[axis])
    shape = [1] * im.points.ndim
    shape[axis] = im.grid.sizes[axis]
    factors = np.exp(-np.reshape(m, shape) * c * t_extent)
    present = mags > SPECTRAL_PRESENCE_FLOOR * max(scale, 1.0)
    if not np.any(present):
        return 1.0
    amp = max(1.0, float(np.max(
        np.where(present, np.broadcast_to(factors, mags.shape), 0.0))))
    if amp > AMP_MAX:
        raise AmplificationExceeded(
            f"continuation would amplify present modes by {amp:.3g} > {AMP_MAX:g}"
        )
    if im.n == 1 and im.chart.dim == 2 and im.winding is None:
        gamma = im.complex_samples()
        M = gamma.size
        try:
            cur = curve_lab.fourier_analyze(gamma, M // 4, check_orientation=False)
        except Exception:
            return amp
        est = curve_lab.estimate_radii(cur)
        if c * t_extent > 0 and math.isfinite(est.r_inner) and est.r_inner > 0.0:
            if est.r_inner >= 1.0 - margin:
                raise AmplificationExceeded(
                    "inward continuation is ill-posed: inner radius estimate "
                    f"{est.r_inner:.4g} is not below 1"
                )
        if c * t_extent < 0 and math.isfinite(est.r_outer):
            if est.r_outer <= 1.0 + margin:
                raise AmplificationExceeded(
                    "outward continuation is ill-posed: outer radius estimate "
                    f"{est.r_outer:.4g} is not above 1"
                )
    return amp


def flow_spectral(im, X, ts, validate=True):
    """Exact mode-wise continuation for a coordinate-aligned field on a flat chart."""
    if not im.chart.is_flat:
        raise UnsupportedField("spectral continuation is restricted to flat charts")
    al = _coordinate_alignment(X)
    if al is None:
        raise UnsupportedField(
            "flow_spectral needs X = c * d/dtheta_k; reparametrize general "
            "curve fields first"
        )
    axis, c = al
    ts = [float(t) for t in ts]
    worst = max((t for t in ts), key=abs, default=0.0)
    amp = mode_growth_guard(im, axis, c, worst) if worst != 0.0 else 1.0
    result = _continue_modes(im, axis, c, ts)
    residual = _geodesic_residual(result, axis, c)
    if residual > 1e-8:
        raise AmplificationExceeded(
            f"continued frames violate the geodesic equation by {residual:.3g}"
        )
    if validate:
        for frame_im in result:
            is_totally_real(frame_im)
    return FlowResult(times=ts, immersions=result, amplification=amp,
                      scheme="spectral", geodesic_residual=residual)


def _geodesic_residual(frames_list, axis, c):
    """max |d iota/dt - J iota_* X| over frames, both sides spectral.

    d/dt of the continuation scales mode m by -m c; the right-hand side is
    J applied to c d iota/dtheta_axis. Identical in exact arithmetic, so the
    residual certifies the implementation rather than the data.
    """
    worst = 0.0
    for im_t in frames_list:
        n = im_t.chart.n
        z = _complex_components(im_t.points, n)
        coeffs = np.fft.fftn(z, axes=tuple(range(im_t.n)))
        nk = im_t.grid.sizes[axis]
        m = _spectral.modes(nk)
        shape = [1] * z.ndim
        shape[axis] = nk
        dz_dt = np.fft.ifftn(coeffs * (-c) * np.reshape(m, shape),
                             axes=tuple(range(im_t.n)))
        dz_dth = _spectral.spectral_derivative(z, axis=axis)
        rhs = 1j * c * dz_dth
        if im_t.winding is not None:
            w = im_t.winding[:n, axis] + 1j * im_t.winding[n:, axis]
            dz_dt = dz_dt + 1j * c * w
            rhs = rhs + 1j * c * w
        worst = max(worst, float(np.max(np.abs(dz_dt - rhs))))
    return worst


def _continue_modes(im, axis, c, ts):
    """Multiply Fourier modes of each complex component z_k by e^{-m c t}."""
    n = im.chart.n
    grid_axes = tuple(range(im.n))
    z = _complex_components(im.points, n)
    coeffs = np.fft.fftn(z, axes=grid_axes)
    # numerically absent modes would only inject e^{|m| c t}-amplified noise
    mags = np.abs(coeffs)
    coeffs = np.where(mags > SPECTRAL_PRESENCE_FLOOR * max(float(np.max(mags)), 1.0),
                      coeffs, 0.0)
    nk = im.grid.sizes[axis]
    m = _spectral.modes(nk)
    shape = [1] * z.ndim
    shape[axis] = nk
    m_shaped = np.reshape(m, shape)
    drift = None
    if im.winding is not None:
        # linear part W theta_axis continues to W(theta + i c t): drift i c w
        w = im.winding[:n, axis] + 1j * im.winding[n:, axis]
        drift = 1j * c * w
    out = []
    for t in ts:
        factors = np.exp(-m_shaped * c * t)
        z_t = np.fft.ifftn(coeffs * factors, axes=grid_axes)
        if drift is not None:
            z_t = z_t + t * drift
        pts = np.concatenate([z_t.real, z_t.imag], axis=-1)
        out.append(Immersion(grid=im.grid, chart=im.chart, points=pts,
                             winding=im.winding))
    return out


def flow_timestep(im, X, t_final, dt, dealias=DEALIAS_FRACTION,
                  store_every=1, validate_end=True):
    """RK4 time stepping of d iota/dt = J iota_* X with spectral guards."""
    if dt <= 0.0:
        raise ValidationError("dt must be positive")
    comp = X.components
    max_speed = float(np.max(np.abs(comp)))
    cutoffs = [int(dealias * (s // 2)) for s in im.grid.sizes]
    m_eff = max(cutoffs)
    if dt * m_eff * max(max_speed, 1e-30) > 0.5:
        raise StepTooLarge(
            f"dt*m*|X| = {dt * m_eff * max_speed:.3g} > 0.5; reduce dt"
        )
    J = im.chart.J
    grid_axes = tuple(range(im.n))

    masks = []
    for k, s in enumerate(im.grid.sizes):
        m = np.abs(_spectral.modes(s))
        keep = m <= cutoffs[k]
        shape = [1] * (im.n + 1)
        shape[k] = s
        masks.append(keep.reshape(shape))
    mask = masks[0]
    for extra in masks[1:]:
        mask = mask & extra

    def rhs(points):
        out = np.zeros_like(points)
        for k in range(im.n):
            dk = _spectral.spectral_derivative(points, axis=k)
            if im.winding is not None:
                dk = dk + im.winding[:, k]
            out += comp[k][..., None] * dk
        return np.einsum("ij,...j->...i", J, out)

    def dealias_points(points):
        c = np.fft.fftn(points, axes=grid_axes)
        c *= mask
        return np.fft.ifftn(c, axes=grid_axes).real

    def tail_fraction(points):
        c = np.fft.fftn(points, axes=grid_axes)
        mags2 = np.abs(c) ** 2
        dc = mags2.copy()
        # exclude the DC mode from the energy budget
        idx = tuple([0] * im.n) + (slice(None),)
        dc[idx] = 0.0
        total = float(np.sum(dc))
        if total == 0.0:
            return 0.0
        tail_mask = np.zeros(im.grid.sizes + (1,), dtype=bool)
        for k, s in enumerate(im.grid.sizes):
            m = np.abs(_spectral.modes(s))
            high = (m > cutoffs[k] / 2.0) & (m <= cutoffs[k])
            shape = [1] * (im.n + 1)
            shape[k] = s
            tail_mask = tail_mask | high.reshape(shape)
        tail = float(np.sum(np.where(tail_mask, dc, 0.0)))
        return tail / total

    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-12 * max(1.0, abs(t_final)):
        n_steps = math.ceil(t_final / dt)
        dt = t_final / n_steps
    pts = dealias_points(im.points.copy())
    times = [0.0]
    frames_out = [Immersion(grid=im.grid, chart=im.chart, points=pts.copy(),
                            winding=im.winding)]
    amp = 1.0
    base_norm = float(np.max(np.abs(pts)) + 1.0)
    for step in range(1, n_steps + 1):
        k1 = rhs(pts)
        k2 = rhs(pts + 0.5 * dt * k1)
        k3 = rhs(pts + 0.5 * dt * k2)
        k4 = rhs(pts + dt * k3)
        pts = pts + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        pts = dealias_points(pts)
        t = step * dt
        frac = tail_fraction(pts)
        amp = max(amp, float(np.max(np.abs(pts)) + 1.0) / base_norm)
        if not np.all(np.isfinite(pts)) or frac > TAIL_ENERGY_ABORT:
            raise BlowUpDetected(
                f"spectral tail energy fraction {frac:.3g} at t = {t:.4g}",
                t_reached=t,
            )
        if step % store_every == 0 or step == n_steps:
            times.append(t)
            frames_out.append(Immersion(grid=im.grid, chart=im.chart,
                                        points=pts.copy(), winding=im.winding))
    if validate_end:
        is_totally_real(frames_out[-1])
    return FlowResult(times=times, immersions=frames_out, amplification=amp,
                      scheme="timestep")


def flow_spectral_reparametrized(im, f, ts, M=None):
    """Continuation of an n=1 flow along a general positive field f d/dtheta.

    The curve is reparametrized so the field becomes (1/R) d/dpsi on a
    standard grid, then flowed spectrally. Frames are the same submanifold
    family as flow_timestep(im, f d/dtheta) composed with the fixed
    reparametrization psi -> theta(R psi).
    """
    if im.n != 1 or im.chart.dim != 2:
        raise UnsupportedField("reparametrized continuation handles curves only")
    gamma = im.complex_samples()
    Mg = gamma.size
    if M is None:
        M = Mg
    rep = curve_lab.reparametrize_by_field(f, M=M)
    R = rep["R"]
    theta_s = rep["theta_of_s"]
    coeffs = _spectral.fourier_coefficients(gamma)
    resampled = _spectral.evaluate_fourier(coeffs, theta_s)
    pts = np.stack([resampled.real, resampled.imag], axis=-1)
    im2 = Immersion(grid=GridTorus((M,)), chart=im.chart, points=pts)
    X = VectorFieldOnL(grid=im2.grid,
                       components=np.full((1, M), 1.0 / R))
    flow = flow_spectral(im2, X, ts)
    return flow, rep


def commutator_check(flow, X):
    """Consistency of the flow surface: d_t(iota_* X) vs d_s of d iota/dt.

    The two coordinate fields of the immersed strip must commute; since the
    spectral-in-s and FD-in-t operators commute exactly, the returned residual
    measures the s-derivative of the geodesic defect J iota_* X - d iota/dt.
    Time derivatives use 4th-order central differences when five frames are
    available, else 2nd-order.
    """
    times = np.asarray(flow.times, dtype=float)
    if times.size < 3:
        raise ValidationError("commutator check needs at least 3 time samples")
    ims = flow.immersions
    al = _coordinate_alignment(X)
    pts = np.stack([im.points for im in ims])
    if ims[0].winding is not None:
        mesh = ims[0].grid.mesh()
        lin = sum(np.asarray(m)[..., None] * ims[0].winding[:, k]
                  for k, m in enumerate(mesh))
        pts = pts + lin
    J = ims[0].chart.J

    def push(k):
        im_k = ims[k]
        vs = im_k.coordinate_vectors()
        return np.einsum("k...,k...i->...i", X.components, vs)

    dt_grid = np.diff(times)
    h = float(dt_grid[0])
    uniform = np.allclose(dt_grid, h, rtol=1e-10, atol=1e-14)
    if not uniform:
        raise ValidationError("commutator check expects a uniform time grid")
    worst = 0.0
    use4 = times.size >= 5
    lo = 2 if use4 else 1
    hi = times.size - lo
    axis = al[0] if al is not None else 0
    for k in range(lo, hi):
        if use4:
            dpdt = (pts[k - 2] - 8 * pts[k - 1] + 8 * pts[k + 1] - pts[k + 2]) / (12 * h)
        else:
            dpdt = (pts[k + 1] - pts[k - 1]) / (2 * h)
        ja = np.einsum("ij,...j->...i", J, push(k))
        defect = ja - dpdt
        resid = _spectral.spectral_derivative(defect, axis=axis)
        worst = max(worst, float(np.max(np.abs(resid))))
    return worst


def uniqueness_compare(im, X, t_final, dt=None):
    """Sup-norm gap between the spectral and time-stepped flows."""
    if dt is None:
        dt = t_final / 200.0
    stepped = flow_timestep(im, X, t_final, dt)
    spectral = flow_spectral(im, X, stepped.times)
    worst = 0.0
    for a, b in zip(stepped.immersions, spectral.immersions):
        worst = max(worst, float(np.max(np.abs(a.points - b.points))))
    return worst


# --- boundary value problem ---------------------------------------------------

def _winding_number(samples, z0):
    d = samples - z0
    ang = np.angle(d[np.r_[1:len(d), 0]] / d)
    return int(round(float(np.sum(ang)) / (2.0 * math.pi)))


def _require_nested(gamma0, gamma1):
    s0 = curve_lab.synthesize(gamma0, M=512)
    s1 = curve_lab.synthesize(gamma1, M=512)
    w_in = {_winding_number(s0, z) for z in s1[::16]}
    w_out = {_winding_number(s1, z) for z in s0[::16]}
    if w_in != {1} or w_out != {0}:
        raise NotNested(
            "curves must be disjoint with the second strictly inside the first"
        )


def solve_bvp_annulus(gamma0, gamma1, N=32, M=None, max_iter=60, tol=1e-8):
    """Fit g(z) = sum a_n z^n on {rho < |z| < 1} with g(S^1) = gamma0, g(rho S^1) = gamma1.

    Gauss-Newton with backtracking on unknowns (rho, coefficients, boundary
    correspondence angles); the rotation gauge is fixed by Im a_1 = 0.
    Initial guess: rho from the square root of the enclosed-area ratio,
    coefficients from the outer curve, identity correspondences.
    """
    _require_nested(gamma0, gamma1)
    if M is None:
        M = max(8 * N, 64)
    alphas = 2.0 * math.pi * np.arange(M) / M

    area0 = gamma0.signed_area()
    area1 = gamma1.signed_area()
    if area0 <= 0.0 or area1 <= 0.0:
        raise ValidationError("both curves must be anticlockwise")
    rho = math.sqrt(area1 / area0)

    n_idx = np.arange(-N, N + 1)
    a = np.zeros(2 * N + 1, dtype=complex)
    src = gamma0.coeffs
    Ns = gamma0.N
    for k, n in enumerate(n_idx):
        if abs(n) <= Ns:
            a[k] = src[n + Ns]
    beta = alphas.copy()
    delta = alphas.copy()

    def pack(rho, a, beta, delta):
        return np.concatenate([[rho], a.real, a.imag, beta, delta])

    def unpack(x):
        rho = float(x[0])
        na = 2 * N + 1
        a = x[1:1 + na] + 1j * x[1 + na:1 + 2 * na]
        beta = x[1 + 2 * na:1 + 2 * na + M]
        delta = x[1 + 2 * na + M:]
        return rho, a, beta, delta

    def residual(x):
        rho, a, beta, delta = unpack(x)
        zo = np.exp(1j * alphas)
        zi = rho * zo
        g_out = (zo[:, None] ** n_idx) @ a
        g_in = (zi[:, None] ** n_idx) @ a
        r_out = g_out - curve_lab.evaluate_at(gamma0, beta)
        r_in = g_in - curve_lab.evaluate_at(gamma1, delta)
        gauge = a[N + 1].imag
        return np.concatenate([r_out.real, r_out.imag, r_in.real, r_in.imag,
                               [gauge]])

    def jacobian(x):
        rho, a, beta, delta = unpack(x)
        na = 2 * N + 1
        nvar = 1 + 2 * na + 2 * M
        zo = np.exp(1j * alphas)
        zi = rho * zo
        basis_out = zo[:, None] ** n_idx
        basis_in = zi[:, None] ** n_idx
        dgin_drho = (basis_in * (n_idx / rho)) @ a
        db_out = -curve_lab.evaluate_derivative(gamma0, beta)
        db_in = -curve_lab.evaluate_derivative(gamma1, delta)
        Jm = np.zeros((4 * M + 1, nvar))
        # residual rows: [re out, im out, re in, im in, gauge]
        Jm[2 * M:3 * M, 0] = dgin_drho.real
        Jm[3 * M:4 * M, 0] = dgin_drho.imag
        Jm[0:M, 1:1 + na] = basis_out.real
        Jm[M:2 * M, 1:1 + na] = basis_out.imag
        Jm[0:M, 1 + na:1 + 2 * na] = -basis_out.imag
        Jm[M:2 * M, 1 + na:1 + 2 * na] = basis_out.real
        Jm[2 * M:3 * M, 1:1 + na] = basis_in.real
        Jm[3 * M:4 * M, 1:1 + na] = basis_in.imag
        Jm[2 * M:3 * M, 1 + na:1 + 2 * na] = -basis_in.imag
        Jm[3 * M:4 * M, 1 + na:1 + 2 * na] = basis_in.real
        rows = np.arange(M)
        Jm[rows, 1 + 2 * na + rows] = db_out.real
        Jm[M + rows, 1 + 2 * na + rows] = db_out.imag
        Jm[2 * M + rows, 1 + 2 * na + M + rows] = db_in.real
        Jm[3 * M + rows, 1 + 2 * na + M + rows] = db_in.imag
        Jm[4 * M, 1 + na + N + 1] = 1.0
        return Jm

    x = pack(rho, a, beta, delta)
    r = residual(x)
    cost = float(r @ r)
    history = [math.sqrt(cost / r.size)]
    converged = False
    iterations = 0
    for it in range(max_iter):
        if float(np.max(np.abs(r))) < tol:
            converged = True
            break
        iterations = it + 1
        Jm = jacobian(x)
        step, *_ = np.linalg.lstsq(Jm, -r, rcond=None)
        alpha = 1.0
        improved = False
        while alpha > 1e-12:
            x_new = x + alpha * step
            rho_new = x_new[0]
            if 0.0 < rho_new < 1.0:
                r_new = residual(x_new)
                cost_new = float(r_new @ r_new)
                if cost_new < cost:
                    x, r, cost = x_new, r_new, cost_new
                    improved = True
                    break
            alpha *= 0.5
        history.append(math.sqrt(cost / r.size))
        if not improved:
            break
        if float(np.max(np.abs(r))) < tol:
            converged = True
            break
    rho, a, beta, delta = unpack(x)
    n_store = max(N, 32)
    padded = np.zeros(2 * n_store + 1, dtype=complex)
    padded[n_store - N: n_store + N + 1] = a
    fitted = curve_lab.FourierCurve(coeffs=padded)
    r_final = residual(x)
    out_part = np.abs(r_final[0:M] + 1j * r_final[M:2 * M])
    in_part = np.abs(r_final[2 * M:3 * M] + 1j * r_final[3 * M:4 * M])
    min_deriv = math.inf
    for rr in np.linspace(rho, 1.0, 9):
        zz = rr * np.exp(1j * alphas)
        gp = (zz[:, None] ** (n_idx - 1) * n_idx) @ a
        min_deriv = min(min_deriv, float(np.min(np.abs(gp))))
    return BvpResult(
        modulus=rho,
        curve=fitted,
        outer_misfit=float(np.max(out_part)),
        inner_misfit=float(np.max(in_part)),
        converged=converged,
        iterations=iterations,
        residual_history=history,
        min_map_derivative=min_deriv,
    )
