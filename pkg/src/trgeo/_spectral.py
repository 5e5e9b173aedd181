"""FFT helpers shared by the geometry modules.

All periodic data lives on uniform grids over [0, 2pi)^n. Derivatives are
spectral (multiplication by i*m in Fourier space); for even grid sizes the
Nyquist mode is dropped from odd-order derivatives, the standard choice for
real data. Quadrature of periodic integrands is the node sum times the cell
area, accumulated with math.fsum in fixed order so results are deterministic.
"""

import math

import numpy as np


def modes(n):
    """Integer Fourier modes in FFT order: 0, 1, ..., n/2-1, -n/2, ..., -1."""
    return np.fft.fftfreq(n, d=1.0 / n)


def spectral_derivative(values, axis, order=1):
    """Differentiate periodic samples along one grid axis.

    Works on real or complex arrays of any shape; extra trailing axes
    (e.g. ambient coordinates) ride along untouched.
    """
    n = values.shape[axis]
    m = modes(n)
    mult = (1j * m) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    out = np.fft.ifft(np.fft.fft(values, axis=axis) * mult.reshape(shape), axis=axis)
    if np.isrealobj(values):
        return out.real
    return out


def fourier_coefficients(samples, axis=0):
    """FFT coefficients normalised so samples(theta) = sum c_m e^{i m theta}."""
    n = samples.shape[axis]
    return np.fft.fft(samples, axis=axis) / n


def evaluate_fourier(coeffs, theta):
    """Evaluate a 1-D Fourier series (FFT-ordered coeffs) at arbitrary angles.

    coeffs may have trailing axes; the returned array has shape
    theta.shape + coeffs.shape[1:].
    """
    theta = np.asarray(theta, dtype=float)
    m = modes(coeffs.shape[0])
    phases = np.exp(1j * theta[..., None] * m)
    return np.tensordot(phases, coeffs, axes=([-1], [0]))


def evaluate_fourier_2d(coeffs, theta1, theta2):
    """Evaluate a 2-D Fourier series at arbitrary (theta1, theta2) pairs.

    coeffs has shape (n1, n2) + trailing; theta1/theta2 are flat arrays of
    equal length. Separable phases keep the cost at O(points * n1 * n2).
    """
    m1 = modes(coeffs.shape[0])
    m2 = modes(coeffs.shape[1])
    e1 = np.exp(1j * np.asarray(theta1)[:, None] * m1)
    e2 = np.exp(1j * np.asarray(theta2)[:, None] * m2)
    # out[p, ...] = sum_{a,b} e1[p,a] e2[p,b] coeffs[a,b,...]
    tmp = np.einsum("pa,ab...->pb...", e1, coeffs)
    return np.einsum("pb,pb...->p...", e2, tmp)


def periodic_total(density, cell):
    """Deterministic quadrature: fsum of all nodes (C order) times cell area."""
    return math.fsum(np.asarray(density, dtype=float).ravel(order="C")) * cell


def low_mode_field(rng, shape, n_modes=3, amplitude=1.0):
    """Random smooth periodic scalar field built from a few low Fourier modes."""
    if len(shape) == 1:
        theta = 2.0 * np.pi * np.arange(shape[0]) / shape[0]
        f = np.zeros(shape[0])
        for m in range(1, n_modes + 1):
            a, b = rng.normal(size=2)
            f += a * np.cos(m * theta) + b * np.sin(m * theta)
    else:
        t1 = 2.0 * np.pi * np.arange(shape[0]) / shape[0]
        t2 = 2.0 * np.pi * np.arange(shape[1]) / shape[1]
        T1, T2 = np.meshgrid(t1, t2, indexing="ij")
        f = np.zeros(shape)
        for m1 in range(-n_modes, n_modes + 1):
            for m2 in range(-n_modes, n_modes + 1):
                if m1 == 0 and m2 == 0:
                    continue
                a, b = rng.normal(size=2)
                f += a * np.cos(m1 * T1 + m2 * T2) + b * np.sin(m1 * T1 + m2 * T2)
    scale = np.max(np.abs(f))
    if scale == 0.0:
        return f
    return amplitude * f / scale
