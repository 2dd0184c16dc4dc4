"""Phase congruency via log-Gabor filter banks.

Frequency-domain implementation of the classic moment-free phase
congruency measure: a bank of log-Gabor filters (``nscale`` octave-spaced
radial bands times ``norient`` orientations) is applied by FFT; per
orientation, local energy is compared against the summed filter response
amplitudes, soft-thresholded by a Rayleigh noise estimate, weighted by a
sigmoid of the frequency spread, and the per-orientation maps are summed.

Returned values are dimensionless, roughly in [0, norient].
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def phase_congruency(
    img: np.ndarray,
    nscale: int = 4,
    norient: int = 4,
    min_wavelength: float = 6.0,
    mult: float = 2.0,
    sigma_on_f: float = 0.55,
    d_theta_on_sigma: float = 1.3,
    k: float = 2.0,
    cutoff: float = 0.5,
    g: float = 10.0,
    epsilon: float = 1e-4,
) -> np.ndarray:
    """Phase congruency map of a 2-D luminance image.

    Parameters follow the conventional defaults: ``k`` noise-threshold
    standard deviations, ``cutoff``/``g`` the frequency-spread sigmoid,
    ``sigma_on_f`` the log-Gabor bandwidth ratio (0.55 is about two
    octaves), ``d_theta_on_sigma`` the angular spread ratio.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"phase congruency expects a 2-D image, got shape {img.shape}")
    rows, cols = img.shape
    if rows < 3 or cols < 3:
        raise ShapeError(f"image too small for phase congruency: {img.shape}")

    im_fft = np.fft.fft2(img)

    # Normalized frequency grids, DC at [0, 0] (plain FFT layout).
    fy = np.fft.fftfreq(rows)[:, None]
    fx = np.fft.fftfreq(cols)[None, :]
    radius = np.hypot(fx, fy)
    radius[0, 0] = 1.0  # avoid log(0) at DC; the filters zero it out anyway
    theta = np.arctan2(-fy, fx)
    sintheta = np.sin(theta)
    costheta = np.cos(theta)

    # Radial components: log-Gabor bands under a high-order low-pass lid.
    lowpass = 1.0 / (1.0 + (radius / 0.45) ** 30)
    log_gabor = []
    for s in range(nscale):
        f0 = 1.0 / (min_wavelength * mult**s)
        lg = np.exp(-np.log(radius / f0) ** 2 / (2.0 * np.log(sigma_on_f) ** 2))
        lg *= lowpass
        lg[0, 0] = 0.0
        log_gabor.append(lg)

    theta_sigma = np.pi / norient / d_theta_on_sigma
    pc_sum = np.zeros((rows, cols))

    for o in range(norient):
        angle = o * np.pi / norient
        ds = sintheta * np.cos(angle) - costheta * np.sin(angle)
        dc = costheta * np.cos(angle) + sintheta * np.sin(angle)
        dtheta = np.abs(np.arctan2(ds, dc))
        spread = np.exp(-(dtheta**2) / (2.0 * theta_sigma**2))

        sum_e = np.zeros((rows, cols))
        sum_o = np.zeros((rows, cols))
        sum_an = np.zeros((rows, cols))
        responses = []
        tau = 0.0
        max_an = None
        for s in range(nscale):
            eo = np.fft.ifft2(im_fft * (log_gabor[s] * spread))
            an = np.abs(eo)
            responses.append(eo)
            sum_an += an
            sum_e += eo.real
            sum_o += eo.imag
            if s == 0:
                # Rayleigh noise scale estimated from the smallest band.
                tau = np.median(sum_an) / np.sqrt(np.log(4.0))
                max_an = an
            else:
                max_an = np.maximum(max_an, an)

        # Energy: amplitude-weighted alignment with the mean phase vector.
        x_energy = np.hypot(sum_e, sum_o) + epsilon
        mean_e = sum_e / x_energy
        mean_o = sum_o / x_energy
        energy = np.zeros((rows, cols))
        for eo in responses:
            e, od = eo.real, eo.imag
            energy += e * mean_e + od * mean_o - np.abs(e * mean_o - od * mean_e)

        # Soft noise threshold: geometric sum of per-band noise estimates.
        total_tau = tau * (1.0 - (1.0 / mult) ** nscale) / (1.0 - 1.0 / mult)
        noise_mean = total_tau * np.sqrt(np.pi / 2.0)
        noise_sigma = total_tau * np.sqrt((4.0 - np.pi) / 2.0)
        energy = np.maximum(energy - (noise_mean + k * noise_sigma), 0.0)

        # Penalize narrow frequency spread.
        width = (sum_an / (max_an + epsilon) - 1.0) / (nscale - 1)
        weight = 1.0 / (1.0 + np.exp((cutoff - width) * g))

        pc_sum += weight * energy / (sum_an + epsilon)

    return pc_sum
