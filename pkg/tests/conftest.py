import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_qpsk(rng, k, pilots=()):
    """QPSK symbol with zeros on the pilot slots."""
    from papr_lab.signal import SpectrumSymbol, map_qpsk

    values = np.zeros(k, dtype=complex)
    data = [i for i in range(k) if i not in pilots]
    values[data] = map_qpsk(rng.integers(0, 2, 2 * len(data)))
    return SpectrumSymbol(values, tuple(pilots))


def direct_idft(s, oversampling=1):
    """O(N^2) reference: x[n] = K^-1/2 sum_k s[k] exp(2j pi k n / (L K))."""
    s = np.asarray(s, dtype=complex)
    k = s.size
    n_out = oversampling * k
    n = np.arange(n_out)[:, None]
    kk = np.arange(k)[None, :]
    return (np.exp(2j * np.pi * kk * n / n_out) @ s) / np.sqrt(k)


def fd_gradient_errors(model, x, y, step=1e-6, noise=1e-4):
    """Compare ``backward`` against central differences, parameter by parameter.

    Returns ``(norm_err, entry_err)``, the worst over the four parameter arrays:

    * ``norm_err``  -- ``||g - fd|| / ||g||``
    * ``entry_err`` -- ``max |g - fd| / (max(|g|, |fd|) + noise)``, where
      ``noise`` keeps entries that are themselves at the level of the
      quotient's rounding error (``eps * loss / step``, a few 1e-10) from
      dominating: ``entry_err < 1e-5`` allows 1e-9 of absolute slack.
    """
    from papr_lab.neural import backward, forward, mse_loss

    grads = backward(model, x, y).params()
    norm_err = entry_err = 0.0
    for p, g in zip(model.params(), grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        fd = np.empty(flat.size)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = mse_loss(forward(model, x), y)
            flat[i] = keep - step
            down = mse_loss(forward(model, x), y)
            flat[i] = keep
            fd[i] = (up - down) / (2 * step)
        diff = np.abs(gflat - fd)
        norm_err = max(norm_err, np.linalg.norm(diff) / max(np.linalg.norm(gflat), 1e-300))
        entry_err = max(entry_err, float(np.max(diff / (np.maximum(np.abs(gflat), np.abs(fd)) + noise))))
    return norm_err, entry_err


def random_model_batch(rng, d=26, h=50, p=2, batch=8):
    from papr_lab.neural import MlpModel

    model = MlpModel(
        rng.normal(size=(h, d)) / np.sqrt(d),
        rng.normal(size=h) * 0.1,
        rng.normal(size=(p, h)) / np.sqrt(h),
        rng.normal(size=p) * 0.1,
    )
    x = rng.normal(size=(batch, d))
    y = rng.choice([-1.0, 1.0], size=(batch, p))
    return model, x, y


ACCEPTANCE_LINES = []


def report_criterion(number, title, passed, detail):
    """Record one acceptance verdict; printed again in the terminal summary."""
    line = f"CRITERION {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
