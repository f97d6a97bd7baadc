import math

import numpy as np
import pytest

import mlama


def test_constellations():
    q = mlama.make_qam(4)
    assert len(q) == 4
    assert q.energy == pytest.approx(2.0)
    assert q.separable()
    b = mlama.make_pam(2)
    assert b.alpha == 1.0
    assert b.symbols == [-1.0, 1.0]


def test_denoisers():
    d = mlama.Denoiser.boxclip(1.0)
    assert d(complex(2.0, -0.5), 0.0) == complex(1.0, -0.5)
    g = mlama.Denoiser.gaussian(2.0)
    # Linear shrinkage Es / (Es + tau).
    assert g(complex(1.0, 1.0), 2.0) == pytest.approx(complex(0.5, 0.5))
    bpsk = mlama.Denoiser.discrete_real(mlama.make_pam(2))
    assert bpsk.real(1.0, 1.0) == pytest.approx(math.tanh(1.0))


def test_state_evolution():
    model = mlama.SeModel(mlama.make_pam(2), mlama.Denoiser.gaussian(1.0, mlama.Field.Real),
                          mlama.TuningPolicy.optimal())
    trace = mlama.run_se(0.5, 0.1, model, 60)
    root = (-0.4 + math.sqrt(0.56)) / 2
    assert trace.sigma_sq[-1] == pytest.approx(root, abs=1e-9)
    clip = mlama.SeModel(mlama.make_qam(4), mlama.Denoiser.boxclip(1.0),
                         mlama.TuningPolicy.limit_zero())
    assert mlama.mrt(clip) == pytest.approx(2.0, abs=1e-3)
    br = mlama.box_relaxation_tau(0.5, 0.1)
    assert br.tau_sq == pytest.approx(0.133333329603641, rel=1e-10)
    assert mlama.box_relaxation_psi(0.3) == pytest.approx(mlama.psi_pam_closed(0.3, 2), abs=1e-12)


def test_amp_roundtrip():
    q = mlama.make_qam(4)
    H, y, s0 = mlama.gen_instance(32, 64, q, 1e-4, 7)
    assert H.shape == (64, 32) and y.shape == (64,)
    assert np.allclose(y, H @ s0, atol=0.1)
    trace = mlama.run_amp(H, y, 1e-4, mlama.Denoiser.discrete(q), mlama.TuningPolicy.matched(), q)
    assert trace["iterations"] == 10
    assert np.array_equal(trace["sliced"], s0)


def test_sweep_is_deterministic():
    kwargs = dict(mt=8, mr=16, prior=mlama.make_qam(4), detectors=["boxclip", "mmse-exact"],
                  snr_db=[0.0, 10.0], trials=20, seed=3)
    a = mlama.ser_sweep(**kwargs)
    b = mlama.ser_sweep(**kwargs, threads=1)
    assert a == b
    assert [r["detector"] for r in a] == ["boxclip", "mmse-exact"] * 2
    assert a[0]["ser"] >= a[2]["ser"]


def test_errors():
    with pytest.raises(ValueError):
        mlama.ser_sweep(8, 16, mlama.make_qam(4), ["bogus"], [0.0])
    assert "lama" in mlama.detectors()
